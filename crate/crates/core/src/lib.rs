//! Prototype-enhanced hypergraph attention for node classification on
//! heterogeneous information networks.
//!
//! A heterogeneous network is encoded as a hypergraph whose hyperedges bundle
//! related nodes of several types. Node features are projected per type into
//! one space, refined by stacked two-stage attention (nodes into hyperedges,
//! hyperedges back into nodes), and classified by distance to learnable class
//! prototypes. Training adds a regularizer that asks node embeddings to
//! reconstruct hyperedge membership.
//!
//! Everything runs on dense `f64` matrices with a small reverse-mode tape.
//!
//! ```
//! use hyperproto::dataio::{generate_synthetic, SyntheticConfig};
//! use hyperproto::training::{train, TrainConfig};
//!
//! let ds = generate_synthetic(&SyntheticConfig { targets_per_class: 10, ..Default::default() }).unwrap();
//! let mut cfg = TrainConfig { max_epochs: 5, ..Default::default() };
//! cfg.model.hidden_dim = 8;
//! let (_model, report) = train(&ds, &cfg).unwrap();
//! assert!(report.test.micro >= 0.0 && report.test.micro <= 1.0);
//! ```

pub mod dataio;
pub mod error;
pub mod hypergraph;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod parallel;
pub mod prototype;
pub mod training;

pub use error::{Error, Result};
pub use hypergraph::{Hypergraph, IncidenceMatrix, NodeTypeTable};
pub use model::{ModelConfig, ModelParams, Prepared};
pub use numeric::Matrix;
pub use training::{train, TrainConfig, TrainReport};
