//! A full model: projection, stacked attention layers and a classifier, with
//! every weight stored in one named [`ParameterSet`].

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataio::HinDataset;
use crate::error::{Error, Result};
use crate::layers::{
    forward_layers, layer_state, Activation, InputHook, AttentionHeadParams, GraphContext, LayerOptions, LayerState,
    LayerTrace, ProjectionParams,
};
use crate::numeric::{Matrix, ParamId, ParameterSet, Tape, Var};
use crate::prototype::{self, HeadParams, PrototypeBank};

/// Architecture hyperparameters. Everything needed to rebuild the parameter
/// layout given a dataset's feature widths and class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub k_prototypes: usize,
    /// Width of the prototype space; `None` means `hidden_dim`.
    pub proto_dim: Option<usize>,
    pub head_bias: bool,
    pub leaky_slope: f64,
    pub sigma: Activation,
    pub use_prototype_classifier: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 64,
            n_layers: 2,
            n_heads: 1,
            k_prototypes: 1,
            proto_dim: None,
            head_bias: false,
            leaky_slope: crate::numeric::ops::DEFAULT_LEAKY_SLOPE,
            sigma: Activation::LeakyRelu,
            use_prototype_classifier: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive".into());
        }
        if self.n_heads == 0 || !self.hidden_dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "hidden_dim {} must be a positive multiple of n_heads {}",
                self.hidden_dim, self.n_heads
            ));
        }
        if self.k_prototypes == 0 {
            return bad("k_prototypes must be at least 1".into());
        }
        if self.proto_dim == Some(0) {
            return bad("proto_dim must be positive".into());
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite".into());
        }
        Ok(())
    }

    pub fn layer_options(&self) -> LayerOptions {
        LayerOptions {
            leaky_slope: self.leaky_slope,
            sigma: self.sigma,
        }
    }

    pub fn head_width(&self) -> usize {
        self.hidden_dim / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Classifier {
    Prototype(HeadParams),
    /// `logits = F Wᵀ + b` with `W` of shape `c × d`.
    Softmax { weight: ParamId, bias: ParamId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub projection: ProjectionParams,
    pub layers: Vec<Vec<AttentionHeadParams>>,
    pub classifier: Classifier,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layout: ModelLayout,
    pub params: ParameterSet,
}

fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite Glorot bound");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

impl ModelParams {
    /// Fresh parameters. Draw order is fixed, so the same rng state gives the
    /// same model.
    pub fn init<R: Rng>(config: &ModelConfig, feature_dims: &[usize], type_names: &[String], n_classes: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if feature_dims.len() != type_names.len() {
            return Err(Error::Structure(format!(
                "{} feature widths for {} types",
                feature_dims.len(),
                type_names.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {n_classes}")));
        }
        let mut params = ParameterSet::new();
        let d = config.hidden_dim;
        let per_type = feature_dims
            .iter()
            .zip(type_names)
            .map(|(&dt, name)| params.add(format!("proj.{name}"), glorot(d, dt, rng)))
            .collect();
        let w = config.head_width();
        let layers = (0..config.n_layers)
            .map(|l| {
                (0..config.n_heads)
                    .map(|h| {
                        let p = format!("layer{l}.head{h}");
                        AttentionHeadParams {
                            w_h: params.add(format!("{p}.w_h"), glorot(w, d, rng)),
                            a1: params.add(format!("{p}.a1"), glorot(w, 1, rng)),
                            w_e: params.add(format!("{p}.w_e"), glorot(w, w, rng)),
                            a2: params.add(format!("{p}.a2"), glorot(2 * w, 1, rng)),
                        }
                    })
                    .collect()
            })
            .collect();
        let classifier = if config.use_prototype_classifier {
            let p = config.proto_dim.unwrap_or(d);
            let theta = params.add("head.theta", glorot(p, d, rng));
            let bias = config.head_bias.then(|| params.add("head.bias", Matrix::zeros(1, p)));
            let normal = Normal::new(0.0, 0.1).expect("valid std");
            let bank = Matrix::from_fn(n_classes * config.k_prototypes, p, |_, _| normal.sample(rng));
            Classifier::Prototype(HeadParams {
                theta,
                bias,
                bank: PrototypeBank {
                    prototypes: params.add("head.prototypes", bank),
                    n_classes,
                    per_class: config.k_prototypes,
                },
            })
        } else {
            Classifier::Softmax {
                weight: params.add("softmax.weight", glorot(n_classes, d, rng)),
                bias: params.add("softmax.bias", Matrix::zeros(1, n_classes)),
            }
        };
        Ok(ModelParams {
            config: config.clone(),
            layout: ModelLayout {
                projection: ProjectionParams { per_type },
                layers,
                classifier,
            },
            params,
        })
    }

    pub fn n_classes(&self) -> usize {
        match self.layout.classifier {
            Classifier::Prototype(h) => h.bank.n_classes,
            Classifier::Softmax { weight, .. } => self.params.value(weight).rows(),
        }
    }

    /// Records projection and all layers on `tape`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        data: &Prepared,
        dropout: Option<InputHook<'_>>,
    ) -> Result<ForwardTrace> {
        let (projected, layers) = forward_layers(
            tape,
            &self.params,
            &data.features,
            &self.layout.projection,
            &self.layout.layers,
            &data.ctx,
            &self.config.layer_options(),
            dropout,
        )?;
        let output = layers.last().map_or(projected, |l| l.output);
        Ok(ForwardTrace {
            projected,
            layers,
            output,
        })
    }

    /// Final node representations and, per layer, one state per head.
    pub fn forward(&self, data: &Prepared) -> Result<(Matrix, Vec<Vec<LayerState>>)> {
        let mut tape = Tape::new();
        let trace = self.forward_tape(&mut tape, data, None)?;
        let states = trace
            .layers
            .iter()
            .map(|l| (0..l.heads.len()).map(|h| layer_state(&tape, l, h)).collect())
            .collect();
        Ok((tape.value(trace.output).clone(), states))
    }

    /// Classifier loss (DCE or softmax cross-entropy) of the rows `f` on the tape.
    pub fn classifier_loss(&self, tape: &mut Tape, f: Var, labels: &[usize]) -> Result<Var> {
        match self.layout.classifier {
            Classifier::Prototype(head) => {
                let z = prototype::integrate(tape, &self.params, f, &head)?;
                let m = tape.param(&self.params, head.bank.prototypes);
                prototype::dce_loss(tape, z, m, labels, head.bank.per_class)
            }
            Classifier::Softmax { weight, bias } => {
                let logits = self.softmax_logits(tape, f, weight, bias)?;
                tape.softmax_ce_loss(logits, labels)
            }
        }
    }

    fn softmax_logits(&self, tape: &mut Tape, f: Var, weight: ParamId, bias: ParamId) -> Result<Var> {
        let w = tape.param(&self.params, weight);
        let wt = tape.transpose(w);
        let logits = tape.matmul(f, wt)?;
        let b = tape.param(&self.params, bias);
        tape.add_row_vector(logits, b)
    }

    /// Classifier loss of fixed representations, without gradients.
    pub fn classifier_loss_value(&self, f: &Matrix, labels: &[usize]) -> Result<f64> {
        let mut tape = Tape::new();
        let fv = tape.constant(f.clone());
        let l = self.classifier_loss(&mut tape, fv, labels)?;
        Ok(tape.scalar(l))
    }

    /// Predicted class of every row of `f`.
    pub fn predict_rows(&self, f: &Matrix) -> Result<Vec<usize>> {
        match self.layout.classifier {
            Classifier::Prototype(head) => {
                let z = prototype::integrate_matrix(f, &self.params, &head)?;
                prototype::predict(&z, self.params.value(head.bank.prototypes), head.bank.per_class)
            }
            Classifier::Softmax { weight, bias } => {
                let mut tape = Tape::new();
                let fv = tape.constant(f.clone());
                let logits = self.softmax_logits(&mut tape, fv, weight, bias)?;
                let l = tape.value(logits);
                Ok((0..l.rows())
                    .map(|i| {
                        l.row(i)
                            .iter()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b })
                            .0
                    })
                    .collect())
            }
        }
    }

    /// Predicted class of every node.
    pub fn predict(&self, data: &Prepared) -> Result<Vec<usize>> {
        let (f, _) = self.forward(data)?;
        self.predict_rows(&f)
    }

    /// Prototype-space embedding `z` of every node, or `None` for the softmax
    /// classifier.
    pub fn embed(&self, f: &Matrix) -> Result<Option<Matrix>> {
        match self.layout.classifier {
            Classifier::Prototype(head) => Ok(Some(prototype::integrate_matrix(f, &self.params, &head)?)),
            Classifier::Softmax { .. } => Ok(None),
        }
    }
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub projected: Var,
    pub layers: Vec<LayerTrace>,
    /// Last layer's output, or the projection when there are no layers.
    pub output: Var,
}

impl ForwardTrace {
    /// Representation after `layer` layers (0 = projection).
    pub fn after_layer(&self, layer: usize) -> Option<Var> {
        match layer {
            0 => Some(self.projected),
            l => self.layers.get(l - 1).map(|t| t.output),
        }
    }
}

/// Dataset-derived inputs of the model: graph constants, features, and split
/// indices with their labels.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ctx: GraphContext,
    pub features: Vec<Matrix>,
    pub train: Vec<usize>,
    pub train_labels: Vec<usize>,
    pub val: Vec<usize>,
    pub val_labels: Vec<usize>,
    pub test: Vec<usize>,
    pub test_labels: Vec<usize>,
}

impl Prepared {
    pub fn new(ds: &HinDataset) -> Result<Self> {
        let incidence = ds.graph.build_incidence()?;
        let s = &ds.splits;
        Ok(Prepared {
            ctx: GraphContext::new(incidence, &ds.graph.types),
            features: ds.features.clone(),
            train_labels: ds.labels_of(&s.train)?,
            val_labels: ds.labels_of(&s.val)?,
            test_labels: ds.labels_of(&s.test)?,
            train: s.train.clone(),
            val: s.val.clone(),
            test: s.test.clone(),
        })
    }

    pub fn split(&self, which: crate::dataio::SplitName) -> (&[usize], &[usize]) {
        use crate::dataio::SplitName::*;
        match which {
            Train => (&self.train, &self.train_labels),
            Val => (&self.val, &self.val_labels),
            Test => (&self.test, &self.test_labels),
        }
    }
}
