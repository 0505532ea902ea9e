//! Loss assembly, the optimization loop with early stopping, multi-seed
//! sweeps and checkpoints.

mod adam;
mod checkpoint;
mod regularizer;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{HinDataset, SplitName};
use crate::error::{Error, Result};
use crate::metrics::F1Scores;
use crate::model::{ModelConfig, ModelParams, Prepared};
use crate::numeric::{Matrix, Tape, Var};

pub use adam::Adam;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use regularizer::{hyperedge_prototype_reg, hyperedge_prototype_reg_var, residual, RegReduction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    #[default]
    ValMicroF1,
    ValLoss,
}

impl std::str::FromStr for Monitor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "val_micro_f1" | "micro_f1" => Ok(Monitor::ValMicroF1),
            "val_loss" | "loss" => Ok(Monitor::ValLoss),
            other => Err(format!("unknown monitor {other:?} (val_micro_f1|val_loss)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub model: ModelConfig,
    pub use_regularizer: bool,
    pub reg_reduction: RegReduction,
    /// Layer whose output the regularizer sees (0 = projection); `None` is
    /// the final layer.
    pub reg_layer: Option<usize>,
    pub monitor: Monitor,
    /// Inverted dropout on each layer's input; 0 disables it.
    pub dropout: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            lambda: 1e-3,
            max_epochs: 1000,
            patience: 60,
            seed: 0,
            model: ModelConfig::default(),
            use_regularizer: true,
            reg_reduction: RegReduction::Mean,
            reg_layer: None,
            monitor: Monitor::ValMicroF1,
            dropout: 0.0,
            weight_decay: 0.0,
            clip_norm: None,
        }
    }
}

/// Named hyperparameter sets for the three benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Wikiart,
    Acm,
    Dblp,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "wikiart" => Ok(Preset::Wikiart),
            "acm" => Ok(Preset::Acm),
            "dblp" => Ok(Preset::Dblp),
            other => Err(format!("unknown preset {other:?} (wikiart|acm|dblp)")),
        }
    }
}

impl TrainConfig {
    pub fn preset(p: Preset) -> Self {
        let (hidden_dim, n_layers, lambda) = match p {
            Preset::Wikiart => (512, 2, 1e-6),
            Preset::Acm => (64, 3, 1e-6),
            Preset::Dblp => (64, 3, 1e-3),
        };
        let mut cfg = TrainConfig {
            lambda,
            ..TrainConfig::default()
        };
        cfg.model.hidden_dim = hidden_dim;
        cfg.model.n_layers = n_layers;
        cfg.model.n_heads = 1;
        cfg
    }

    /// λ actually applied: zero when the regularizer is switched off.
    pub fn effective_lambda(&self) -> f64 {
        if self.use_regularizer {
            self.lambda
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        // Zero is allowed: a frozen run is useful for checking the stopping rule.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be ≥ 0, got {}", self.learning_rate));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be ≥ 0, got {}", self.lambda));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be ≥ 0, got {}", self.weight_decay));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        if let Some(l) = self.reg_layer {
            if l > self.model.n_layers {
                return bad(format!("reg_layer {l} exceeds n_layers {}", self.model.n_layers));
            }
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Classifier loss: DCE, or softmax cross-entropy in the ablation.
    pub l_dce: f64,
    pub l_theta: f64,
    pub lambda: f64,
    pub l_s: f64,
}

/// Tape handles of the three loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub l_dce: Var,
    pub l_theta: Var,
    pub l_s: Var,
}

/// Records the total loss on `tape` for a forward pass already on it.
/// `rows`/`labels` select the supervised nodes.
pub fn loss_on_tape(
    tape: &mut Tape,
    model: &ModelParams,
    data: &Prepared,
    cfg: &TrainConfig,
    trace: &crate::model::ForwardTrace,
    rows: &[usize],
    labels: &[usize],
) -> Result<(LossVars, LossBreakdown)> {
    let picked = tape.gather_rows(trace.output, rows)?;
    let l_dce = model.classifier_loss(tape, picked, labels)?;
    let reg_input = match cfg.reg_layer {
        Some(l) => trace
            .after_layer(l)
            .ok_or_else(|| Error::Config(format!("reg_layer {l} out of range")))?,
        None => trace.output,
    };
    let l_theta = hyperedge_prototype_reg_var(tape, reg_input, &data.ctx.incidence, cfg.reg_reduction)?;
    let lambda = cfg.effective_lambda();
    let l_s = if lambda == 0.0 {
        l_dce
    } else {
        let scaled = tape.scale(l_theta, lambda);
        tape.add(l_dce, scaled)?
    };
    let breakdown = LossBreakdown {
        l_dce: tape.scalar(l_dce),
        l_theta: tape.scalar(l_theta),
        lambda,
        l_s: tape.scalar(l_s),
    };
    Ok((LossVars { l_dce, l_theta, l_s }, breakdown))
}

/// Total training loss of `model` on the train split, without gradients.
pub fn total_loss(data: &Prepared, model: &ModelParams, cfg: &TrainConfig) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let trace = model.forward_tape(&mut tape, data, None)?;
    Ok(loss_on_tape(&mut tape, model, data, cfg, &trace, &data.train, &data.train_labels)?.1)
}

/// Zeroes and then fills the gradients of `model.params` with `∂L_s`.
/// Returns the loss.
pub fn compute_gradients(data: &Prepared, model: &mut ModelParams, cfg: &TrainConfig) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let trace = model.forward_tape(&mut tape, data, None)?;
    let (vars, loss) = loss_on_tape(&mut tape, model, data, cfg, &trace, &data.train, &data.train_labels)?;
    let grads = tape.backward(vars.l_s)?;
    model.params.zero_grads();
    tape.accumulate_param_grads(&grads, &mut model.params)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub monitor: Monitor,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Best value of the monitored metric (max F1 or min loss).
    pub best_val: f64,
    pub val: F1Scores,
    pub test: F1Scores,
    pub stopped_early: bool,
    /// Excluded from serialization so reports of identical runs compare equal.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn best_record(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

/// F1 scores of `model` on one split.
pub fn evaluate(model: &ModelParams, data: &Prepared, which: SplitName) -> Result<F1Scores> {
    let preds = model.predict(data)?;
    split_scores(&preds, data, which, model.n_classes())
}

fn split_scores(preds: &[usize], data: &Prepared, which: SplitName, n_classes: usize) -> Result<F1Scores> {
    let (rows, labels) = data.split(which);
    let picked: Vec<usize> = rows.iter().map(|&r| preds[r]).collect();
    F1Scores::from_labels(labels, &picked, n_classes)
}

fn dropout_mask<R: Rng>(rng: &mut R, rows: usize, cols: usize, p: f64) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    Matrix::from_fn(rows, cols, |_, _| if rng.random_bool(p) { 0.0 } else { keep })
}

fn apply_weight_decay_and_clip(model: &mut ModelParams, cfg: &TrainConfig) {
    if cfg.weight_decay > 0.0 {
        for p in model.params.iter_mut() {
            let decay = p.value.scale(cfg.weight_decay);
            p.grad.add_assign(&decay).expect("same shape");
        }
    }
    if let Some(c) = cfg.clip_norm {
        let norm = model.params.iter().map(|p| p.grad.frobenius_sq()).sum::<f64>().sqrt();
        if norm > c {
            let s = c / norm;
            for p in model.params.iter_mut() {
                p.grad = p.grad.scale(s);
            }
        }
    }
}

/// Full-batch transductive training with early stopping. Returns the
/// parameters of the best epoch.
pub fn train(ds: &HinDataset, cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    let data = Prepared::new(ds)?;
    train_prepared(ds, &data, cfg)
}

pub fn train_prepared(ds: &HinDataset, data: &Prepared, cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    let start = Instant::now();
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if data.val.is_empty() {
        return Err(Error::EmptySplit("val"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ModelParams::init(&cfg.model, &ds.feature_dims(), ds.type_names(), ds.n_classes, &mut rng)?;
    let mut opt = Adam::new(&model.params, cfg.learning_rate);
    let n_classes = ds.n_classes;

    let mut epochs = Vec::new();
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;
    let mut best_val = match cfg.monitor {
        Monitor::ValMicroF1 => f64::NEG_INFINITY,
        Monitor::ValLoss => f64::INFINITY,
    };
    let mut best_loss = f64::INFINITY;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let mut tape = Tape::new();
        let trace = if cfg.dropout > 0.0 {
            let p = cfg.dropout;
            let mut drop = |t: &mut Tape, x: Var| {
                let (r, c) = t.value(x).shape();
                let mask = dropout_mask(&mut rng, r, c, p);
                t.mul_const(x, mask)
            };
            model.forward_tape(&mut tape, data, Some(&mut drop))?
        } else {
            model.forward_tape(&mut tape, data, None)?
        };
        let (vars, loss) = loss_on_tape(&mut tape, &model, data, cfg, &trace, &data.train, &data.train_labels)?;
        if !loss.l_s.is_finite() {
            return Err(Error::Divergence {
                epoch,
                message: format!("loss is {} (classifier {}, regularizer {})", loss.l_s, loss.l_dce, loss.l_theta),
            });
        }
        let grads = tape.backward(vars.l_s)?;
        model.params.zero_grads();
        tape.accumulate_param_grads(&grads, &mut model.params)?;

        // Validation uses the pre-step parameters, so the snapshot taken on
        // improvement is exactly the model that produced these scores.
        let f_eval = if cfg.dropout > 0.0 {
            model.forward(data)?.0
        } else {
            tape.value(trace.output).clone()
        };
        let preds = model.predict_rows(&f_eval)?;
        let val = split_scores(&preds, data, SplitName::Val, n_classes)?;
        let val_rows = f_eval.select_rows(&data.val)?;
        let val_loss = model.classifier_loss_value(&val_rows, &data.val_labels)?;
        epochs.push(EpochRecord {
            epoch,
            train: loss,
            val_micro_f1: val.micro,
            val_macro_f1: val.macro_,
            val_loss,
        });

        // Equal val F1 is an improvement only if the val loss dropped, so a
        // score that saturates early does not pin the earliest epoch.
        let improved = match cfg.monitor {
            Monitor::ValMicroF1 => val.micro > best_val || (val.micro == best_val && val_loss < best_loss),
            Monitor::ValLoss => val_loss < best_val,
        };
        if improved {
            best_val = match cfg.monitor {
                Monitor::ValMicroF1 => val.micro,
                Monitor::ValLoss => val_loss,
            };
            best_loss = val_loss;
            best_epoch = epoch;
            best_params = model.params.clone();
        } else if epoch - best_epoch >= cfg.patience {
            stopped_early = true;
            log::debug!("early stop at epoch {epoch}, best epoch {best_epoch}");
            break;
        }
        if epoch == cfg.max_epochs {
            break;
        }

        apply_weight_decay_and_clip(&mut model, cfg);
        opt.step(&mut model.params).map_err(|e| match e {
            Error::NonFinite { context } => Error::Divergence { epoch, message: context },
            other => other,
        })?;
    }

    model.params.copy_values_from(&best_params)?;
    let preds = model.predict(data)?;
    let val = split_scores(&preds, data, SplitName::Val, n_classes)?;
    let test = if data.test.is_empty() {
        F1Scores { micro: f64::NAN, macro_: f64::NAN }
    } else {
        split_scores(&preds, data, SplitName::Test, n_classes)?
    };
    let report = TrainReport {
        seed: cfg.seed,
        monitor: cfg.monitor,
        epochs,
        best_epoch,
        best_val,
        val,
        test,
        stopped_early,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        // Offset by the first sample so identical inputs give their exact value.
        let x0 = xs.first().copied().unwrap_or(f64::NAN);
        let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2}±{:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub test_micro_f1: MeanStd,
    pub test_macro_f1: MeanStd,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub model: ModelParams,
    pub report: TrainReport,
}

/// Trains once per seed. With `parallel` the runs are spread over the thread
/// pool; each run owns its state, so results match the sequential order.
pub fn run_seeds(
    ds: &HinDataset,
    cfg: &TrainConfig,
    seeds: &[u64],
    parallel: bool,
) -> Result<(Vec<SeedRun>, SeedSummary)> {
    if seeds.is_empty() {
        return Err(Error::Config("run_seeds needs at least one seed".into()));
    }
    let data = Prepared::new(ds)?;
    let one = |&seed: &u64| -> Result<SeedRun> {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        let (model, report) = train_prepared(ds, &data, &cfg)?;
        Ok(SeedRun { seed, model, report })
    };
    let results: Vec<Result<SeedRun>> = if parallel {
        crate::parallel::map_collect(seeds, one)
    } else {
        seeds.iter().map(one).collect()
    };
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let micro: Vec<f64> = runs.iter().map(|r| r.report.test.micro).collect();
    let macro_: Vec<f64> = runs.iter().map(|r| r.report.test.macro_).collect();
    let summary = SeedSummary {
        seeds: seeds.to_vec(),
        test_micro_f1: MeanStd::of(&micro),
        test_macro_f1: MeanStd::of(&macro_),
    };
    Ok((runs, summary))
}
