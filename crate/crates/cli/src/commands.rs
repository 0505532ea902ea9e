use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hyperproto::dataio::{
    generate_synthetic, load_dataset, save_dataset, write_embeddings, HinDataset, SyntheticConfig,
};
use hyperproto::training::{
    evaluate, load_checkpoint, run_seeds, save_checkpoint, SeedRun, SeedSummary, TrainConfig,
};
use hyperproto::Prepared;
use serde_json::{json, Value};

use crate::args::{EvalArgs, GenArgs, HyperArgs, TrainArgs};
use crate::dump;

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const REPORT: &str = "report.jsonl";
pub const METRICS: &str = "metrics.json";
pub const EMBEDDINGS: &str = "embeddings.tsv";
pub const PROTOTYPES: &str = "prototypes.tsv";
pub const ATTENTION: &str = "attention.tsv";

/// Invalid flag combinations or values. Mapped to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        n_classes: args.classes,
        targets_per_class: args.targets,
        n_attr_nodes_per_type: [args.attr_nodes[0], args.attr_nodes[1]],
        feature_dims: [args.dims[0], args.dims[1], args.dims[2]],
        label_signal: args.signal,
        edge_purity: args.purity,
        noise_std: args.noise,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    let ds = generate_synthetic(&cfg)?;
    save_dataset(&args.output, &ds).with_context(|| format!("writing {}", args.output.display()))?;
    let manifest = json!({
        "tool": "hyperproto",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "gen",
        "synthetic": {
            "n_classes": cfg.n_classes,
            "targets_per_class": cfg.targets_per_class,
            "n_attr_nodes_per_type": cfg.n_attr_nodes_per_type,
            "feature_dims": cfg.feature_dims,
            "label_signal": cfg.label_signal,
            "edge_purity": cfg.edge_purity,
            "noise_std": cfg.noise_std,
            "seed": cfg.seed,
        },
        "dataset_hash": ds.fingerprint(),
    });
    write_json(&args.output.join(MANIFEST), &manifest)?;
    println!(
        "wrote {} ({} nodes, {} hyperedges, {} classes)",
        args.output.display(),
        ds.n_nodes(),
        ds.graph.n_edges(),
        ds.n_classes
    );
    Ok(())
}

/// Preset (or defaults), then explicit flags on top.
pub fn resolve_config(args: &TrainArgs) -> TrainConfig {
    let mut cfg = args.preset.map(TrainConfig::preset).unwrap_or_default();
    let HyperArgs {
        learning_rate,
        lambda,
        epochs,
        patience,
        hidden,
        layers,
        heads,
        prototypes,
        proto_dim,
        head_bias,
        sigma,
        leaky_slope,
        reg_reduction,
        reg_layer,
        monitor,
        dropout,
        weight_decay,
        clip_norm,
    } = &args.hyper;
    macro_rules! set {
        ($field:expr, $flag:expr) => {
            if let Some(v) = $flag {
                $field = v.clone();
            }
        };
    }
    set!(cfg.learning_rate, learning_rate);
    set!(cfg.lambda, lambda);
    set!(cfg.max_epochs, epochs);
    set!(cfg.patience, patience);
    set!(cfg.model.hidden_dim, hidden);
    set!(cfg.model.n_layers, layers);
    set!(cfg.model.n_heads, heads);
    set!(cfg.model.k_prototypes, prototypes);
    set!(cfg.model.sigma, sigma);
    set!(cfg.model.leaky_slope, leaky_slope);
    set!(cfg.reg_reduction, reg_reduction);
    set!(cfg.monitor, monitor);
    set!(cfg.dropout, dropout);
    set!(cfg.weight_decay, weight_decay);
    if proto_dim.is_some() {
        cfg.model.proto_dim = *proto_dim;
    }
    if reg_layer.is_some() {
        cfg.reg_layer = *reg_layer;
    }
    if clip_norm.is_some() {
        cfg.clip_norm = *clip_norm;
    }
    cfg.model.head_bias |= head_bias;
    cfg.model.use_prototype_classifier = !args.no_prototype_classifier;
    cfg.use_regularizer = !args.no_regularizer;
    cfg.seed = args.seed;
    cfg
}

fn load(dir: &Path) -> Result<HinDataset> {
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

pub fn seed_checkpoint(seed: u64) -> String {
    format!("checkpoint-seed{seed}.bin")
}

fn scores_json(s: &hyperproto::metrics::F1Scores) -> Value {
    json!({ "micro_f1": s.micro, "macro_f1": s.macro_ })
}

fn report_lines(runs: &[SeedRun]) -> Result<String> {
    let mut out = String::new();
    for run in runs {
        for record in &run.report.epochs {
            let mut v = serde_json::to_value(record)?;
            v.as_object_mut().expect("record is an object").insert("seed".into(), json!(run.seed));
            out += &serde_json::to_string(&v)?;
            out.push('\n');
        }
    }
    Ok(out)
}

fn metrics_json(runs: &[SeedRun], summary: &SeedSummary, hash: &str) -> Value {
    let per_run: Vec<Value> = runs
        .iter()
        .map(|r| {
            let best = r.report.best_record();
            json!({
                "seed": r.seed,
                "epochs_run": r.report.epochs.len(),
                "best_epoch": r.report.best_epoch,
                "stopped_early": r.report.stopped_early,
                "best_val_micro_f1": best.val_micro_f1,
                "val": scores_json(&r.report.val),
                "test": scores_json(&r.report.test),
            })
        })
        .collect();
    json!({
        "dataset_hash": hash,
        "runs": per_run,
        "summary": {
            "seeds": summary.seeds,
            "test_micro_f1": { "mean": summary.test_micro_f1.mean, "std": summary.test_micro_f1.std },
            "test_macro_f1": { "mean": summary.test_macro_f1.mean, "std": summary.test_macro_f1.std },
        },
    })
}

pub fn train(args: &TrainArgs, argv: &[String]) -> Result<()> {
    if args.seeds == 0 {
        return Err(Usage("--seeds must be at least 1".into()).into());
    }
    if args.dump_prototypes && args.no_prototype_classifier {
        return Err(Usage("--dump-prototypes needs the prototype classifier".into()).into());
    }
    let cfg = resolve_config(args);
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    let ds = load(&args.dataset)?;
    let hash = ds.fingerprint();
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed + i).collect();

    let out = &args.output;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = json!({
        "tool": "hyperproto",
        "version": env!("CARGO_PKG_VERSION"),
        "command": argv,
        "dataset": { "path": args.dataset, "hash": hash },
        "output_dir": out,
        "seeds": seeds,
        "parallel": args.parallel,
        "config": cfg,
    });
    write_json(&out.join(MANIFEST), &manifest)?;

    let (runs, summary) = run_seeds(&ds, &cfg, &seeds, args.parallel)?;
    for run in &runs {
        log::info!(
            "seed {}: {} epochs, best {} ({:.2}s)",
            run.seed,
            run.report.epochs.len(),
            run.report.best_epoch,
            run.report.wall_time_secs
        );
        let run_cfg = TrainConfig { seed: run.seed, ..cfg.clone() };
        if runs.len() > 1 {
            save_checkpoint(out.join(seed_checkpoint(run.seed)), &run.model, &run_cfg, &hash)?;
        }
    }
    let first = &runs[0];
    save_checkpoint(
        out.join(CHECKPOINT),
        &first.model,
        &TrainConfig { seed: first.seed, ..cfg.clone() },
        &hash,
    )?;
    fs::write(out.join(REPORT), report_lines(&runs)?)?;
    write_json(&out.join(METRICS), &metrics_json(&runs, &summary, &hash))?;

    if args.export_embeddings || args.dump_attention || args.dump_prototypes {
        let data = Prepared::new(&ds)?;
        let (f, states) = first.model.forward(&data)?;
        if args.export_embeddings {
            write_embeddings(out.join(EMBEDDINGS), &f, &ds.node_ids)?;
        }
        if args.dump_attention {
            dump::attention(&out.join(ATTENTION), &ds, &states)?;
        }
        if args.dump_prototypes {
            dump::prototypes(&out.join(PROTOTYPES), &ds, &first.model, &f)?;
        }
    }

    for r in &runs {
        println!(
            "seed {}: test micro-F1 {:.4} macro-F1 {:.4} (best epoch {})",
            r.seed, r.report.test.micro, r.report.test.macro_, r.report.best_epoch
        );
    }
    println!(
        "test micro-F1 {} macro-F1 {} over {} seed(s)",
        summary.test_micro_f1,
        summary.test_macro_f1,
        seeds.len()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let name = args.seed.map_or_else(|| CHECKPOINT.to_string(), seed_checkpoint);
    let path: PathBuf = args.run.join(name);
    if !path.exists() {
        bail!(Usage(format!("no checkpoint at {}", path.display())));
    }
    let ck = load_checkpoint(&path).with_context(|| format!("reading {}", path.display()))?;
    let ds = load(&args.dataset)?;
    let model = ck.restore(&ds)?;
    let data = Prepared::new(&ds)?;
    if data.split(args.split).0.is_empty() {
        return Err(Usage(format!("split {:?} is empty", args.split)).into());
    }
    let scores = evaluate(&model, &data, args.split)?;
    let out = json!({
        "split": args.split,
        "seed": ck.config.seed,
        "micro_f1": scores.micro,
        "macro_f1": scores.macro_,
    });
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}
