//! The `mmfuse` command line. [`run`] parses arguments, executes one
//! subcommand and maps the outcome to an exit code:
//! 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod args;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use crate::data::{
    gen_synthetic, read_embeddings, read_ids, read_labels, save_model, load_model, load_model_as,
    write_embeddings, write_predictions, EmbeddingDataset,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse_logits, predict_labels, LabelVector, CLASS_IDS, NUM_CLASSES};
use crate::metrics::{confusion_counts, macro_f1, mean_accuracy};
use crate::training::{
    evaluate_model, parse_fusion_set, predict_logits, pseudo_label_loop, train_head, TrainConfig,
};
use crate::vision::{compound_scale, cost_depthwise_separable, cost_standard, ConvSpec, ScalingSpec};

pub use args::{Cli, Command};
use args::{EvalArgs, FlopsArgs, FuseArgs, GenArgs, PredictArgs, PseudoArgs, TrainArgs, TrainFlags};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const SUMMARY_FILE: &str = "summary.txt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MODEL_FILE: &str = "model.fus";
pub const HISTORY_FILE: &str = "history.csv";
pub const LOGITS_FILE: &str = "logits.femb";

/// Runs one invocation; `args` includes the program name.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        _ if e.is_numeric() => EXIT_NUMERIC,
        Error::Parameter(_) | Error::Parse(_) | Error::Arity { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Ordered `key=value` lines written to `summary.txt`.
struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    fn new(command: &str) -> Self {
        let mut s = Self { lines: Vec::new() };
        s.set("command", command);
        for key in ["macro_f1", "mean_accuracy", "epochs", "seed", "wall_ms"] {
            s.set(key, "na");
        }
        s
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.lines.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.lines.push((key.to_string(), value)),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(text, "{k}={v}");
        }
        fs::write(dir.join(SUMMARY_FILE), text)?;
        Ok(())
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    fs::create_dir_all(&cli.out)?;
    let (name, mut summary) = match &cli.command {
        Command::GenSynthetic(a) => ("gen-synthetic", gen(a, &cli.out)?),
        Command::TrainHead(a) => ("train-head", train(a, &cli.out)?),
        Command::Predict(a) => ("predict", predict(a, &cli.out)?),
        Command::FuseLogits(a) => ("fuse-logits", fuse(a, &cli.out)?),
        Command::Evaluate(a) => ("evaluate", evaluate(a)?),
        Command::PseudoLoop(a) => ("pseudo-loop", pseudo(a, &cli.out)?),
        Command::Flops(a) => ("flops", flops(a)?),
    };
    summary.set("command", name);
    let wall = if cli.reproducible { 0 } else { start.elapsed().as_millis() };
    summary.set("wall_ms", wall);
    summary.write(&cli.out)
}

fn train_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let mut c = match &flags.config {
        Some(path) => {
            let mut c = TrainConfig::default();
            c.apply_text(&fs::read_to_string(path)?)?;
            c
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = flags.lr {
        c.lr = v;
    }
    if let Some(v) = flags.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = flags.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = flags.patience {
        c.patience = v;
    }
    if let Some(v) = flags.seed {
        c.seed = v;
    }
    if let Some(v) = &flags.weighting {
        c.set("weighting", v)?;
    }
    if let Some(v) = flags.key_dim {
        c.key_dim = v;
    }
    if let Some(v) = flags.threshold {
        c.threshold = v;
    }
    c.validate()?;
    Ok(c)
}

fn scored(summary: &mut Summary, pred: &[LabelVector], truth: &[LabelVector]) -> Result<([f64; NUM_CLASSES], f64, f64)> {
    let counts = confusion_counts(pred, truth)?;
    let (per_class, f1) = macro_f1(&counts)?;
    let acc = mean_accuracy(&counts)?;
    summary.set("macro_f1", f1);
    summary.set("mean_accuracy", acc);
    Ok((per_class, f1, acc))
}

fn gen(a: &GenArgs, out: &Path) -> Result<Summary> {
    let (train, test, val) = gen_synthetic(a.seed, a.n_train, a.n_test, a.n_val, a.noise)?;
    for (name, d) in [("train", &train), ("test", &test), ("val", &val)] {
        d.save(&out.join(name))?;
    }
    println!(
        "wrote {} train, {} test, {} val samples to {}",
        train.len(),
        test.len(),
        val.len(),
        out.display()
    );
    let mut s = Summary::new("gen-synthetic");
    s.set("seed", a.seed);
    s.set("noise", a.noise);
    Ok(s)
}

fn train(a: &TrainArgs, out: &Path) -> Result<Summary> {
    let config = train_config(&a.flags)?;
    let train = EmbeddingDataset::load(&a.train)?;
    let val = EmbeddingDataset::load(&a.val)?;
    let (model, history) = train_head(&train, &val, a.kind, &config)?;
    save_model(&model, &out.join(MODEL_FILE))?;
    fs::write(out.join(HISTORY_FILE), history.to_csv())?;

    let mut s = Summary::new("train-head");
    if !val.is_empty() {
        let (f1, acc) = evaluate_model(&model, &val, config.threshold)?;
        s.set("macro_f1", f1);
        s.set("mean_accuracy", acc);
    }
    s.set("epochs", history.epochs.len());
    s.set("seed", config.seed);
    s.set("kind", a.kind);
    s.set("best_epoch", history.best_epoch);
    println!(
        "{}: {} epochs, best epoch {}, model saved to {}",
        a.kind,
        history.epochs.len(),
        history.best_epoch,
        out.join(MODEL_FILE).display()
    );
    Ok(s)
}

fn predict(a: &PredictArgs, out: &Path) -> Result<Summary> {
    let model = match a.kind {
        Some(kind) => load_model_as(&a.model, kind)?,
        None => load_model(&a.model)?,
    };
    let data = EmbeddingDataset::load(&a.data)?;
    let logits = predict_logits(&model, &data)?;
    let labels = predict_labels(&logits, a.threshold)?;
    write_embeddings(&logits, &out.join(LOGITS_FILE))?;
    write_predictions(&out.join(PREDICTIONS_FILE), data.ids(), &labels)?;

    let mut s = Summary::new("predict");
    s.set("kind", model.kind());
    if let Some(truth) = data.labels() {
        let (_, f1, acc) = scored(&mut s, &labels, truth)?;
        println!("macro F1 {f1:.4}, mean accuracy {acc:.4}");
    }
    println!("{} predictions written to {}", labels.len(), out.join(PREDICTIONS_FILE).display());
    Ok(s)
}

/// Labels of `truth` reordered to `ids`; every id must be present.
fn align(ids: &[String], truth: &indexmap::IndexMap<String, LabelVector>) -> Result<Vec<LabelVector>> {
    ids.iter()
        .map(|id| {
            truth
                .get(id)
                .copied()
                .ok_or_else(|| Error::Dataset(format!("no entry for id `{id}`")))
        })
        .collect()
}

fn fuse(a: &FuseArgs, out: &Path) -> Result<Summary> {
    let ids = read_ids(&a.ids)?;
    let logits = a
        .logits
        .iter()
        .map(|p| read_embeddings(p))
        .collect::<Result<Vec<_>>>()?;
    for (p, l) in a.logits.iter().zip(&logits) {
        if l.cols() != NUM_CLASSES || l.rows() != ids.len() {
            return Err(Error::shape(
                "fuse-logits",
                format!(
                    "{} holds {:?}, expected [{}, {NUM_CLASSES}]",
                    p.display(),
                    l.shape(),
                    ids.len()
                ),
            ));
        }
    }
    let fused = fuse_logits(&logits)?;
    let labels = predict_labels(&fused, a.threshold)?;
    write_embeddings(&fused, &out.join(LOGITS_FILE))?;
    write_predictions(&out.join(PREDICTIONS_FILE), &ids, &labels)?;
    let mut s = Summary::new("fuse-logits");
    s.set("inputs", a.logits.len());
    if let Some(path) = &a.truth {
        let truth = align(&ids, &read_labels(path)?)?;
        let (_, f1, acc) = scored(&mut s, &labels, &truth)?;
        println!("macro F1 {f1:.4}, mean accuracy {acc:.4}");
    }
    println!("fused {} logit files into {}", a.logits.len(), out.join(PREDICTIONS_FILE).display());
    Ok(s)
}

fn evaluate(a: &EvalArgs) -> Result<Summary> {
    let truth = read_labels(&a.truth)?;
    let pred = read_labels(&a.pred)?;
    let ids: Vec<String> = truth.keys().cloned().collect();
    let pred = align(&ids, &pred)?;
    let truth: Vec<LabelVector> = truth.values().copied().collect();
    let mut s = Summary::new("evaluate");
    let (per_class, f1, acc) = scored(&mut s, &pred, &truth)?;

    let header: Vec<String> = CLASS_IDS.iter().map(|c| format!("Class{c}_F1")).collect();
    let values: Vec<String> = per_class.iter().map(|v| format!("{v:.4}")).collect();
    println!("{}", header.join("\t"));
    println!("{}", values.join("\t"));
    println!("macro_f1\t{f1:.4}");
    println!("mean_accuracy\t{acc:.4}");
    s.set("samples", ids.len());
    Ok(s)
}

fn pseudo(a: &PseudoArgs, out: &Path) -> Result<Summary> {
    let mut config = train_config(&a.flags)?;
    if let Some(v) = &a.fusion_set {
        config.fusion_set = parse_fusion_set(v)?;
    }
    if let Some(v) = a.rounds {
        config.pseudo_rounds = v;
    }
    if let Some(v) = a.eps {
        config.pseudo_eps = v;
    }
    config.validate()?;
    let train = EmbeddingDataset::load(&a.train)?;
    let unlabeled = EmbeddingDataset::load(&a.unlabeled)?;
    let val = EmbeddingDataset::load(&a.val)?;
    let outcome = pseudo_label_loop(&train, &unlabeled, &val, &config)?;

    for (i, head) in outcome.heads.iter().enumerate() {
        save_model(head, &out.join(format!("head_{i}_{}.fus", head.kind())))?;
    }
    write_predictions(&out.join(PREDICTIONS_FILE), unlabeled.ids(), &outcome.predictions)?;
    if !outcome.pseudo_labels.is_empty() {
        write_predictions(&out.join("pseudo_labels.csv"), unlabeled.ids(), &outcome.pseudo_labels)?;
    }
    let mut rounds = String::from("round,val_macro_f1\n");
    for (r, f1) in outcome.round_f1.iter().enumerate() {
        let _ = writeln!(rounds, "{r},{f1:.17e}");
    }
    fs::write(out.join("rounds.csv"), rounds)?;

    let mut s = Summary::new("pseudo-loop");
    s.set("macro_f1", outcome.best_f1());
    s.set("seed", config.seed);
    s.set("rounds", outcome.round_f1.len() - 1);
    s.set("best_round", outcome.best_round);
    s.set("round0_macro_f1", outcome.round_f1[0]);
    println!(
        "best round {} of {}, val macro F1 {:.4} (round 0: {:.4})",
        outcome.best_round,
        outcome.round_f1.len() - 1,
        outcome.best_f1(),
        outcome.round_f1[0]
    );
    Ok(s)
}

fn flops(a: &FlopsArgs) -> Result<Summary> {
    let spec = ConvSpec::standard(a.dk, a.m, a.n, a.df)?;
    let standard = cost_standard(&spec)?;
    let sep = cost_depthwise_separable(&spec)?;
    let ratio = sep.ratio_to_standard(&spec)?;
    println!("standard {standard}");
    println!("depthwise {}", sep.depthwise);
    println!("pointwise {}", sep.pointwise);
    println!("separable {}", sep.total);
    println!("ratio {ratio}");
    let mut s = Summary::new("flops");
    s.set("standard", standard);
    s.set("separable", sep.total);
    s.set("ratio", ratio);
    if let Some(phi) = a.phi {
        let scale = compound_scale(&ScalingSpec {
            base_depth: a.d0,
            base_width: a.w0,
            base_resolution: a.r0,
            alpha: a.alpha,
            beta: a.beta,
            gamma: a.gamma,
            phi,
            budget: a.budget,
        })?;
        println!("depth {}", scale.depth);
        println!("width {}", scale.width);
        println!("resolution {}", scale.resolution);
        println!("flops_factor {}", scale.flops_factor);
        println!("constraint_residual {}", scale.constraint_residual);
        s.set("flops_factor", scale.flops_factor);
    }
    Ok(s)
}
