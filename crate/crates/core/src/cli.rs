//! Command-line front end. Every subcommand writes `effective_config.json`
//! next to its outputs. Exit codes: 0 success, 2 usage or validation error,
//! 3 numeric failure (divergence, failed gradient check).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::autodiff::GradCheckOptions;
use crate::bench;
use crate::checkpoint;
use crate::datagen::{self, Asynchrony, SynthSpec};
use crate::dataset::{self, Splits, DEFAULT_SPLIT};
use crate::error::{Error, Result};
use crate::imts::ImtsSample;
use crate::model::{Kafnet, ModelConfig};
use crate::training::{self, evaluate, model_grad_check, TrainConfig};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "KAFNET_OUT";
const DEFAULT_OUT: &str = "kafnet-out";

#[derive(Debug, Parser)]
#[command(
    name = "kafnet",
    version,
    about = "Irregular multivariate time series forecasting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (manifest plus CSV files).
    Gen(GenArgs),
    /// Train a model and write the best checkpoint and history.
    Train(TrainArgs),
    /// Pooled MSE/MAE of a checkpoint on one split.
    Eval(EvalArgs),
    /// Predict values for a query file.
    Predict(PredictArgs),
    /// Finite-difference check of every parameter group.
    Gradcheck(GradcheckArgs),
    /// Forward wall time against grid length and variate count.
    Bench(BenchArgs),
    /// Dump attention maps per block and head.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    /// Named preset: sinusoid-a, damped-b, trend-c.
    #[arg(long, default_value = "sinusoid-a")]
    pub preset: String,
    /// JSON generator spec; replaces the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variates: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub intensity: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub queries: Option<usize>,
    /// independent, shared-grid or mixed.
    #[arg(long)]
    pub asynchrony: Option<String>,
    /// Explicit train,val,test sample counts instead of 60/20/20.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<usize>>,
    #[command(flatten)]
    pub out: OutArg,
}

/// Flags that override [`TrainConfig`] fields.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ModelFlags {
    #[arg(long)]
    pub kernels: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub time_embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub rff_dim: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub per_variate_time_norm: bool,
    #[arg(long)]
    pub no_preconv: bool,
    #[arg(long)]
    pub no_tka_gate: bool,
    #[arg(long)]
    pub softmax_attention: bool,
    #[arg(long)]
    pub no_time_norm: bool,
    /// Record wall-clock seconds in the history file.
    #[arg(long)]
    pub wall_time: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// JSON config with sections data, model, run, seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory (overrides the config's run.out).
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Observation CSV providing each series' history.
    #[arg(long)]
    pub observations: PathBuf,
    /// Query CSV; a target column, if present, is ignored.
    #[arg(long)]
    pub queries: PathBuf,
    /// Variate count when the checkpoint does not record one.
    #[arg(long)]
    pub variates: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    /// JSON config; only the model section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Lower bound on the relative-error denominator.
    #[arg(long, default_value_t = GradCheckOptions::default().floor)]
    pub floor: f64,
    /// Seed of the toy sample.
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
    /// Add U(-s, s) noise to every parameter before checking. A fresh model
    /// has zero query/key gradients; jitter makes those groups non-trivial.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048")]
    pub lengths: Vec<usize>,
    /// Variate count for the length sweep.
    #[arg(long, default_value_t = 8)]
    pub fixed_variates: usize,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub variates: Vec<usize>,
    /// Grid length for the variate sweep.
    #[arg(long, default_value_t = 256)]
    pub fixed_length: usize,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Position of the sample within the split.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Structure of the `--config` document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfigFile {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub model: TrainConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl CliConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

impl ModelFlags {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(kernels => kernels, channels => preconv_channels, time_embed_dim => time_embed_dim,
             hidden => hidden, heads => heads, rff_dim => rff_dim, blocks => blocks,
             lr => learning_rate, batch_size => batch_size, epochs => max_epochs,
             patience => patience, seed => seed);
        cfg.per_variate_time_norm |= self.per_variate_time_norm;
        cfg.ablation.no_preconv |= self.no_preconv;
        cfg.ablation.no_tka_gate |= self.no_tka_gate;
        cfg.ablation.softmax_attention |= self.softmax_attention;
        cfg.ablation.no_time_norm |= self.no_time_norm;
        cfg.record_wall_time |= self.wall_time;
    }
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numeric() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn numeric(message: String) -> CliError {
    CliError { code: 3, message }
}

fn usage(message: String) -> CliError {
    CliError { code: 2, message }
}

type CliResult = std::result::Result<(), CliError>;

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn echo_config<T: Serialize>(dir: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(&dir.join("effective_config.json"), &text)
}

fn warn_all(warnings: Vec<String>) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn gen_spec(a: &GenArgs) -> Result<SynthSpec> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => SynthSpec::preset(&a.preset, 0)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {:?}", a.preset)))?,
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.variates {
        spec.n_variates = v;
    }
    if let Some(v) = a.samples {
        spec.n_samples = v;
    }
    if let Some(v) = a.intensity {
        spec.intensity = v;
    }
    if let Some(v) = a.noise {
        spec.noise_std = v;
    }
    if let Some(v) = a.horizon {
        spec.horizon_fraction = v;
    }
    if let Some(v) = a.queries {
        spec.queries_per_variate = v;
    }
    if let Some(v) = &a.asynchrony {
        spec.asynchrony = match v.as_str() {
            "independent" => Asynchrony::Independent,
            "shared-grid" => Asynchrony::SharedGrid,
            "mixed" => Asynchrony::Mixed,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown asynchrony mode {other:?}"
                )))
            }
        };
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_gen(a: &GenArgs) -> CliResult {
    let spec = gen_spec(a)?;
    let counts = match &a.split {
        Some(c) => [c[0], c[1], c[2]],
        None => dataset::split_counts(spec.n_samples, DEFAULT_SPLIT.0, DEFAULT_SPLIT.1)?,
    };
    let samples = datagen::generate(&spec)?;
    let splits = dataset::split_samples(samples, spec.seed, counts)?;
    let manifest = dataset::write_dataset(&a.out.out, &splits, Some(&spec))?;
    echo_config(
        &a.out.out,
        &serde_json::json!({ "generator": spec, "split": counts }),
    )?;
    println!("{}", manifest.display());
    Ok(())
}

/// Effective training setup: config file, then flags.
pub fn resolve_train(a: &TrainArgs) -> Result<(CliConfigFile, PathBuf)> {
    let mut file = match &a.config {
        Some(p) => CliConfigFile::load(p)?,
        None => CliConfigFile::default(),
    };
    if let Some(seed) = file.seed {
        file.model.seed = seed;
    }
    a.model.apply(&mut file.model);
    file.seed = Some(file.model.seed);
    if let Some(d) = &a.data {
        file.data = Some(d.clone());
    }
    let out = a
        .out
        .clone()
        .or_else(|| file.run.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    file.run.out = Some(out.clone());
    file.model.validate()?;
    Ok((file, out))
}

fn cmd_train(a: &TrainArgs) -> CliResult {
    let (cfg, out) = resolve_train(a)?;
    let manifest = cfg
        .data
        .clone()
        .ok_or_else(|| usage("train: no dataset given (--data or config data)".into()))?;
    warn_all(cfg.model.warnings());
    let (m, splits) = dataset::read_dataset(&manifest)?;
    echo_config(&out, &cfg)?;
    let outcome = training::train_with_observer(&splits.train, &splits.val, &cfg.model, |r| {
        eprintln!(
            "epoch {:>4}  train {:.6}  val_mse {:.6}  val_mae {:.6}",
            r.epoch, r.train_loss, r.val_mse, r.val_mae
        );
    })?;
    checkpoint::save(
        &outcome.model,
        Some(m.n_variates),
        &out.join("checkpoint.json"),
    )?;
    write(&out.join("history.csv"), &outcome.history.to_csv())?;
    if let Some(reason) = outcome.divergence {
        return Err(numeric(format!("training diverged: {reason}")));
    }
    println!(
        "best_epoch={} best_val_mse={} checkpoint={}",
        outcome.history.best_epoch,
        outcome.history.best_val_mse,
        out.join("checkpoint.json").display()
    );
    Ok(())
}

fn split_of(splits: Splits, name: &str) -> Result<Vec<ImtsSample>> {
    match name {
        "train" => Ok(splits.train),
        "val" => Ok(splits.val),
        "test" => Ok(splits.test),
        other => Err(Error::InvalidConfig(format!(
            "unknown split {other:?}; use train, val or test"
        ))),
    }
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    let (model, _) = checkpoint::load(&a.checkpoint)?;
    let (_, splits) = dataset::read_dataset(&a.data)?;
    let samples = split_of(splits, &a.split)?;
    let m = evaluate(&model, &samples)?;
    echo_config(&a.out.out, a)?;
    write(
        &a.out.out.join(format!("eval_{}.csv", a.split)),
        &format!(
            "split,mse,mae,count\n{},{:?},{:?},{}\n",
            a.split, m.mse, m.mae, m.count
        ),
    )?;
    println!(
        "split={} mse={:?} mae={:?} count={}",
        a.split, m.mse, m.mae, m.count
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> CliResult {
    let (model, recorded) = checkpoint::load(&a.checkpoint)?;
    let n_variates = a
        .variates
        .or(recorded)
        .ok_or_else(|| usage("predict: variate count unknown; pass --variates".into()))?;
    let qbytes = fs::read(&a.queries).map_err(|e| Error::io(&a.queries, e))?;
    let rows = dataset::parse_queries(&a.queries, &qbytes)?;
    if rows.is_empty() {
        return Err(usage(format!("{}: no queries", a.queries.display())));
    }
    let samples = dataset::read_files(&a.observations, &a.queries, n_variates)?;
    let mut predicted = std::collections::HashMap::new();
    for s in &samples {
        if s.n_queries() == 0 {
            continue;
        }
        let preds = model.forward(s)?;
        let mut seen = vec![0usize; n_variates];
        for ((n, _), p) in s.flat_queries().into_iter().zip(preds) {
            predicted.insert((s.id(), n, seen[n]), p);
            seen[n] += 1;
        }
    }
    let mut seen = std::collections::HashMap::new();
    let mut text = String::from("series_id,variate,time,prediction\n");
    for (_, id, n, q) in &rows {
        let k = seen.entry((*id, *n)).or_insert(0usize);
        let p = predicted[&(*id, *n, *k)];
        *k += 1;
        text.push_str(&format!("{id},{n},{:?},{p:?}\n", q.time));
    }
    echo_config(&a.out.out, a)?;
    let path = a.out.out.join("predictions.csv");
    write(&path, &text)?;
    println!("{}", path.display());
    Ok(())
}

fn model_config(config: Option<&Path>, flags: &ModelFlags) -> Result<ModelConfig> {
    let mut cfg = match config {
        Some(p) => {
            let f = CliConfigFile::load(p)?;
            let mut m = f.model;
            if let Some(s) = f.seed {
                m.seed = s;
            }
            m
        }
        None => TrainConfig::default(),
    };
    flags.apply(&mut cfg);
    let m = cfg.model();
    m.validate()?;
    warn_all(m.warnings());
    Ok(m)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult {
    let cfg = model_config(a.config.as_deref(), &a.model)?;
    let model = Kafnet::new(cfg.clone())?.perturbed(a.jitter, cfg.init_seed ^ a.sample_seed)?;
    let sample = datagen::toy_sample(a.sample_seed);
    let opts = GradCheckOptions {
        step: a.step,
        tol: a.tol,
        floor: a.floor,
    };
    let report = model_grad_check(&model, &sample, opts)?;
    let mut csv = String::from("group,elements,max_rel_err,worst_index,analytic,numeric,passed\n");
    for g in &report.groups {
        println!(
            "{:<32} {:>6}  max_rel_err {:.3e}  {}",
            g.name,
            g.elements,
            g.max_rel_err,
            if g.passed { "ok" } else { "FAIL" }
        );
        csv.push_str(&format!(
            "{},{},{:e},{},{:e},{:e},{}\n",
            g.name, g.elements, g.max_rel_err, g.worst_index, g.analytic, g.numeric, g.passed
        ));
    }
    echo_config(&a.out.out, &serde_json::json!({ "model": cfg, "check": a }))?;
    write(&a.out.out.join("gradcheck.csv"), &csv)?;
    if report.passed() {
        println!(
            "all {} groups passed at tol {:e}",
            report.groups.len(),
            a.tol
        );
        Ok(())
    } else {
        let failed = report.groups.iter().filter(|g| !g.passed).count();
        Err(numeric(format!(
            "{failed} of {} groups exceed tol {:e} (max {:e})",
            report.groups.len(),
            a.tol,
            report.max_rel_err()
        )))
    }
}

fn cmd_bench(a: &BenchArgs) -> CliResult {
    let cfg = model_config(a.config.as_deref(), &a.model)?;
    let mut rows = bench::sweep_lengths(&cfg, &a.lengths, a.fixed_variates, a.reps)?;
    let by_n = bench::sweep_variates(&cfg, &a.variates, a.fixed_length, a.reps)?;
    let ratios_l = bench::doubling_ratios(&rows);
    let ratios_n = bench::doubling_ratios(&by_n);
    rows.extend(by_n);
    echo_config(&a.out.out, &serde_json::json!({ "model": cfg, "bench": a }))?;
    write(&a.out.out.join("bench.csv"), &bench::to_csv(&rows))?;
    print!("{}", bench::to_csv(&rows));
    println!("length ratios {ratios_l:.3?}");
    println!("variate ratios {ratios_n:.3?}");
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> CliResult {
    let (model, _) = checkpoint::load(&a.checkpoint)?;
    let (_, splits) = dataset::read_dataset(&a.data)?;
    let samples = split_of(splits, &a.split)?;
    let sample = samples.get(a.index).ok_or_else(|| {
        usage(format!(
            "split {} has {} samples, index {} out of range",
            a.split,
            samples.len(),
            a.index
        ))
    })?;
    let maps = model.attention_maps(sample)?;
    let mut csv = String::from("block,head,row,col,weight\n");
    let mut worst = 0.0f64;
    for m in &maps {
        for i in 0..m.weights.rows() {
            for j in 0..m.weights.cols() {
                csv.push_str(&format!(
                    "{},{},{},{},{:?}\n",
                    m.block,
                    m.head,
                    i,
                    j,
                    m.weights.get(i, j)
                ));
            }
        }
        worst = worst.max(m.consistency_error(&model)?);
    }
    echo_config(&a.out.out, a)?;
    let path = a.out.out.join("attention.csv");
    write(&path, &csv)?;
    println!(
        "{} maps ({} blocks x {} heads), series {}, max |map.V - O| {:e}",
        maps.len(),
        model.config().blocks,
        model.config().heads,
        sample.id(),
        worst
    );
    Ok(())
}
