use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fecg_core::cunet::{checkpoint, extract_fecg, NetConfig, TrainConfig};
use fecg_core::dataset::{generate_dataset, load_record, Dataset, DatasetConfig};
use fecg_core::pipeline::{evaluate, run_method, train_on_dataset, EvalReport, Method, SNR_BIN_EDGES};
use fecg_core::preprocess::preprocess;
use fecg_core::{Error, Result, TimeSeries, DEFAULT_FS};

use crate::plot::{line_chart, Series};

pub const OUTPUT_ROOT_ENV: &str = "FECG_OUTPUT_ROOT";
pub const RESOLVED_CONFIG: &str = "config.json";

#[derive(Debug, Parser)]
#[command(name = "fecg", version, about = "Fetal ECG extraction lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise a dataset of abdominal recordings.
    Generate(GenerateArgs),
    /// Train the complex UNet on a dataset's training split.
    Train(TrainArgs),
    /// Score extraction methods on a dataset split.
    Eval(EvalArgs),
    /// Extract the fetal trace from one recording with a trained model.
    Extract(ExtractArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Dataset directory to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long)]
    pub test_records: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// 10,100 records with the last 100 held out.
    #[arg(long)]
    pub full_scale: bool,
    /// Write only the manifest; records are regenerated from their seeds on use.
    #[arg(long)]
    pub manifest_only: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the checkpoint and loss curve.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seeds both initialisation and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for gradient evaluation; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trained model, required for the cunet method.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated subset of cunet, ekf, eks, svd, passthrough.
    #[arg(long)]
    pub methods: Option<String>,
    /// test, train or all.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// A record file (`.fbin`) or a one-column CSV of samples.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sampling rate of a CSV input.
    #[arg(long)]
    pub fs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub dataset: DatasetConfig,
    pub manifest_only: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub data: Option<PathBuf>,
    /// Network initialisation seed.
    pub model_seed: u64,
    /// Architecture; the toy network when absent. Grid sizes are derived.
    pub net: Option<NetConfig>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Test,
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRunConfig {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Defaults to every baseline, plus cunet when a checkpoint is given.
    pub methods: Option<Vec<Method>>,
    pub split: Split,
    /// Length of the overlay plots, seconds.
    pub overlay_seconds: f64,
}

impl Default for EvalRunConfig {
    fn default() -> Self {
        Self {
            data: None,
            checkpoint: None,
            methods: None,
            split: Split::Test,
            overlay_seconds: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractRunConfig {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub fs: Option<f64>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Extract(a) => cmd_extract(a),
    }
}

fn resolve_out(out: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if out.is_relative() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn require(value: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::Config(format!("missing {name} (flag or config file)")))
}

pub fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut cfg: GenerateConfig = load_config(a.config.as_deref())?;
    if a.full_scale {
        let full = DatasetConfig::full_scale();
        cfg.dataset.n_records = full.n_records;
        cfg.dataset.test_records = full.test_records;
    }
    if let Some(n) = a.records {
        cfg.dataset.n_records = n;
    }
    if let Some(n) = a.test_records {
        cfg.dataset.test_records = n;
    }
    if let Some(s) = a.seed {
        cfg.dataset.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.dataset.record.duration_s = d;
    }
    cfg.manifest_only |= a.manifest_only;
    cfg.dataset.validate().map_err(|e| Error::Config(e.to_string()))?;

    let out = resolve_out(&a.out);
    let pool = thread_pool(a.jobs)?;
    let manifest = pool.install(|| generate_dataset(&out, &cfg.dataset, cfg.manifest_only))?;
    write_file(&out.join(RESOLVED_CONFIG), to_json(&cfg)?)?;
    let snrs: Vec<f64> = manifest.records.iter().map(|r| r.snr_db).collect();
    let (lo, hi) = snrs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    println!(
        "{} records ({} train / {} test) in {}{}; SNR {:.2} to {:.2} dB",
        manifest.n_records,
        manifest.train.len(),
        manifest.test.len(),
        out.display(),
        if cfg.manifest_only { " (manifest only)" } else { "" },
        lo,
        hi
    );
    Ok(())
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainRunConfig = load_config(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.max_steps {
        cfg.train.max_steps = Some(v);
    }
    if let Some(v) = a.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
        cfg.model_seed = v;
    }
    if let Some(v) = a.threads {
        cfg.train.threads = v;
    }
    cfg.train.validate().map_err(|e| Error::Config(e.to_string()))?;
    let data = require(cfg.data.clone(), "--data")?;
    let dataset = Dataset::open(&data)?;
    let out = resolve_out(&a.out);
    create_dir(&out)?;

    let (model, report) = train_on_dataset(&dataset, cfg.net.clone(), cfg.model_seed, &cfg.train)?;
    checkpoint::save(&model, &out.join("model.ckpt"))?;

    let mut csv = String::from("step,loss\n");
    for (i, l) in report.step_losses.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l}");
    }
    write_file(&out.join("loss.csv"), csv)?;
    let steps: Vec<f64> = (0..report.step_losses.len()).map(|i| i as f64).collect();
    let svg = line_chart(
        "training loss",
        "step",
        "loss",
        &[Series {
            label: "batch loss",
            x: &steps,
            y: &report.step_losses,
        }],
    );
    write_file(&out.join("loss.svg"), svg)?;
    write_file(&out.join("train_report.json"), to_json(&report)?)?;
    write_file(&out.join(RESOLVED_CONFIG), to_json(&cfg)?)?;
    match (report.step_losses.first(), report.step_losses.last()) {
        (Some(first), Some(last)) => println!("{} steps, loss {first:.6} -> {last:.6}", report.steps),
        _ => println!("no optimiser steps taken"),
    }
    Ok(())
}

fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',').map(|m| m.trim().parse()).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn records_csv(report: &EvalReport) -> String {
    let mut csv = String::from("id,method,snr_db,fetal_snr_db,prd,pcc,pcc_centered,se,f_score,hr_err,tp,fp,fn\n");
    for r in &report.records {
        let s = &r.scores;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.id,
            r.method,
            r.snr_db,
            r.fetal_snr_db,
            s.prd,
            s.pcc,
            s.pcc_centered,
            s.se,
            s.f_score,
            fmt_opt(s.hr_err),
            s.counts.tp,
            s.counts.fp,
            s.counts.fn_
        );
    }
    csv
}

fn summary_csv(report: &EvalReport) -> String {
    let mut csv = String::from("method,metric,mean,std,n\n");
    for s in &report.summaries {
        for (name, m) in [
            ("prd", s.prd),
            ("pcc", s.pcc),
            ("pcc_centered", s.pcc_centered),
            ("f_score", s.f_score),
            ("se", s.se),
            ("hr_err", s.hr_err),
        ] {
            let _ = writeln!(csv, "{},{name},{},{},{}", s.method, m.mean, m.std, m.n);
        }
    }
    csv
}

fn bins_csv(report: &EvalReport) -> String {
    let mut csv = String::from("method,snr_lo,snr_hi,n,prd,pcc,f_score,se\n");
    for b in &report.bins {
        let s = &b.summary;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            s.method, b.lo, b.hi, s.prd.n, s.prd.mean, s.pcc.mean, s.f_score.mean, s.se.mean
        );
    }
    csv
}

fn overlay(out: &Path, stem: &str, title: &str, fs: f64, seconds: f64, traces: &[(&str, &[f64])]) -> Result<()> {
    let n = traces.iter().map(|(_, y)| y.len()).min().unwrap_or(0);
    let n = n.min((seconds * fs).round() as usize);
    let t: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
    let mut csv = String::from("t");
    for (label, _) in traces {
        let _ = write!(csv, ",{label}");
    }
    csv.push('\n');
    for i in 0..n {
        let _ = write!(csv, "{}", t[i]);
        for (_, y) in traces {
            let _ = write!(csv, ",{}", y[i]);
        }
        csv.push('\n');
    }
    write_file(&out.join(format!("{stem}.csv")), csv)?;
    let series: Vec<Series> = traces
        .iter()
        .map(|(label, y)| Series {
            label,
            x: &t,
            y: &y[..n],
        })
        .collect();
    write_file(
        &out.join(format!("{stem}.svg")),
        line_chart(title, "time (s)", "amplitude (uV)", &series),
    )
}

pub fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut cfg: EvalRunConfig = load_config(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data;
    }
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint;
    }
    if let Some(m) = a.methods.as_deref() {
        cfg.methods = Some(parse_methods(m)?);
    }
    if let Some(s) = a.split.as_deref() {
        cfg.split = serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown split '{s}' (expected test, train or all)")))?;
    }
    let methods = cfg.methods.clone().unwrap_or_else(|| {
        Method::ALL
            .into_iter()
            .filter(|m| *m != Method::Cunet || cfg.checkpoint.is_some())
            .collect()
    });
    if methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    if methods.contains(&Method::Cunet) && cfg.checkpoint.is_none() {
        return Err(Error::Config("method cunet needs --checkpoint".into()));
    }
    cfg.methods = Some(methods.clone());
    let data = require(cfg.data.clone(), "--data")?;
    let dataset = Dataset::open(&data)?;
    let model = cfg.checkpoint.as_deref().map(checkpoint::load).transpose()?;
    let ids: Vec<usize> = match cfg.split {
        Split::Test => dataset.manifest.test.clone(),
        Split::Train => dataset.manifest.train.clone(),
        Split::All => (0..dataset.manifest.n_records).collect(),
    };
    let out = resolve_out(&a.out);
    create_dir(&out)?;

    let pool = thread_pool(a.jobs)?;
    let report = pool.install(|| evaluate(&dataset, &ids, &methods, model.as_ref()))?;
    write_file(&out.join("report.json"), to_json(&report)?)?;
    write_file(&out.join("records.csv"), records_csv(&report))?;
    write_file(&out.join("summary.csv"), summary_csv(&report))?;
    write_file(&out.join("snr_bins.csv"), bins_csv(&report))?;

    if let Some(&first) = ids.first() {
        let record = dataset.record(first)?;
        for &m in &methods {
            let est = run_method(m, &record, model.as_ref())?;
            overlay(
                &out,
                &format!("overlay_{m}"),
                &format!("record {first}: reference vs {m}"),
                record.fecg_ref.fs,
                cfg.overlay_seconds,
                &[("reference", &record.fecg_ref.samples), (m.name(), &est.samples)],
            )?;
        }
    }
    write_file(&out.join(RESOLVED_CONFIG), to_json(&cfg)?)?;

    println!("{:<12} {:>16} {:>16} {:>8} {:>8}", "method", "PRD", "PCC", "F", "SE");
    for s in &report.summaries {
        println!(
            "{:<12} {:>7.1} ± {:<6.1} {:>7.1} ± {:<6.1} {:>8.2} {:>8.2}",
            s.method.name(),
            s.prd.mean,
            s.prd.std,
            s.pcc.mean,
            s.pcc.std,
            s.f_score.mean,
            s.se.mean
        );
    }
    let edges: Vec<String> = SNR_BIN_EDGES.iter().map(|e| e.to_string()).collect();
    println!("SNR bins {} dB written to snr_bins.csv", edges.join(" / "));
    Ok(())
}

fn read_csv_samples(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .filter_map(|(i, l)| match l.parse::<f64>() {
            Ok(v) => Some(Ok(v)),
            // tolerate one header line
            Err(_) if i == 0 => None,
            Err(_) => Some(Err(Error::Format(format!(
                "{}: line {} is not a number",
                path.display(),
                i + 1
            )))),
        })
        .collect()
}

pub fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let mut cfg: ExtractRunConfig = load_config(a.config.as_deref())?;
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint;
    }
    if a.input.is_some() {
        cfg.input = a.input;
    }
    if a.fs.is_some() {
        cfg.fs = a.fs;
    }
    let ckpt = require(cfg.checkpoint.clone(), "--checkpoint")?;
    let input = require(cfg.input.clone(), "--input")?;
    let model = checkpoint::load(&ckpt)?;
    let is_record = input.extension().is_some_and(|e| e == "fbin");
    let (raw, reference) = if is_record {
        let r = load_record(&input)?;
        (r.abdominal, Some(r.fecg_ref))
    } else {
        let fs = cfg.fs.unwrap_or(DEFAULT_FS);
        (TimeSeries::new(read_csv_samples(&input)?, fs)?, None)
    };
    let x = preprocess(&raw)?;
    let fecg = extract_fecg(&model, &x)?;
    let out = resolve_out(&a.out);
    create_dir(&out)?;

    let mut csv = String::from("fecg\n");
    for v in &fecg.samples {
        let _ = writeln!(csv, "{v}");
    }
    write_file(&out.join("fecg.csv"), csv)?;
    let mut traces: Vec<(&str, &[f64])> = vec![("abdominal", &x.samples), ("extracted", &fecg.samples)];
    if let Some(r) = &reference {
        traces.push(("reference", &r.samples));
    }
    overlay(&out, "overlay", "extracted fetal ECG", fecg.fs, 5.0, &traces)?;
    write_file(&out.join(RESOLVED_CONFIG), to_json(&cfg)?)?;
    println!(
        "{} samples at {} Hz written to {}",
        fecg.len(),
        fecg.fs,
        out.join("fecg.csv").display()
    );
    Ok(())
}
