//! Per-method evaluation over a dataset split.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ekf_denoise, eks_denoise, svd_template_subtract, EkfConfig, FETAL_RANK, MATERNAL_RANK};
use crate::cunet::{
    extract_fecg, train, training_examples, Model, NetConfig, SegmentConfig, TrainConfig, TrainReport, TrainingExample,
};
use crate::dataset::{Dataset, Record};
use crate::eval::{detect_rpeaks, detect_rpeaks_with, score, DetectorConfig, RecordScores};
use crate::preprocess::preprocess;
use crate::spectral::StftConfig;
use crate::synth::EcgModelParams;
use crate::{Error, Result, TimeSeries};

/// Edges of the fetal-referenced SNR bins (dB).
pub const SNR_BIN_EDGES: [f64; 6] = [-25.0, -20.0, -15.0, -10.0, -5.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cunet,
    Ekf,
    Eks,
    Svd,
    Passthrough,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Cunet,
        Method::Ekf,
        Method::Eks,
        Method::Svd,
        Method::Passthrough,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cunet => "cunet",
            Method::Ekf => "ekf",
            Method::Eks => "eks",
            Method::Svd => "svd",
            Method::Passthrough => "passthrough",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown method '{s}' (expected cunet, ekf, eks, svd or passthrough)"
            ))
        })
    }
}

/// Fetal estimate from the abdominal trace of `record` with `method`.
pub fn run_method(method: Method, record: &Record, model: Option<&Model>) -> Result<TimeSeries> {
    separate(method, &record.abdominal, model)
}

/// Preprocesses a raw abdominal trace and extracts the fetal signal with `method`.
pub fn separate(method: Method, abdominal: &TimeSeries, model: Option<&Model>) -> Result<TimeSeries> {
    let x = preprocess(abdominal)?;
    match method {
        Method::Passthrough => Ok(x),
        Method::Cunet => {
            let model = model.ok_or_else(|| Error::Config("method cunet needs a checkpoint".into()))?;
            extract_fecg(model, &x)
        }
        Method::Ekf | Method::Eks => {
            let peaks = detect_rpeaks(&x)?;
            let run = if method == Method::Ekf {
                ekf_denoise
            } else {
                eks_denoise
            };
            Ok(run(&x, &peaks, &EcgModelParams::default(), &EkfConfig::default())?.residual)
        }
        Method::Svd => {
            let peaks = detect_rpeaks(&x)?;
            let residual = svd_template_subtract(&x, &peaks, MATERNAL_RANK)?.residual;
            let fetal = detect_rpeaks_with(&residual, &DetectorConfig::fetal())?;
            if fetal.len() < 3 {
                return Ok(residual);
            }
            Ok(svd_template_subtract(&residual, &fetal, FETAL_RANK)?.estimate)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub id: usize,
    pub method: Method,
    pub snr_db: f64,
    pub fetal_snr_db: f64,
    pub scores: RecordScores,
}

pub fn evaluate_record(
    id: usize,
    record: &Record,
    methods: &[Method],
    model: Option<&Model>,
) -> Result<Vec<RecordResult>> {
    let fetal_snr_db = record.fetal_snr_db();
    methods
        .iter()
        .map(|&method| {
            let est = run_method(method, record, model)?;
            let detected = detect_rpeaks_with(&est, &DetectorConfig::fetal())?;
            let scores = score(
                &record.fecg_ref.samples,
                &est.samples,
                &record.meta.fetal_rpeaks,
                &detected,
                record.fecg_ref.fs,
            )?;
            Ok(RecordResult {
                id,
                method,
                snr_db: record.meta.snr_db,
                fetal_snr_db,
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Record {
            id,
            source: Box::new(e),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Population statistics; NaN for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            mean,
            std: var.sqrt(),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub prd: MeanStd,
    pub pcc: MeanStd,
    pub pcc_centered: MeanStd,
    pub f_score: MeanStd,
    pub se: MeanStd,
    /// Over the records where the heart-rate error is defined.
    pub hr_err: MeanStd,
}

impl MethodSummary {
    fn of(method: Method, rows: &[&RecordResult]) -> Self {
        let col =
            |f: &dyn Fn(&RecordScores) -> f64| MeanStd::of(&rows.iter().map(|r| f(&r.scores)).collect::<Vec<_>>());
        let hr: Vec<f64> = rows.iter().filter_map(|r| r.scores.hr_err).collect();
        Self {
            method,
            prd: col(&|s| s.prd),
            pcc: col(&|s| s.pcc),
            pcc_centered: col(&|s| s.pcc_centered),
            f_score: col(&|s| s.f_score),
            se: col(&|s| s.se),
            hr_err: MeanStd::of(&hr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrBin {
    pub lo: f64,
    pub hi: f64,
    pub summary: MethodSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by record id, then method.
    pub records: Vec<RecordResult>,
    pub summaries: Vec<MethodSummary>,
    /// One entry per method and bin, bins in increasing SNR.
    pub bins: Vec<SnrBin>,
}

impl EvalReport {
    pub fn from_results(mut records: Vec<RecordResult>, methods: &[Method]) -> Self {
        records.sort_by_key(|r| (r.id, r.method));
        let summaries = methods
            .iter()
            .map(|&m| {
                let rows: Vec<&RecordResult> = records.iter().filter(|r| r.method == m).collect();
                MethodSummary::of(m, &rows)
            })
            .collect();
        let mut bins = Vec::new();
        for &m in methods {
            for w in SNR_BIN_EDGES.windows(2) {
                let rows: Vec<&RecordResult> = records
                    .iter()
                    .filter(|r| r.method == m && r.fetal_snr_db >= w[0] && r.fetal_snr_db < w[1])
                    .collect();
                bins.push(SnrBin {
                    lo: w[0],
                    hi: w[1],
                    summary: MethodSummary::of(m, &rows),
                });
            }
        }
        Self {
            records,
            summaries,
            bins,
        }
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn bins_for(&self, method: Method) -> Vec<&SnrBin> {
        self.bins.iter().filter(|b| b.summary.method == method).collect()
    }
}

/// Evaluates `methods` on the records `ids`, running records in parallel on
/// the current rayon pool. The report does not depend on the thread count.
pub fn evaluate(dataset: &Dataset, ids: &[usize], methods: &[Method], model: Option<&Model>) -> Result<EvalReport> {
    if methods.contains(&Method::Cunet) && model.is_none() {
        return Err(Error::Config("method cunet needs a checkpoint".into()));
    }
    let per_record: Vec<Vec<RecordResult>> = ids
        .par_iter()
        .map(|&id| {
            let record = dataset.record(id)?;
            evaluate_record(id, &record, methods, model)
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::from_results(
        per_record.into_iter().flatten().collect(),
        methods,
    ))
}

/// Training segments from the preprocessed abdominal traces of `ids`, in id order.
pub fn dataset_examples(dataset: &Dataset, ids: &[usize], segment: &SegmentConfig) -> Result<Vec<TrainingExample>> {
    let per_record: Vec<Vec<TrainingExample>> = ids
        .par_iter()
        .map(|&id| {
            let record = dataset.record(id)?;
            let x = preprocess(&record.abdominal)?;
            training_examples(&x, &record.fecg_ref, segment).map_err(|e| Error::Record {
                id,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(per_record.into_iter().flatten().collect())
}

/// Initialises a model (the toy architecture unless `net` is given; its grid
/// size is always derived from the STFT and segment settings) and trains it
/// on the training split.
pub fn train_on_dataset(
    dataset: &Dataset,
    net: Option<NetConfig>,
    model_seed: u64,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let stft = StftConfig::default();
    let segment = SegmentConfig::default();
    let grid = Model::net_config_for(&stft, &segment);
    let net = match net {
        Some(n) => NetConfig {
            height: grid.height,
            width: grid.width,
            ..n
        },
        None => grid,
    };
    let mut model = Model::init(net, stft, segment, dataset.manifest.fs, model_seed)?;
    let examples = dataset_examples(dataset, &dataset.manifest.train, &segment)?;
    let report = train(&mut model, &examples, cfg)?;
    Ok((model, report))
}
