//! Python bindings: record synthesis, preprocessing, peak detection,
//! separation and scoring on plain lists of floats.

use std::path::Path;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fecg_core::cunet::checkpoint;
use fecg_core::dataset::{generate_record as gen_record, RecordConfig};
use fecg_core::eval::{detect_rpeaks_with, score as score_record, DetectorConfig};
use fecg_core::pipeline::{separate as separate_with, Method};
use fecg_core::{Error, TimeSeries};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Config(_) | Error::InvalidInput(_) | Error::Shape(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn series(samples: Vec<f64>, fs: f64) -> PyResult<TimeSeries> {
    TimeSeries::new(samples, fs).map_err(py_err)
}

/// Synthesises one abdominal record. Returns a dict with the four channels
/// (`abdominal`, `fecg`, `mecg`, `noise`), `fs`, `snr_db`, `fetal_snr_db`
/// and the reference R-peak indices.
#[pyfunction]
#[pyo3(signature = (seed, duration_s = 60.0))]
fn generate_record<'py>(py: Python<'py>, seed: u64, duration_s: f64) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RecordConfig {
        duration_s,
        ..RecordConfig::default()
    };
    let r = gen_record(seed, &cfg).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("fs", r.abdominal.fs)?;
    d.set_item("snr_db", r.meta.snr_db)?;
    d.set_item("fetal_snr_db", r.fetal_snr_db())?;
    d.set_item("abdominal", &r.abdominal.samples)?;
    d.set_item("fecg", &r.fecg_ref.samples)?;
    d.set_item("mecg", &r.mecg_ref.samples)?;
    d.set_item("noise", &r.noise_ref.samples)?;
    d.set_item("fetal_rpeaks", &r.meta.fetal_rpeaks)?;
    d.set_item("maternal_rpeaks", &r.meta.maternal_rpeaks)?;
    Ok(d)
}

/// Baseline-wander, powerline and high-frequency removal.
#[pyfunction]
fn preprocess(samples: Vec<f64>, fs: f64) -> PyResult<Vec<f64>> {
    Ok(fecg_core::preprocess::preprocess(&series(samples, fs)?)
        .map_err(py_err)?
        .samples)
}

/// R-peak sample indices; `fetal` switches to the fetal refractory period and band.
#[pyfunction]
#[pyo3(signature = (samples, fs, fetal = false))]
fn detect_rpeaks(samples: Vec<f64>, fs: f64, fetal: bool) -> PyResult<Vec<usize>> {
    let cfg = if fetal {
        DetectorConfig::fetal()
    } else {
        DetectorConfig::default()
    };
    detect_rpeaks_with(&series(samples, fs)?, &cfg).map_err(py_err)
}

/// Fetal estimate from a raw abdominal trace. `method` is one of cunet, ekf,
/// eks, svd or passthrough; cunet needs `checkpoint`.
#[pyfunction]
#[pyo3(signature = (method, samples, fs, checkpoint = None))]
fn separate(method: &str, samples: Vec<f64>, fs: f64, checkpoint: Option<&str>) -> PyResult<Vec<f64>> {
    let method: Method = method.parse().map_err(py_err)?;
    let model = checkpoint
        .map(|p| checkpoint::load(Path::new(p)))
        .transpose()
        .map_err(py_err)?;
    Ok(separate_with(method, &series(samples, fs)?, model.as_ref())
        .map_err(py_err)?
        .samples)
}

/// PRD, PCC, F-score, SE and heart-rate error of an estimate.
#[pyfunction]
fn score<'py>(
    py: Python<'py>,
    reference: Vec<f64>,
    estimate: Vec<f64>,
    reference_peaks: Vec<usize>,
    detected_peaks: Vec<usize>,
    fs: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = score_record(&reference, &estimate, &reference_peaks, &detected_peaks, fs).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("prd", s.prd)?;
    d.set_item("pcc", s.pcc)?;
    d.set_item("pcc_centered", s.pcc_centered)?;
    d.set_item("se", s.se)?;
    d.set_item("f_score", s.f_score)?;
    d.set_item("hr_err", s.hr_err)?;
    d.set_item("tp", s.counts.tp)?;
    d.set_item("fp", s.counts.fp)?;
    d.set_item("fn", s.counts.fn_)?;
    Ok(d)
}

#[pymodule]
fn fecg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_record, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(detect_rpeaks, m)?)?;
    m.add_function(wrap_pyfunction!(separate, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    Ok(())
}
