//! In-silico dataset generation, persistence and train/test splits.
//!
//! A dataset directory holds `manifest.json` and `records/NNNNN.fbin`. Record
//! seeds are derived from the dataset seed and the record id, so any record
//! can be regenerated from the manifest alone.

mod generate;
mod record;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use generate::{generate_record, record_snr, Record, RecordConfig, RecordMeta};
pub use record::{load_record, record_from_bytes, record_to_bytes, save_record, RECORD_MAGIC, RECORD_VERSION};

use crate::rng::derive_seed;
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_DIR: &str = "records";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_records: usize,
    /// The last `test_records` ids form the test split.
    pub test_records: usize,
    pub seed: u64,
    pub record: RecordConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DatasetConfig {
    /// 120 one-minute records, 100 train / 20 test.
    pub fn desk() -> Self {
        Self {
            n_records: 120,
            test_records: 20,
            seed: 0,
            record: RecordConfig::default(),
        }
    }

    /// 10,100 one-minute records with 100 held out for testing.
    pub fn full_scale() -> Self {
        Self {
            n_records: 10_100,
            test_records: 100,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_records < 2 {
            return Err(Error::Config(format!(
                "need at least 2 records, got {}",
                self.n_records
            )));
        }
        if self.test_records == 0 || self.test_records >= self.n_records {
            return Err(Error::Config(format!(
                "test split of {} must be between 1 and {}",
                self.test_records,
                self.n_records - 1
            )));
        }
        self.record.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub file: String,
    pub seed: u64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub fs: f64,
    pub n_records: usize,
    pub config: DatasetConfig,
    /// False when only the manifest was written; records are then regenerated on demand.
    pub files_written: bool,
    pub records: Vec<ManifestEntry>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn record_seed(dataset_seed: u64, id: usize) -> u64 {
    derive_seed(dataset_seed, id as u64)
}

pub fn record_file_name(id: usize) -> String {
    format!("{RECORDS_DIR}/{id:05}.fbin")
}

impl DatasetManifest {
    pub fn build(cfg: &DatasetConfig, files_written: bool) -> Result<Self> {
        cfg.validate()?;
        let records = (0..cfg.n_records)
            .map(|id| {
                let seed = record_seed(cfg.seed, id);
                ManifestEntry {
                    id,
                    file: record_file_name(id),
                    seed,
                    snr_db: record_snr(seed, &cfg.record),
                }
            })
            .collect();
        let split = cfg.n_records - cfg.test_records;
        Ok(Self {
            version: MANIFEST_VERSION,
            fs: cfg.record.fs,
            n_records: cfg.n_records,
            config: cfg.clone(),
            files_written,
            records,
            train: (0..split).collect(),
            test: (split..cfg.n_records).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Version {
                found: self.version,
                supported: MANIFEST_VERSION,
            });
        }
        if self.records.len() != self.n_records || self.records.iter().enumerate().any(|(i, r)| r.id != i) {
            return Err(Error::Format("manifest record list is inconsistent".into()));
        }
        let mut seen = vec![false; self.n_records];
        for &id in self.train.iter().chain(&self.test) {
            if id >= self.n_records || std::mem::replace(&mut seen[id], true) {
                return Err(Error::Format(format!("record {id} listed twice or out of range")));
            }
        }
        Ok(())
    }
}

/// A dataset directory opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Loads a record from disk, or regenerates it from its seed for
    /// manifest-only datasets.
    pub fn record(&self, id: usize) -> Result<Record> {
        let entry = self
            .manifest
            .records
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("no record {id}")))?;
        let wrap = |e| Error::Record {
            id,
            source: Box::new(e),
        };
        if self.manifest.files_written {
            load_record(&self.dir.join(&entry.file)).map_err(wrap)
        } else {
            generate_record(entry.seed, &self.manifest.config.record).map_err(wrap)
        }
    }
}

fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Generates every record into `dir` (in parallel on the current rayon pool)
/// and writes the manifest last.
pub fn generate_dataset(dir: &Path, cfg: &DatasetConfig, manifest_only: bool) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::build(cfg, !manifest_only)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !manifest_only {
        let rdir = dir.join(RECORDS_DIR);
        std::fs::create_dir_all(&rdir).map_err(|e| Error::io(&rdir, e))?;
        manifest.records.par_iter().try_for_each(|entry| {
            generate_record(entry.seed, &cfg.record)
                .and_then(|r| save_record(&r, &dir.join(&entry.file)))
                .map_err(|e| Error::Record {
                    id: entry.id,
                    source: Box::new(e),
                })
        })?;
    }
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}
