//! Record files.
//!
//! Layout: 8-byte magic, `u32` version, `u32` header length, JSON header,
//! `u32` CRC-32 of the header, then one little-endian `f64` block per channel
//! in header order. Each channel block's CRC-32 is stored in the header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::{Record, RecordMeta};
use crate::{Error, Result, TimeSeries};

pub const RECORD_MAGIC: &[u8; 8] = b"FECGREC\0";
pub const RECORD_VERSION: u32 = 1;

const CHANNELS: [&str; 4] = ["abdominal", "fecg_ref", "mecg_ref", "noise_ref"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChannelInfo {
    name: String,
    crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordHeader {
    fs: f64,
    len: usize,
    channels: Vec<ChannelInfo>,
    meta: RecordMeta,
}

fn block(x: &[f64]) -> Vec<u8> {
    x.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn record_to_bytes(record: &Record) -> Result<Vec<u8>> {
    let series = [&record.abdominal, &record.fecg_ref, &record.mecg_ref, &record.noise_ref];
    let len = record.abdominal.len();
    let fs = record.abdominal.fs;
    if series.iter().any(|s| s.len() != len || s.fs != fs) {
        return Err(Error::InvalidInput("record channels differ in length or rate".into()));
    }
    let blocks: Vec<Vec<u8>> = series.iter().map(|s| block(&s.samples)).collect();
    let header = RecordHeader {
        fs,
        len,
        channels: CHANNELS
            .iter()
            .zip(&blocks)
            .map(|(name, b)| ChannelInfo {
                name: name.to_string(),
                crc32: crc32fast::hash(b),
            })
            .collect(),
        meta: record.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + blocks.iter().map(Vec::len).sum::<usize>());
    out.extend_from_slice(RECORD_MAGIC);
    out.extend_from_slice(&RECORD_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&crc32fast::hash(&json).to_le_bytes());
    for b in &blocks {
        out.extend_from_slice(b);
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Truncated(format!("record ends inside {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8], what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4, what)?.try_into().unwrap()))
}

pub fn record_from_bytes(mut bytes: &[u8]) -> Result<Record> {
    if take(&mut bytes, 8, "magic")? != RECORD_MAGIC {
        return Err(Error::Format("not a record file".into()));
    }
    let version = read_u32(&mut bytes, "version")?;
    if version != RECORD_VERSION {
        return Err(Error::Version {
            found: version,
            supported: RECORD_VERSION,
        });
    }
    let hlen = read_u32(&mut bytes, "header length")? as usize;
    let json = take(&mut bytes, hlen, "header")?;
    if read_u32(&mut bytes, "header checksum")? != crc32fast::hash(json) {
        return Err(Error::Checksum("record header".into()));
    }
    let header: RecordHeader =
        serde_json::from_slice(json).map_err(|e| Error::Format(format!("record header: {e}")))?;
    let names: Vec<&str> = header.channels.iter().map(|c| c.name.as_str()).collect();
    if names != CHANNELS {
        return Err(Error::Format(format!("unexpected channel list {names:?}")));
    }
    let mut series = Vec::with_capacity(CHANNELS.len());
    for ch in &header.channels {
        let raw = take(&mut bytes, 8 * header.len, &ch.name)?;
        if crc32fast::hash(raw) != ch.crc32 {
            return Err(Error::Checksum(format!("channel {}", ch.name)));
        }
        let samples = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        series.push(TimeSeries::new(samples, header.fs)?);
    }
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after channels", bytes.len())));
    }
    let mut it = series.into_iter();
    Ok(Record {
        abdominal: it.next().unwrap(),
        fecg_ref: it.next().unwrap(),
        mecg_ref: it.next().unwrap(),
        noise_ref: it.next().unwrap(),
        meta: header.meta,
    })
}

pub fn save_record(record: &Record, path: &Path) -> Result<()> {
    let bytes = record_to_bytes(record)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_record(path: &Path) -> Result<Record> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    record_from_bytes(&bytes)
}
