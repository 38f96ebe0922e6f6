//! Dataset directory: `manifest.json` plus one little-endian binary block per
//! session.
//!
//! Block layout (all integers little-endian):
//!
//! ```text
//! magic  b"LOBD"      version u32      levels u32      origin i64
//! rows   u64          events  u64
//! prices u64 * rows * 2L      sizes u32 * rows * 2L
//! events (row u64, price u64, size u32, side u8) * events
//! ```
//!
//! The manifest records each block's SHA-256 so truncated or edited blocks
//! are rejected on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DataError, Dataset, Day, ExecutionEvent, SynthParams};
use crate::book::{BookSeries, Price, Side};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LOBD";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayManifest {
    pub file: String,
    pub role: String,
    pub rows: usize,
    pub events: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub params: Option<SynthParams>,
    pub days: Vec<DayManifest>,
}

impl Manifest {
    /// Digest over the per-day digests, identifying the dataset contents.
    pub fn data_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.days {
            h.update(d.role.as_bytes());
            h.update(d.sha256.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn encode_day(day: &Day) -> Vec<u8> {
    let s = &day.series;
    let mut buf = Vec::with_capacity(40 + s.prices().len() * 12 + day.events.len() * 21);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(s.levels() as u32).to_le_bytes());
    buf.extend_from_slice(&s.origin().to_le_bytes());
    buf.extend_from_slice(&(s.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(day.events.len() as u64).to_le_bytes());
    for p in s.prices() {
        buf.extend_from_slice(&p.ticks().to_le_bytes());
    }
    for z in s.sizes() {
        buf.extend_from_slice(&z.to_le_bytes());
    }
    for e in &day.events {
        buf.extend_from_slice(&(e.row as u64).to_le_bytes());
        buf.extend_from_slice(&e.price.ticks().to_le_bytes());
        buf.extend_from_slice(&e.size.to_le_bytes());
        buf.push(match e.side {
            Side::Bid => 0,
            Side::Ask => 1,
        });
    }
    buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    file: &'a str,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DataError> {
        let end = self.pos + N;
        let bytes = self.buf.get(self.pos..end).ok_or_else(|| DataError::ChecksumFailure {
            file: self.file.to_string(),
        })?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice of length N"))
    }
    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn i64(&mut self) -> Result<i64, DataError> {
        Ok(i64::from_le_bytes(self.take()?))
    }
}

fn decode_day(buf: &[u8], file: &str) -> Result<Day, DataError> {
    let mut c = Cursor { buf, pos: 0, file };
    if &c.take::<4>()? != MAGIC {
        return Err(DataError::ChecksumFailure { file: file.into() });
    }
    let version = c.u32()?;
    if version > FORMAT_VERSION {
        return Err(DataError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let levels = c.u32()? as usize;
    let origin = c.i64()?;
    let rows = c.u64()? as usize;
    let n_events = c.u64()? as usize;
    let n = rows * 2 * levels;
    let mut prices = Vec::with_capacity(n);
    for _ in 0..n {
        prices.push(Price::new(c.u64()?)?);
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        sizes.push(c.u32()?);
    }
    let mut events = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let row = c.u64()? as usize;
        let price = Price::new(c.u64()?)?;
        let size = c.u32()?;
        let side = match c.take::<1>()?[0] {
            0 => Side::Bid,
            1 => Side::Ask,
            _ => return Err(DataError::ChecksumFailure { file: file.into() }),
        };
        events.push(ExecutionEvent { row, price, size, side });
    }
    if c.pos != buf.len() {
        return Err(DataError::ChecksumFailure { file: file.into() });
    }
    let series = BookSeries::from_raw_parts(levels, origin, prices, sizes)?;
    Ok(Day { series, events })
}

/// Writes the dataset into `dir` (created if needed) and returns the manifest.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<Manifest, DataError> {
    fs::create_dir_all(dir)?;
    let mut days = Vec::new();
    let tagged = dataset
        .train
        .iter()
        .map(|d| ("train", d))
        .chain(dataset.test.iter().map(|d| ("test", d)));
    for (i, (role, day)) in tagged.enumerate() {
        let file = format!("day_{i:03}_{role}.bin");
        let bytes = encode_day(day);
        let sha = hex::encode(Sha256::digest(&bytes));
        fs::write(dir.join(&file), &bytes)?;
        days.push(DayManifest {
            file,
            role: role.to_string(),
            rows: day.series.len(),
            events: day.events.len(),
            sha256: sha,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        params: dataset.params.clone(),
        days,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DataError> {
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version > FORMAT_VERSION || version == 0 {
        return Err(DataError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(serde_json::from_value(raw)?)
}

/// Reads a dataset written by [`save_dataset`], verifying every checksum.
pub fn load_dataset(dir: &Path) -> Result<(Dataset, Manifest), DataError> {
    let manifest = read_manifest(dir)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for d in &manifest.days {
        let bytes = fs::read(dir.join(&d.file))?;
        if hex::encode(Sha256::digest(&bytes)) != d.sha256 {
            return Err(DataError::ChecksumFailure { file: d.file.clone() });
        }
        let day = decode_day(&bytes, &d.file)?;
        match d.role.as_str() {
            "train" => train.push(day),
            "test" => test.push(day),
            other => {
                return Err(DataError::InvalidParams(format!(
                    "unknown day role `{other}` in manifest"
                )))
            }
        }
    }
    Ok((
        Dataset {
            train,
            test,
            params: manifest.params.clone(),
        },
        manifest,
    ))
}
