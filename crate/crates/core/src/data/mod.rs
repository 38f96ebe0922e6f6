//! Market data in and out: LOBSTER ingestion, the synthetic market generator
//! and the on-disk dataset container.

mod lobster;
mod store;
mod synth;

pub use lobster::{parse_lobster_book, parse_lobster_messages, BookTiming, TimeGrid};
pub use store::{load_dataset, read_manifest, save_dataset, DayManifest, Manifest, FORMAT_VERSION};
pub use synth::{generate_dataset, generate_day, SynthParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, BookSeries, Price, Side, SnippetShape};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: crossed book (best bid {bid} >= best ask {ask})")]
    CrossedBook { line: usize, bid: u64, ask: u64 },
    #[error("line {line}: {side:?} levels are not strictly monotone")]
    NonMonotoneLevels { line: usize, side: Side },
    #[error("empty input")]
    EmptyInput,
    #[error("line {line}: event maps to row {row}, outside a series of {rows} rows")]
    AlignmentError { line: usize, row: i64, rows: usize },
    #[error("unsupported format version {found} (this build reads up to {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("checksum mismatch for {file}")]
    ChecksumFailure { file: String },
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Book(#[from] BookError),
}

/// A transaction printed against resting liquidity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionEvent {
    /// Row of the series in which the execution is observed.
    pub row: usize,
    pub price: Price,
    pub size: u32,
    /// Side of the resting order that was hit.
    pub side: Side,
}

/// One trading session: the snapshot series and its executions (sorted by row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Day {
    pub series: BookSeries,
    pub events: Vec<ExecutionEvent>,
}

impl Day {
    pub fn new(series: BookSeries, mut events: Vec<ExecutionEvent>) -> Self {
        events.sort_by_key(|e| e.row);
        Day { series, events }
    }
}

/// Training and test sessions of one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Day>,
    pub test: Vec<Day>,
    /// Generator settings when the data is synthetic.
    pub params: Option<SynthParams>,
}

impl Dataset {
    pub fn train_series(&self) -> Vec<&BookSeries> {
        self.train.iter().map(|d| &d.series).collect()
    }

    pub fn test_series(&self) -> Vec<&BookSeries> {
        self.test.iter().map(|d| &d.series).collect()
    }

    pub fn levels(&self) -> usize {
        self.train
            .iter()
            .chain(&self.test)
            .next()
            .map_or(crate::book::DEFAULT_LEVELS, |d| d.series.levels())
    }

    /// Checks that every day can hold at least one snippet of `shape`.
    pub fn check_shape(&self, shape: SnippetShape) -> Result<(), BookError> {
        for d in self.train.iter().chain(&self.test) {
            if shape.starts_in(d.series.len()) == 0 {
                return Err(BookError::SeriesTooShort {
                    len: d.series.len(),
                    window: shape.window,
                    horizon: shape.horizon,
                });
            }
        }
        Ok(())
    }
}
