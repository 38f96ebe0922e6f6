//! Order-book snapshots, the size-weighted-average (SWA) feature, threshold
//! labeling and snippet sampling.
//!
//! Prices are integer ticks of $0.0001 (the LOBSTER encoding), sizes are
//! integer shares. A [`BookSeries`] stores its rows flattened: each row holds
//! `2 * levels` slots laid out as `[bid_1 .. bid_L, ask_1 .. ask_L]`, level 1
//! being the best price on that side. The same slot layout is used by every
//! per-row perturbation buffer in the crate.

mod features;
mod labels;

pub use features::{clean_swa, swa_row, swa_series, swa_slots, SwaSeries};
pub use labels::{
    compute_thresholds, label_of, label_of_change, sample_snippets, sample_snippets_with, snippet_change, Label,
    LabelThresholds, LabeledExample, SnippetShape,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ticks per dollar in the LOBSTER price encoding.
pub const TICKS_PER_DOLLAR: f64 = 10_000.0;

/// Paper-default number of visible levels per side.
pub const DEFAULT_LEVELS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BookError {
    #[error("price must be a positive number of ticks")]
    NonPositivePrice,
    #[error("row {row}: expected {expected} levels per side, found {found}")]
    LevelCount { row: usize, expected: usize, found: usize },
    #[error("row {row}: {side:?} prices are not strictly monotone away from the touch")]
    NonMonotoneLevels { row: usize, side: Side },
    #[error("row {row}: crossed book (best bid {bid} >= best ask {ask} ticks)")]
    CrossedBook { row: usize, bid: u64, ask: u64 },
    #[error("total visible size is zero")]
    ZeroTotalSize,
    #[error("row {row}: timestamp {found} does not follow {previous} by one centisecond")]
    NonContiguousTimestamps { row: usize, previous: i64, found: i64 },
    #[error("extra size buffer has {found} entries, expected {expected}")]
    ExtraSizeShape { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("series of {len} rows is too short for a window of {window} plus horizon {horizon}")]
    SeriesTooShort { len: usize, window: usize, horizon: usize },
    #[error("snippet start {start} out of range for a series of {len} rows")]
    SnippetOutOfRange { start: usize, len: usize },
    #[error("invalid snippet shape: window and levels must be positive")]
    InvalidShape,
}

/// A price in ticks of $0.0001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Price(u64);

impl Price {
    pub fn new(ticks: u64) -> Result<Self, BookError> {
        if ticks == 0 {
            return Err(BookError::NonPositivePrice);
        }
        Ok(Price(ticks))
    }

    #[inline]
    pub const fn ticks(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn dollars(self) -> f64 {
        self.0 as f64 / TICKS_PER_DOLLAR
    }
}

impl TryFrom<u64> for Price {
    type Error = BookError;
    fn try_from(ticks: u64) -> Result<Self, Self::Error> {
        Price::new(ticks)
    }
}

impl From<Price> for u64 {
    fn from(p: Price) -> u64 {
        p.0
    }
}

/// Book side. Buy orders rest on the bid side, sell orders on the ask side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub price: Price,
    pub size: u32,
}

impl LevelEntry {
    pub fn new(price: Price, size: u32) -> Self {
        LevelEntry { price, size }
    }
}

/// An owned snapshot of the visible book, used at API boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookRow {
    /// Centiseconds since session open.
    pub timestamp: i64,
    pub bids: Vec<LevelEntry>,
    pub asks: Vec<LevelEntry>,
}

impl BookRow {
    pub fn levels(&self) -> usize {
        self.bids.len()
    }

    /// Checks the per-row invariants: `levels` entries per side, strictly
    /// decreasing bids, strictly increasing asks and an uncrossed touch.
    pub fn validate(&self, levels: usize, row: usize) -> Result<(), BookError> {
        validate_sides(&self.bids, &self.asks, levels, row)
    }
}

fn validate_sides(bids: &[LevelEntry], asks: &[LevelEntry], levels: usize, row: usize) -> Result<(), BookError> {
    for side in [bids, asks] {
        if side.len() != levels {
            return Err(BookError::LevelCount {
                row,
                expected: levels,
                found: side.len(),
            });
        }
    }
    if bids.windows(2).any(|w| w[0].price <= w[1].price) {
        return Err(BookError::NonMonotoneLevels { row, side: Side::Bid });
    }
    if asks.windows(2).any(|w| w[0].price >= w[1].price) {
        return Err(BookError::NonMonotoneLevels { row, side: Side::Ask });
    }
    if bids[0].price >= asks[0].price {
        return Err(BookError::CrossedBook {
            row,
            bid: bids[0].price.ticks(),
            ask: asks[0].price.ticks(),
        });
    }
    Ok(())
}

/// Borrowed view of one row of a [`BookSeries`].
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    pub timestamp: i64,
    levels: usize,
    prices: &'a [Price],
    sizes: &'a [u32],
}

impl<'a> RowRef<'a> {
    /// Builds a view over caller-owned slot buffers laid out as
    /// `[bids.., asks..]`.
    pub fn from_slots(timestamp: i64, prices: &'a [Price], sizes: &'a [u32]) -> Self {
        debug_assert_eq!(prices.len(), sizes.len());
        RowRef {
            timestamp,
            levels: prices.len() / 2,
            prices,
            sizes,
        }
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn prices(&self) -> &'a [Price] {
        self.prices
    }

    #[inline]
    pub fn sizes(&self) -> &'a [u32] {
        self.sizes
    }

    #[inline]
    pub fn best_bid(&self) -> Price {
        self.prices[0]
    }

    #[inline]
    pub fn best_ask(&self) -> Price {
        self.prices[self.levels]
    }

    /// Mid price in dollars.
    pub fn mid(&self) -> f64 {
        0.5 * (self.best_bid().dollars() + self.best_ask().dollars())
    }

    pub fn bids(&self) -> impl Iterator<Item = LevelEntry> + 'a {
        let (p, s) = (&self.prices[..self.levels], &self.sizes[..self.levels]);
        p.iter().zip(s).map(|(&price, &size)| LevelEntry { price, size })
    }

    pub fn asks(&self) -> impl Iterator<Item = LevelEntry> + 'a {
        let (p, s) = (&self.prices[self.levels..], &self.sizes[self.levels..]);
        p.iter().zip(s).map(|(&price, &size)| LevelEntry { price, size })
    }

    /// Slot index of `price` on `side`, if it is visible in this row.
    pub fn slot_of(&self, side: Side, price: Price) -> Option<usize> {
        match side {
            // bids are stored in decreasing order
            Side::Bid => self.prices[..self.levels].binary_search_by(|p| price.cmp(p)).ok(),
            Side::Ask => self.prices[self.levels..]
                .binary_search(&price)
                .ok()
                .map(|k| k + self.levels),
        }
    }

    pub fn to_owned_row(&self) -> BookRow {
        BookRow {
            timestamp: self.timestamp,
            bids: self.bids().collect(),
            asks: self.asks().collect(),
        }
    }
}

/// Side and 1-based level of a slot index.
#[inline]
pub fn slot_side_level(slot: usize, levels: usize) -> (Side, usize) {
    if slot < levels {
        (Side::Bid, slot + 1)
    } else {
        (Side::Ask, slot - levels + 1)
    }
}

/// Slot index for a side and 1-based level.
#[inline]
pub fn slot_index(side: Side, level: usize, levels: usize) -> usize {
    match side {
        Side::Bid => level - 1,
        Side::Ask => levels + level - 1,
    }
}

/// An immutable sequence of snapshots on a fixed one-centisecond grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookSeries {
    levels: usize,
    /// Timestamp of row 0 in centiseconds since session open.
    origin: i64,
    prices: Vec<Price>,
    sizes: Vec<u32>,
}

impl BookSeries {
    pub fn from_rows(rows: &[BookRow], levels: usize) -> Result<Self, BookError> {
        let first = rows.first().ok_or(BookError::EmptyInput)?;
        let mut builder = BookSeriesBuilder::new(levels, first.timestamp)?;
        for (i, row) in rows.iter().enumerate() {
            let expected = first.timestamp + i as i64;
            if row.timestamp != expected {
                return Err(BookError::NonContiguousTimestamps {
                    row: i,
                    previous: expected - 1,
                    found: row.timestamp,
                });
            }
            builder.push(&row.bids, &row.asks)?;
        }
        Ok(builder.finish())
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn slots(&self) -> usize {
        2 * self.levels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.prices.len() / self.slots()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    #[inline]
    pub fn row(&self, i: usize) -> RowRef<'_> {
        let k = self.slots();
        RowRef {
            timestamp: self.origin + i as i64,
            levels: self.levels,
            prices: &self.prices[i * k..(i + 1) * k],
            sizes: &self.sizes[i * k..(i + 1) * k],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = RowRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn prices(&self) -> &[Price] {
        &self.prices
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    /// Keeps rows whose timestamps fall in `[from_cs, to_cs)`.
    pub fn time_window(&self, from_cs: i64, to_cs: i64) -> Result<BookSeries, BookError> {
        let lo = (from_cs - self.origin).clamp(0, self.len() as i64) as usize;
        let hi = (to_cs - self.origin).clamp(0, self.len() as i64) as usize;
        if hi <= lo {
            return Err(BookError::EmptyInput);
        }
        let k = self.slots();
        Ok(BookSeries {
            levels: self.levels,
            origin: self.origin + lo as i64,
            prices: self.prices[lo * k..hi * k].to_vec(),
            sizes: self.sizes[lo * k..hi * k].to_vec(),
        })
    }

    pub(crate) fn from_raw_parts(
        levels: usize,
        origin: i64,
        prices: Vec<Price>,
        sizes: Vec<u32>,
    ) -> Result<Self, BookError> {
        if levels == 0 {
            return Err(BookError::InvalidShape);
        }
        let mut builder = BookSeriesBuilder::new(levels, origin)?;
        let k = 2 * levels;
        if prices.len() != sizes.len() || !prices.len().is_multiple_of(k) {
            return Err(BookError::LevelCount {
                row: prices.len() / k,
                expected: levels,
                found: (prices.len() % k) / 2,
            });
        }
        for (p, s) in prices.chunks_exact(k).zip(sizes.chunks_exact(k)) {
            builder.push_slots(p, s)?;
        }
        Ok(builder.finish())
    }
}

/// Incremental, validating constructor for [`BookSeries`].
#[derive(Debug)]
pub struct BookSeriesBuilder {
    levels: usize,
    origin: i64,
    prices: Vec<Price>,
    sizes: Vec<u32>,
}

impl BookSeriesBuilder {
    pub fn new(levels: usize, origin: i64) -> Result<Self, BookError> {
        if levels == 0 {
            return Err(BookError::InvalidShape);
        }
        Ok(BookSeriesBuilder {
            levels,
            origin,
            prices: Vec::new(),
            sizes: Vec::new(),
        })
    }

    pub fn with_capacity(mut self, rows: usize) -> Self {
        self.prices.reserve(rows * 2 * self.levels);
        self.sizes.reserve(rows * 2 * self.levels);
        self
    }

    pub fn len(&self) -> usize {
        self.prices.len() / (2 * self.levels)
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Appends the next row (one centisecond after the previous one).
    pub fn push(&mut self, bids: &[LevelEntry], asks: &[LevelEntry]) -> Result<(), BookError> {
        let row = self.len();
        validate_sides(bids, asks, self.levels, row)?;
        check_total(bids.iter().chain(asks).map(|e| e.size))?;
        for e in bids.iter().chain(asks) {
            self.prices.push(e.price);
            self.sizes.push(e.size);
        }
        Ok(())
    }

    /// Appends a row given in slot layout.
    pub fn push_slots(&mut self, prices: &[Price], sizes: &[u32]) -> Result<(), BookError> {
        let l = self.levels;
        if prices.len() != 2 * l || sizes.len() != 2 * l {
            return Err(BookError::LevelCount {
                row: self.len(),
                expected: l,
                found: prices.len() / 2,
            });
        }
        let row = RowRef::from_slots(0, prices, sizes);
        let bids: Vec<LevelEntry> = row.bids().collect();
        let asks: Vec<LevelEntry> = row.asks().collect();
        self.push(&bids, &asks)
    }

    pub fn finish(self) -> BookSeries {
        BookSeries {
            levels: self.levels,
            origin: self.origin,
            prices: self.prices,
            sizes: self.sizes,
        }
    }
}

fn check_total(sizes: impl Iterator<Item = u32>) -> Result<(), BookError> {
    if sizes.map(u64::from).sum::<u64>() == 0 {
        return Err(BookError::ZeroTotalSize);
    }
    Ok(())
}

/// A model input window plus its labeling horizon inside one series.
#[derive(Debug, Clone, Copy)]
pub struct Snippet<'a> {
    series: &'a BookSeries,
    start: usize,
    shape: SnippetShape,
}

impl<'a> Snippet<'a> {
    pub fn new(series: &'a BookSeries, start: usize, shape: SnippetShape) -> Result<Self, BookError> {
        shape.validate()?;
        let needed = shape.window + shape.horizon;
        if series.len() < needed {
            return Err(BookError::SeriesTooShort {
                len: series.len(),
                window: shape.window,
                horizon: shape.horizon,
            });
        }
        if start + needed > series.len() {
            return Err(BookError::SnippetOutOfRange {
                start,
                len: series.len(),
            });
        }
        Ok(Snippet { series, start, shape })
    }

    pub fn series(&self) -> &'a BookSeries {
        self.series
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn shape(&self) -> SnippetShape {
        self.shape
    }

    /// Number of input rows (W).
    #[inline]
    pub fn window(&self) -> usize {
        self.shape.window
    }

    pub fn levels(&self) -> usize {
        self.series.levels()
    }

    /// Row `i` of the input window (0-based, relative to the snippet start).
    #[inline]
    pub fn row(&self, i: usize) -> RowRef<'a> {
        debug_assert!(i < self.shape.window);
        self.series.row(self.start + i)
    }

    /// Row at offset `i` from the snippet start, allowed to run into the horizon.
    pub fn row_ahead(&self, i: usize) -> RowRef<'a> {
        debug_assert!(i < self.shape.window + self.shape.horizon);
        self.series.row(self.start + i)
    }

    pub fn last_input_row(&self) -> RowRef<'a> {
        self.row(self.shape.window - 1)
    }

    /// The row `horizon` rows after the last input row.
    pub fn label_row(&self) -> RowRef<'a> {
        self.series.row(self.start + self.shape.window - 1 + self.shape.horizon)
    }
}
