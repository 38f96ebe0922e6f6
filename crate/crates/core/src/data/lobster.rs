//! LOBSTER orderbook and message files.
//!
//! Orderbook rows carry `4 * L` integer columns, repeated per level as
//! `ask price, ask size, bid price, bid size`, prices in units of $0.0001.
//! Message rows carry `time, type, order id, size, price, direction` with time
//! in seconds after midnight; row `k` of the orderbook file is the book state
//! after message `k`.

use std::io::BufRead;

use super::{DataError, ExecutionEvent};
use crate::book::{BookError, BookSeries, BookSeriesBuilder, LevelEntry, Price, Side};

/// Price LOBSTER writes into unoccupied levels.
const EMPTY_LEVEL_PRICE: i64 = 9_999_999_999;

/// How orderbook rows map onto the one-centisecond grid.
#[derive(Debug, Clone, PartialEq)]
pub enum BookTiming {
    /// Each row is already one centisecond after the previous one.
    FixedRate { origin_cs: i64 },
    /// Per-row event times in seconds after midnight. Rows are resampled onto
    /// the grid by carrying the last observation forward.
    Timestamps { seconds: Vec<f64>, session_open: f64 },
}

/// The grid a parsed series lives on, used to align message times to rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    /// Seconds after midnight of the session open.
    pub session_open: f64,
    /// Centiseconds since open of row 0.
    pub origin_cs: i64,
    pub rows: usize,
}

impl TimeGrid {
    pub fn of(series: &BookSeries, session_open: f64) -> Self {
        TimeGrid {
            session_open,
            origin_cs: series.origin(),
            rows: series.len(),
        }
    }
}

fn centiseconds(seconds: f64, session_open: f64) -> i64 {
    // tolerate binary noise in the decimal timestamp
    ((seconds - session_open) * 100.0 + 1e-6).floor() as i64
}

fn parse_int(field: &str, line: usize, what: &str) -> Result<i64, DataError> {
    field.trim().parse::<i64>().map_err(|_| DataError::MalformedRow {
        line,
        reason: format!("cannot parse {what} `{}`", field.trim()),
    })
}

fn parse_level(price: &str, size: &str, line: usize, side: &str) -> Result<LevelEntry, DataError> {
    let p = parse_int(price, line, "price")?;
    let s = parse_int(size, line, "size")?;
    if p.abs() == EMPTY_LEVEL_PRICE {
        return Err(DataError::MalformedRow {
            line,
            reason: format!("empty {side} level placeholder; the book is thinner than the requested depth"),
        });
    }
    if p <= 0 {
        return Err(DataError::MalformedRow {
            line,
            reason: format!("non-positive {side} price {p}"),
        });
    }
    let size = u32::try_from(s).map_err(|_| DataError::MalformedRow {
        line,
        reason: format!("{side} size {s} out of range"),
    })?;
    Ok(LevelEntry::new(Price::new(p as u64)?, size))
}

fn book_error_at(e: BookError, line: usize) -> DataError {
    match e {
        BookError::CrossedBook { bid, ask, .. } => DataError::CrossedBook { line, bid, ask },
        BookError::NonMonotoneLevels { side, .. } => DataError::NonMonotoneLevels { line, side },
        BookError::ZeroTotalSize => DataError::MalformedRow {
            line,
            reason: "zero total size".into(),
        },
        other => DataError::Book(other),
    }
}

/// Reads a LOBSTER orderbook file with `levels` levels per side.
pub fn parse_lobster_book<R: BufRead>(reader: R, levels: usize, timing: &BookTiming) -> Result<BookSeries, DataError> {
    if levels == 0 {
        return Err(DataError::Book(BookError::InvalidShape));
    }
    let mut rows: Vec<(Vec<LevelEntry>, Vec<LevelEntry>)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 * levels {
            return Err(DataError::MalformedRow {
                line: line_no,
                reason: format!("expected {} columns, found {}", 4 * levels, fields.len()),
            });
        }
        let mut bids = Vec::with_capacity(levels);
        let mut asks = Vec::with_capacity(levels);
        for chunk in fields.chunks_exact(4) {
            asks.push(parse_level(chunk[0], chunk[1], line_no, "ask")?);
            bids.push(parse_level(chunk[2], chunk[3], line_no, "bid")?);
        }
        // validate eagerly so errors carry the file line
        let probe = crate::book::BookRow {
            timestamp: 0,
            bids,
            asks,
        };
        probe
            .validate(levels, rows.len())
            .map_err(|e| book_error_at(e, line_no))?;
        rows.push((probe.bids, probe.asks));
    }
    if rows.is_empty() {
        return Err(DataError::EmptyInput);
    }

    match timing {
        BookTiming::FixedRate { origin_cs } => {
            let mut b = BookSeriesBuilder::new(levels, *origin_cs)?.with_capacity(rows.len());
            for (i, (bids, asks)) in rows.iter().enumerate() {
                b.push(bids, asks).map_err(|e| book_error_at(e, i + 1))?;
            }
            Ok(b.finish())
        }
        BookTiming::Timestamps { seconds, session_open } => {
            if seconds.len() != rows.len() {
                return Err(DataError::MalformedRow {
                    line: seconds.len().min(rows.len()) + 1,
                    reason: format!("{} book rows but {} timestamps", rows.len(), seconds.len()),
                });
            }
            let cs: Vec<i64> = seconds.iter().map(|&t| centiseconds(t, *session_open)).collect();
            if let Some(i) = cs.windows(2).position(|w| w[1] < w[0]) {
                return Err(DataError::MalformedRow {
                    line: i + 2,
                    reason: "timestamps go backwards".into(),
                });
            }
            let origin = cs[0];
            let end = cs[cs.len() - 1];
            let mut b = BookSeriesBuilder::new(levels, origin)?.with_capacity((end - origin + 1) as usize);
            let mut src = 0usize;
            for g in origin..=end {
                // last row observed at or before grid time g
                while src + 1 < cs.len() && cs[src + 1] <= g {
                    src += 1;
                }
                let (bids, asks) = &rows[src];
                b.push(bids, asks).map_err(|e| book_error_at(e, src + 1))?;
            }
            Ok(b.finish())
        }
    }
}

/// Reads a LOBSTER message file, keeping executions of visible (type 4) and
/// hidden (type 5) orders, aligned to rows of `grid`.
pub fn parse_lobster_messages<R: BufRead>(reader: R, grid: &TimeGrid) -> Result<Vec<ExecutionEvent>, DataError> {
    let mut out = Vec::new();
    let mut seen = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        seen = true;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(DataError::MalformedRow {
                line: line_no,
                reason: format!("expected 6 columns, found {}", fields.len()),
            });
        }
        let time: f64 = fields[0].trim().parse().map_err(|_| DataError::MalformedRow {
            line: line_no,
            reason: format!("cannot parse time `{}`", fields[0].trim()),
        })?;
        let kind = parse_int(fields[1], line_no, "event type")?;
        let _order_id = parse_int(fields[2], line_no, "order id")?;
        let size = parse_int(fields[3], line_no, "size")?;
        let price = parse_int(fields[4], line_no, "price")?;
        let direction = parse_int(fields[5], line_no, "direction")?;
        if !matches!(kind, 4 | 5) {
            continue;
        }
        let side = match direction {
            1 => Side::Bid,
            -1 => Side::Ask,
            d => {
                return Err(DataError::MalformedRow {
                    line: line_no,
                    reason: format!("direction must be 1 or -1, found {d}"),
                })
            }
        };
        if size <= 0 || size > u32::MAX as i64 {
            return Err(DataError::MalformedRow {
                line: line_no,
                reason: format!("execution size {size} out of range"),
            });
        }
        if price <= 0 {
            return Err(DataError::MalformedRow {
                line: line_no,
                reason: format!("non-positive price {price}"),
            });
        }
        let row = centiseconds(time, grid.session_open) - grid.origin_cs;
        if row < 0 || row >= grid.rows as i64 {
            return Err(DataError::AlignmentError {
                line: line_no,
                row,
                rows: grid.rows,
            });
        }
        out.push(ExecutionEvent {
            row: row as usize,
            price: Price::new(price as u64)?,
            size: size as u32,
            side,
        });
    }
    if !seen {
        return Err(DataError::EmptyInput);
    }
    out.sort_by_key(|e| e.row);
    Ok(out)
}
