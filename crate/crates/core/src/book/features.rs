use serde::{Deserialize, Serialize};

use super::{BookError, BookSeries, Price, RowRef, Snippet};
use crate::propagation::DeltaGrid;

/// SWA values in dollars, one per input row of a snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwaSeries(pub Vec<f64>);

impl SwaSeries {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Size-weighted average over all slots, with optional extra (real-valued)
/// size per slot.
#[inline]
pub fn swa_slots(prices: &[Price], sizes: &[u32], extra: Option<&[f64]>) -> Result<f64, BookError> {
    let mut num = 0.0;
    let mut den = 0.0;
    match extra {
        None => {
            for (p, &s) in prices.iter().zip(sizes) {
                num += p.dollars() * s as f64;
                den += s as f64;
            }
        }
        Some(extra) => {
            if extra.len() != sizes.len() {
                return Err(BookError::ExtraSizeShape {
                    expected: sizes.len(),
                    found: extra.len(),
                });
            }
            for ((p, &s), &e) in prices.iter().zip(sizes).zip(extra) {
                let s = s as f64 + e;
                num += p.dollars() * s;
                den += s;
            }
        }
    }
    if den <= 0.0 {
        return Err(BookError::ZeroTotalSize);
    }
    Ok(num / den)
}

/// SWA of one row: `sum(p * s) / sum(s)` over both sides.
pub fn swa_row(row: RowRef<'_>, extra: Option<&[f64]>) -> Result<f64, BookError> {
    swa_slots(row.prices(), row.sizes(), extra)
}

/// SWA over a snippet's input window, optionally with propagated adversarial
/// size added to the visible slots.
pub fn swa_series(snippet: &Snippet<'_>, deltas: Option<&DeltaGrid>) -> Result<SwaSeries, BookError> {
    let w = snippet.window();
    let k = 2 * snippet.levels();
    if let Some(d) = deltas {
        if d.rows() != w || d.slots() != k {
            return Err(BookError::ExtraSizeShape {
                expected: w * k,
                found: d.rows() * d.slots(),
            });
        }
    }
    let mut out = Vec::with_capacity(w);
    for i in 0..w {
        let extra = deltas.map(|d| d.row(i));
        out.push(swa_row(snippet.row(i), extra)?);
    }
    Ok(SwaSeries(out))
}

/// Clean SWA for every row of a series.
pub fn clean_swa(series: &BookSeries) -> Vec<f64> {
    // rows were validated to have positive total size on construction
    series
        .rows()
        .map(|r| swa_row(r, None).expect("validated row"))
        .collect()
}
