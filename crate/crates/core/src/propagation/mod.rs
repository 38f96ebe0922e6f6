//! Differentiable replay of adversarial limit orders through a snippet.
//!
//! An order placed at row `t` adds its size to every later row in which its
//! price is visible on its side, until the order is filled. A fill happens at
//! the first row after placement where an execution is recorded at the order's
//! price, or where the opposite touch reaches it (a buy fills once the best
//! ask is at or below its price). Fills consume the whole order. With the fill
//! pattern fixed the map from order sizes to per-slot perturbations is linear,
//! and [`PreparedPlan::adjoint`] is its exact transpose.

mod view;

pub use view::{PreparedPlan, PriceView};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{slot_index, slot_side_level, Price, Side, Snippet};
use crate::data::ExecutionEvent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("order {order} at row {row} would cross the book on placement")]
    CrossingPlacement { order: usize, row: usize },
    #[error("order {order} placed at row {row}, outside a window of {window} rows")]
    OutOfWindow { order: usize, row: usize, window: usize },
    #[error("order {order} has negative or non-finite size {size}")]
    InvalidSize { order: usize, size: f64 },
    #[error("level {level} outside 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("shape mismatch: expected {expected} entries, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
}

/// An adversarial limit order at an absolute price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvOrder {
    /// Placement row, relative to the snippet start.
    pub row: usize,
    pub price: Price,
    pub side: Side,
    pub size: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub orders: Vec<AdvOrder>,
    /// Set once sizes have been rounded to whole shares.
    pub rounded: bool,
}

impl AttackPlan {
    pub fn new(orders: Vec<AdvOrder>) -> Self {
        AttackPlan { orders, rounded: false }
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.orders.iter().map(|o| o.size).collect()
    }

    pub fn with_sizes(&self, sizes: &[f64]) -> AttackPlan {
        debug_assert_eq!(sizes.len(), self.orders.len());
        AttackPlan {
            orders: self
                .orders
                .iter()
                .zip(sizes)
                .map(|(o, &size)| AdvOrder { size, ..*o })
                .collect(),
            rounded: false,
        }
    }

    /// Drops zero-size orders.
    pub fn compact(&self) -> AttackPlan {
        AttackPlan {
            orders: self.orders.iter().filter(|o| o.size != 0.0).copied().collect(),
            rounded: self.rounded,
        }
    }

    pub fn total_shares(&self) -> f64 {
        self.orders.iter().map(|o| o.size).sum()
    }
}

/// One entry of a snippet-independent plan: place `size` shares at the
/// `level`-th best price of `side`, `row` rows into the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelOrder {
    pub row: usize,
    pub side: Side,
    /// 1-based; level 1 is the best price on that side.
    pub level: usize,
    pub size: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelPlan {
    pub entries: Vec<LevelOrder>,
}

impl LevelPlan {
    /// One zero-size entry for every `stride`-th row and every visible level.
    pub fn grid(window: usize, levels: usize, stride: usize) -> LevelPlan {
        let stride = stride.max(1);
        let mut entries = Vec::new();
        for row in (0..window).step_by(stride) {
            for slot in 0..2 * levels {
                let (side, level) = slot_side_level(slot, levels);
                entries.push(LevelOrder {
                    row,
                    side,
                    level,
                    size: 0.0,
                });
            }
        }
        LevelPlan { entries }
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.size).collect()
    }

    pub fn set_sizes(&mut self, sizes: &[f64]) {
        for (e, &s) in self.entries.iter_mut().zip(sizes) {
            e.size = s;
        }
    }

    pub fn total_shares(&self) -> f64 {
        self.entries.iter().map(|e| e.size).sum()
    }
}

/// Propagated adversarial size for every (row, slot) of a window, in the
/// level layout of the snippet (`[bids.., asks..]` per row). Entries outside
/// the visible book cannot be represented, so the grid is nonzero only at
/// visible (row, price) slots by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaGrid {
    rows: usize,
    slots: usize,
    values: Vec<f64>,
}

impl DeltaGrid {
    pub fn zeros(rows: usize, slots: usize) -> Self {
        DeltaGrid {
            rows,
            slots,
            values: vec![0.0; rows * slots],
        }
    }

    pub fn from_values(rows: usize, slots: usize, values: Vec<f64>) -> Result<Self, PropagationError> {
        if values.len() != rows * slots {
            return Err(PropagationError::ShapeMismatch {
                expected: rows * slots,
                found: values.len(),
            });
        }
        Ok(DeltaGrid { rows, slots, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.slots..(i + 1) * self.slots]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.slots..(i + 1) * self.slots]
    }

    /// Added size at an absolute price in a row, zero if the price is not
    /// visible there.
    pub fn at_price(&self, snippet: &Snippet<'_>, row: usize, side: Side, price: Price) -> f64 {
        snippet
            .row(row)
            .slot_of(side, price)
            .map_or(0.0, |slot| self.row(row)[slot])
    }

    /// Nonzero entries as (row, side, price, size).
    pub fn nonzero<'s>(&'s self, snippet: &'s Snippet<'_>) -> impl Iterator<Item = (usize, Side, Price, f64)> + 's {
        let levels = self.slots / 2;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(move |(j, &v)| {
                let (row, slot) = (j / self.slots, j % self.slots);
                let (side, _) = slot_side_level(slot, levels);
                (row, side, snippet.row(row).prices()[slot], v)
            })
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn dot(&self, other: &DeltaGrid) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Fill row (relative to the snippet) of every order in a plan, `None` if the
/// order survives the window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillPattern {
    pub fills: Vec<Option<usize>>,
}

impl FillPattern {
    pub fn filled(&self) -> usize {
        self.fills.iter().filter(|f| f.is_some()).count()
    }
}

fn check_sizes(plan: &AttackPlan) -> Result<(), PropagationError> {
    for (order, o) in plan.orders.iter().enumerate() {
        if !(o.size >= 0.0) || !o.size.is_finite() {
            return Err(PropagationError::InvalidSize { order, size: o.size });
        }
    }
    Ok(())
}

/// Replays `plan` through the snippet and returns the per-slot perturbation
/// together with the fill row of every order. `events` are the series'
/// execution events sorted by absolute row; pass an empty slice to rely on
/// the crossing rule alone.
pub fn propagate(
    snippet: &Snippet<'_>,
    plan: &AttackPlan,
    events: &[ExecutionEvent],
) -> Result<(DeltaGrid, FillPattern), PropagationError> {
    check_sizes(plan)?;
    let view = PriceView::new(*snippet, events);
    let prepared = PreparedPlan::new(&view, plan)?;
    let grid = prepared.propagate(&plan.sizes())?;
    Ok((grid, prepared.fills().clone()))
}

/// Gradient with respect to each order's size, given a gradient with respect
/// to the propagated grid. `fills` must come from [`propagate`] on the same
/// snippet and plan placements.
pub fn propagate_adjoint(
    fills: &FillPattern,
    snippet: &Snippet<'_>,
    plan: &AttackPlan,
    grad: &DeltaGrid,
    events: &[ExecutionEvent],
) -> Result<Vec<f64>, PropagationError> {
    if fills.fills.len() != plan.orders.len() {
        return Err(PropagationError::ShapeMismatch {
            expected: plan.orders.len(),
            found: fills.fills.len(),
        });
    }
    let view = PriceView::new(*snippet, events);
    let prepared = PreparedPlan::new(&view, plan)?;
    debug_assert_eq!(prepared.fills(), fills);
    prepared.adjoint(grad)
}

/// Resolves a level plan to absolute prices against one snippet: each entry
/// is placed at the `level`-th best price of its side in its placement row.
pub fn anchor_levels(plan: &LevelPlan, snippet: &Snippet<'_>) -> Result<AttackPlan, PropagationError> {
    let levels = snippet.levels();
    let mut orders = Vec::with_capacity(plan.entries.len());
    for (idx, e) in plan.entries.iter().enumerate() {
        if e.level == 0 || e.level > levels {
            return Err(PropagationError::LevelOutOfRange { level: e.level, levels });
        }
        if e.row >= snippet.window() {
            return Err(PropagationError::OutOfWindow {
                order: idx,
                row: e.row,
                window: snippet.window(),
            });
        }
        let slot = slot_index(e.side, e.level, levels);
        orders.push(AdvOrder {
            row: e.row,
            price: snippet.row(e.row).prices()[slot],
            side: e.side,
            size: e.size,
        });
    }
    Ok(AttackPlan::new(orders))
}

/// `floor(x + r)`, the rounding applied to relaxed sizes.
#[inline]
pub fn round_size(x: f64, r: f64) -> f64 {
    (x + r).floor()
}

/// Rounds every size of a relaxed plan to whole shares with offset `r`.
pub fn round_plan(plan: &AttackPlan, r: f64) -> AttackPlan {
    AttackPlan {
        orders: plan
            .orders
            .iter()
            .map(|o| AdvOrder {
                size: round_size(o.size, r).max(0.0),
                ..*o
            })
            .collect(),
        rounded: true,
    }
}

pub fn round_level_plan(plan: &LevelPlan, r: f64) -> LevelPlan {
    LevelPlan {
        entries: plan
            .entries
            .iter()
            .map(|e| LevelOrder {
                size: round_size(e.size, r).max(0.0),
                ..*e
            })
            .collect(),
    }
}
