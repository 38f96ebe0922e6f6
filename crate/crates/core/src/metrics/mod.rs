//! Attack budget metrics: capital, cost and relative size.

mod report;

pub use report::{
    read_csv_rows, svg_heatmap, svg_lines, write_attack_table, write_csv, write_figure_data, write_model_table,
    write_transfer_table, AttackRow, FigureData, ModelRow, ReportError, TransferRow,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{Side, Snippet};
use crate::propagation::{AttackPlan, DeltaGrid, FillPattern};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("the snippet holds no native size")]
    ZeroBookSize,
    #[error("fill pattern covers {found} orders, plan has {expected}")]
    FillMismatch { expected: usize, found: usize },
}

/// Dollar value of every order in the plan: `sum(price * size)`.
pub fn capital_required(plan: &AttackPlan) -> f64 {
    plan.orders.iter().map(|o| o.price.dollars() * o.size).sum()
}

/// One executed adversarial order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub order: usize,
    pub row: usize,
    pub side: Side,
    pub price: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    /// Dollars lost over the snippet; negative when the attacker gained.
    pub cost: f64,
    /// Net shares held at the end (short positions are negative).
    pub position: f64,
    pub cash: f64,
    pub fills: Vec<FillRecord>,
}

/// Portfolio change caused by filled orders, with the final position marked
/// at the mid price of the last input row. Unfilled orders cost nothing.
pub fn attack_cost(plan: &AttackPlan, fills: &FillPattern, snippet: &Snippet<'_>) -> Result<CostLedger, MetricsError> {
    if fills.fills.len() != plan.orders.len() {
        return Err(MetricsError::FillMismatch {
            expected: plan.orders.len(),
            found: fills.fills.len(),
        });
    }
    let mut cash = 0.0;
    let mut position = 0.0;
    let mut records = Vec::new();
    for (i, (o, f)) in plan.orders.iter().zip(&fills.fills).enumerate() {
        let Some(row) = *f else { continue };
        if o.size == 0.0 {
            continue;
        }
        let p = o.price.dollars();
        match o.side {
            Side::Bid => {
                cash -= p * o.size;
                position += o.size;
            }
            Side::Ask => {
                cash += p * o.size;
                position -= o.size;
            }
        }
        records.push(FillRecord {
            order: i,
            row,
            side: o.side,
            price: p,
            size: o.size,
        });
    }
    let mark = snippet.last_input_row().mid();
    let value = cash + position * mark;
    Ok(CostLedger {
        cost: if records.is_empty() { 0.0 } else { -value },
        position,
        cash,
        fills: records,
    })
}

/// Propagated adversarial shares as a percentage of the native shares on the
/// book, both summed over every row and slot of the window.
pub fn relative_size(grid: &DeltaGrid, snippet: &Snippet<'_>) -> Result<f64, MetricsError> {
    let k = 2 * snippet.levels();
    let from = snippet.start() * k;
    let native: f64 = snippet.series().sizes()[from..from + snippet.window() * k]
        .iter()
        .map(|&s| s as f64)
        .sum();
    if native == 0.0 {
        return Err(MetricsError::ZeroBookSize);
    }
    Ok(100.0 * grid.total() / native)
}

/// Cost, capital and relative size of one perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub cost: f64,
    pub capital: f64,
    pub relative_size: f64,
    pub fills: Vec<FillRecord>,
}

pub fn budget_report(
    plan: &AttackPlan,
    grid: &DeltaGrid,
    fills: &FillPattern,
    snippet: &Snippet<'_>,
) -> Result<BudgetReport, MetricsError> {
    let ledger = attack_cost(plan, fills, snippet)?;
    Ok(BudgetReport {
        cost: ledger.cost,
        capital: capital_required(plan),
        relative_size: relative_size(grid, snippet)?,
        fills: ledger.fills,
    })
}

#[cfg(test)]
mod tests;
