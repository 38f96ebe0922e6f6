//! Price-indexed companion view of a snippet and the linear-time propagation
//! kernels built on it.
//!
//! The level view of a window stores one slot per (row, side, level); a price
//! that is the best bid in one row may be the third bid a few rows later. The
//! price view assigns every distinct (side, price) pair a column, records the
//! column of each (row, slot), and precomputes the rows at which a resting
//! order at that price would be filled. Propagation then sweeps the rows once
//! with one running accumulator per column; the adjoint sweeps them once
//! backwards. Every (row, slot) entry is touched once per sweep.

use std::collections::HashMap;

use crate::book::{Price, Side, Snippet};
use crate::data::ExecutionEvent;

use super::{AttackPlan, DeltaGrid, FillPattern, PropagationError};

#[derive(Debug, Clone)]
pub struct PriceView<'a> {
    snippet: Snippet<'a>,
    columns: Vec<(Side, Price)>,
    lookup: HashMap<(Side, Price), u32>,
    /// Column of every (row, slot) entry, row-major.
    slot_column: Vec<u32>,
    /// Fill rows per column, ascending.
    column_fills: Vec<Vec<u32>>,
    /// Fill events grouped by row: `fill_cols[fill_offsets[i]..fill_offsets[i + 1]]`.
    fill_offsets: Vec<u32>,
    fill_cols: Vec<u32>,
    /// Execution prices inside the window, by relative row.
    events: Vec<(u32, Price)>,
}

impl<'a> PriceView<'a> {
    /// Builds the view for a snippet. `events` are the series' execution
    /// events sorted by row (absolute row indices); only those inside the
    /// input window are used.
    pub fn new(snippet: Snippet<'a>, events: &[ExecutionEvent]) -> Self {
        let w = snippet.window();
        let k = 2 * snippet.levels();
        let l = snippet.levels();
        let mut columns = Vec::new();
        let mut lookup: HashMap<(Side, Price), u32> = HashMap::new();
        let mut slot_column = Vec::with_capacity(w * k);
        for i in 0..w {
            let row = snippet.row(i);
            if i > 0 && snippet.row(i - 1).prices() == row.prices() {
                let prev = slot_column.len() - k;
                slot_column.extend_from_within(prev..prev + k);
                continue;
            }
            for (slot, &price) in row.prices().iter().enumerate() {
                let side = if slot < l { Side::Bid } else { Side::Ask };
                let next = columns.len() as u32;
                let c = *lookup.entry((side, price)).or_insert_with(|| {
                    columns.push((side, price));
                    next
                });
                slot_column.push(c);
            }
        }

        let lo = snippet.start();
        let hi = lo + w;
        let first = events.partition_point(|e| e.row < lo);
        let last = events.partition_point(|e| e.row < hi);
        let window_events: Vec<(u32, Price)> = events[first..last]
            .iter()
            .map(|e| ((e.row - lo) as u32, e.price))
            .collect();

        let mut view = PriceView {
            snippet,
            columns,
            lookup,
            slot_column,
            column_fills: Vec::new(),
            fill_offsets: Vec::new(),
            fill_cols: Vec::new(),
            events: window_events,
        };
        view.index_fills();
        view
    }

    /// Collects fill rows: execution events at a column's price, plus the first
    /// row of every stretch in which the opposite touch reaches that price.
    /// Later rows of such a stretch cannot matter: placement there is rejected
    /// as crossing and earlier orders are already gone.
    fn index_fills(&mut self) {
        let w = self.snippet.window();
        let mut bid_cols: Vec<(Price, u32)> = Vec::new();
        let mut ask_cols: Vec<(Price, u32)> = Vec::new();
        for (c, &(side, price)) in self.columns.iter().enumerate() {
            match side {
                Side::Bid => bid_cols.push((price, c as u32)),
                Side::Ask => ask_cols.push((price, c as u32)),
            }
        }
        bid_cols.sort_unstable();
        ask_cols.sort_unstable();

        let mut offsets = Vec::with_capacity(w + 1);
        let mut cols = Vec::new();
        let mut ev = 0usize;
        let mut scratch: Vec<u32> = Vec::new();
        offsets.push(0u32);
        for i in 0..w {
            scratch.clear();
            let row = self.snippet.row(i);
            let (bb, ba) = (row.best_bid(), row.best_ask());
            if i > 0 {
                let prev = self.snippet.row(i - 1);
                let (pb, pa) = (prev.best_bid(), prev.best_ask());
                // bids at prices in [ba, pa) start crossing at row i
                if ba < pa {
                    let from = bid_cols.partition_point(|&(p, _)| p < ba);
                    let to = bid_cols.partition_point(|&(p, _)| p < pa);
                    scratch.extend(bid_cols[from..to].iter().map(|&(_, c)| c));
                }
                // asks at prices in (pb, bb] start crossing at row i
                if bb > pb {
                    let from = ask_cols.partition_point(|&(p, _)| p <= pb);
                    let to = ask_cols.partition_point(|&(p, _)| p <= bb);
                    scratch.extend(ask_cols[from..to].iter().map(|&(_, c)| c));
                }
            } else {
                // an order can only be alive at row 0 if placed there, and a
                // row-0 fill never applies to it; still mark crossing columns
                // for a complete record
                let from = bid_cols.partition_point(|&(p, _)| p < ba);
                scratch.extend(bid_cols[from..].iter().map(|&(_, c)| c));
                let to = ask_cols.partition_point(|&(p, _)| p <= bb);
                scratch.extend(ask_cols[..to].iter().map(|&(_, c)| c));
            }
            while ev < self.events.len() && self.events[ev].0 as usize == i {
                let price = self.events[ev].1;
                for side in [Side::Bid, Side::Ask] {
                    if let Some(&c) = self.lookup.get(&(side, price)) {
                        scratch.push(c);
                    }
                }
                ev += 1;
            }
            scratch.sort_unstable();
            scratch.dedup();
            cols.extend_from_slice(&scratch);
            offsets.push(cols.len() as u32);
        }

        let mut column_fills = vec![Vec::new(); self.columns.len()];
        for i in 0..w {
            for &c in &cols[offsets[i] as usize..offsets[i + 1] as usize] {
                column_fills[c as usize].push(i as u32);
            }
        }
        self.fill_offsets = offsets;
        self.fill_cols = cols;
        self.column_fills = column_fills;
    }

    pub fn snippet(&self) -> &Snippet<'a> {
        &self.snippet
    }

    pub fn window(&self) -> usize {
        self.snippet.window()
    }

    pub fn slots(&self) -> usize {
        2 * self.snippet.levels()
    }

    /// Number of distinct (side, price) columns visible in the window.
    pub fn columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_of(&self, side: Side, price: Price) -> Option<usize> {
        self.lookup.get(&(side, price)).map(|&c| c as usize)
    }

    pub fn column_key(&self, c: usize) -> (Side, Price) {
        self.columns[c]
    }

    /// Column of the entry at (row, slot).
    #[inline]
    pub fn slot_column(&self, row: usize, slot: usize) -> usize {
        self.slot_column[row * self.slots() + slot] as usize
    }

    /// Fill rows of a visible column.
    pub fn column_fills(&self, c: usize) -> &[u32] {
        &self.column_fills[c]
    }

    /// Fill rows for a price that never appears among the visible levels.
    fn scan_fills(&self, side: Side, price: Price) -> Vec<u32> {
        let mut out = Vec::new();
        let mut ev = 0usize;
        let mut was_crossing = false;
        for i in 0..self.window() {
            let row = self.snippet.row(i);
            let crossing = match side {
                Side::Bid => row.best_ask() <= price,
                Side::Ask => row.best_bid() >= price,
            };
            let mut hit = crossing && !was_crossing;
            while ev < self.events.len() && self.events[ev].0 as usize == i {
                hit |= self.events[ev].1 == price;
                ev += 1;
            }
            if hit || (crossing && i == 0) {
                out.push(i as u32);
            }
            was_crossing = crossing;
        }
        out
    }
}

/// A plan's placement structure resolved against a [`PriceView`]. Sizes are
/// supplied separately so the same structure can be reused across gradient
/// steps; with the structure fixed, propagation is linear in the sizes.
#[derive(Debug, Clone)]
pub struct PreparedPlan<'v, 'a> {
    view: &'v PriceView<'a>,
    order_rows: Vec<u32>,
    order_cols: Vec<u32>,
    /// Order indices sorted by placement row.
    by_row: Vec<u32>,
    /// Fill rows for plan prices outside the visible columns, as (row, column).
    extra_fills: Vec<(u32, u32)>,
    n_columns: usize,
    fills: FillPattern,
}

impl<'v, 'a> PreparedPlan<'v, 'a> {
    pub fn new(view: &'v PriceView<'a>, plan: &AttackPlan) -> Result<Self, PropagationError> {
        let w = view.window();
        let mut order_rows = Vec::with_capacity(plan.orders.len());
        let mut order_cols = Vec::with_capacity(plan.orders.len());
        let mut extra: HashMap<(Side, Price), u32> = HashMap::new();
        let mut extra_cols: Vec<Vec<u32>> = Vec::new();
        let mut n_columns = view.columns();
        let mut fill_rows = Vec::with_capacity(plan.orders.len());
        for (idx, o) in plan.orders.iter().enumerate() {
            if o.row >= w {
                return Err(PropagationError::OutOfWindow {
                    order: idx,
                    row: o.row,
                    window: w,
                });
            }
            let row = view.snippet().row(o.row);
            let crossing = match o.side {
                Side::Bid => o.price >= row.best_ask(),
                Side::Ask => o.price <= row.best_bid(),
            };
            if crossing {
                return Err(PropagationError::CrossingPlacement { order: idx, row: o.row });
            }
            let (col, fills): (u32, &[u32]) = match view.column_of(o.side, o.price) {
                Some(c) => (c as u32, view.column_fills(c)),
                None => {
                    let next = n_columns as u32;
                    let c = *extra.entry((o.side, o.price)).or_insert_with(|| {
                        extra_cols.push(view.scan_fills(o.side, o.price));
                        n_columns += 1;
                        next
                    });
                    (c, &extra_cols[(c as usize) - view.columns()][..])
                }
            };
            let t = o.row as u32;
            let next_fill = fills.partition_point(|&f| f <= t);
            fill_rows.push(fills.get(next_fill).map(|&f| f as usize));
            order_rows.push(t);
            order_cols.push(col);
        }
        let mut extra_fills: Vec<(u32, u32)> = extra_cols
            .iter()
            .enumerate()
            .flat_map(|(j, rows)| {
                let c = (view.columns() + j) as u32;
                rows.iter().map(move |&r| (r, c))
            })
            .collect();
        extra_fills.sort_unstable();
        let mut by_row: Vec<u32> = (0..plan.orders.len() as u32).collect();
        by_row.sort_by_key(|&i| order_rows[i as usize]);
        Ok(PreparedPlan {
            view,
            order_rows,
            order_cols,
            by_row,
            extra_fills,
            n_columns,
            fills: FillPattern { fills: fill_rows },
        })
    }

    pub fn view(&self) -> &'v PriceView<'a> {
        self.view
    }

    pub fn len(&self) -> usize {
        self.order_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order_rows.is_empty()
    }

    pub fn fills(&self) -> &FillPattern {
        &self.fills
    }

    fn view_fills_at(&self, row: usize) -> &[u32] {
        let v = self.view;
        &v.fill_cols[v.fill_offsets[row] as usize..v.fill_offsets[row + 1] as usize]
    }

    /// Forward sweep: writes the propagated sizes, row-major over
    /// `window x slots`, into `out`.
    pub fn propagate_into(&self, sizes: &[f64], out: &mut [f64]) -> Result<(), PropagationError> {
        let w = self.view.window();
        let k = self.view.slots();
        if sizes.len() != self.len() {
            return Err(PropagationError::ShapeMismatch {
                expected: self.len(),
                found: sizes.len(),
            });
        }
        if out.len() != w * k {
            return Err(PropagationError::ShapeMismatch {
                expected: w * k,
                found: out.len(),
            });
        }
        let mut acc = vec![0.0f64; self.n_columns];
        let mut next_order = 0usize;
        let mut next_extra = 0usize;
        let values = out;
        for i in 0..w {
            for &c in self.view_fills_at(i) {
                acc[c as usize] = 0.0;
            }
            while next_extra < self.extra_fills.len() && self.extra_fills[next_extra].0 as usize == i {
                acc[self.extra_fills[next_extra].1 as usize] = 0.0;
                next_extra += 1;
            }
            while next_order < self.by_row.len() {
                let o = self.by_row[next_order] as usize;
                if self.order_rows[o] as usize != i {
                    break;
                }
                acc[self.order_cols[o] as usize] += sizes[o];
                next_order += 1;
            }
            let cols = &self.view.slot_column[i * k..(i + 1) * k];
            let row_out = &mut values[i * k..(i + 1) * k];
            for (v, &c) in row_out.iter_mut().zip(cols) {
                *v = acc[c as usize];
            }
        }
        Ok(())
    }

    pub fn propagate(&self, sizes: &[f64]) -> Result<DeltaGrid, PropagationError> {
        let mut out = DeltaGrid::zeros(self.view.window(), self.view.slots());
        self.propagate_into(sizes, out.values_mut())?;
        Ok(out)
    }

    /// Backward sweep: the transpose of [`Self::propagate`] with the fill
    /// pattern held fixed. Writes one gradient per order into `out`.
    pub fn adjoint_into(&self, grad: &[f64], out: &mut [f64]) -> Result<(), PropagationError> {
        let w = self.view.window();
        let k = self.view.slots();
        if grad.len() != w * k {
            return Err(PropagationError::ShapeMismatch {
                expected: w * k,
                found: grad.len(),
            });
        }
        if out.len() != self.len() {
            return Err(PropagationError::ShapeMismatch {
                expected: self.len(),
                found: out.len(),
            });
        }
        let mut acc = vec![0.0f64; self.n_columns];
        let mut next_order = self.by_row.len();
        let mut next_extra = self.extra_fills.len();
        let g = grad;
        for i in (0..w).rev() {
            let cols = &self.view.slot_column[i * k..(i + 1) * k];
            for (&gv, &c) in g[i * k..(i + 1) * k].iter().zip(cols) {
                acc[c as usize] += gv;
            }
            while next_order > 0 {
                let o = self.by_row[next_order - 1] as usize;
                if self.order_rows[o] as usize != i {
                    break;
                }
                out[o] = acc[self.order_cols[o] as usize];
                next_order -= 1;
            }
            for &c in self.view_fills_at(i) {
                acc[c as usize] = 0.0;
            }
            while next_extra > 0 && self.extra_fills[next_extra - 1].0 as usize == i {
                acc[self.extra_fills[next_extra - 1].1 as usize] = 0.0;
                next_extra -= 1;
            }
        }
        Ok(())
    }

    pub fn adjoint(&self, grad: &DeltaGrid) -> Result<Vec<f64>, PropagationError> {
        if grad.rows() != self.view.window() || grad.slots() != self.view.slots() {
            return Err(PropagationError::ShapeMismatch {
                expected: self.view.window() * self.view.slots(),
                found: grad.rows() * grad.slots(),
            });
        }
        let mut out = vec![0.0; self.len()];
        self.adjoint_into(grad.values(), &mut out)?;
        Ok(out)
    }
}
