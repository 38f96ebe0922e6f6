use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lobadv::book::{BookRow, BookSeries, LevelEntry, Price, Side, Snippet, SnippetShape};
use lobadv::data::ExecutionEvent;
use lobadv::propagation::{propagate, AdvOrder, AttackPlan, PreparedPlan, PriceView};

use crate::desk::Desk;
use crate::Verdict;

fn px(ticks: u64) -> Price {
    Price::new(ticks).unwrap()
}

/// Random walk book, one-tick levels, executions near the touch on both sides.
fn random_book(rng: &mut ChaCha8Rng, max_rows: usize) -> (BookSeries, Vec<ExecutionEvent>) {
    let levels = rng.random_range(1..=5);
    let rows = rng.random_range(2..=max_rows + 1);
    let mut bid = 10_000u64;
    let mut out = Vec::with_capacity(rows);
    let mut events = Vec::new();
    for t in 0..rows {
        if t > 0 && rng.random::<f64>() < 0.25 {
            bid = if rng.random::<bool>() { bid + 1 } else { bid - 1 };
        }
        let spread = rng.random_range(1..=3);
        out.push(BookRow {
            timestamp: t as i64,
            bids: (0..levels)
                .map(|k| LevelEntry::new(px(bid - k as u64), rng.random_range(1..30)))
                .collect(),
            asks: (0..levels)
                .map(|k| LevelEntry::new(px(bid + spread + k as u64), rng.random_range(1..30)))
                .collect(),
        });
        if rng.random::<f64>() < 0.15 {
            let side = if rng.random::<bool>() { Side::Bid } else { Side::Ask };
            events.push(ExecutionEvent {
                row: t,
                price: px(bid + 3 - rng.random_range(0..7)),
                size: rng.random_range(1..10),
                side,
            });
        }
    }
    (BookSeries::from_rows(&out, levels).unwrap(), events)
}

/// Up to five passive orders at or behind the touch, sizes 0..=3.
fn random_plan(snip: &Snippet<'_>, rng: &mut ChaCha8Rng) -> AttackPlan {
    let n = rng.random_range(0..=5);
    let orders = (0..n)
        .map(|_| {
            let row = rng.random_range(0..snip.window());
            let r = snip.row(row);
            let (side, p) = if rng.random::<bool>() {
                (Side::Bid, r.best_bid().ticks() - rng.random_range(0..6))
            } else {
                (Side::Ask, r.best_ask().ticks() + rng.random_range(0..6))
            };
            AdvOrder {
                row,
                price: px(p),
                side,
                size: rng.random_range(0..=3) as f64,
            }
        })
        .collect();
    AttackPlan::new(orders)
}

/// Row-by-row replay: each order rests from its placement row and is filled
/// at the first later row that prints an execution at its price or whose
/// opposite touch reaches it. Visible size is added wherever its price is
/// among the displayed levels.
fn replay(snip: &Snippet<'_>, plan: &AttackPlan, events: &[ExecutionEvent]) -> (Vec<f64>, Vec<Option<usize>>) {
    let w = snip.window();
    let k = 2 * snip.levels();
    let mut grid = vec![0.0; w * k];
    let mut alive: Vec<bool> = vec![false; plan.orders.len()];
    let mut fills = vec![None; plan.orders.len()];
    for i in 0..w {
        let row = snip.row(i);
        let abs = snip.start() + i;
        for (j, o) in plan.orders.iter().enumerate() {
            if alive[j] {
                let printed = events.iter().any(|e| e.row == abs && e.price == o.price);
                let touched = match o.side {
                    Side::Bid => row.best_ask() <= o.price,
                    Side::Ask => row.best_bid() >= o.price,
                };
                if printed || touched {
                    alive[j] = false;
                    fills[j] = Some(i);
                }
            }
            if o.row == i {
                alive[j] = true;
            }
            if alive[j] {
                let levels = match o.side {
                    Side::Bid => row.bids().collect::<Vec<_>>(),
                    Side::Ask => row.asks().collect::<Vec<_>>(),
                };
                if let Some(level) = levels.iter().position(|e| e.price == o.price) {
                    let slot = match o.side {
                        Side::Bid => level,
                        Side::Ask => snip.levels() + level,
                    };
                    grid[i * k + slot] += o.size;
                }
            }
        }
    }
    (grid, fills)
}

fn instance(seed: u64) -> (BookSeries, Vec<ExecutionEvent>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (series, events) = random_book(&mut rng, 100);
    (series, events, rng)
}

pub fn oracle_equivalence(_: &mut Desk) -> Verdict {
    let n = 1_000;
    let mut mismatches = Vec::new();
    let mut filled = 0;
    let mut orders = 0;
    for seed in 0..n {
        let (series, events, mut rng) = instance(seed);
        let w = series.len() - 1;
        let snip = Snippet::new(&series, 0, SnippetShape::new(w, 1)).unwrap();
        let plan = random_plan(&snip, &mut rng);
        let (want, want_fills) = replay(&snip, &plan, &events);
        match propagate(&snip, &plan, &events) {
            Ok((grid, fills)) if grid.values() == &want[..] && fills.fills == want_fills => {}
            _ => mismatches.push(seed),
        }
        orders += plan.orders.len();
        filled += want_fills.iter().flatten().count();
    }
    Verdict::new(
        mismatches.is_empty(),
        format!(
            "{}/{n} instances exact ({orders} orders, {filled} fills){}",
            n as usize - mismatches.len(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; first mismatch seed {}", mismatches[0])
            }
        ),
    )
}

pub fn adjoint_exactness(_: &mut Desk) -> Verdict {
    let pairs = 100;
    let mut worst: f64 = 0.0;
    let mut seed = 10_000;
    let mut done = 0;
    while done < pairs {
        seed += 1;
        let (series, events, mut rng) = instance(seed);
        let w = series.len() - 1;
        let snip = Snippet::new(&series, 0, SnippetShape::new(w, 1)).unwrap();
        let plan = random_plan(&snip, &mut rng);
        if plan.orders.is_empty() {
            continue;
        }
        let view = PriceView::new(snip, &events);
        let prep = PreparedPlan::new(&view, &plan).unwrap();
        let u: Vec<f64> = (0..plan.orders.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let pu = prep.propagate(&u).unwrap();
        let v: Vec<f64> = (0..pu.values().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vg = lobadv::propagation::DeltaGrid::from_values(pu.rows(), pu.slots(), v.clone()).unwrap();
        let ptv = prep.adjoint(&vg).unwrap();
        let lhs: f64 = pu.values().iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&ptv).map(|(a, b)| a * b).sum();
        let scale = pu
            .values()
            .iter()
            .zip(&v)
            .map(|(a, b)| (a * b).abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / scale);
        done += 1;
    }
    Verdict::new(worst < 1e-12, format!("{pairs} pairs, max relative error {worst:.2e}"))
}
