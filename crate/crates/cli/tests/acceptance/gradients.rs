use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lobadv::autodiff::{check_gradient, BookInput, GradCheck, Graph, NodeId, Tensor};
use lobadv::book::{swa_slots, BookRow, BookSeries, LevelEntry, Price, Side, Snippet, SnippetShape};
use lobadv::data::{generate_day, SynthParams};
use lobadv::models::{Architecture, ModelConfig, ValuationModel};
use lobadv::propagation::{AdvOrder, AttackPlan, PreparedPlan, PriceView};

use crate::desk::Desk;
use crate::Verdict;

const OPERATOR_TOL: f64 = 1e-5;
const END_TO_END_TOL: f64 = 1e-4;
const POINTS: usize = 100;

/// Entries bounded away from zero so ReLU kinks are not straddled.
fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let x: f64 = rng.random_range(0.05..1.5);
            if rng.random::<bool>() {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data)
}

fn weighted_loss(g: &mut Graph<'_>, out: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
    let (r, c) = g.value(out).shape();
    let w = g.constant(rand_tensor(rng, r, c));
    let m = g.mul(out, w).unwrap();
    g.mean(m).unwrap()
}

fn check(g: &mut Graph<'_>, leaf: NodeId, loss: NodeId, opts: GradCheck) -> f64 {
    check_gradient(g, leaf, loss, opts).unwrap().max_rel_error
}

/// Book with $0.01 levels and sizes in 1..50.
fn small_book(rng: &mut ChaCha8Rng, rows: usize, levels: usize) -> BookSeries {
    let mut bid = 100_000u64;
    let rows: Vec<BookRow> = (0..rows as i64)
        .map(|t| {
            if rng.random::<f64>() < 0.2 {
                bid = if rng.random::<bool>() { bid + 100 } else { bid - 100 };
            }
            BookRow {
                timestamp: t,
                bids: (0..levels)
                    .map(|k| LevelEntry::new(Price::new(bid - 100 * k as u64).unwrap(), rng.random_range(1..50)))
                    .collect(),
                asks: (0..levels)
                    .map(|k| LevelEntry::new(Price::new(bid + 100 + 100 * k as u64).unwrap(), rng.random_range(1..50)))
                    .collect(),
            }
        })
        .collect();
    BookSeries::from_rows(&rows, levels).unwrap()
}

fn passive_plan(snip: &Snippet<'_>, rng: &mut ChaCha8Rng, n: usize, step: u64) -> AttackPlan {
    let orders = (0..n)
        .map(|i| {
            let row = rng.random_range(0..snip.window());
            let r = snip.row(row);
            let (side, p) = if i % 2 == 0 {
                (Side::Bid, r.best_bid().ticks() - step * rng.random_range(0..3))
            } else {
                (Side::Ask, r.best_ask().ticks() + step * rng.random_range(0..3))
            };
            AdvOrder {
                row,
                price: Price::new(p).unwrap(),
                side,
                size: rng.random_range(0.5..20.0),
            }
        })
        .collect();
    AttackPlan::new(orders)
}

/// Worst relative error of every grad-engine operator over `POINTS` points.
fn operators(rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64)> {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut note = |name: &'static str, e: f64| match worst.iter_mut().find(|w| w.0 == name) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((name, e)),
    };
    let plain = GradCheck::default();
    // SWA changes by ~1e-5 dollars per share; differences in hundredths of a share
    let shares = GradCheck {
        step: 1e-2,
        floor: 1e-6,
        ..GradCheck::default()
    };
    for _ in 0..POINTS {
        let (n, d) = (rng.random_range(1..4), rng.random_range(1..6));
        let (xt, yt) = (rand_tensor(rng, n, d), rand_tensor(rng, n, d));
        for op in [
            "add", "mul", "scale", "relu", "tanh", "sigmoid", "concat", "slice", "mean",
        ] {
            let mut g = Graph::new();
            let x = g.param(xt.clone());
            let y = g.param(yt.clone());
            let out = match op {
                "add" => g.add(x, y),
                "mul" => g.mul(x, y),
                "scale" => g.scale(x, -1.7),
                "relu" => g.relu(x),
                "tanh" => g.tanh(x),
                "sigmoid" => g.sigmoid(x),
                "concat" => g.concat(&[y, x, y]),
                "slice" => g.slice(x, d / 2, d - d / 2),
                _ => g.mean(x),
            }
            .unwrap();
            let loss = weighted_loss(&mut g, out, rng);
            note(op, check(&mut g, x, loss, plain));
            if matches!(op, "add" | "mul" | "concat") {
                note(op, check(&mut g, y, loss, plain));
            }
        }

        let k = rng.random_range(1..5);
        let mut g = Graph::new();
        let x = g.param(rand_tensor(rng, n, d));
        let w = g.param(rand_tensor(rng, d, k));
        let b = g.param(rand_tensor(rng, 1, k));
        let y = g.affine(x, w, Some(b)).unwrap();
        let loss = weighted_loss(&mut g, y, rng);
        for leaf in [x, w, b] {
            note("affine", check(&mut g, leaf, loss, plain));
        }

        let mut g = Graph::new();
        let z = g.param(rand_tensor(rng, n, 3));
        let ce = g
            .softmax_ce(z, (0..n).map(|_| rng.random_range(0..3)).collect())
            .unwrap();
        note("softmax_ce", check(&mut g, z, ce, plain));

        let mut g = Graph::new();
        let cols = rng.random_range(1..20);
        let x = g.param(rand_tensor(rng, n, cols));
        let y = g.normalize(x, 0.37, rng.random_range(1..6)).unwrap();
        let loss = weighted_loss(&mut g, y, rng);
        note("normalize", check(&mut g, x, loss, plain));

        let series = small_book(rng, 9, 2);
        let snip = Snippet::new(&series, 0, SnippetShape::new(8, 1)).unwrap();
        let mut g = Graph::new();
        let deltas = (0..8 * 4).map(|_| rng.random_range(0.0..10.0)).collect();
        let dn = g.param(Tensor::row_vector(deltas));
        let s = g.swa(dn, BookInput::of(&snip)).unwrap();
        let loss = weighted_loss(&mut g, s, rng);
        note("swa", check(&mut g, dn, loss, shares));

        let series = small_book(rng, 31, 3);
        let snip = Snippet::new(&series, 0, SnippetShape::new(30, 1)).unwrap();
        let plan = passive_plan(&snip, rng, 6, 100);
        let view = PriceView::new(snip, &[]);
        let prep = PreparedPlan::new(&view, &plan).unwrap();
        let mut g = Graph::new();
        let a = g.param(Tensor::row_vector(plan.sizes()));
        let delta = g.linear(a, &prep).unwrap();
        let loss = weighted_loss(&mut g, delta, rng);
        note("propagation", check(&mut g, a, loss, plain));
    }
    worst
}

/// Plan sizes through propagation, SWA and a freshly initialized model.
fn end_to_end(arch: Architecture, stride: usize, rng: &mut ChaCha8Rng) -> f64 {
    let window = 600;
    let mut worst: f64 = 0.0;
    for point in 0..POINTS {
        let day = generate_day(&SynthParams {
            session_rows: window + 1,
            seed: 5_000 + point as u64,
            ..SynthParams::default()
        })
        .unwrap();
        let snip = Snippet::new(&day.series, 0, SnippetShape::new(window, 1)).unwrap();
        let config = ModelConfig {
            arch,
            window,
            stride,
            scale: 0.01,
        };
        let mut model = ValuationModel::init(config, rng).unwrap();
        if arch == Architecture::Linear {
            for p in &mut model.params {
                p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
        }
        let plan = passive_plan(&snip, rng, 12, 100);
        let view = PriceView::new(snip, &day.events);
        let prep = PreparedPlan::new(&view, &plan).unwrap();
        let mut g = Graph::new();
        let a = g.param(Tensor::row_vector(plan.sizes()));
        let delta = g.linear(a, &prep).unwrap();
        let swa = g.swa(delta, BookInput::of(&snip)).unwrap();
        let built = model.build(&mut g, swa, false).unwrap();
        let loss = g.softmax_ce(built.logits, vec![rng.random_range(0..3)]).unwrap();
        let opts = GradCheck {
            step: 1e-2,
            floor: 1e-6,
            seed: point as u64,
            ..GradCheck::default()
        };
        worst = worst.max(check(&mut g, a, loss, opts));
    }
    worst
}

pub fn gradient_checks(_: &mut Desk) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let ops = operators(&mut rng);
    let op_worst = ops.iter().map(|o| o.1).fold(0.0, f64::max);
    let worst_op = ops.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let models = [
        ("linear", Architecture::Linear, 10),
        ("mlp", Architecture::Mlp { depth: 4, width: 256 }, 10),
        ("lstm", Architecture::Lstm { layers: 3, hidden: 32 }, 60),
    ];
    let e2e: Vec<(&str, f64)> = models
        .iter()
        .map(|&(name, arch, stride)| (name, end_to_end(arch, stride, &mut rng)))
        .collect();
    let pass = op_worst < OPERATOR_TOL && e2e.iter().all(|e| e.1 < END_TO_END_TOL);
    let e2e_text: Vec<String> = e2e.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    Verdict::new(
        pass,
        format!(
            "{} operators max {op_worst:.1e} ({}); end to end {}",
            ops.len(),
            worst_op.0,
            e2e_text.join(", ")
        ),
    )
}

pub fn swa_sensitivity(_: &mut Desk) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let rows = 1_001;
    let levels = 10;
    let k = 2 * levels;
    let raw: Vec<BookRow> = (0..rows as i64)
        .map(|t| {
            let bid = rng.random_range(50_000..200_000u64);
            let spread = rng.random_range(1..5) * 100;
            let mut p = bid;
            let bids = (0..levels)
                .map(|i| {
                    if i > 0 {
                        p -= rng.random_range(1..4) * 100;
                    }
                    LevelEntry::new(Price::new(p).unwrap(), rng.random_range(1..1_000))
                })
                .collect();
            let mut p = bid + spread;
            let asks = (0..levels)
                .map(|i| {
                    if i > 0 {
                        p += rng.random_range(1..4) * 100;
                    }
                    LevelEntry::new(Price::new(p).unwrap(), rng.random_range(1..1_000))
                })
                .collect();
            BookRow {
                timestamp: t,
                bids,
                asks,
            }
        })
        .collect();
    let series = BookSeries::from_rows(&raw, levels).unwrap();
    let snip = Snippet::new(&series, 0, SnippetShape::new(rows - 1, 1)).unwrap();
    let w = snip.window();

    // implementation: backward through the SWA node, one row per output
    let mut g = Graph::new();
    let d = g.param(Tensor::zeros(1, w * k));
    let s = g.swa(d, BookInput::of(&snip)).unwrap();
    let m = g.mean(s).unwrap();
    g.backward(m).unwrap();
    let grad: Vec<f64> = g.grad(d).unwrap().data().iter().map(|v| v * w as f64).collect();

    // truncation error is O(h²/S²) with S in the thousands of shares
    let h = 1.0;
    let (mut vs_fd, mut vs_closed) = (0.0f64, 0.0f64);
    for i in 0..w {
        let row = snip.row(i);
        let total: f64 = row.sizes().iter().map(|&s| s as f64).sum();
        let swa = swa_slots(row.prices(), row.sizes(), None).unwrap();
        for j in 0..k {
            let mut extra = vec![0.0; k];
            extra[j] = h;
            let up = swa_slots(row.prices(), row.sizes(), Some(&extra)).unwrap();
            extra[j] = -h;
            let down = swa_slots(row.prices(), row.sizes(), Some(&extra)).unwrap();
            let fd = (up - down) / (2.0 * h);
            let closed = (row.prices()[j].dollars() - swa) / total;
            let a = grad[i * k + j];
            let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-9);
            vs_fd = vs_fd.max(rel(a, fd));
            vs_closed = vs_closed.max(rel(a, closed));
        }
    }
    Verdict::new(
        vs_fd < 1e-6 && vs_closed < 1e-6,
        format!("{w} rows x {k} slots: vs finite differences {vs_fd:.1e}, vs closed form {vs_closed:.1e}"),
    )
}
