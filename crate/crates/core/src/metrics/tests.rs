use proptest::prelude::*;

use super::*;
use crate::book::{BookRow, BookSeries, LevelEntry, Price, SnippetShape};
use crate::propagation::{propagate, AdvOrder};

fn p(t: u64) -> Price {
    Price::new(t).unwrap()
}

/// One-level book, bid and ask in ticks per row.
fn book(quotes: &[(u64, u64)], size: u32) -> BookSeries {
    let rows: Vec<BookRow> = quotes
        .iter()
        .enumerate()
        .map(|(t, &(b, a))| BookRow {
            timestamp: t as i64,
            bids: vec![LevelEntry::new(p(b), size)],
            asks: vec![LevelEntry::new(p(a), size)],
        })
        .collect();
    BookSeries::from_rows(&rows, 1).unwrap()
}

fn order(row: usize, ticks: u64, side: Side, size: f64) -> AdvOrder {
    AdvOrder {
        row,
        price: p(ticks),
        side,
        size,
    }
}

#[test]
fn capital_examples() {
    let plan = AttackPlan::new(vec![order(0, 100_000, Side::Bid, 100.0)]);
    assert!((capital_required(&plan) - 1_000.0).abs() < 1e-9);
    assert_eq!(capital_required(&AttackPlan::default()), 0.0);
}

#[test]
fn cost_of_a_filled_buy_is_marked_at_the_last_mid() {
    // buy at $10.00 placed at row 0; the ask drops onto it at row 2
    let s = book(
        &[
            (99_900, 100_100),
            (99_900, 100_100),
            (99_800, 100_000),
            (99_900, 100_100),
            (99_900, 100_100),
        ],
        10,
    );
    let snip = Snippet::new(&s, 0, SnippetShape::new(4, 1)).unwrap();
    let plan = AttackPlan::new(vec![order(0, 100_000, Side::Bid, 10.0)]);
    let (_, fills) = propagate(&snip, &plan, &[]).unwrap();
    assert_eq!(fills.fills, vec![Some(2)]);
    // last input row mid = (9.99 + 10.01) / 2 = 10.00
    let ledger = attack_cost(&plan, &fills, &snip).unwrap();
    assert!(ledger.cost.abs() < 1e-9);
    assert_eq!(ledger.position, 10.0);

    let s = book(
        &[
            (99_900, 100_100),
            (99_900, 100_100),
            (99_800, 100_000),
            (99_800, 100_000),
            (99_900, 100_100),
        ],
        10,
    );
    let snip = Snippet::new(&s, 0, SnippetShape::new(4, 1)).unwrap();
    let (_, fills) = propagate(&snip, &plan, &[]).unwrap();
    // mid $9.99: ten shares lose a cent each
    let ledger = attack_cost(&plan, &fills, &snip).unwrap();
    assert!((ledger.cost - 0.10).abs() < 1e-9, "{}", ledger.cost);

    let short = AttackPlan::new(vec![order(0, 100_100, Side::Ask, 10.0)]);
    let s = book(
        &[
            (99_900, 100_100 + 100),
            (100_100, 100_200),
            (100_100, 100_200),
            (100_100, 100_300),
            (1, 2),
        ],
        10,
    );
    let snip = Snippet::new(&s, 0, SnippetShape::new(4, 1)).unwrap();
    let (_, fills) = propagate(&snip, &short, &[]).unwrap();
    assert_eq!(fills.fills, vec![Some(1)]);
    // sold at 10.01, marked at 10.02: lost a cent per share
    let ledger = attack_cost(&short, &fills, &snip).unwrap();
    assert!((ledger.cost - 0.10).abs() < 1e-9, "{}", ledger.cost);
}

#[test]
fn no_fills_cost_nothing_and_relative_size_bounds() {
    let s = book(&[(99_900, 100_100); 6], 10);
    let snip = Snippet::new(&s, 0, SnippetShape::new(5, 1)).unwrap();
    let plan = AttackPlan::new(vec![order(1, 99_800, Side::Bid, 3.0)]);
    let (grid, fills) = propagate(&snip, &plan, &[]).unwrap();
    let ledger = attack_cost(&plan, &fills, &snip).unwrap();
    assert_eq!(ledger.cost, 0.0);
    assert!(ledger.fills.is_empty());
    assert_eq!(relative_size(&DeltaGrid::zeros(5, 2), &snip).unwrap(), 0.0);
    // 99_800 is not visible on a one-level book
    assert_eq!(relative_size(&grid, &snip).unwrap(), 0.0);
    let dup = DeltaGrid::from_values(5, 2, vec![10.0; 10]).unwrap();
    assert!((relative_size(&dup, &snip).unwrap() - 100.0).abs() < 1e-12);
    assert!(matches!(
        attack_cost(&plan, &FillPattern { fills: vec![] }, &snip),
        Err(MetricsError::FillMismatch { .. })
    ));
}

#[test]
fn budget_report_collects_all_metrics() {
    let s = book(&[(99_900, 100_100); 6], 10);
    let snip = Snippet::new(&s, 0, SnippetShape::new(5, 1)).unwrap();
    let plan = AttackPlan::new(vec![order(0, 99_900, Side::Bid, 5.0)]);
    let (grid, fills) = propagate(&snip, &plan, &[]).unwrap();
    let r = budget_report(&plan, &grid, &fills, &snip).unwrap();
    assert!((r.capital - 49.95).abs() < 1e-9);
    assert!((r.relative_size - 25.0).abs() < 1e-12);
    assert_eq!(r.cost, 0.0);
}

proptest! {
    #[test]
    fn capital_is_additive(a in proptest::collection::vec((1u64..1_000_000, 0.0f64..1e4), 0..8),
                           b in proptest::collection::vec((1u64..1_000_000, 0.0f64..1e4), 0..8)) {
        let mk = |v: &[(u64, f64)]| AttackPlan::new(v.iter().map(|&(t, s)| order(0, t, Side::Bid, s)).collect());
        let (pa, pb) = (mk(&a), mk(&b));
        let mut both = pa.clone();
        both.orders.extend(pb.orders.iter().copied());
        let sum = capital_required(&pa) + capital_required(&pb);
        prop_assert!((capital_required(&both) - sum).abs() <= 1e-9 * sum.max(1.0));
    }

    #[test]
    fn relative_size_ignores_price_level(scale in 1u64..50, extra in proptest::collection::vec(0.0f64..100.0, 10)) {
        let s1 = book(&[(99_900, 100_100); 6], 10);
        let s2 = book(&[(99_900 * scale, 100_100 * scale); 6], 10);
        let g = DeltaGrid::from_values(5, 2, extra).unwrap();
        let a = relative_size(&g, &Snippet::new(&s1, 0, SnippetShape::new(5, 1)).unwrap()).unwrap();
        let b = relative_size(&g, &Snippet::new(&s2, 0, SnippetShape::new(5, 1)).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn csv_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        ModelRow {
            asset: "synth".into(),
            model: "mlp".into(),
            accuracy: 37.123456789012,
            se: 0.48312,
            n: 10_000,
        },
        ModelRow {
            asset: "synth, \"quoted\"".into(),
            model: "lstm".into(),
            accuracy: 1.0 / 3.0,
            se: 1e-17,
            n: 3,
        },
    ];
    let path = dir.path().join("t1.csv");
    write_model_table(&path, &rows).unwrap();
    let back: Vec<ModelRow> = read_csv_rows(&path).unwrap();
    assert_eq!(back, rows);

    let t2 = vec![AttackRow {
        asset: "synth".into(),
        model: "mlp".into(),
        acc_test: 38.5,
        acc_rand: -0.25,
        acc_adv: -30.125,
        capital: 12_345.678,
        size: 0.4,
    }];
    let path = dir.path().join("t2.csv");
    write_attack_table(&path, &t2).unwrap();
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("asset,model,acc_test,acc_rand,acc_adv,capital,size"));
    assert_eq!(read_csv_rows::<AttackRow>(&path).unwrap(), t2);
}

#[test]
fn figure_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let fig = FigureData {
        slots: 2,
        clean_swa: vec![1.0, 2.0, 3.0],
        perturbed_swa: vec![1.0, 2.5, 3.5],
        clean_book: vec![1.0; 6],
        perturbed_book: vec![2.0; 6],
        raw_plan: vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        propagated_plan: vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
    };
    write_figure_data(dir.path(), "fig", &fig).unwrap();
    for name in ["swa", "clean_book", "perturbed_book", "raw_plan", "propagated_plan"] {
        assert!(dir.path().join(format!("fig_{name}.csv")).exists());
        let svg = std::fs::read_to_string(dir.path().join(format!("fig_{name}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    let grid = std::fs::read_to_string(dir.path().join("fig_propagated_plan.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "row,slot_0,slot_1");
    assert_eq!(grid.lines().count(), 4);
}
