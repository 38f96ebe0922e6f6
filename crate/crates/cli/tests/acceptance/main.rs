//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! `cargo test -p lobadv-cli --test acceptance -- 1 4 8` runs a subset.

mod desk;
mod experiments;
mod gradients;
mod io;
mod propagation;

use std::time::{Duration, Instant};

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    /// Stated runtime limit, if any.
    pub limit: Option<Duration>,
    pub run: fn(&mut desk::Desk) -> Verdict,
}

const fn minutes(m: u64) -> Option<Duration> {
    Some(Duration::from_secs(60 * m))
}

const CRITERIA: [Criterion; 11] = [
    Criterion {
        id: 1,
        name: "propagation oracle equivalence",
        limit: Some(Duration::from_secs(10)),
        run: propagation::oracle_equivalence,
    },
    Criterion {
        id: 2,
        name: "adjoint exactness",
        limit: None,
        run: propagation::adjoint_exactness,
    },
    Criterion {
        id: 3,
        name: "gradient checks",
        limit: minutes(2),
        run: gradients::gradient_checks,
    },
    Criterion {
        id: 4,
        name: "SWA sensitivity",
        limit: None,
        run: gradients::swa_sensitivity,
    },
    Criterion {
        id: 5,
        name: "learning check",
        limit: minutes(15),
        run: experiments::learning,
    },
    Criterion {
        id: 6,
        name: "attack dominance",
        limit: minutes(20),
        run: experiments::dominance,
    },
    Criterion {
        id: 7,
        name: "budget safety",
        limit: None,
        run: experiments::budget_safety,
    },
    Criterion {
        id: 8,
        name: "universal transfer",
        limit: minutes(30),
        run: experiments::universal_transfer,
    },
    Criterion {
        id: 9,
        name: "quantization effect",
        limit: None,
        run: experiments::quantization,
    },
    Criterion {
        id: 10,
        name: "determinism",
        limit: None,
        run: io::determinism,
    },
    Criterion {
        id: 11,
        name: "ingestion",
        limit: None,
        run: io::ingestion,
    },
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut desk = desk::Desk::default();
    let mut failed = Vec::new();
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let mut v = (c.run)(&mut desk);
        let took = start.elapsed();
        if let Some(limit) = c.limit {
            if took > limit {
                v.pass = false;
                v.detail.push_str(&format!("; exceeded {}s limit", limit.as_secs()));
            }
        }
        println!(
            "criterion {:>2} {:<32} {}  {} [{:.1}s]",
            c.id,
            c.name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64()
        );
        if !v.pass {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
