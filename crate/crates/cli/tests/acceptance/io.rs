use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use lobadv::book::Price;
use lobadv::data::{
    load_dataset, parse_lobster_book, parse_lobster_messages, save_dataset, BookTiming, DataError, Dataset, Day,
    TimeGrid,
};

use crate::desk::Desk;
use crate::Verdict;

const BIN: &str = env!("CARGO_BIN_EXE_lobadv");
const SMALL: [&str; 6] = ["--window", "300", "--horizon", "60", "--seed", "3"];

fn lobadv(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env_remove("ADVLOB_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        let err = String::from_utf8_lossy(&out.stderr);
        Err(format!(
            "{} failed: {}",
            args[0],
            err.lines().last().unwrap_or_default()
        ))
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/lobster")
        .join(name)
}

/// Every command once on a small asset; returns the run directories.
fn run_all(d: &Path) -> Result<Vec<&'static str>, String> {
    fn small<'a>(args: &[&'a str]) -> Vec<&'a str> {
        args.iter().chain(&SMALL).copied().collect()
    }
    let day = format!(
        "{},{}",
        fixture("valid_book.csv").display(),
        fixture("valid_messages.csv").display()
    );
    let day = day.as_str();
    let steps: [Vec<&str>; 11] = [
        small(&[
            "gen-data",
            "--data",
            "data",
            "--train-days",
            "3",
            "--test-days",
            "1",
            "--session-rows",
            "3000",
        ]),
        small(&[
            "gen-data",
            "--data",
            "data2",
            "--train-days",
            "3",
            "--test-days",
            "1",
            "--session-rows",
            "3000",
        ]),
        vec![
            "ingest",
            "--levels",
            "2",
            "--train-day",
            day,
            "--test-day",
            day,
            "--out",
            "lob",
        ],
        small(&[
            "train",
            "--data",
            "data",
            "--arch",
            "linear",
            "--iterations",
            "40",
            "--out",
            "models",
        ]),
        small(&[
            "train",
            "--data",
            "data",
            "--arch",
            "mlp",
            "--depth",
            "2",
            "--width",
            "16",
            "--iterations",
            "20",
            "--out",
            "models",
        ]),
        small(&[
            "eval",
            "--data",
            "data",
            "--models",
            "models/linear.lobm,models/mlp.lobm",
            "--snippets",
            "300",
            "--out",
            "eval",
        ]),
        small(&[
            "attack",
            "--data",
            "data",
            "--model",
            "models/mlp.lobm",
            "--snippets",
            "4",
            "--steps",
            "20",
            "--stride",
            "30",
            "--out",
            "atk",
        ]),
        small(&[
            "random-baseline",
            "--data",
            "data",
            "--model",
            "models/mlp.lobm",
            "--snippets",
            "4",
            "--out",
            "rnd",
        ]),
        small(&[
            "universal",
            "--data",
            "data",
            "--surrogate",
            "models/linear.lobm",
            "--victims",
            "models/linear.lobm,models/mlp.lobm",
            "--batches",
            "3",
            "--batch-size",
            "10",
            "--pool",
            "30",
            "--test-snippets",
            "60",
            "--stride",
            "30",
            "--out",
            "uni",
        ]),
        small(&[
            "transfer",
            "--data",
            "data",
            "--models-dir",
            "models",
            "--surrogates",
            "linear",
            "--victims",
            "linear,mlp",
            "--batches",
            "3",
            "--batch-size",
            "10",
            "--pool",
            "30",
            "--test-snippets",
            "60",
            "--stride",
            "30",
            "--out",
            "tr",
        ]),
        vec!["report", "--inputs", "eval,atk,tr", "--out", "rep"],
    ];
    for args in &steps {
        lobadv(d, args)?;
    }
    Ok(vec![
        "data", "data2", "lob", "models", "eval", "atk", "rnd", "uni", "tr", "rep",
    ])
}

pub fn determinism(_: &mut Desk) -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let d = dir.path();
    let runs = match run_all(d) {
        Ok(r) => r,
        Err(e) => return Verdict::new(false, e),
    };
    let mut failures = Vec::new();
    for run in &runs {
        let manifest = d.join(run).join("run.json");
        if let Err(e) = lobadv(
            d,
            &["replay", manifest.to_str().unwrap(), "--out", &format!("{run}.replay")],
        ) {
            failures.push(format!("{run}: {e}"));
        }
    }
    // the two generations differ only in their directory
    let same_data = ["manifest.json", "day_000_train.bin", "day_003_test.bin"]
        .iter()
        .all(|f| fs::read(d.join("data").join(f)).ok() == fs::read(d.join("data2").join(f)).ok());
    if !same_data {
        failures.push("repeated gen-data differs".into());
    }
    Verdict::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} runs replayed bit-for-bit ({})", runs.len(), runs.join(", "))
        } else {
            failures.join("; ")
        },
    )
}

const OPEN: f64 = 34_200.0;

fn parse_day(book: &str, messages: &str) -> Result<Day, DataError> {
    let times = fs::read_to_string(fixture(messages))?
        .lines()
        .map(|l| {
            l.split(',')
                .next()
                .unwrap_or_default()
                .parse::<f64>()
                .unwrap_or(f64::NAN)
        })
        .collect();
    let timing = BookTiming::Timestamps {
        seconds: times,
        session_open: OPEN,
    };
    let series = parse_lobster_book(fs::read(fixture(book))?.as_slice(), 2, &timing)?;
    let grid = TimeGrid::of(&series, OPEN);
    let events = parse_lobster_messages(fs::read(fixture(messages))?.as_slice(), &grid)?;
    Ok(Day::new(series, events))
}

pub fn ingestion(_: &mut Desk) -> Verdict {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let valid = parse_day("valid_book.csv", "valid_messages.csv");
    let decoded = valid.as_ref().is_ok_and(|day| {
        day.series.len() == 9
            && day.series.row(8).best_ask() == Price::new(100_200).unwrap()
            && day.series.row(1).sizes() == [110, 120, 180, 300]
            && day.events.iter().map(|e| e.row).collect::<Vec<_>>() == [1, 5, 8]
    });
    checks.push(("valid decodes", decoded));
    checks.push((
        "crossed rejected",
        matches!(
            parse_day("crossed_book.csv", "valid_messages.csv"),
            Err(DataError::CrossedBook { line: 3, .. })
        ),
    ));
    checks.push((
        "malformed book rejected",
        matches!(
            parse_day("malformed_book.csv", "valid_messages.csv"),
            Err(DataError::MalformedRow { line: 2, .. })
        ),
    ));
    checks.push((
        "malformed messages rejected",
        matches!(
            fs::read(fixture("malformed_messages.csv")).map(|text| {
                let grid = TimeGrid {
                    session_open: OPEN,
                    origin_cs: 0,
                    rows: 10,
                };
                parse_lobster_messages(text.as_slice(), &grid)
            }),
            Ok(Err(DataError::MalformedRow { line: 2, .. }))
        ),
    ));
    let round_trip = valid.is_ok_and(|day| {
        let ds = Dataset {
            train: vec![day.clone()],
            test: vec![day],
            params: None,
        };
        let dir = tempfile::tempdir().expect("tempdir");
        save_dataset(&ds, dir.path()).is_ok() && load_dataset(dir.path()).is_ok_and(|(back, _)| back == ds)
    });
    checks.push(("round trip exact", round_trip));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Verdict::new(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} fixture checks", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}
