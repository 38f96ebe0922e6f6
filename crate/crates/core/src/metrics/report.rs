//! CSV tables, figure data and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Clean accuracy of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub asset: String,
    pub model: String,
    pub accuracy: f64,
    pub se: f64,
    pub n: usize,
}

/// Clean accuracy and its change under random and adversarial orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub asset: String,
    pub model: String,
    pub acc_test: f64,
    pub acc_rand: f64,
    pub acc_adv: f64,
    pub capital: f64,
    pub size: f64,
}

/// One surrogate/victim cell of a transfer experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub surrogate: String,
    pub victim: String,
    pub fooled: f64,
    pub size: f64,
    pub eligible: usize,
    pub fooled_count: usize,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_model_table(path: &Path, rows: &[ModelRow]) -> Result<(), ReportError> {
    write_csv(path, rows)
}

pub fn write_attack_table(path: &Path, rows: &[AttackRow]) -> Result<(), ReportError> {
    write_csv(path, rows)
}

pub fn write_transfer_table(path: &Path, rows: &[TransferRow]) -> Result<(), ReportError> {
    write_csv(path, rows)
}

/// Panels of a perturbation figure. Grids are `rows x slots`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub slots: usize,
    pub clean_swa: Vec<f64>,
    pub perturbed_swa: Vec<f64>,
    pub clean_book: Vec<f64>,
    pub perturbed_book: Vec<f64>,
    /// Order sizes at their placement rows only.
    pub raw_plan: Vec<f64>,
    pub propagated_plan: Vec<f64>,
}

#[derive(Serialize)]
struct SwaPoint {
    row: usize,
    clean: f64,
    perturbed: f64,
}

fn write_grid(path: &Path, grid: &[f64], slots: usize) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["row".to_string()];
    header.extend((0..slots).map(|s| format!("slot_{s}")));
    w.write_record(&header)?;
    for (i, row) in grid.chunks(slots).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the figure CSVs and SVGs into `dir` with file names prefixed by
/// `stem`.
pub fn write_figure_data(dir: &Path, stem: &str, fig: &FigureData) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;
    let points: Vec<SwaPoint> = fig
        .clean_swa
        .iter()
        .zip(&fig.perturbed_swa)
        .enumerate()
        .map(|(row, (&clean, &perturbed))| SwaPoint { row, clean, perturbed })
        .collect();
    write_csv(&dir.join(format!("{stem}_swa.csv")), &points)?;
    let panels = [
        ("clean_book", &fig.clean_book),
        ("perturbed_book", &fig.perturbed_book),
        ("raw_plan", &fig.raw_plan),
        ("propagated_plan", &fig.propagated_plan),
    ];
    for (name, grid) in panels {
        write_grid(&dir.join(format!("{stem}_{name}.csv")), grid, fig.slots)?;
        fs::write(
            dir.join(format!("{stem}_{name}.svg")),
            svg_heatmap(name, grid, fig.slots),
        )?;
    }
    fs::write(
        dir.join(format!("{stem}_swa.svg")),
        svg_lines(
            "SWA",
            &[("clean", &fig.clean_swa[..]), ("perturbed", &fig.perturbed_swa[..])],
        ),
    )?;
    Ok(())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Line plot of one or more series over their index.
pub fn svg_lines(title: &str, series: &[(&str, &[f64])]) -> String {
    let all = series.iter().flat_map(|(_, s)| s.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0).max(2);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="20" font-size="14">{title}</text>"#);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for (k, (name, s)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
                let y = HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / span;
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            WIDTH - MARGIN - 100.0,
            MARGIN + 15.0 * (k + 1) as f64
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" font-size="10">{lo:.4}</text><text x="4" y="{}" font-size="10">{hi:.4}</text>"#,
        HEIGHT - MARGIN,
        MARGIN + 10.0
    );
    out.push_str("</svg>\n");
    out
}

/// Heat map of a `rows x slots` grid, rows along x and slots along y (bid
/// levels at the bottom). Rows are binned to at most 400 columns.
pub fn svg_heatmap(title: &str, grid: &[f64], slots: usize) -> String {
    let rows = grid.len().checked_div(slots).unwrap_or(0);
    let bins = rows.clamp(1, 400);
    let per_bin = rows.div_ceil(bins).max(1);
    let mut cells = vec![0.0f64; bins * slots];
    for (i, row) in grid.chunks(slots.max(1)).enumerate() {
        let b = (i / per_bin).min(bins - 1);
        for (s, v) in row.iter().enumerate() {
            cells[b * slots + s] += v / per_bin as f64;
        }
    }
    let max = cells.iter().cloned().fold(0.0f64, f64::max);
    let cw = (WIDTH - 2.0 * MARGIN) / bins as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / slots.max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="20" font-size="14">{title}</text>"#);
    for b in 0..bins {
        for s in 0..slots {
            let v = cells[b * slots + s];
            if v <= 0.0 {
                continue;
            }
            let shade = (255.0 * (1.0 - v / max)).round() as u8;
            // slot 0 is the best bid; draw bids from the middle downward
            let y_index = if s < slots / 2 { slots / 2 + s } else { slots - 1 - s };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb(255,{shade},{shade})"/>"#,
                MARGIN + b as f64 * cw,
                MARGIN + y_index as f64 * ch,
                cw.max(0.5),
                ch
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
