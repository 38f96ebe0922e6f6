use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::swa_row;
use super::{BookError, BookSeries, Snippet};

/// Input window and label horizon, both in rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetShape {
    pub window: usize,
    pub horizon: usize,
}

impl SnippetShape {
    /// 60 s of input, 10 s of lookahead at one row per centisecond.
    pub const PAPER: SnippetShape = SnippetShape {
        window: 6_000,
        horizon: 1_000,
    };

    pub const fn new(window: usize, horizon: usize) -> Self {
        SnippetShape { window, horizon }
    }

    pub fn validate(&self) -> Result<(), BookError> {
        if self.window == 0 || self.horizon == 0 {
            return Err(BookError::InvalidShape);
        }
        Ok(())
    }

    /// Number of valid snippet starts in a series of `len` rows.
    pub fn starts_in(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.window + self.horizon)
    }
}

impl Default for SnippetShape {
    fn default() -> Self {
        SnippetShape::PAPER
    }
}

/// Three-way valuation label. The discriminants are the class indices used by
/// the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Down = 0,
    Flat = 1,
    Up = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Down, Label::Flat, Label::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Down => "down",
            Label::Flat => "flat",
            Label::Up => "up",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "down" => Ok(Label::Down),
            "flat" => Ok(Label::Flat),
            "up" => Ok(Label::Up),
            other => Err(format!("unknown label `{other}` (expected down, flat or up)")),
        }
    }
}

/// Symmetric no-change band `[-theta, theta]`, in dollars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThresholds {
    theta: f64,
}

/// Smallest band half-width handed out for degenerate samples.
const MIN_THETA: f64 = 1e-12;

impl LabelThresholds {
    pub fn new(theta: f64) -> Result<Self, BookError> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(BookError::InvalidShape);
        }
        Ok(LabelThresholds { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Fits the band so that one third of the training changes fall inside it.
///
/// `theta` is the 1/3 quantile of `|delta|` using linear interpolation of the
/// empirical CDF: with sorted values `x_1 <= .. <= x_n` and `h = n / 3`,
/// `theta = x_k + (h - k) (x_{k+1} - x_k)` for `k = floor(h)` (1-based,
/// clamped to the sample). Ties to the band therefore put at least `floor(n/3)`
/// samples in the flat class.
pub fn compute_thresholds(deltas: &[f64]) -> Result<LabelThresholds, BookError> {
    if deltas.is_empty() {
        return Err(BookError::EmptyInput);
    }
    let mut abs: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let h = n as f64 / 3.0;
    let k = h.floor() as usize;
    let theta = if k == 0 {
        abs[0]
    } else if k >= n {
        abs[n - 1]
    } else {
        let lo = abs[k - 1];
        let hi = abs[k];
        lo + (h - k as f64) * (hi - lo)
    };
    if abs[0] == abs[n - 1] {
        log::warn!(
            "all {} price changes equal {}; every snippet will be labeled flat",
            n,
            abs[0]
        );
    }
    Ok(LabelThresholds {
        theta: theta.max(MIN_THETA),
    })
}

/// Label of an SWA change; changes on the band edge are flat.
pub fn label_of_change(delta: f64, thresholds: &LabelThresholds) -> Label {
    if delta > thresholds.theta {
        Label::Up
    } else if delta < -thresholds.theta {
        Label::Down
    } else {
        Label::Flat
    }
}

/// SWA change from the last input row to `horizon` rows later.
pub fn snippet_change(snippet: &Snippet<'_>) -> f64 {
    let end = swa_row(snippet.last_input_row(), None).expect("validated row");
    let ahead = swa_row(snippet.label_row(), None).expect("validated row");
    ahead - end
}

pub fn label_of(snippet: &Snippet<'_>, thresholds: &LabelThresholds) -> Label {
    label_of_change(snippet_change(snippet), thresholds)
}

/// A sampled snippet location and its label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    /// Index into the series set the example was drawn from.
    pub day: usize,
    pub start: usize,
    pub label: Label,
    /// The SWA change the label was derived from.
    pub change: f64,
}

impl LabeledExample {
    pub fn snippet<'a>(&self, days: &[&'a BookSeries], shape: SnippetShape) -> Snippet<'a> {
        Snippet::new(days[self.day], self.start, shape).expect("sampled within bounds")
    }
}

/// Draws `count` snippets uniformly over all valid starts of all series.
/// Deterministic for a given seed.
pub fn sample_snippets(
    days: &[&BookSeries],
    shape: SnippetShape,
    thresholds: &LabelThresholds,
    count: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>, BookError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_snippets_with(days, shape, thresholds, count, &mut rng)
}

/// [`sample_snippets`] with a caller-supplied generator.
pub fn sample_snippets_with<R: Rng>(
    days: &[&BookSeries],
    shape: SnippetShape,
    thresholds: &LabelThresholds,
    count: usize,
    rng: &mut R,
) -> Result<Vec<LabeledExample>, BookError> {
    shape.validate()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    if days.is_empty() {
        return Err(BookError::EmptyInput);
    }
    let mut cumulative = Vec::with_capacity(days.len());
    let mut total = 0usize;
    for d in days {
        let n = shape.starts_in(d.len());
        if n == 0 {
            return Err(BookError::SeriesTooShort {
                len: d.len(),
                window: shape.window,
                horizon: shape.horizon,
            });
        }
        total += n;
        cumulative.push(total);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.random_range(0..total);
        let day = cumulative.partition_point(|&c| c <= u);
        let start = u - if day == 0 { 0 } else { cumulative[day - 1] };
        let snip = Snippet::new(days[day], start, shape)?;
        let change = snippet_change(&snip);
        out.push(LabeledExample {
            day,
            start,
            label: label_of_change(change, thresholds),
            change,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::test_rows::ladder;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn third_quantile_of_one_to_six_is_two() {
        let t = compute_thresholds(&[1.0, -2.0, 3.0, 4.0, -5.0, 6.0]).unwrap();
        assert_eq!(t.theta(), 2.0);
        // sort-and-count: samples inside the band
        let inside = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]
            .iter()
            .filter(|d| d.abs() <= t.theta())
            .count();
        assert_eq!(inside, 2);
    }

    #[test]
    fn constant_sample_gives_its_value() {
        let t = compute_thresholds(&[0.25; 9]).unwrap();
        assert_eq!(t.theta(), 0.25);
        let flat = [0.25f64; 9].iter().filter(|d| d.abs() <= t.theta()).count();
        assert_eq!(flat, 9);
        assert!(compute_thresholds(&[0.0; 4]).unwrap().theta() > 0.0);
        assert_eq!(compute_thresholds(&[]), Err(BookError::EmptyInput));
    }

    #[test]
    fn uniform_sample_third_quantile() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let t = compute_thresholds(&xs).unwrap();
        assert!((t.theta() - 1.0 / 3.0).abs() < 0.01, "{}", t.theta());
    }

    #[test]
    fn boundary_ties_are_flat() {
        let t = LabelThresholds::new(0.5).unwrap();
        assert_eq!(label_of_change(0.0, &t), Label::Flat);
        assert_eq!(label_of_change(0.5, &t), Label::Flat);
        assert_eq!(label_of_change(-0.5, &t), Label::Flat);
        assert_eq!(label_of_change(0.5000001, &t), Label::Up);
        assert_eq!(label_of_change(-0.5000001, &t), Label::Down);
    }

    fn flat_series(len: usize) -> BookSeries {
        let rows: Vec<_> = (0..len as i64)
            .map(|t| ladder(t, 90_000, 90_100, &[10, 20, 30, 40]))
            .collect();
        BookSeries::from_rows(&rows, 2).unwrap()
    }

    #[test]
    fn constant_series_is_all_flat() {
        let s = flat_series(40);
        let t = LabelThresholds::new(1e-6).unwrap();
        let ex = sample_snippets(&[&s], SnippetShape::new(10, 5), &t, 50, 3).unwrap();
        assert!(ex.iter().all(|e| e.label == Label::Flat));
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let a = flat_series(30);
        let b = flat_series(50);
        let shape = SnippetShape::new(10, 5);
        let t = LabelThresholds::new(1.0).unwrap();
        assert!(sample_snippets(&[&a], shape, &t, 0, 1).unwrap().is_empty());
        let x = sample_snippets(&[&a, &b], shape, &t, 500, 9).unwrap();
        let y = sample_snippets(&[&a, &b], shape, &t, 500, 9).unwrap();
        assert_eq!(x, y);
        for e in &x {
            let len = if e.day == 0 { 30 } else { 50 };
            assert!(e.start + 15 <= len);
        }
        // both days are hit roughly in proportion to their valid starts (16 vs 36)
        let on_b = x.iter().filter(|e| e.day == 1).count();
        assert!(on_b > 250 && on_b < 450, "{on_b}");
        let short = flat_series(12);
        assert!(matches!(
            sample_snippets(&[&short], shape, &t, 1, 0),
            Err(BookError::SeriesTooShort { .. })
        ));
    }

    proptest! {
        #[test]
        fn thresholds_scale_with_the_sample(xs in prop::collection::vec(-100.0f64..100.0, 1..60), lambda in 0.01f64..100.0) {
            let t1 = compute_thresholds(&xs).unwrap().theta();
            let scaled: Vec<f64> = xs.iter().map(|x| x * lambda).collect();
            let t2 = compute_thresholds(&scaled).unwrap().theta();
            if t1 > 1e-9 {
                prop_assert!((t2 - lambda * t1).abs() <= 1e-9 * t2.abs().max(1.0));
            }
        }

        #[test]
        fn labels_partition_the_line(d in -10.0f64..10.0, theta in 0.001f64..5.0) {
            let t = LabelThresholds::new(theta).unwrap();
            let l = label_of_change(d, &t);
            let hits = [d > theta, d < -theta, d.abs() <= theta].iter().filter(|&&b| b).count();
            prop_assert_eq!(hits, 1);
            prop_assert_eq!(l == Label::Flat, d.abs() <= theta);
        }
    }
}
