use rand::Rng;

use crate::autodiff::Tensor;
use crate::book::{
    clean_swa, sample_snippets_with, BookError, BookSeries, LabelThresholds, LabeledExample, SnippetShape,
};

/// Clean SWA of every row of a set of sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct SwaDays {
    days: Vec<Vec<f64>>,
}

impl SwaDays {
    pub fn new(series: &[&BookSeries]) -> Self {
        SwaDays {
            days: series.iter().map(|s| clean_swa(s)).collect(),
        }
    }

    pub fn day(&self, i: usize) -> &[f64] {
        &self.days[i]
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Label-horizon change at every valid start of every day.
    pub fn label_changes(&self, shape: SnippetShape) -> Vec<f64> {
        let mut out = Vec::new();
        for d in &self.days {
            for s in 0..shape.starts_in(d.len()) {
                let end = s + shape.window - 1;
                out.push(d[end + shape.horizon] - d[end]);
            }
        }
        out
    }

    /// Last-minus-first change inside the input window at every valid start.
    pub fn window_changes(&self, shape: SnippetShape) -> Vec<f64> {
        let mut out = Vec::new();
        for d in &self.days {
            for s in 0..shape.starts_in(d.len()) {
                out.push(d[s + shape.window - 1] - d[s]);
            }
        }
        out
    }
}

/// Labeled snippets drawn from a fixed set of sessions.
#[derive(Debug, Clone)]
pub struct ExampleSource<'a> {
    series: Vec<&'a BookSeries>,
    swa: SwaDays,
    shape: SnippetShape,
    thresholds: LabelThresholds,
}

impl<'a> ExampleSource<'a> {
    pub fn new(series: Vec<&'a BookSeries>, shape: SnippetShape, thresholds: LabelThresholds) -> Self {
        let swa = SwaDays::new(&series);
        ExampleSource {
            series,
            swa,
            shape,
            thresholds,
        }
    }

    pub fn series(&self) -> &[&'a BookSeries] {
        &self.series
    }

    pub fn swa(&self) -> &SwaDays {
        &self.swa
    }

    pub fn shape(&self) -> SnippetShape {
        self.shape
    }

    pub fn thresholds(&self) -> LabelThresholds {
        self.thresholds
    }

    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Result<Vec<LabeledExample>, BookError> {
        sample_snippets_with(&self.series, self.shape, &self.thresholds, count, rng)
    }

    /// Clean input window of one example.
    pub fn window(&self, ex: &LabeledExample) -> &[f64] {
        &self.swa.day(ex.day)[ex.start..ex.start + self.shape.window]
    }

    /// Stacks the examples' clean windows into an `n x W` tensor.
    pub fn inputs(&self, examples: &[LabeledExample]) -> Tensor {
        let w = self.shape.window;
        let mut data = Vec::with_capacity(examples.len() * w);
        for ex in examples {
            data.extend_from_slice(self.window(ex));
        }
        Tensor::from_vec(examples.len(), w, data)
    }
}
