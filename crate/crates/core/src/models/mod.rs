//! Three-class valuation models over SWA windows.
//!
//! Every model starts from the raw SWA window (`n x W`, dollars) and applies
//! the normalization inside the graph, so gradients taken by the attacks see
//! exactly what the classifier sees.

mod checkpoint;
mod source;
mod train;

pub use source::{ExampleSource, SwaDays};
pub use train::{evaluate, normalization_scale, sgd_step, train, Accuracy, OptimizerKind, TrainReport, TrainSchedule};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Graph, GraphError, NodeId, Tensor};
use crate::book::{BookError, Label};

pub const CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {found} SWA values, the model expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    DivergenceDetected { iteration: usize, loss: f64 },
    #[error("no examples to evaluate")]
    EmptyInput,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} is newer than supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Book(#[from] BookError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Linear,
    Mlp { depth: usize, width: usize },
    Lstm { layers: usize, hidden: usize },
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Mlp { .. } => "mlp",
            Architecture::Lstm { .. } => "lstm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    /// SWA values per input window.
    pub window: usize,
    /// Block length of the mean decimation applied after normalization.
    pub stride: usize,
    /// Per-asset scale dividing the centered window, in dollars.
    pub scale: f64,
}

impl ModelConfig {
    /// Length of the decimated sequence fed to the architecture.
    pub fn input_len(&self) -> usize {
        self.window.div_ceil(self.stride.max(1))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.window == 0 || self.stride == 0 {
            return bad("window and stride must be positive");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("normalization scale must be positive");
        }
        match self.arch {
            Architecture::Mlp { depth, width } if depth == 0 || width == 0 => {
                bad("MLP depth and width must be positive")
            }
            Architecture::Lstm { layers, hidden } if layers == 0 || hidden == 0 => {
                bad("LSTM layers and hidden size must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Shapes of the parameter tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let d = self.input_len();
        match self.arch {
            Architecture::Linear => vec![(d, CLASSES), (1, CLASSES)],
            Architecture::Mlp { depth, width } => {
                let mut v = Vec::new();
                let mut fan_in = d;
                for _ in 0..depth {
                    v.push((fan_in, width));
                    v.push((1, width));
                    fan_in = width;
                }
                v.push((fan_in, CLASSES));
                v.push((1, CLASSES));
                v
            }
            Architecture::Lstm { layers, hidden } => {
                let mut v = Vec::new();
                for l in 0..layers {
                    let input = if l == 0 { 1 } else { hidden };
                    v.push((input + hidden, 4 * hidden));
                    v.push((1, 4 * hidden));
                }
                v.push((hidden, CLASSES));
                v.push((1, CLASSES));
                v
            }
        }
    }
}

/// Provenance stored with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainMeta {
    pub seed: u64,
    pub schedule: Option<TrainSchedule>,
    pub data_hash: String,
    /// Label band the model was trained against, in dollars.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValuationModel {
    pub config: ModelConfig,
    pub params: Vec<Tensor>,
    pub meta: TrainMeta,
}

/// Output of [`ValuationModel::build`].
pub struct Built {
    pub logits: NodeId,
    pub params: Vec<NodeId>,
}

impl ValuationModel {
    /// Fresh parameters: zeros for the linear model, He-normal weights for the
    /// MLP and uniform(-1/sqrt(h), 1/sqrt(h)) weights with unit forget-gate
    /// bias for the LSTM.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let shapes = config.param_shapes();
        let params = match config.arch {
            Architecture::Linear => shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            Architecture::Mlp { .. } => shapes
                .iter()
                .map(|&(r, c)| {
                    if r == 1 {
                        return Tensor::zeros(r, c);
                    }
                    let n = Normal::new(0.0, (2.0 / r as f64).sqrt()).expect("positive std");
                    Tensor::from_vec(r, c, (0..r * c).map(|_| n.sample(rng)).collect())
                })
                .collect(),
            Architecture::Lstm { hidden, .. } => {
                let k = 1.0 / (hidden as f64).sqrt();
                let u = Uniform::new(-k, k).expect("nonempty range");
                let last = shapes.len() - 1;
                shapes
                    .iter()
                    .enumerate()
                    .map(|(i, &(r, c))| {
                        if r == 1 {
                            let mut b = Tensor::zeros(r, c);
                            if i != last {
                                b.data_mut()[hidden..2 * hidden].fill(1.0);
                            }
                            return b;
                        }
                        Tensor::from_vec(r, c, (0..r * c).map(|_| u.sample(rng)).collect())
                    })
                    .collect()
            }
        };
        Ok(ValuationModel {
            config,
            params,
            meta: TrainMeta::default(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Adds the model to `g` on top of `swa` (`n x W` raw SWA values).
    /// Parameters are borrowed; `track` controls whether they get gradients.
    pub fn build<'g>(&'g self, g: &mut Graph<'g>, swa: NodeId, track: bool) -> Result<Built, ModelError> {
        let found = g.value(swa).cols();
        if found != self.config.window {
            return Err(ModelError::LengthMismatch {
                expected: self.config.window,
                found,
            });
        }
        let params: Vec<NodeId> = self.params.iter().map(|p| g.leaf_ref(p, track)).collect();
        let x = g.normalize(swa, self.config.scale, self.config.stride)?;
        let logits = match self.config.arch {
            Architecture::Linear => g.affine(x, params[0], Some(params[1]))?,
            Architecture::Mlp { depth, .. } => {
                let mut h = x;
                for l in 0..depth {
                    let a = g.affine(h, params[2 * l], Some(params[2 * l + 1]))?;
                    h = g.relu(a)?;
                }
                g.affine(h, params[2 * depth], Some(params[2 * depth + 1]))?
            }
            Architecture::Lstm { layers, hidden } => {
                let n = g.value(x).rows();
                let steps = g.value(x).cols();
                let mut seq: Vec<NodeId> = (0..steps).map(|t| g.slice(x, t, 1)).collect::<Result<_, _>>()?;
                for l in 0..layers {
                    let (w, b) = (params[2 * l], params[2 * l + 1]);
                    let mut h = g.constant(Tensor::zeros(n, hidden));
                    let mut c = g.constant(Tensor::zeros(n, hidden));
                    let mut out = Vec::with_capacity(steps);
                    for &xt in &seq {
                        let xh = g.concat(&[xt, h])?;
                        let z = g.affine(xh, w, Some(b))?;
                        let i = g.slice(z, 0, hidden)?;
                        let i = g.sigmoid(i)?;
                        let f = g.slice(z, hidden, hidden)?;
                        let f = g.sigmoid(f)?;
                        let u = g.slice(z, 2 * hidden, hidden)?;
                        let u = g.tanh(u)?;
                        let o = g.slice(z, 3 * hidden, hidden)?;
                        let o = g.sigmoid(o)?;
                        let keep = g.mul(f, c)?;
                        let write = g.mul(i, u)?;
                        c = g.add(keep, write)?;
                        let tc = g.tanh(c)?;
                        h = g.mul(o, tc)?;
                        out.push(h);
                    }
                    seq = out;
                }
                let last = *seq.last().expect("at least one step");
                g.affine(last, params[2 * layers], Some(params[2 * layers + 1]))?
            }
        };
        Ok(Built { logits, params })
    }

    /// Logits for one raw SWA window.
    pub fn predict(&self, swa: &[f64]) -> Result<[f64; CLASSES], ModelError> {
        let rows = self.predict_batch(&Tensor::row_vector(swa.to_vec()))?;
        Ok(rows[0])
    }

    /// Logits for each row of an `n x W` batch.
    pub fn predict_batch(&self, swa: &Tensor) -> Result<Vec<[f64; CLASSES]>, ModelError> {
        let mut g = Graph::new();
        let x = g.leaf_ref(swa, false);
        let built = self.build(&mut g, x, false)?;
        let z = g.value(built.logits);
        Ok((0..z.rows())
            .map(|r| {
                let row = z.row(r);
                [row[0], row[1], row[2]]
            })
            .collect())
    }

    pub fn classify(&self, swa: &[f64]) -> Result<Label, ModelError> {
        Ok(argmax(&self.predict(swa)?))
    }
}

/// Class with the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64; CLASSES]) -> Label {
    let mut best = 0;
    for c in 1..CLASSES {
        if logits[c] > logits[best] {
            best = c;
        }
    }
    Label::from_index(best).expect("three classes")
}

pub fn softmax(logits: &[f64; CLASSES]) -> [f64; CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}
