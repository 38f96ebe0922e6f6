use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, ExampleSource, ModelConfig, ModelError, SwaDays, TrainMeta, ValuationModel};
use crate::autodiff::{Graph, Tensor};
use crate::book::{LabeledExample, SnippetShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer, iteration count, batch size and a learning rate halved after
/// each milestone iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub optimizer: OptimizerKind,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub milestones: Vec<usize>,
}

impl TrainSchedule {
    pub fn paper_linear() -> Self {
        TrainSchedule {
            optimizer: OptimizerKind::Sgd,
            iterations: 5_000,
            batch_size: 2_500,
            learning_rate: 0.5,
            milestones: vec![50, 500, 1_000, 2_000, 3_000, 4_000, 4_500],
        }
    }

    pub fn paper_mlp() -> Self {
        TrainSchedule {
            optimizer: OptimizerKind::Sgd,
            iterations: 3_000,
            batch_size: 3_000,
            learning_rate: 0.01,
            milestones: vec![10, 20, 100, 200, 400, 500, 1_000, 2_000, 2_500],
        }
    }

    pub fn paper_lstm() -> Self {
        TrainSchedule {
            optimizer: OptimizerKind::Adam,
            iterations: 50,
            batch_size: 2_000,
            learning_rate: 0.01,
            milestones: vec![25, 40],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.iterations == 0 || self.batch_size == 0 {
            return bad("iterations and batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive".into());
        }
        if let Some(m) = self.milestones.iter().find(|&&m| m >= self.iterations) {
            return bad(format!("milestone {m} is not below {} iterations", self.iterations));
        }
        Ok(())
    }

    /// Rate for 0-based iteration `it`: halved once for every milestone that
    /// has been completed.
    pub fn lr_at(&self, it: usize) -> f64 {
        let halvings = self.milestones.iter().filter(|&&m| m <= it).count();
        self.learning_rate * 0.5f64.powi(halvings as i32)
    }
}

/// `p <- p - lr * g` for every parameter tensor.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
            *x -= lr * d;
        }
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[Tensor]) -> Self {
        Adam {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((x, &d), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = Self::B1 * *mi + (1.0 - Self::B1) * d;
                *vi = Self::B2 * *vi + (1.0 - Self::B2) * d * d;
                *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + Self::EPS);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Batch loss at every iteration.
    pub losses: Vec<f64>,
    /// Mean cross-entropy on the monitoring set before and after training.
    pub monitor_initial: Option<f64>,
    pub monitor_final: Option<f64>,
}

/// Standard deviation of the within-window SWA change over the sessions; the
/// per-asset normalization constant.
pub fn normalization_scale(swa: &SwaDays, shape: SnippetShape) -> f64 {
    let xs = swa.window_changes(shape);
    if xs.len() < 2 {
        return 1.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

fn mean_loss(
    model: &ValuationModel,
    source: &ExampleSource<'_>,
    examples: &[LabeledExample],
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for chunk in examples.chunks(1_000) {
        let inputs = source.inputs(chunk);
        let mut g = Graph::new();
        let x = g.leaf_ref(&inputs, false);
        let built = model.build(&mut g, x, false)?;
        let loss = g.softmax_ce(built.logits, chunk.iter().map(|e| e.label.index()).collect())?;
        total += g.scalar(loss) * chunk.len() as f64;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Trains a fresh model with one optimizer step per freshly sampled batch.
/// Deterministic for a given seed and source.
pub fn train(
    config: ModelConfig,
    schedule: &TrainSchedule,
    source: &ExampleSource<'_>,
    seed: u64,
    monitor: Option<&[LabeledExample]>,
) -> Result<(ValuationModel, TrainReport), ModelError> {
    schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ValuationModel::init(config, &mut rng)?;
    let monitor_initial = monitor.map(|m| mean_loss(&model, source, m)).transpose()?;
    let mut adam = Adam::new(&model.params);
    let mut losses = Vec::with_capacity(schedule.iterations);
    for it in 0..schedule.iterations {
        let batch = source.sample(schedule.batch_size, &mut rng)?;
        let inputs = source.inputs(&batch);
        let (loss, grads) = {
            let mut g = Graph::new();
            let x = g.leaf_ref(&inputs, false);
            let built = model.build(&mut g, x, true)?;
            let loss = g.softmax_ce(built.logits, batch.iter().map(|e| e.label.index()).collect())?;
            g.backward(loss)?;
            let grads: Vec<Tensor> = built
                .params
                .iter()
                .map(|&p| g.grad(p).cloned().expect("parameters are tracked"))
                .collect();
            (g.scalar(loss), grads)
        };
        if !loss.is_finite() || grads.iter().any(|t| t.data().iter().any(|v| !v.is_finite())) {
            return Err(ModelError::DivergenceDetected { iteration: it, loss });
        }
        losses.push(loss);
        let lr = schedule.lr_at(it);
        match schedule.optimizer {
            OptimizerKind::Sgd => sgd_step(&mut model.params, &grads, lr),
            OptimizerKind::Adam => adam.step(&mut model.params, &grads, lr),
        }
        if it % 50 == 0 {
            log::debug!("{} iteration {it}: loss {loss:.5} lr {lr}", config.arch.name());
        }
    }
    let monitor_final = monitor.map(|m| mean_loss(&model, source, m)).transpose()?;
    model.meta = TrainMeta {
        seed,
        schedule: Some(schedule.clone()),
        data_hash: String::new(),
        theta: source.thresholds().theta(),
    };
    Ok((
        model,
        TrainReport {
            losses,
            monitor_initial,
            monitor_final,
        },
    ))
}

/// Accuracy in percent with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub n: usize,
    pub percent: f64,
    pub se: f64,
}

impl Accuracy {
    pub fn from_counts(correct: usize, n: usize) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::EmptyInput);
        }
        let p = correct as f64 / n as f64;
        Ok(Accuracy {
            correct,
            n,
            percent: 100.0 * p,
            se: 100.0 * (p * (1.0 - p) / n as f64).sqrt(),
        })
    }
}

/// Fraction of `examples` whose clean window the model labels correctly.
/// Shards are evaluated in parallel; the count does not depend on sharding.
pub fn evaluate(
    model: &ValuationModel,
    source: &ExampleSource<'_>,
    examples: &[LabeledExample],
) -> Result<Accuracy, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let counts: Vec<usize> = examples
        .par_chunks(500)
        .map(|chunk| -> Result<usize, ModelError> {
            let logits = model.predict_batch(&source.inputs(chunk))?;
            Ok(logits.iter().zip(chunk).filter(|(z, e)| argmax(z) == e.label).count())
        })
        .collect::<Result<_, _>>()?;
    Accuracy::from_counts(counts.iter().sum(), examples.len())
}
