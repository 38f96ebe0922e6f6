use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, GraphError, NodeId, Tensor};

/// Settings for central finite-difference checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub step: f64,
    /// Coordinates checked; larger leaves are subsampled.
    pub max_points: usize,
    /// Magnitude below which errors are measured absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            max_points: 100,
            floor: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub points: usize,
}

fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn loss_at(g: &mut Graph<'_>, leaf: NodeId, loss: NodeId, value: Tensor) -> Result<f64, GraphError> {
    g.set_value(leaf, value)?;
    g.forward()?;
    Ok(g.scalar(loss))
}

/// Compares the backward gradient of `loss` with respect to `leaf` against
/// central differences, one coordinate at a time. The graph is left at its
/// original leaf value.
pub fn check_gradient(
    g: &mut Graph<'_>,
    leaf: NodeId,
    loss: NodeId,
    opts: GradCheck,
) -> Result<GradCheckReport, GraphError> {
    g.forward()?;
    g.backward(loss)?;
    let base = g.value(leaf).clone();
    let analytic = g
        .grad(leaf)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(base.rows(), base.cols()));
    let n = base.len();
    let idx: Vec<usize> = if n <= opts.max_points {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut v = sample(&mut rng, n, opts.max_points).into_vec();
        v.sort_unstable();
        v
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        points: idx.len(),
    };
    for &j in &idx {
        let mut plus = base.clone();
        plus.data_mut()[j] += opts.step;
        let mut minus = base.clone();
        minus.data_mut()[j] -= opts.step;
        let numeric = (loss_at(g, leaf, loss, plus)? - loss_at(g, leaf, loss, minus)?) / (2.0 * opts.step);
        let a = analytic.data()[j];
        report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        report.max_rel_error = report.max_rel_error.max(rel_error(a, numeric, opts.floor));
    }
    loss_at(g, leaf, loss, base)?;
    Ok(report)
}

/// Directional-derivative check along `direction`: compares `<grad, d>` with
/// the central difference of the loss along `d`. Returns the relative error.
pub fn check_directional(
    g: &mut Graph<'_>,
    leaf: NodeId,
    loss: NodeId,
    direction: &Tensor,
    step: f64,
    floor: f64,
) -> Result<f64, GraphError> {
    g.forward()?;
    g.backward(loss)?;
    let base = g.value(leaf).clone();
    if direction.shape() != base.shape() {
        return Err(GraphError::ShapeMismatch {
            op: "check_directional",
            left: base.shape(),
            right: direction.shape(),
        });
    }
    let analytic: f64 = match g.grad(leaf) {
        Some(gr) => gr.data().iter().zip(direction.data()).map(|(a, b)| a * b).sum(),
        None => 0.0,
    };
    let shifted = |sign: f64| {
        let data = base
            .data()
            .iter()
            .zip(direction.data())
            .map(|(x, d)| x + sign * step * d)
            .collect();
        Tensor::from_vec(base.rows(), base.cols(), data)
    };
    let numeric = (loss_at(g, leaf, loss, shifted(1.0))? - loss_at(g, leaf, loss, shifted(-1.0))?) / (2.0 * step);
    loss_at(g, leaf, loss, base)?;
    Ok(rel_error(analytic, numeric, floor))
}
