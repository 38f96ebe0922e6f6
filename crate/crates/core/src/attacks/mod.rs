//! Adversarial order placement: a random-order baseline, the capital-capped
//! untargeted gradient attack and targeted universal perturbations.

mod universal;

pub use universal::{apply_universal, transfer_matrix, universal_attack, UniversalParams, UniversalResult};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{BookInput, Graph, GraphError, Tensor};
use crate::book::{slot_side_level, swa_series, BookError, Label, Snippet};
use crate::data::ExecutionEvent;
use crate::metrics::{budget_report, capital_required, BudgetReport, MetricsError};
use crate::models::{argmax, ModelError, ValuationModel};
use crate::propagation::{
    anchor_levels, round_size, AdvOrder, AttackPlan, LevelPlan, PreparedPlan, PriceView, PropagationError,
};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("non-finite gradient at step {step}")]
    GradientUnavailable { step: usize },
    #[error("no test snippet is eligible (correctly classified and outside the target class)")]
    NoEligibleSnippets,
    #[error("invalid attack parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Book(#[from] BookError),
}

/// A snippet to attack, the executions of its session and its true label.
#[derive(Debug, Clone, Copy)]
pub struct AttackTarget<'a> {
    pub snippet: Snippet<'a>,
    pub events: &'a [ExecutionEvent],
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UntargetedParams {
    /// Maximum ascent steps.
    pub steps: usize,
    /// Step sizes are drawn from `U(0, alpha0)` at every step.
    pub alpha0: f64,
    /// Capital cap in dollars.
    pub capital: f64,
    /// Rounding offset of `R_r(x) = floor(x + r)`.
    pub r: f64,
    /// Orders may be placed every `stride` rows, at every visible level.
    pub stride: usize,
}

impl UntargetedParams {
    pub fn paper() -> Self {
        UntargetedParams {
            steps: 200,
            alpha0: 40.0,
            capital: 100_000.0,
            r: 0.95,
            stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if self.steps == 0 || !(self.alpha0 >= 0.0) || !(self.capital > 0.0) || !(0.0..1.0).contains(&self.r) {
            return Err(AttackError::InvalidParams(
                "need steps > 0, alpha0 >= 0, capital > 0 and r in [0, 1)".into(),
            ));
        }
        if self.stride == 0 {
            return Err(AttackError::InvalidParams("stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    /// Rounded plan with zero-size orders dropped.
    pub plan: AttackPlan,
    pub success: bool,
    pub steps: usize,
    pub budget: BudgetReport,
    pub before: Label,
    pub after: Label,
}

fn classify_with(
    model: &ValuationModel,
    snippet: &Snippet<'_>,
    prep: Option<(&PreparedPlan<'_, '_>, &[f64])>,
) -> Result<Label, AttackError> {
    let swa = match prep {
        None => swa_series(snippet, None)?,
        Some((p, sizes)) => swa_series(snippet, Some(&p.propagate(sizes)?))?,
    };
    Ok(model.classify(&swa.0)?)
}

fn outcome(
    model: &ValuationModel,
    target: &AttackTarget<'_>,
    view: &PriceView<'_>,
    plan: AttackPlan,
    steps: usize,
    before: Label,
) -> Result<AttackOutcome, AttackError> {
    let plan = plan.compact();
    let prep = PreparedPlan::new(view, &plan)?;
    let grid = prep.propagate(&plan.sizes())?;
    let budget = budget_report(&plan, &grid, prep.fills(), &target.snippet)?;
    let after = model.classify(&swa_series(&target.snippet, Some(&grid))?.0)?;
    Ok(AttackOutcome {
        success: after != target.label,
        plan,
        steps,
        budget,
        before,
        after,
    })
}

/// Every visible level at every `stride`-th row, anchored to the snippet.
fn placement_grid(snippet: &Snippet<'_>, stride: usize) -> Result<AttackPlan, AttackError> {
    let grid = LevelPlan::grid(snippet.window(), snippet.levels(), stride);
    Ok(anchor_levels(&grid, snippet)?)
}

/// Gradient ascent on the cross-entropy of the true label over non-negative
/// order sizes. Stops once the rounded plan flips the prediction, once its
/// capital exceeds the cap, or after `steps` steps.
pub fn untargeted_attack<R: Rng>(
    model: &ValuationModel,
    target: &AttackTarget<'_>,
    params: &UntargetedParams,
    rng: &mut R,
) -> Result<AttackOutcome, AttackError> {
    params.validate()?;
    let snippet = &target.snippet;
    let view = PriceView::new(*snippet, target.events);
    let clean = classify_with(model, snippet, None)?;
    if clean != target.label {
        return outcome(model, target, &view, AttackPlan::default(), 0, clean);
    }
    let grid = placement_grid(snippet, params.stride)?;
    let prep = PreparedPlan::new(&view, &grid)?;
    let n = grid.orders.len();
    let mut g = Graph::new();
    let a = g.param(Tensor::zeros(1, n));
    let delta = g.linear(a, &prep)?;
    let swa = g.swa(delta, BookInput::of(snippet))?;
    let built = model.build(&mut g, swa, false)?;
    let loss = g.softmax_ce(built.logits, vec![target.label.index()])?;

    let mut sizes = vec![0.0; n];
    let mut rounded = vec![0.0; n];
    for step in 1..=params.steps {
        g.set_value(a, Tensor::row_vector(sizes.clone()))?;
        g.forward()?;
        g.backward(loss)?;
        let grad = g.grad(a).expect("tracked leaf").data();
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(AttackError::GradientUnavailable { step });
        }
        let alpha = if params.alpha0 > 0.0 {
            rng.random_range(0.0..params.alpha0)
        } else {
            0.0
        };
        for (s, d) in sizes.iter_mut().zip(grad) {
            *s = (*s + alpha * d).max(0.0);
        }
        for (r, &s) in rounded.iter_mut().zip(&sizes) {
            *r = round_size(s, params.r);
        }
        let plan = grid.with_sizes(&rounded);
        if capital_required(&plan) > params.capital {
            let mut out = outcome(model, target, &view, plan, step, clean)?;
            out.success = false;
            return Ok(out);
        }
        if rounded.iter().any(|&r| r > 0.0) {
            g.set_value(a, Tensor::row_vector(rounded.clone()))?;
            g.forward()?;
            if argmax(&logits3(g.value(built.logits))) != target.label {
                let mut plan = plan;
                plan.rounded = true;
                return outcome(model, target, &view, plan, step, clean);
            }
        }
    }
    let mut plan = grid.with_sizes(&rounded);
    plan.rounded = true;
    outcome(model, target, &view, plan, params.steps, clean)
}

fn logits3(t: &Tensor) -> [f64; 3] {
    let d = t.data();
    [d[0], d[1], d[2]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomParams {
    /// Capital available to the random orders, in dollars.
    pub budget: f64,
    /// Order sizes are uniform on `1..=max_size` shares.
    pub max_size: u32,
}

/// Places whole-share orders at uniformly random (row, side, level) until the
/// budget is spent, then re-evaluates the model on the perturbed snippet.
pub fn random_baseline<R: Rng>(
    model: &ValuationModel,
    target: &AttackTarget<'_>,
    params: &RandomParams,
    rng: &mut R,
) -> Result<AttackOutcome, AttackError> {
    if !(params.budget > 0.0) || params.max_size == 0 {
        return Err(AttackError::InvalidParams(
            "budget and max_size must be positive".into(),
        ));
    }
    let snippet = &target.snippet;
    let view = PriceView::new(*snippet, target.events);
    let clean = classify_with(model, snippet, None)?;
    let levels = snippet.levels();
    let mut orders = Vec::new();
    let mut spent = 0.0;
    loop {
        let row = rng.random_range(0..snippet.window());
        let slot = rng.random_range(0..2 * levels);
        let (side, _) = slot_side_level(slot, levels);
        let price = snippet.row(row).prices()[slot];
        let mut size = rng.random_range(1..=params.max_size) as f64;
        let left = params.budget - spent;
        if price.dollars() * size > left {
            size = (left / price.dollars()).floor();
            if size < 1.0 {
                break;
            }
        }
        spent += price.dollars() * size;
        orders.push(AdvOrder { row, price, side, size });
    }
    let mut plan = AttackPlan::new(orders);
    plan.rounded = true;
    outcome(model, target, &view, plan, 0, clean)
}
