//! Targeted universal perturbations: one level plan applied to every snippet.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttackError, AttackTarget};
use crate::autodiff::{BookInput, Graph, Tensor};
use crate::book::{swa_series, Label};
use crate::metrics::{relative_size, TransferRow};
use crate::models::ValuationModel;
use crate::propagation::{anchor_levels, round_level_plan, LevelPlan, PreparedPlan, PriceView};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalParams {
    /// Number of batches.
    pub batches: usize,
    pub batch_size: usize,
    /// Gradient steps per snippet and batch.
    pub inner_steps: usize,
    /// Inner step sizes are drawn from `U(0, inner_alpha)`.
    pub inner_alpha: f64,
    /// Multiplier of the averaged batch update.
    pub aggregate: f64,
    /// Weight of the relative-size penalty, with relative size as a fraction
    /// of the native book; 0 disables it.
    pub gamma: f64,
    pub target: Label,
    /// Orders may be placed every `stride` rows.
    pub stride: usize,
}

impl UniversalParams {
    pub fn paper(target: Label) -> Self {
        UniversalParams {
            batches: 200,
            batch_size: 50,
            inner_steps: 5,
            inner_alpha: 10.0,
            aggregate: 1.5,
            gamma: 0.0,
            target,
            stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if self.batches == 0 || self.batch_size == 0 || self.inner_steps == 0 || self.stride == 0 {
            return Err(AttackError::InvalidParams(
                "batches, batch_size, inner_steps and stride must be positive".into(),
            ));
        }
        if !(self.inner_alpha >= 0.0) || !(self.aggregate >= 0.0) || !(self.gamma >= 0.0) {
            return Err(AttackError::InvalidParams(
                "inner_alpha, aggregate and gamma must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Sizes after `alphas.len()` descent steps on the targeted loss of one
/// snippet, starting from `start`.
fn inner_descent(
    model: &ValuationModel,
    plan: &LevelPlan,
    target: &AttackTarget<'_>,
    params: &UniversalParams,
    alphas: &[f64],
) -> Result<Vec<f64>, AttackError> {
    let snippet = &target.snippet;
    let view = PriceView::new(*snippet, target.events);
    let anchored = anchor_levels(plan, snippet)?;
    let prep = PreparedPlan::new(&view, &anchored)?;
    let native: f64 = BookInput::of(snippet).total_size();
    let mut sizes = plan.sizes();
    let n = sizes.len();
    let mut g = Graph::new();
    let a = g.param(Tensor::row_vector(sizes.clone()));
    let delta = g.linear(a, &prep)?;
    let swa = g.swa(delta, BookInput::of(snippet))?;
    let built = model.build(&mut g, swa, false)?;
    let mut loss = g.softmax_ce(built.logits, vec![params.target.index()])?;
    if params.gamma > 0.0 {
        if native == 0.0 {
            return Err(crate::metrics::MetricsError::ZeroBookSize.into());
        }
        let cells = g.value(delta).len() as f64;
        let mean = g.mean(delta)?;
        let penalty = g.scale(mean, params.gamma * cells / native)?;
        loss = g.add(loss, penalty)?;
    }
    for (step, &alpha) in alphas.iter().enumerate() {
        if step > 0 {
            g.set_value(a, Tensor::row_vector(sizes.clone()))?;
            g.forward()?;
        }
        g.backward(loss)?;
        let grad = g.grad(a).expect("tracked leaf").data();
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(AttackError::GradientUnavailable { step: step + 1 });
        }
        for (s, d) in sizes.iter_mut().zip(grad) {
            *s = (*s - alpha * d).max(0.0);
        }
    }
    debug_assert_eq!(sizes.len(), n);
    Ok(sizes)
}

/// Learns a level plan that pushes snippets toward `params.target`: for each
/// batch, a few descent steps per snippet from the current plan, then a
/// scaled average of the resulting updates, clipped at zero.
pub fn universal_attack<R: Rng>(
    surrogate: &ValuationModel,
    pool: &[AttackTarget<'_>],
    params: &UniversalParams,
    rng: &mut R,
) -> Result<LevelPlan, AttackError> {
    params.validate()?;
    let Some(first) = pool.first() else {
        return Err(AttackError::InvalidParams("empty training pool".into()));
    };
    let mut plan = LevelPlan::grid(first.snippet.window(), first.snippet.levels(), params.stride);
    let n = plan.entries.len();
    let m = params.batch_size.min(pool.len());
    for batch in 0..params.batches {
        let picks = sample(rng, pool.len(), m).into_vec();
        let alphas: Vec<Vec<f64>> = picks
            .iter()
            .map(|_| {
                (0..params.inner_steps)
                    .map(|_| {
                        if params.inner_alpha > 0.0 {
                            rng.random_range(0.0..params.inner_alpha)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let results: Vec<Vec<f64>> = picks
            .par_iter()
            .zip(&alphas)
            .map(|(&i, al)| inner_descent(surrogate, &plan, &pool[i], params, al))
            .collect::<Result<_, _>>()?;
        let current = plan.sizes();
        let mut update = vec![0.0; n];
        for r in &results {
            for ((u, &v), &c) in update.iter_mut().zip(r).zip(&current) {
                *u += v - c;
            }
        }
        let next: Vec<f64> = current
            .iter()
            .zip(&update)
            .map(|(&c, &u)| (c + params.aggregate * u / m as f64).max(0.0))
            .collect();
        plan.set_sizes(&next);
        log::debug!("universal batch {batch}: {} shares", plan.total_shares());
    }
    Ok(plan)
}

/// Fool rate of a universal plan on one victim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalResult {
    /// Correctly classified snippets whose label is not the target.
    pub eligible: usize,
    /// Eligible snippets classified as the target once perturbed.
    pub fooled: usize,
    /// `100 * fooled / eligible`.
    pub fool_rate: f64,
    /// Mean relative size over eligible snippets, in percent.
    pub relative_size: f64,
}

/// Rounds `plan` with offset `r`, applies it to every snippet and measures
/// how often the victim switches to `target`.
pub fn apply_universal(
    plan: &LevelPlan,
    victim: &ValuationModel,
    targets: &[AttackTarget<'_>],
    target: Label,
    r: f64,
) -> Result<UniversalResult, AttackError> {
    let rounded = round_level_plan(plan, r);
    let per: Vec<Option<(bool, f64)>> = targets
        .par_iter()
        .map(|t| -> Result<Option<(bool, f64)>, AttackError> {
            if t.label == target {
                return Ok(None);
            }
            let snippet = &t.snippet;
            if victim.classify(&swa_series(snippet, None)?.0)? != t.label {
                return Ok(None);
            }
            let view = PriceView::new(*snippet, t.events);
            let anchored = anchor_levels(&rounded, snippet)?;
            let prep = PreparedPlan::new(&view, &anchored)?;
            let grid = prep.propagate(&anchored.sizes())?;
            let after = victim.classify(&swa_series(snippet, Some(&grid))?.0)?;
            Ok(Some((after == target, relative_size(&grid, snippet)?)))
        })
        .collect::<Result<_, _>>()?;
    let hits: Vec<(bool, f64)> = per.into_iter().flatten().collect();
    if hits.is_empty() {
        return Err(AttackError::NoEligibleSnippets);
    }
    let fooled = hits.iter().filter(|h| h.0).count();
    let eligible = hits.len();
    Ok(UniversalResult {
        eligible,
        fooled,
        fool_rate: 100.0 * fooled as f64 / eligible as f64,
        relative_size: hits.iter().map(|h| h.1).sum::<f64>() / eligible as f64,
    })
}

/// Every surrogate plan against every victim.
pub fn transfer_matrix(
    plans: &[(String, LevelPlan)],
    victims: &[(String, &ValuationModel)],
    targets: &[AttackTarget<'_>],
    target: Label,
    r: f64,
) -> Result<Vec<TransferRow>, AttackError> {
    let mut rows = Vec::with_capacity(plans.len() * victims.len());
    for (sname, plan) in plans {
        for (vname, victim) in victims {
            let res = apply_universal(plan, victim, targets, target, r)?;
            rows.push(TransferRow {
                surrogate: sname.clone(),
                victim: vname.clone(),
                fooled: res.fool_rate,
                size: res.relative_size,
                eligible: res.eligible,
                fooled_count: res.fooled,
            });
        }
    }
    Ok(rows)
}
