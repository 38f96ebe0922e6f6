//! Experiment steps shared by the commands and the acceptance suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lobadv::attacks::{
    apply_universal, random_baseline, universal_attack, untargeted_attack, AttackOutcome, AttackTarget, RandomParams,
    UniversalParams, UniversalResult, UntargetedParams,
};
use lobadv::book::{compute_thresholds, swa_series, Label, LabelThresholds, LabeledExample, Snippet, SnippetShape};
use lobadv::data::{DataError, Dataset};
use lobadv::metrics::{AttackRow, FigureData};
use lobadv::models::{
    argmax, evaluate, normalization_scale, train, Accuracy, ExampleSource, ModelConfig, SwaDays, TrainReport,
    TrainSchedule, ValuationModel,
};
use lobadv::profile::ArchSettings;
use lobadv::propagation::{LevelPlan, PreparedPlan, PriceView};

use crate::error::CliError;

/// A dataset with the label band and normalization scale of its training
/// sessions.
pub struct Prepared {
    pub dataset: Dataset,
    pub data_hash: String,
    pub shape: SnippetShape,
    pub thresholds: LabelThresholds,
    pub scale: f64,
}

impl Prepared {
    pub fn new(dataset: Dataset, data_hash: String, shape: SnippetShape) -> Result<Self, CliError> {
        if dataset.train.is_empty() || dataset.test.is_empty() {
            return Err(DataError::EmptyInput.into());
        }
        dataset.check_shape(shape)?;
        let train = dataset.train_series();
        let swa = SwaDays::new(&train);
        let thresholds = compute_thresholds(&swa.label_changes(shape))?;
        let scale = normalization_scale(&swa, shape);
        Ok(Prepared {
            dataset,
            data_hash,
            shape,
            thresholds,
            scale,
        })
    }

    pub fn train_source(&self) -> ExampleSource<'_> {
        ExampleSource::new(self.dataset.train_series(), self.shape, self.thresholds)
    }

    pub fn test_source(&self) -> ExampleSource<'_> {
        ExampleSource::new(self.dataset.test_series(), self.shape, self.thresholds)
    }

    /// Attack targets for examples drawn from the test sessions.
    pub fn test_targets(&self, examples: &[LabeledExample]) -> Result<Vec<AttackTarget<'_>>, CliError> {
        targets_from(&self.dataset.test, examples, self.shape)
    }

    /// Attack targets for examples drawn from the training sessions.
    pub fn train_targets(&self, examples: &[LabeledExample]) -> Result<Vec<AttackTarget<'_>>, CliError> {
        targets_from(&self.dataset.train, examples, self.shape)
    }

    fn check_model(&self, model: &ValuationModel) -> Result<(), CliError> {
        if model.config.window != self.shape.window {
            return Err(CliError::config(format!(
                "model window {} does not match snippet window {}",
                model.config.window, self.shape.window
            )));
        }
        Ok(())
    }
}

fn targets_from<'a>(
    days: &'a [lobadv::data::Day],
    examples: &[LabeledExample],
    shape: SnippetShape,
) -> Result<Vec<AttackTarget<'a>>, CliError> {
    examples
        .iter()
        .map(|e| {
            let day = &days[e.day];
            Ok(AttackTarget {
                snippet: Snippet::new(&day.series, e.start, shape)?,
                events: &day.events,
                label: e.label,
            })
        })
        .collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn train_model(
    prep: &Prepared,
    settings: &ArchSettings,
    seed: u64,
) -> Result<(ValuationModel, TrainReport), CliError> {
    train_with(prep, settings.arch, settings.stride, &settings.schedule, seed)
}

pub fn train_with(
    prep: &Prepared,
    arch: lobadv::models::Architecture,
    stride: usize,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(ValuationModel, TrainReport), CliError> {
    let config = ModelConfig {
        arch,
        window: prep.shape.window,
        stride,
        scale: prep.scale,
    };
    let (mut model, report) = train(config, schedule, &prep.train_source(), seed, None)?;
    model.meta.data_hash = prep.data_hash.clone();
    Ok((model, report))
}

/// Accuracy on `n` test snippets drawn with `seed`.
pub fn eval_model(prep: &Prepared, model: &ValuationModel, n: usize, seed: u64) -> Result<Accuracy, CliError> {
    prep.check_model(model)?;
    let test = prep.test_source();
    let examples = test.sample(n, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(evaluate(model, &test, &examples)?)
}

/// Test snippets the model classifies correctly, in sampling order.
#[derive(Debug, Clone)]
pub struct AttackSet {
    pub examples: Vec<LabeledExample>,
    /// Snippets classified to collect `examples`.
    pub considered: usize,
}

impl AttackSet {
    /// Clean accuracy over the considered snippets, in percent.
    pub fn clean_accuracy(&self) -> f64 {
        100.0 * self.examples.len() as f64 / self.considered.max(1) as f64
    }
}

pub fn correctly_classified(
    prep: &Prepared,
    model: &ValuationModel,
    count: usize,
    seed: u64,
) -> Result<AttackSet, CliError> {
    prep.check_model(model)?;
    let test = prep.test_source();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(count);
    let mut considered = 0;
    let chunk = (2 * count).max(100);
    while examples.len() < count {
        if considered >= 100 * count.max(1) {
            return Err(CliError::Attack(lobadv::attacks::AttackError::NoEligibleSnippets));
        }
        let batch = test.sample(chunk, &mut rng)?;
        let logits = model.predict_batch(&test.inputs(&batch))?;
        for (e, z) in batch.into_iter().zip(&logits) {
            if examples.len() == count {
                break;
            }
            considered += 1;
            if argmax(z) == e.label {
                examples.push(e);
            }
        }
    }
    Ok(AttackSet { examples, considered })
}

/// Untargeted attack on every target; target `i` draws its step sizes from
/// stream `i` of `seed`.
pub fn run_untargeted(
    model: &ValuationModel,
    targets: &[AttackTarget<'_>],
    params: &UntargetedParams,
    seed: u64,
) -> Result<Vec<AttackOutcome>, CliError> {
    targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| Ok(untargeted_attack(model, t, params, &mut stream_rng(seed, i as u64))?))
        .collect()
}

pub fn run_random(
    model: &ValuationModel,
    targets: &[AttackTarget<'_>],
    params: &RandomParams,
    seed: u64,
) -> Result<Vec<AttackOutcome>, CliError> {
    targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| Ok(random_baseline(model, t, params, &mut stream_rng(seed, i as u64))?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attempts: usize,
    pub successes: usize,
    /// Percent of attempts that changed the prediction.
    pub success_rate: f64,
    /// Means over successful outcomes; zero when there are none.
    pub mean_capital: f64,
    pub mean_cost: f64,
    pub mean_size: f64,
}

pub fn summarize(outcomes: &[AttackOutcome]) -> AttackSummary {
    let wins: Vec<&AttackOutcome> = outcomes.iter().filter(|o| o.success).collect();
    let mean = |f: &dyn Fn(&AttackOutcome) -> f64| {
        if wins.is_empty() {
            0.0
        } else {
            wins.iter().map(|o| f(o)).sum::<f64>() / wins.len() as f64
        }
    };
    AttackSummary {
        attempts: outcomes.len(),
        successes: wins.len(),
        success_rate: 100.0 * wins.len() as f64 / outcomes.len().max(1) as f64,
        mean_capital: mean(&|o| o.budget.capital),
        mean_cost: mean(&|o| o.budget.cost),
        mean_size: mean(&|o| o.budget.relative_size),
    }
}

/// Table row: clean accuracy and the accuracy changes, in percentage points,
/// once correctly classified snippets are attacked.
pub fn attack_row(asset: &str, model: &str, set: &AttackSet, adv: &AttackSummary, rand: &AttackSummary) -> AttackRow {
    let acc = set.clean_accuracy();
    AttackRow {
        asset: asset.to_string(),
        model: model.to_string(),
        acc_test: acc,
        acc_rand: -acc * rand.success_rate / 100.0,
        acc_adv: -acc * adv.success_rate / 100.0,
        capital: adv.mean_capital,
        size: adv.mean_size,
    }
}

/// Universal plan learned on `pool` training snippets of the surrogate.
pub fn craft_universal(
    prep: &Prepared,
    surrogate: &ValuationModel,
    params: &UniversalParams,
    pool: usize,
    seed: u64,
) -> Result<LevelPlan, CliError> {
    prep.check_model(surrogate)?;
    let examples = prep.train_source().sample(pool, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let targets = prep.train_targets(&examples)?;
    Ok(universal_attack(surrogate, &targets, params, &mut stream_rng(seed, 1))?)
}

/// Test snippets a universal plan is applied to.
pub fn universal_test_set(prep: &Prepared, n: usize, seed: u64) -> Result<Vec<LabeledExample>, CliError> {
    Ok(prep.test_source().sample(n, &mut ChaCha8Rng::seed_from_u64(seed))?)
}

pub fn apply_plan(
    prep: &Prepared,
    plan: &LevelPlan,
    victim: &ValuationModel,
    examples: &[LabeledExample],
    target: Label,
    r: f64,
) -> Result<UniversalResult, CliError> {
    prep.check_model(victim)?;
    let targets = prep.test_targets(examples)?;
    Ok(apply_universal(plan, victim, &targets, target, r)?)
}

/// Clean and perturbed book, SWA and plan grids of one attack outcome.
pub fn figure_data(target: &AttackTarget<'_>, outcome: &AttackOutcome) -> Result<FigureData, CliError> {
    let snippet = &target.snippet;
    let slots = 2 * snippet.levels();
    let window = snippet.window();
    let view = PriceView::new(*snippet, target.events);
    let prep = PreparedPlan::new(&view, &outcome.plan).map_err(lobadv::attacks::AttackError::from)?;
    let grid = prep
        .propagate(&outcome.plan.sizes())
        .map_err(lobadv::attacks::AttackError::from)?;
    let mut clean_book = Vec::with_capacity(window * slots);
    for r in 0..window {
        clean_book.extend(snippet.row(r).sizes().iter().map(|&s| s as f64));
    }
    let perturbed_book = clean_book.iter().zip(grid.values()).map(|(a, b)| a + b).collect();
    let mut raw_plan = vec![0.0; window * slots];
    for o in &outcome.plan.orders {
        if let Some(slot) = snippet.row(o.row).slot_of(o.side, o.price) {
            raw_plan[o.row * slots + slot] += o.size;
        }
    }
    Ok(FigureData {
        slots,
        clean_swa: swa_series(snippet, None)?.0,
        perturbed_swa: swa_series(snippet, Some(&grid))?.0,
        clean_book,
        perturbed_book,
        raw_plan,
        propagated_plan: grid.into_values(),
    })
}
