use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lobadv::attacks::{AttackOutcome, UniversalParams, UniversalResult};
use lobadv::book::{label_of, swa_series, Snippet};
use lobadv::data::{generate_day, SynthParams};
use lobadv::models::{Accuracy, ValuationModel};
use lobadv::profile::ArchKind;
use lobadv_cli::pipeline::{self, Prepared};

use crate::desk::{self, Desk, UNIVERSAL_TEST_STREAM};
use crate::Verdict;

const CHANCE: f64 = 100.0 / 3.0;

/// Accuracy on one snippet from each of `n` fresh sessions, labelled with the
/// band of `prep`'s training sessions.
fn null_accuracy(prep: &Prepared, synth: &SynthParams, model: &ValuationModel, n: usize) -> Accuracy {
    let shape = prep.shape;
    let short = SynthParams {
        session_rows: shape.window + shape.horizon,
        ..synth.clone()
    };
    let mut seeder = ChaCha8Rng::seed_from_u64(synth.seed);
    seeder.set_stream(7);
    let seeds: Vec<u64> = (0..n).map(|_| seeder.random()).collect();
    let correct = seeds
        .par_iter()
        .filter(|&&s| {
            let day = generate_day(&short.with_seed(s)).expect("session");
            let snip = Snippet::new(&day.series, 0, shape).expect("snippet");
            let swa = swa_series(&snip, None).expect("swa");
            model.classify(&swa.0).expect("classify") == label_of(&snip, &prep.thresholds)
        })
        .count();
    Accuracy::from_counts(correct, n).expect("non-empty")
}

pub fn learning(d: &mut Desk) -> Verdict {
    let p = d.profile.clone();
    let mut pass = true;
    let mut parts = Vec::new();
    for arch in ArchKind::ALL {
        let acc = pipeline::eval_model(d.prep(), d.model(arch), p.eval_snippets, p.synth.seed + 11).expect("eval");
        let ok = acc.se <= 0.5 && acc.percent > CHANCE + 3.0 * acc.se;
        pass &= ok;
        parts.push(format!("{arch} {:.2}±{:.2}", acc.percent, acc.se));
    }
    let null_synth = SynthParams {
        beta: 0.0,
        ..p.synth.clone()
    };
    let null = desk::prepare(&p, &null_synth, 1);
    let mut null_parts = Vec::new();
    for arch in ArchKind::ALL {
        let m = desk::train(&null, &p, arch);
        let acc = null_accuracy(&null, &null_synth, &m, p.null_sessions);
        let dev = (acc.percent - CHANCE).abs() / acc.se;
        pass &= acc.se <= 0.5 && dev <= 2.0;
        null_parts.push(format!("{arch} {:.2} ({dev:.1} SE)", acc.percent));
    }
    Verdict::new(
        pass,
        format!("signal: {}; no signal: {}", parts.join(", "), null_parts.join(", ")),
    )
}

fn rate(outcomes: &[AttackOutcome]) -> f64 {
    100.0 * outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len().max(1) as f64
}

pub fn dominance(d: &mut Desk) -> Verdict {
    let run = d.attack();
    let acc = run.set.clean_accuracy();
    // accuracy drops in points once the correctly classified snippets are attacked
    let adv = acc * rate(&run.adv) / 100.0;
    let rnd = acc * rate(&run.random) / 100.0;
    let ratio = if rnd > 0.0 { adv / rnd } else { f64::INFINITY };
    Verdict::new(
        run.adv.len() == d.profile.attack_snippets && adv > 0.0 && adv >= 3.0 * rnd,
        format!(
            "{} snippets, clean {acc:.2}%: adversarial -{adv:.2} vs random -{rnd:.2} at {}x capital (ratio {ratio:.1})",
            run.adv.len(),
            d.profile.random_multiplier
        ),
    )
}

pub fn budget_safety(d: &mut Desk) -> Verdict {
    let cap = d.profile.untargeted.capital;
    let wins: Vec<&AttackOutcome> = d.attack().adv.iter().filter(|o| o.success).collect();
    let within = wins.iter().filter(|o| o.budget.capital <= cap).count();
    let n = wins.len().max(1) as f64;
    let mean_capital = wins.iter().map(|o| o.budget.capital).sum::<f64>() / n;
    let mean_cost = wins.iter().map(|o| o.budget.cost.abs()).sum::<f64>() / n;
    let share = 100.0 * mean_cost / mean_capital.max(f64::MIN_POSITIVE);
    Verdict::new(
        !wins.is_empty() && within == wins.len() && share <= 1.0,
        format!(
            "{within}/{} successes within ${cap:.0}; mean |cost| ${mean_cost:.2} = {share:.3}% of mean capital ${mean_capital:.0}",
            wins.len()
        ),
    )
}

pub fn universal_transfer(d: &mut Desk) -> Verdict {
    let p = d.profile.clone();
    let prep = d.prep();
    let (surrogate, victim) = (d.model(ArchKind::Linear), d.model(ArchKind::Mlp));
    let tests =
        pipeline::universal_test_set(prep, p.universal_test, p.synth.seed + UNIVERSAL_TEST_STREAM).expect("tests");
    let r = p.untargeted.r;
    let run = |params: &UniversalParams| -> UniversalResult {
        let plan = pipeline::craft_universal(prep, surrogate, params, p.universal_pool, p.synth.seed).expect("plan");
        pipeline::apply_plan(prep, &plan, victim, &tests, params.target, r).expect("apply")
    };
    let plain = run(&UniversalParams {
        gamma: 0.0,
        ..p.universal
    });
    let penalized = run(&p.universal);
    let transfers = penalized.fool_rate > 5.0 && penalized.relative_size <= 2.0;
    let shrinks = plain.relative_size >= 2.0 * penalized.relative_size;
    let retains = penalized.fooled as f64 >= 0.6 * plain.fooled as f64;
    Verdict::new(
        transfers && shrinks && retains,
        format!(
            "linear -> mlp, {} eligible: unpenalized {} fooled ({:.1}%) at {:.2}% size; penalized (gamma {}) {} fooled ({:.1}%) at {:.2}% size",
            plain.eligible,
            plain.fooled,
            plain.fool_rate,
            plain.relative_size,
            p.universal.gamma,
            penalized.fooled,
            penalized.fool_rate,
            penalized.relative_size
        ),
    )
}

pub fn quantization(d: &mut Desk) -> Verdict {
    let p = d.profile.clone();
    let n = 200;
    // the first 200 of the desk attack set, attacked at the desk step size
    let base = &d.attack().adv[..n.min(d.attack().adv.len())];
    let base_rate = rate(base);
    let coarse = SynthParams {
        base_price: p.synth.base_price * 20,
        mean_size: p.synth.mean_size / 5.0,
        ..p.synth.clone()
    };
    let prep = desk::prepare(&p, &coarse, p.test_days);
    let model = desk::train(&prep, &p, ArchKind::Mlp);
    let rates: Vec<(f64, f64)> = [40.0, 400.0, 4_000.0]
        .into_iter()
        .map(|a| (a, rate(&desk::attack(&prep, &model, &p, n, a).adv)))
        .collect();
    let best = rates.iter().map(|r| r.1).fold(0.0, f64::max);
    let listed: Vec<String> = rates.iter().map(|(a, r)| format!("{a}: {r:.1}%")).collect();
    Verdict::new(
        best < base_rate,
        format!(
            "cap ${:.0}: original {base_rate:.1}% at alpha0 {}; price x20, size /5: {} (best {best:.1}%)",
            p.untargeted.capital,
            p.untargeted.alpha0,
            listed.join(", ")
        ),
    )
}
