//! Desk-profile data, models and attack outcomes shared across criteria.

use std::cell::OnceCell;
use std::collections::HashMap;
use std::time::Instant;

use lobadv::attacks::{AttackOutcome, RandomParams};
use lobadv::data::{generate_dataset, SynthParams};
use lobadv::models::ValuationModel;
use lobadv::profile::{ArchKind, ArchSettings, Profile};
use lobadv_cli::pipeline::{self, AttackSet, Prepared};

pub const ATTACK_STREAM: u64 = 1;
pub const RANDOM_STREAM: u64 = 2;
pub const UNIVERSAL_TEST_STREAM: u64 = 3;

pub fn settings(p: &Profile, arch: ArchKind) -> &ArchSettings {
    match arch {
        ArchKind::Linear => &p.linear,
        ArchKind::Mlp => &p.mlp,
        ArchKind::Lstm => &p.lstm,
    }
}

pub fn prepare(p: &Profile, synth: &SynthParams, test_days: usize) -> Prepared {
    let t = Instant::now();
    let ds = generate_dataset(synth, p.train_days, test_days).expect("synthetic data");
    let tag = format!("synthetic beta={} seed={}", synth.beta, synth.seed);
    let prep = Prepared::new(ds, tag, p.shape).expect("usable dataset");
    eprintln!(
        "  generated {} + {test_days} sessions in {:.0?}",
        p.train_days,
        t.elapsed()
    );
    prep
}

pub fn train(prep: &Prepared, p: &Profile, arch: ArchKind) -> ValuationModel {
    let t = Instant::now();
    let (m, _) = pipeline::train_model(prep, settings(p, arch), p.synth.seed).expect("training");
    eprintln!("  trained {arch} in {:.0?}", t.elapsed());
    m
}

/// Untargeted and random outcomes on the same correctly classified snippets.
pub struct AttackRun {
    pub set: AttackSet,
    pub adv: Vec<AttackOutcome>,
    pub random: Vec<AttackOutcome>,
}

pub fn attack(prep: &Prepared, model: &ValuationModel, p: &Profile, snippets: usize, alpha0: f64) -> AttackRun {
    let t = Instant::now();
    let seed = p.synth.seed;
    let set = pipeline::correctly_classified(prep, model, snippets, seed).expect("attack set");
    let targets = prep.test_targets(&set.examples).expect("targets");
    let params = lobadv::attacks::UntargetedParams { alpha0, ..p.untargeted };
    let adv = pipeline::run_untargeted(model, &targets, &params, seed + ATTACK_STREAM).expect("attack");
    let rp = RandomParams {
        budget: p.random_multiplier * p.untargeted.capital,
        max_size: p.random_max_size,
    };
    let random = pipeline::run_random(model, &targets, &rp, seed + RANDOM_STREAM).expect("baseline");
    eprintln!(
        "  attacked {} snippets (alpha0 {alpha0}) in {:.0?}",
        targets.len(),
        t.elapsed()
    );
    AttackRun { set, adv, random }
}

pub struct Desk {
    pub profile: Profile,
    prep: OnceCell<Prepared>,
    models: HashMap<ArchKind, OnceCell<ValuationModel>>,
    attack: OnceCell<AttackRun>,
}

impl Default for Desk {
    fn default() -> Self {
        Desk {
            profile: Profile::desk(),
            prep: OnceCell::new(),
            models: ArchKind::ALL.iter().map(|&a| (a, OnceCell::new())).collect(),
            attack: OnceCell::new(),
        }
    }
}

impl Desk {
    pub fn prep(&self) -> &Prepared {
        self.prep
            .get_or_init(|| prepare(&self.profile, &self.profile.synth, self.profile.test_days))
    }

    pub fn model(&self, arch: ArchKind) -> &ValuationModel {
        self.models[&arch].get_or_init(|| train(self.prep(), &self.profile, arch))
    }

    /// Attack of the MLP at the profile settings.
    pub fn attack(&self) -> &AttackRun {
        self.attack.get_or_init(|| {
            let p = &self.profile;
            attack(
                self.prep(),
                self.model(ArchKind::Mlp),
                p,
                p.attack_snippets,
                p.untargeted.alpha0,
            )
        })
    }
}
