//! Flags, TOML configuration and profile defaults, merged into fully
//! resolved per-command configurations. Precedence: flags, then the config
//! file, then the scale profile.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use lobadv::attacks::{RandomParams, UniversalParams, UntargetedParams};
use lobadv::book::{Label, SnippetShape};
use lobadv::data::SynthParams;
use lobadv::models::{Architecture, OptimizerKind, TrainSchedule};
use lobadv::profile::{ArchKind, ArchSettings, Profile, Scale};

use crate::error::CliError;

pub const DATA_DIR_ENV: &str = "ADVLOB_DATA_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "lobadv",
    version,
    about = "Adversarial order placement against order-book valuation models"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct GlobalArgs {
    /// TOML file with a [global] section and one section per command.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Hyperparameter bundle: desk or paper.
    #[arg(long, global = true)]
    pub profile: Option<Scale>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input window in rows.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Label horizon in rows.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Dataset directory.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    pub data: Option<PathBuf>,
    /// Run directory for outputs and the run manifest.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to every core.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum CommandArgs {
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
    /// Convert LOBSTER orderbook and message files into a dataset.
    Ingest(IngestArgs),
    /// Train one valuation model.
    Train(TrainArgs),
    /// Test accuracy of one or more models.
    Eval(EvalArgs),
    /// Untargeted attack and random baseline on correctly classified snippets.
    Attack(AttackArgs),
    /// Random-order baseline alone.
    RandomBaseline(RandomArgs),
    /// Craft a universal plan on a surrogate and apply it to victims.
    Universal(UniversalArgs),
    /// Universal plans of several surrogates against several victims.
    Transfer(TransferArgs),
    /// Merge the tables of earlier runs.
    Report(ReportArgs),
    /// Re-run a recorded run and compare its outputs.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Default, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub train_days: Option<usize>,
    #[arg(long)]
    pub test_days: Option<usize>,
    #[arg(long)]
    pub session_rows: Option<usize>,
    /// Starting price in ticks of $0.0001.
    #[arg(long)]
    pub base_price: Option<u64>,
    #[arg(long)]
    pub mean_size: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct IngestArgs {
    /// Training session as `BOOK.csv,MESSAGES.csv`; repeatable.
    #[arg(long = "train-day")]
    pub train: Option<Vec<String>>,
    /// Test session as `BOOK.csv,MESSAGES.csv`; repeatable.
    #[arg(long = "test-day")]
    pub test: Option<Vec<String>>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Session open in seconds after midnight.
    #[arg(long)]
    pub session_open: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub arch: Option<ArchKind>,
    /// Input decimation stride in rows.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub milestones: Option<Vec<usize>>,
    /// MLP depth or LSTM layer count.
    #[arg(long)]
    pub depth: Option<usize>,
    /// MLP width or LSTM hidden size.
    #[arg(long)]
    pub width: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct EvalArgs {
    /// Model files, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub snippets: Option<usize>,
    #[arg(long)]
    pub asset: Option<String>,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct AttackArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Correctly classified snippets to attack.
    #[arg(long)]
    pub snippets: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Capital cap in dollars.
    #[arg(long)]
    pub capital: Option<f64>,
    /// Rounding offset.
    #[arg(long)]
    pub r: Option<f64>,
    /// Placement stride in rows.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Random-baseline budget as a multiple of the capital cap.
    #[arg(long)]
    pub random_multiplier: Option<f64>,
    #[arg(long)]
    pub random_max_size: Option<u32>,
    #[arg(long)]
    pub asset: Option<String>,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct RandomArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub snippets: Option<usize>,
    /// Budget in dollars.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub max_size: Option<u32>,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct UniversalKnobArgs {
    #[arg(long)]
    pub target: Option<Label>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub inner_steps: Option<usize>,
    #[arg(long)]
    pub inner_alpha: Option<f64>,
    #[arg(long)]
    pub aggregate: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Training snippets in the crafting pool.
    #[arg(long)]
    pub pool: Option<usize>,
    /// Test snippets the plan is applied to.
    #[arg(long)]
    pub test_snippets: Option<usize>,
    #[arg(long)]
    pub r: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct UniversalArgs {
    #[arg(long)]
    pub surrogate: Option<PathBuf>,
    /// Victim model files, comma separated; defaults to the surrogate.
    #[arg(long, value_delimiter = ',')]
    pub victims: Option<Vec<PathBuf>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub knobs: UniversalKnobArgs,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct TransferArgs {
    /// Directory holding `<arch>.lobm` model files.
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub surrogates: Option<Vec<ArchKind>>,
    #[arg(long, value_delimiter = ',')]
    pub victims: Option<Vec<ArchKind>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub knobs: UniversalKnobArgs,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct ReportArgs {
    /// Run directories, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub inputs: Option<Vec<PathBuf>>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Run manifest (`run.json`) to replay.
    pub manifest: PathBuf,
}

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfig {
    pub profile: Scale,
    pub seed: u64,
    pub window: usize,
    pub horizon: usize,
    pub data: PathBuf,
}

impl GlobalConfig {
    pub fn shape(&self) -> SnippetShape {
        SnippetShape::new(self.window, self.horizon)
    }

    pub fn profile(&self) -> Profile {
        Profile::of(self.profile)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataConfig {
    pub beta: f64,
    pub train_days: usize,
    pub test_days: usize,
    pub session_rows: usize,
    pub base_price: u64,
    pub mean_size: f64,
    pub sigma: f64,
    pub levels: usize,
}

impl GenDataConfig {
    fn defaults(p: &Profile) -> Self {
        GenDataConfig {
            beta: p.synth.beta,
            train_days: p.train_days,
            test_days: p.test_days,
            session_rows: p.synth.session_rows,
            base_price: p.synth.base_price,
            mean_size: p.synth.mean_size,
            sigma: p.synth.sigma,
            levels: p.synth.levels,
        }
    }

    pub fn synth(&self, p: &Profile, seed: u64) -> SynthParams {
        SynthParams {
            beta: self.beta,
            session_rows: self.session_rows,
            base_price: self.base_price,
            mean_size: self.mean_size,
            sigma: self.sigma,
            levels: self.levels,
            seed,
            ..p.synth.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub levels: usize,
    pub session_open: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchKind,
    pub stride: usize,
    pub optimizer: OptimizerKind,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub milestones: Vec<usize>,
    /// Zero for the linear model.
    pub depth: usize,
    pub width: usize,
}

impl TrainConfig {
    fn defaults(p: &Profile, arch: ArchKind) -> Self {
        let s = p.arch(arch);
        let (depth, width) = match s.arch {
            Architecture::Linear => (0, 0),
            Architecture::Mlp { depth, width } => (depth, width),
            Architecture::Lstm { layers, hidden } => (layers, hidden),
        };
        TrainConfig {
            arch,
            stride: s.stride,
            optimizer: s.schedule.optimizer,
            iterations: s.schedule.iterations,
            batch_size: s.schedule.batch_size,
            learning_rate: s.schedule.learning_rate,
            milestones: s.schedule.milestones.clone(),
            depth,
            width,
        }
    }

    pub fn settings(&self) -> ArchSettings {
        let arch = match self.arch {
            ArchKind::Linear => Architecture::Linear,
            ArchKind::Mlp => Architecture::Mlp {
                depth: self.depth,
                width: self.width,
            },
            ArchKind::Lstm => Architecture::Lstm {
                layers: self.depth,
                hidden: self.width,
            },
        };
        ArchSettings {
            arch,
            stride: self.stride,
            schedule: TrainSchedule {
                optimizer: self.optimizer,
                iterations: self.iterations,
                batch_size: self.batch_size,
                learning_rate: self.learning_rate,
                milestones: self.milestones.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub models: Vec<PathBuf>,
    pub snippets: usize,
    pub asset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub model: PathBuf,
    pub snippets: usize,
    pub steps: usize,
    pub alpha0: f64,
    pub capital: f64,
    pub r: f64,
    pub stride: usize,
    pub random_multiplier: f64,
    pub random_max_size: u32,
    pub asset: String,
}

impl AttackConfig {
    pub fn untargeted(&self) -> UntargetedParams {
        UntargetedParams {
            steps: self.steps,
            alpha0: self.alpha0,
            capital: self.capital,
            r: self.r,
            stride: self.stride,
        }
    }

    pub fn random(&self) -> RandomParams {
        RandomParams {
            budget: self.random_multiplier * self.capital,
            max_size: self.random_max_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub model: PathBuf,
    pub snippets: usize,
    pub budget: f64,
    pub max_size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalKnobs {
    pub target: Label,
    pub gamma: f64,
    pub batches: usize,
    pub batch_size: usize,
    pub inner_steps: usize,
    pub inner_alpha: f64,
    pub aggregate: f64,
    pub stride: usize,
    pub pool: usize,
    pub test_snippets: usize,
    pub r: f64,
}

impl UniversalKnobs {
    fn defaults(p: &Profile) -> Self {
        let u = &p.universal;
        UniversalKnobs {
            target: u.target,
            gamma: u.gamma,
            batches: u.batches,
            batch_size: u.batch_size,
            inner_steps: u.inner_steps,
            inner_alpha: u.inner_alpha,
            aggregate: u.aggregate,
            stride: u.stride,
            pool: p.universal_pool,
            test_snippets: p.universal_test,
            r: p.untargeted.r,
        }
    }

    pub fn params(&self) -> UniversalParams {
        UniversalParams {
            batches: self.batches,
            batch_size: self.batch_size,
            inner_steps: self.inner_steps,
            inner_alpha: self.inner_alpha,
            aggregate: self.aggregate,
            gamma: self.gamma,
            target: self.target,
            stride: self.stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalConfig {
    pub surrogate: PathBuf,
    pub victims: Vec<PathBuf>,
    #[serde(flatten)]
    pub knobs: UniversalKnobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub models_dir: PathBuf,
    pub surrogates: Vec<ArchKind>,
    pub victims: Vec<ArchKind>,
    #[serde(flatten)]
    pub knobs: UniversalKnobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub inputs: Vec<PathBuf>,
}

/// A command with every parameter resolved; recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolved {
    GenData(GenDataConfig),
    Ingest(IngestConfig),
    Train(TrainConfig),
    Eval(EvalConfig),
    Attack(AttackConfig),
    RandomBaseline(RandomConfig),
    Universal(UniversalConfig),
    Transfer(TransferConfig),
    Report(ReportConfig),
}

impl Resolved {
    pub fn name(&self) -> &'static str {
        match self {
            Resolved::GenData(_) => "gen-data",
            Resolved::Ingest(_) => "ingest",
            Resolved::Train(_) => "train",
            Resolved::Eval(_) => "eval",
            Resolved::Attack(_) => "attack",
            Resolved::RandomBaseline(_) => "random-baseline",
            Resolved::Universal(_) => "universal",
            Resolved::Transfer(_) => "transfer",
            Resolved::Report(_) => "report",
        }
    }

    /// Whether the command reads the dataset in the global data directory.
    pub fn reads_data(&self) -> bool {
        !matches!(self, Resolved::GenData(_) | Resolved::Ingest(_) | Resolved::Report(_))
    }
}

const SECTIONS: [&str; 10] = [
    "global",
    "gen-data",
    "ingest",
    "train",
    "eval",
    "attack",
    "random-baseline",
    "universal",
    "transfer",
    "report",
];

/// Parsed configuration file: one JSON object per section.
#[derive(Debug, Default)]
pub struct ConfigFile {
    sections: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let value = serde_json::to_value(&table).map_err(|e| e.to_string())?;
        let Value::Object(map) = value else {
            return Err("expected a table".into());
        };
        let mut sections = Map::new();
        for (k, v) in map {
            let key = k.replace('_', "-");
            if !SECTIONS.contains(&key.as_str()) {
                return Err(format!(
                    "unknown section [{k}] (expected one of {})",
                    SECTIONS.join(", ")
                ));
            }
            if !v.is_object() {
                return Err(format!("[{k}] must be a table"));
            }
            sections.insert(key, v);
        }
        Ok(ConfigFile { sections })
    }

    fn section(&self, name: &str) -> Option<&Map<String, Value>> {
        self.sections.get(name).and_then(|v| v.as_object())
    }
}

/// Lays `over` onto `base`, skipping nulls; rejects keys `base` lacks.
fn overlay(base: &mut Map<String, Value>, over: &Map<String, Value>, origin: &str) -> Result<(), CliError> {
    for (k, v) in over {
        if v.is_null() {
            continue;
        }
        let key = k.replace('-', "_");
        if !base.contains_key(&key) {
            let mut known: Vec<&str> = base.keys().map(|s| s.as_str()).collect();
            known.sort_unstable();
            return Err(CliError::config(format!(
                "unknown key `{k}` in {origin} (known: {})",
                known.join(", ")
            )));
        }
        base.insert(key, v.clone());
    }
    Ok(())
}

fn as_object<T: Serialize>(v: &T) -> Map<String, Value> {
    match serde_json::to_value(v).expect("configs serialize") {
        Value::Object(m) => m,
        _ => unreachable!("configs are structs"),
    }
}

/// Defaults overlaid by the file section and then the flags.
fn merge<T: Serialize + DeserializeOwned, F: Serialize>(
    defaults: &T,
    file: &ConfigFile,
    section: &str,
    flags: &F,
) -> Result<T, CliError> {
    let mut base = as_object(defaults);
    if let Some(s) = file.section(section) {
        overlay(&mut base, s, &format!("[{section}]"))?;
    }
    overlay(&mut base, &as_object(flags), "flags")?;
    serde_json::from_value(Value::Object(base))
        .map_err(|e| CliError::config(format!("invalid value in [{section}]: {e}")))
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::config(format!("bad path {}: {e}", p.display())))
}

pub fn resolve_global(args: &GlobalArgs, file: &ConfigFile) -> Result<GlobalConfig, CliError> {
    // the profile decides the other defaults, so settle it first
    let profile = match (&args.profile, file.section("global").and_then(|s| s.get("profile"))) {
        (Some(p), _) => *p,
        (None, Some(v)) => serde_json::from_value(v.clone())
            .map_err(|e| CliError::config(format!("invalid profile in [global]: {e}")))?,
        (None, None) => Scale::Desk,
    };
    let p = Profile::of(profile);
    let defaults = GlobalConfig {
        profile,
        seed: p.synth.seed,
        window: p.shape.window,
        horizon: p.shape.horizon,
        data: PathBuf::from("data"),
    };
    let mut g: GlobalConfig = merge(&defaults, file, "global", args)?;
    g.data = absolute(&g.data)?;
    g.shape()
        .validate()
        .map_err(|e| CliError::config(format!("window/horizon: {e}")))?;
    Ok(g)
}

fn require(paths: &[PathBuf], what: &str) -> Result<(), CliError> {
    if paths.is_empty() {
        return Err(CliError::config(format!("no {what} given")));
    }
    Ok(())
}

fn required_path(p: PathBuf, flag: &str) -> Result<PathBuf, CliError> {
    if p.as_os_str().is_empty() {
        return Err(CliError::config(format!("--{flag} is required")));
    }
    absolute(&p)
}

/// Resolves the command-specific configuration.
pub fn resolve(command: &CommandArgs, global: &GlobalConfig, file: &ConfigFile) -> Result<Resolved, CliError> {
    let p = global.profile();
    let knobs = UniversalKnobs::defaults(&p);
    Ok(match command {
        CommandArgs::GenData(a) => Resolved::GenData(merge(&GenDataConfig::defaults(&p), file, "gen-data", a)?),
        CommandArgs::Ingest(a) => {
            let defaults = IngestConfig {
                train: Vec::new(),
                test: Vec::new(),
                levels: lobadv::book::DEFAULT_LEVELS,
                session_open: 34_200.0,
            };
            let c: IngestConfig = merge(&defaults, file, "ingest", a)?;
            if c.train.is_empty() || c.test.is_empty() {
                return Err(CliError::config(
                    "ingest needs at least one --train-day and one --test-day",
                ));
            }
            Resolved::Ingest(c)
        }
        CommandArgs::Train(a) => {
            let arch = match (&a.arch, file.section("train").and_then(|s| s.get("arch"))) {
                (Some(k), _) => *k,
                (None, Some(v)) => serde_json::from_value(v.clone())
                    .map_err(|e| CliError::config(format!("invalid arch in [train]: {e}")))?,
                (None, None) => ArchKind::Mlp,
            };
            let defaults = TrainConfig::defaults(&p, arch);
            let mut c: TrainConfig = merge(&defaults, file, "train", a)?;
            let explicit =
                a.milestones.is_some() || file.section("train").is_some_and(|s| s.contains_key("milestones"));
            if !explicit && c.iterations != defaults.iterations {
                // keep the profile's milestones at the same fractions of the run
                c.milestones = defaults
                    .milestones
                    .iter()
                    .map(|m| m * c.iterations / defaults.iterations.max(1))
                    .filter(|&m| m > 0 && m < c.iterations)
                    .collect();
            }
            c.settings()
                .schedule
                .validate()
                .map_err(|e| CliError::config(e.to_string()))?;
            Resolved::Train(c)
        }
        CommandArgs::Eval(a) => {
            let defaults = EvalConfig {
                models: Vec::new(),
                snippets: p.eval_snippets,
                asset: "synthetic".into(),
            };
            let mut c: EvalConfig = merge(&defaults, file, "eval", a)?;
            require(&c.models, "--models")?;
            c.models = c.models.iter().map(|m| absolute(m)).collect::<Result<_, _>>()?;
            Resolved::Eval(c)
        }
        CommandArgs::Attack(a) => {
            let u = &p.untargeted;
            let defaults = AttackConfig {
                model: PathBuf::new(),
                snippets: p.attack_snippets,
                steps: u.steps,
                alpha0: u.alpha0,
                capital: u.capital,
                r: u.r,
                stride: u.stride,
                random_multiplier: p.random_multiplier,
                random_max_size: p.random_max_size,
                asset: "synthetic".into(),
            };
            let mut c: AttackConfig = merge(&defaults, file, "attack", a)?;
            c.model = required_path(c.model, "model")?;
            c.untargeted().validate().map_err(|e| CliError::config(e.to_string()))?;
            Resolved::Attack(c)
        }
        CommandArgs::RandomBaseline(a) => {
            let r = p.random();
            let defaults = RandomConfig {
                model: PathBuf::new(),
                snippets: p.attack_snippets,
                budget: r.budget,
                max_size: r.max_size,
            };
            let mut c: RandomConfig = merge(&defaults, file, "random-baseline", a)?;
            c.model = required_path(c.model, "model")?;
            Resolved::RandomBaseline(c)
        }
        CommandArgs::Universal(a) => {
            let defaults = UniversalConfig {
                surrogate: PathBuf::new(),
                victims: Vec::new(),
                knobs,
            };
            let mut c: UniversalConfig = merge(&defaults, file, "universal", a)?;
            c.surrogate = required_path(c.surrogate, "surrogate")?;
            if c.victims.is_empty() {
                c.victims.push(c.surrogate.clone());
            }
            c.victims = c.victims.iter().map(|m| absolute(m)).collect::<Result<_, _>>()?;
            c.knobs
                .params()
                .validate()
                .map_err(|e| CliError::config(e.to_string()))?;
            Resolved::Universal(c)
        }
        CommandArgs::Transfer(a) => {
            let defaults = TransferConfig {
                models_dir: PathBuf::new(),
                surrogates: vec![ArchKind::Linear, ArchKind::Mlp],
                victims: ArchKind::ALL.to_vec(),
                knobs,
            };
            let mut c: TransferConfig = merge(&defaults, file, "transfer", a)?;
            c.models_dir = required_path(c.models_dir, "models-dir")?;
            if c.surrogates.is_empty() || c.victims.is_empty() {
                return Err(CliError::config("transfer needs surrogates and victims"));
            }
            c.knobs
                .params()
                .validate()
                .map_err(|e| CliError::config(e.to_string()))?;
            Resolved::Transfer(c)
        }
        CommandArgs::Report(a) => {
            let mut c: ReportConfig = merge(&ReportConfig { inputs: Vec::new() }, file, "report", a)?;
            require(&c.inputs, "--inputs")?;
            c.inputs = c.inputs.iter().map(|m| absolute(m)).collect::<Result<_, _>>()?;
            Resolved::Report(c)
        }
        CommandArgs::Replay(_) => return Err(CliError::config("replay has no configuration")),
    })
}
