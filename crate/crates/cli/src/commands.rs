//! Command bodies. Each writes its outputs into the run directory and
//! reports what it read and wrote.

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;

use lobadv::attacks::{AttackOutcome, AttackTarget};
use lobadv::book::{Label, LabeledExample};
use lobadv::data::{
    generate_dataset, load_dataset, parse_lobster_book, parse_lobster_messages, save_dataset, BookTiming, DataError,
    Dataset, Day, TimeGrid,
};
use lobadv::metrics::{
    read_csv_rows, write_attack_table, write_figure_data, write_model_table, write_transfer_table, AttackRow, ModelRow,
    TransferRow,
};
use lobadv::models::ValuationModel;
use lobadv::profile::ArchKind;
use lobadv::propagation::LevelPlan;

use crate::config::{
    AttackConfig, EvalConfig, GenDataConfig, GlobalConfig, IngestConfig, RandomConfig, ReportConfig, Resolved,
    TrainConfig, TransferConfig, UniversalConfig,
};
use crate::error::CliError;
use crate::manifest::RunRecord;
use crate::pipeline::{self, AttackSummary, Prepared};

/// Seed offsets so the sampling, attack and baseline streams differ.
const ATTACK_STREAM: u64 = 1;
const RANDOM_STREAM: u64 = 2;
const UNIVERSAL_TEST_STREAM: u64 = 3;

pub fn execute(config: &Resolved, global: &GlobalConfig, out: &Path) -> Result<RunRecord, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    match config {
        Resolved::GenData(c) => gen_data(c, global, out),
        Resolved::Ingest(c) => ingest(c, out),
        Resolved::Train(c) => train(c, global, out),
        Resolved::Eval(c) => eval(c, global, out),
        Resolved::Attack(c) => attack(c, global, out),
        Resolved::RandomBaseline(c) => random_baseline(c, global, out),
        Resolved::Universal(c) => universal(c, global, out),
        Resolved::Transfer(c) => transfer(c, global, out),
        Resolved::Report(c) => report(c, out),
    }
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = out.join(name);
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(PathBuf::from(name))
}

fn dataset_outputs(manifest: &lobadv::data::Manifest) -> Vec<PathBuf> {
    let mut v = vec![PathBuf::from("manifest.json")];
    v.extend(manifest.days.iter().map(|d| PathBuf::from(&d.file)));
    v
}

fn gen_data(c: &GenDataConfig, global: &GlobalConfig, out: &Path) -> Result<RunRecord, CliError> {
    let shape = global.shape();
    if c.session_rows < shape.window + shape.horizon {
        return Err(CliError::config(format!(
            "session_rows {} is shorter than window + horizon = {}",
            c.session_rows,
            shape.window + shape.horizon
        )));
    }
    let params = c.synth(&global.profile(), global.seed);
    params.validate().map_err(|e| CliError::config(e.to_string()))?;
    log::info!("generating {} + {} sessions", c.train_days, c.test_days);
    let ds = generate_dataset(&params, c.train_days, c.test_days)?;
    let manifest = save_dataset(&ds, out)?;
    Ok(RunRecord {
        data_hash: Some(manifest.data_hash()),
        inputs: Vec::new(),
        outputs: dataset_outputs(&manifest),
    })
}

/// Event times of a LOBSTER message file, one per row.
fn message_times(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        let t: f64 = field.parse().map_err(|_| DataError::MalformedRow {
            line: i + 1,
            reason: format!("cannot parse time `{field}` in {}", path.display()),
        })?;
        out.push(t);
    }
    Ok(out)
}

fn ingest_day(spec: &str, c: &IngestConfig, inputs: &mut Vec<PathBuf>) -> Result<Day, CliError> {
    let Some((book, messages)) = spec.split_once(',') else {
        return Err(CliError::config(format!(
            "session `{spec}` is not BOOK.csv,MESSAGES.csv"
        )));
    };
    let book = std::path::absolute(book).map_err(|e| CliError::config(e.to_string()))?;
    let messages = std::path::absolute(messages).map_err(|e| CliError::config(e.to_string()))?;
    let seconds = message_times(&messages)?;
    let timing = BookTiming::Timestamps {
        seconds,
        session_open: c.session_open,
    };
    let reader = BufReader::new(File::open(&book).map_err(|e| CliError::io(&book, e))?);
    let series = parse_lobster_book(reader, c.levels, &timing)?;
    let grid = TimeGrid::of(&series, c.session_open);
    let reader = BufReader::new(File::open(&messages).map_err(|e| CliError::io(&messages, e))?);
    let events = parse_lobster_messages(reader, &grid)?;
    inputs.push(book);
    inputs.push(messages);
    Ok(Day::new(series, events))
}

fn ingest(c: &IngestConfig, out: &Path) -> Result<RunRecord, CliError> {
    let mut inputs = Vec::new();
    let train = c
        .train
        .iter()
        .map(|s| ingest_day(s, c, &mut inputs))
        .collect::<Result<Vec<_>, _>>()?;
    let test = c
        .test
        .iter()
        .map(|s| ingest_day(s, c, &mut inputs))
        .collect::<Result<Vec<_>, _>>()?;
    let ds = Dataset {
        train,
        test,
        params: None,
    };
    let manifest = save_dataset(&ds, out)?;
    Ok(RunRecord {
        data_hash: Some(manifest.data_hash()),
        inputs,
        outputs: dataset_outputs(&manifest),
    })
}

fn prepare(global: &GlobalConfig) -> Result<Prepared, CliError> {
    let (dataset, manifest) = load_dataset(&global.data)?;
    Prepared::new(dataset, manifest.data_hash(), global.shape())
}

fn load_model(path: &Path, prep: &Prepared) -> Result<ValuationModel, CliError> {
    if !path.is_file() {
        return Err(CliError::config(format!("model file {} not found", path.display())));
    }
    let m = ValuationModel::load(path)?;
    if !m.meta.data_hash.is_empty() && m.meta.data_hash != prep.data_hash {
        log::warn!("{} was trained on a different dataset", path.display());
    }
    Ok(m)
}

fn model_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    arch: ArchKind,
    params: usize,
    theta: f64,
    scale: f64,
    data_hash: &'a str,
    losses: &'a [f64],
}

fn train(c: &TrainConfig, global: &GlobalConfig, out: &Path) -> Result<RunRecord, CliError> {
    let prep = prepare(global)?;
    let settings = c.settings();
    log::info!("training {} for {} iterations", c.arch, c.iterations);
    let (model, report) = pipeline::train_model(&prep, &settings, global.seed)?;
    let file = PathBuf::from(format!("{}.lobm", c.arch.name()));
    model.save(&out.join(&file))?;
    let summary = write_json(
        out,
        "train_report.json",
        &TrainSummary {
            arch: c.arch,
            params: model.param_count(),
            theta: prep.thresholds.theta(),
            scale: prep.scale,
            data_hash: &prep.data_hash,
            losses: &report.losses,
        },
    )?;
    Ok(RunRecord {
        data_hash: Some(prep.data_hash),
        inputs: Vec::new(),
        outputs: vec![file, summary],
    })
}

fn eval(c: &EvalConfig, global: &GlobalConfig, out: &Path) -> Result<RunRecord, CliError> {
    let prep = prepare(global)?;
    let mut rows = Vec::new();
    for path in &c.models {
        let model = load_model(path, &prep)?;
        let acc = pipeline::eval_model(&prep, &model, c.snippets, global.seed)?;
        log::info!("{}: {:.2}% +/- {:.2}", path.display(), acc.percent, acc.se);
        rows.push(ModelRow {
            asset: c.asset.clone(),
            model: model_name(path),
            accuracy: acc.percent,
            se: acc.se,
            n: acc.n,
        });
    }
    write_model_table(&out.join("accuracy.csv"), &rows)?;
    Ok(RunRecord {
        data_hash: Some(prep.data_hash),
        inputs: c.models.clone(),
        outputs: vec!["accuracy.csv".into()],
    })
}

/// Per-snippet line of an attack batch.
#[derive(Serialize)]
struct OutcomeRecord {
    day: usize,
    start: usize,
    label: Label,
    after: Label,
    success: bool,
    steps: usize,
    orders: usize,
    shares: f64,
    capital: f64,
    cost: f64,
    relative_size: f64,
    fills: usize,
}

fn outcome_records(examples: &[LabeledExample], outcomes: &[AttackOutcome]) -> Vec<OutcomeRecord> {
    examples
        .iter()
        .zip(outcomes)
        .map(|(e, o)| OutcomeRecord {
            day: e.day,
            start: e.start,
            label: e.label,
            after: o.after,
            success: o.success,
            steps: o.steps,
            orders: o.plan.orders.len(),
            shares: o.plan.total_shares(),
            capital: o.budget.capital,
            cost: o.budget.cost,
            relative_size: o.budget.relative_size,
            fills: o.budget.fills.len(),
        })
        .collect()
}

#[derive(Serialize)]
struct AttackReport {
    considered: usize,
    attacked: usize,
    clean_accuracy: f64,
    capital_cap: f64,
    random_budget: f64,
    untargeted: AttackSummary,
    random: AttackSummary,
    /// Successful outcomes whose rounded plan stays within the cap.
    within_cap: usize,
}

fn attack(c: &AttackConfig, global: &GlobalConfig, out: &Path) -> Result<RunRecord, CliError> {
    let prep = prepare(global)?;
    let model = load_model(&c.model, &prep)?;
    let set = pipeline::correctly_classified(&prep, &model, c.snippets, global.seed)?;
    let targets = prep.test_targets(&set.examples)?;
    log::info!("attacking {} snippets", targets.len());
    let adv = pipeline::run_untargeted(&model, &targets, &c.untargeted(), global.seed + ATTACK_STREAM)?;
    let rnd = pipeline::run_random(&model, &targets, &c.random(), global.seed + RANDOM_STREAM)?;
    let (sa, sr) = (pipeline::summarize(&adv), pipeline::summarize(&rnd));
    let row = pipeline::attack_row(&c.asset, &model_name(&c.model), &set, &sa, &sr);
    write_attack_table(&out.join("attack.csv"), &[row])?;
    let mut outputs = vec![PathBuf::from("attack.csv")];
    outputs.push(write_json(
        out,
        "summary.json",
        &AttackReport {
            considered: set.considered,
            attacked: targets.len(),
            clean_accuracy: set.clean_accuracy(),
            capital_cap: c.capital,
            random_budget: c.random().budget,
            untargeted: sa,
            random: sr,
            within_cap: adv
                .iter()
                .filter(|o| o.success && o.budget.capital <= c.capital)
                .count(),
        },
    )?);
    outputs.push(write_json(out, "outcomes.json", &outcome_records(&set.examples, &adv))?);
    outputs.push(write_json(
        out,
        "random_outcomes.json",
        &outcome_records(&set.examples, &rnd),
    )?);
    if let Some((t, o)) = targets
        .iter()
        .zip(&adv)
        .find(|(_, o)| o.success && !o.plan.orders.is_empty())
    {
        outputs.extend(write_figure(out, t, o)?);
    }
    Ok(RunRecord {
        data_hash: Some(prep.data_hash),
        inputs: vec![c.model.clone()],
        outputs,
    })
}

fn write_figure(out: &Path, target: &AttackTarget<'_>, outcome: &AttackOutcome) -> Result<Vec<PathBuf>, CliError> {
    let fig = pipeline::figure_data(target, outcome)?;
    let dir = out.join("figure");
    write_figure_data(&dir, "first_success", &fig)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| PathBuf::from("figure").join(e.file_name()))
        .collect();
    files.sort();
    Ok(files)
}

fn random_baseline(c: &RandomConfig, global: &GlobalConfig, out: &Path) -> Result<RunRecord, CliError> {
    let prep = prepare(global)?;
    let model = load_model(&c.model, &prep)?;
    let set = pipeline::correctly_classified(&prep, &model, c.snippets, global.seed)?;
    let targets = prep.test_targets(&set.examples)?;
    let params = lobadv::attacks::RandomParams {
        budget: c.budget,
        max_size: c.max_size,
    };
    let rnd = pipeline::run_random(&model, &targets, &params, global.seed + RANDOM_STREAM)?;
    let summary = write_json(out, "random_summary.json", &pipeline::summarize(&rnd))?;
    let outcomes = write_json(out, "random_outcomes.json", &outcome_records(&set.examples, &rnd))?;
    Ok(RunRecord {
        data_hash: Some(prep.data_hash),
        inputs: vec![c.model.clone()],
        outputs: vec![summary, outcomes],
    })
}

#[derive(Serialize)]
struct PlanFile<'a> {
    surrogate: &'a str,
    target: Label,
    shares: f64,
    plan: &'a LevelPlan,
}

fn write_plan(out: &Path, surrogate: &str, target: Label, plan: &LevelPlan) -> Result<PathBuf, CliError> {
    write_json(
        out,
        &format!("plan_{surrogate}.json"),
        &PlanFile {
            surrogate,
            target,
            shares: plan.total_shares(),
            plan,
        },
    )
}

fn universal(c: &UniversalConfig, global: &GlobalConfig, out: &Path) -> Result<RunRecord, CliError> {
    let prep = prepare(global)?;
    let surrogate = load_model(&c.surrogate, &prep)?;
    let k = &c.knobs;
    let plan = pipeline::craft_universal(&prep, &surrogate, &k.params(), k.pool, global.seed)?;
    let sname = model_name(&c.surrogate);
    let mut outputs = vec![write_plan(out, &sname, k.target, &plan)?];
    let tests = pipeline::universal_test_set(&prep, k.test_snippets, global.seed + UNIVERSAL_TEST_STREAM)?;
    let mut rows = Vec::new();
    for v in &c.victims {
        let victim = load_model(v, &prep)?;
        let res = pipeline::apply_plan(&prep, &plan, &victim, &tests, k.target, k.r)?;
        rows.push(TransferRow {
            surrogate: sname.clone(),
            victim: model_name(v),
            fooled: res.fool_rate,
            size: res.relative_size,
            eligible: res.eligible,
            fooled_count: res.fooled,
        });
    }
    write_transfer_table(&out.join("universal.csv"), &rows)?;
    outputs.push("universal.csv".into());
    let mut inputs = vec![c.surrogate.clone()];
    inputs.extend(c.victims.iter().filter(|v| **v != c.surrogate).cloned());
    Ok(RunRecord {
        data_hash: Some(prep.data_hash),
        inputs,
        outputs,
    })
}

fn transfer(c: &TransferConfig, global: &GlobalConfig, out: &Path) -> Result<RunRecord, CliError> {
    let prep = prepare(global)?;
    let path_of = |k: ArchKind| c.models_dir.join(format!("{}.lobm", k.name()));
    let k = &c.knobs;
    let mut kinds: Vec<ArchKind> = c.surrogates.iter().chain(&c.victims).copied().collect();
    kinds.sort_by_key(|k| k.name());
    kinds.dedup();
    let models = kinds
        .iter()
        .map(|&a| Ok((a, load_model(&path_of(a), &prep)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let model = |a: ArchKind| &models.iter().find(|(k, _)| *k == a).expect("loaded").1;
    let tests = pipeline::universal_test_set(&prep, k.test_snippets, global.seed + UNIVERSAL_TEST_STREAM)?;
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    for &s in &c.surrogates {
        log::info!("crafting on {s}");
        let plan = pipeline::craft_universal(&prep, model(s), &k.params(), k.pool, global.seed)?;
        outputs.push(write_plan(out, s.name(), k.target, &plan)?);
        for &v in &c.victims {
            let res = pipeline::apply_plan(&prep, &plan, model(v), &tests, k.target, k.r)?;
            rows.push(TransferRow {
                surrogate: s.name().into(),
                victim: v.name().into(),
                fooled: res.fool_rate,
                size: res.relative_size,
                eligible: res.eligible,
                fooled_count: res.fooled,
            });
        }
    }
    write_transfer_table(&out.join("transfer.csv"), &rows)?;
    outputs.push("transfer.csv".into());
    Ok(RunRecord {
        data_hash: Some(prep.data_hash),
        inputs: kinds.iter().map(|&a| path_of(a)).collect(),
        outputs,
    })
}

fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        s.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    s
}

fn report(c: &ReportConfig, out: &Path) -> Result<RunRecord, CliError> {
    let mut models: Vec<ModelRow> = Vec::new();
    let mut attacks: Vec<AttackRow> = Vec::new();
    let mut transfers: Vec<TransferRow> = Vec::new();
    let mut inputs = Vec::new();
    for dir in &c.inputs {
        let mut found = false;
        let accuracy = dir.join("accuracy.csv");
        if accuracy.exists() {
            models.extend(read_csv_rows::<ModelRow>(&accuracy)?);
            inputs.push(accuracy);
            found = true;
        }
        let attack = dir.join("attack.csv");
        if attack.exists() {
            attacks.extend(read_csv_rows::<AttackRow>(&attack)?);
            inputs.push(attack);
            found = true;
        }
        for name in ["transfer.csv", "universal.csv"] {
            let p = dir.join(name);
            if p.exists() {
                transfers.extend(read_csv_rows::<TransferRow>(&p)?);
                inputs.push(p);
                found = true;
            }
        }
        if !found {
            return Err(CliError::config(format!("{} holds no result tables", dir.display())));
        }
    }
    let mut outputs = Vec::new();
    let mut md = String::from("# Results\n");
    if !models.is_empty() {
        write_model_table(&out.join("table_accuracy.csv"), &models)?;
        outputs.push("table_accuracy.csv".into());
        let rows: Vec<Vec<String>> = models
            .iter()
            .map(|r| {
                vec![
                    r.asset.clone(),
                    r.model.clone(),
                    format!("{:.2} ± {:.2}", r.accuracy, r.se),
                    r.n.to_string(),
                ]
            })
            .collect();
        md += &format!(
            "\n## Clean accuracy\n\n{}",
            markdown_table(&["Asset", "Model", "Accuracy (%)", "n"], &rows)
        );
    }
    if !attacks.is_empty() {
        write_attack_table(&out.join("table_attack.csv"), &attacks)?;
        outputs.push("table_attack.csv".into());
        let rows: Vec<Vec<String>> = attacks
            .iter()
            .map(|r| {
                vec![
                    r.asset.clone(),
                    r.model.clone(),
                    format!("{:.2}", r.acc_test),
                    format!("{:.2}", r.acc_rand),
                    format!("{:.2}", r.acc_adv),
                    format!("{:.0}", r.capital),
                    format!("{:.2}", r.size),
                ]
            })
            .collect();
        md += &format!(
            "\n## Untargeted attacks\n\n{}",
            markdown_table(
                &["Asset", "Model", "A_test", "A_rand", "A_adv", "Capital ($)", "Size (%)"],
                &rows
            )
        );
    }
    if !transfers.is_empty() {
        write_transfer_table(&out.join("table_transfer.csv"), &transfers)?;
        outputs.push("table_transfer.csv".into());
        let rows: Vec<Vec<String>> = transfers
            .iter()
            .map(|r| {
                vec![
                    r.surrogate.clone(),
                    r.victim.clone(),
                    format!("{:.2}", r.fooled),
                    format!("{:.3}", r.size),
                    format!("{}/{}", r.fooled_count, r.eligible),
                ]
            })
            .collect();
        md += &format!(
            "\n## Universal transfer\n\n{}",
            markdown_table(&["Surrogate", "Victim", "Fooled (%)", "Size (%)", "Count"], &rows)
        );
    }
    fs::write(out.join("report.md"), md).map_err(|e| CliError::io(&out.join("report.md"), e))?;
    outputs.push("report.md".into());
    Ok(RunRecord {
        data_hash: None,
        inputs,
        outputs,
    })
}
