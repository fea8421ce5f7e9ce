//! Command-line front end: run presets or config files, write records and tables,
//! and recompute tables from saved records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use repgame::experiment::{
    collusive_priors, parse_window, summarize, summary_csv, table_csv, Preset, PresetId,
};
use repgame::llm::{ChatBackend, HttpProvider, ProviderConfig, DEFAULT_MAX_RETRIES};
use repgame::metrics::{
    dt_and_delta_trace, kl_state_report, visit_report, DiagnosticRow, KlReport, VisitCount,
    DEFAULT_WINDOW,
};
use repgame::sim::{run_match_with_backend, trial_configs, InferenceMode, MatchConfig, MatchRecord};
use repgame::strategy::{find, menu, registry_document, MenuGame};
use repgame::Role;

#[derive(Parser, Debug)]
#[command(name = "repgame", version, about = "Repeated-game self-play experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a preset or config file and write records, tables and diagnostics.
    Run(RunArgs),
    /// Recompute tables from a directory of saved records.
    Report(ReportArgs),
    /// Print the strategy menus as JSON.
    Menus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyInference {
    Likelihood,
    LlmLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PayoffInference {
    Likelihood,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// exp1, exp2, exp3-any or exp3-coop.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// TOML file with a `matches` list (and optionally a `preset`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; trial seeds derive from it. Defaults to the config's seed, else 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub parallelism: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "likelihood")]
    pub strategy_inference: StrategyInference,
    #[arg(long, value_enum, default_value = "likelihood")]
    pub payoff_inference: PayoffInference,
    /// Tilt every player's prior toward the game's cooperative label.
    #[arg(long)]
    pub collusive_mode: bool,
    #[arg(long)]
    pub rounds: Option<u32>,
    /// Scoring window as LO-HI.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long, env = "REPGAME_LLM_ENDPOINT")]
    pub llm_endpoint: Option<String>,
    #[arg(long, env = "REPGAME_LLM_MODEL", default_value = "gpt-4o-mini")]
    pub llm_model: String,
    #[arg(long, env = "REPGAME_LLM_API_KEY", hide_env_values = true)]
    pub llm_api_key: Option<String>,
    #[arg(long)]
    pub llm_temperature: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    pub dir: PathBuf,
    #[arg(long)]
    pub window: Option<String>,
}

/// Declarative run file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub preset: Option<String>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub rounds: Option<u32>,
    pub window: Option<[u32; 2]>,
    #[serde(default)]
    pub matches: Vec<MatchConfig>,
}

/// Everything a run needs, resolved from flags and files.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub configs: Vec<MatchConfig>,
    pub trials: usize,
    pub seed: u64,
    pub window: (u32, u32),
    pub label: String,
}

fn preset_id(name: &str) -> Result<PresetId> {
    PresetId::from_name(name)
        .with_context(|| format!("unknown preset {name:?} (expected exp1, exp2, exp3-any, exp3-coop)"))
}

pub fn plan(args: &RunArgs) -> Result<RunPlan> {
    let file = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<RunFile>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunFile::default(),
    };
    let preset_name = args.preset.clone().or(file.preset.clone());
    if preset_name.is_none() && file.matches.is_empty() {
        bail!("nothing to run: pass --preset or a --config with [[matches]]");
    }
    let rounds = args.rounds.or(file.rounds);
    let inference = match args.strategy_inference {
        StrategyInference::Likelihood => InferenceMode::Likelihood,
        StrategyInference::LlmLabel => InferenceMode::LlmLabel,
    };
    let mut configs = Vec::new();
    let mut trials = 1;
    let mut label = String::from("custom");
    if let Some(name) = &preset_name {
        let mut p = Preset::new(preset_id(name)?);
        if let Some(r) = rounds {
            p.rounds = r;
        }
        p.inference = inference;
        trials = p.trials;
        label = name.clone();
        configs.extend(p.configs());
    }
    for m in &file.matches {
        let mut c = m.clone();
        if let Some(r) = rounds {
            c.rounds = r;
        }
        if args.strategy_inference != StrategyInference::Likelihood {
            c.inference = inference;
        }
        configs.push(c);
    }
    if args.collusive_mode {
        for c in &mut configs {
            c.prior_labels = collusive_priors(c.game);
        }
    }
    for (i, c) in configs.iter().enumerate() {
        c.validate().with_context(|| format!("match {i} ({})", c.game))?;
    }
    let trials = args.trials.or(file.trials).unwrap_or(trials);
    if trials == 0 {
        bail!("--trials must be >= 1");
    }
    let window = match (&args.window, file.window) {
        (Some(w), _) => parse_window(w)?,
        (None, Some([a, b])) => (a, b),
        (None, None) => DEFAULT_WINDOW,
    };
    let seed = args.seed.or(file.seed).unwrap_or(0);
    Ok(RunPlan {
        configs,
        trials,
        seed,
        window,
        label,
    })
}

/// File stem of trial `k` of config `ci`.
pub fn record_stem(ci: usize, k: usize, cfg: &MatchConfig) -> String {
    let agents = if cfg.agents[0] == cfg.agents[1] {
        cfg.agents[0].name().to_string()
    } else {
        format!("{}-{}", cfg.agents[0].name(), cfg.agents[1].name())
    };
    format!("c{ci:02}-{}-{agents}-t{k:02}", cfg.game.name().to_lowercase())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rounds: Vec<DiagnosticRow>,
    pub visits: [Vec<VisitCount>; 2],
    /// Per player: the label it chose most often, checked against the rest of its menu.
    pub kl: [Option<KlReport>; 2],
}

const KL_THRESHOLD: f64 = 0.01;

fn modal_label(record: &MatchRecord, player: usize) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &record.rounds {
        if let Some(l) = &r.players[player].chosen_label {
            *counts.entry(l).or_default() += 1;
        }
    }
    let best = counts.values().copied().max()?;
    counts
        .into_iter()
        .find(|&(_, c)| c == best)
        .map(|(l, _)| l.to_string())
}

pub fn diagnostics(record: &MatchRecord) -> Result<Diagnostics> {
    let cfg = record.config();
    let h = record.history()?;
    let g = MenuGame::from(cfg.game);
    let kl = Role::BOTH.map(|role| {
        let label = modal_label(record, role.index())?;
        let m = menu(g, role);
        let truth = find(&m, &label).ok()?.clone();
        Some(kl_state_report(&truth, &m, &h.view(role), KL_THRESHOLD))
    });
    Ok(Diagnostics {
        rounds: dt_and_delta_trace(record),
        visits: visit_report(record)?,
        kl,
    })
}

fn backend(args: &RunArgs) -> Option<HttpProvider> {
    if args.strategy_inference != StrategyInference::LlmLabel {
        return None;
    }
    let endpoint = args.llm_endpoint.clone()?;
    Some(HttpProvider::new(ProviderConfig {
        endpoint,
        model: args.llm_model.clone(),
        temperature: args.llm_temperature,
        max_retries: DEFAULT_MAX_RETRIES,
        timeout_secs: 60,
        api_key: args.llm_api_key.clone(),
    }))
}

pub struct RunOutcome {
    pub records: usize,
    pub failures: usize,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: &RunArgs) -> Result<RunOutcome> {
    let plan = plan(args)?;
    let provider = backend(args);
    if args.strategy_inference == StrategyInference::LlmLabel && provider.is_none() {
        eprintln!("warning: llm-label inference without --llm-endpoint; using likelihood inference");
    }
    let backend: Option<&dyn ChatBackend> = provider.as_ref().map(|p| p as &dyn ChatBackend);
    let jobs = trial_configs(&plan.configs, plan.trials, plan.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.parallelism)
        .build()?;
    let results: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|c| run_match_with_backend(c, backend))
            .collect()
    });

    let records_dir = args.out.join("records");
    let diag_dir = args.out.join("diagnostics");
    fs::create_dir_all(&records_dir)?;
    fs::create_dir_all(&diag_dir)?;
    let mut records = Vec::new();
    let mut failures = String::new();
    for (idx, res) in results.into_iter().enumerate() {
        let (ci, k) = (idx / plan.trials, idx % plan.trials);
        let stem = record_stem(ci, k, &jobs[idx]);
        match res {
            Ok(rec) => {
                write(&records_dir.join(format!("{stem}.jsonl")), &rec.to_jsonl())?;
                let diag = diagnostics(&rec)?;
                write(
                    &diag_dir.join(format!("{stem}.json")),
                    &serde_json::to_string_pretty(&diag)?,
                )?;
                records.push(rec);
            }
            Err(e) => failures.push_str(&format!("{stem},{}\n", e.to_string().replace(',', ";"))),
        }
    }
    let cells = summarize(&records, plan.window)?;
    write(&args.out.join("summary.csv"), &summary_csv(&cells))?;
    write(&args.out.join("table.csv"), &table_csv(&cells))?;
    write(&args.out.join("delta_trace.csv"), &delta_csv(&records))?;
    let n_fail = failures.lines().count();
    if n_fail > 0 {
        write(&args.out.join("failures.csv"), &format!("trial,error\n{failures}"))?;
    }
    println!("{} ({} trials per config, seed {})", plan.label, plan.trials, plan.seed);
    print!("{}", table_csv(&cells));
    Ok(RunOutcome {
        records: records.len(),
        failures: n_fail,
    })
}

/// `D_t` and `delta_t` per round for every trial, long format.
fn delta_csv(records: &[MatchRecord]) -> String {
    let mut s = String::from("seed,game,round,d_1,d_2,delta_1,delta_2\n");
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in records {
        for row in dt_and_delta_trace(r) {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.config().seed,
                r.config().game.name(),
                row.round,
                fmt(row.d[0]),
                fmt(row.d[1]),
                fmt(row.delta[0]),
                fmt(row.delta[1])
            ));
        }
    }
    s
}

pub struct ReportOutcome {
    pub table: String,
    pub summary: String,
    pub skipped: usize,
}

/// Loads every `*.jsonl` record under `dir` (or `dir/records`), skipping unreadable ones.
pub fn load_records(dir: &Path) -> Result<(Vec<MatchRecord>, usize)> {
    let rec_dir = if dir.join("records").is_dir() {
        dir.join("records")
    } else {
        dir.to_path_buf()
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(&rec_dir)
        .with_context(|| format!("reading {}", rec_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    let mut skipped = 0;
    for p in paths {
        match fs::read_to_string(&p)
            .map_err(anyhow::Error::from)
            .and_then(|t| MatchRecord::from_jsonl(&t).map_err(anyhow::Error::from))
        {
            Ok(r) => out.push(r),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", p.display());
                skipped += 1;
            }
        }
    }
    Ok((out, skipped))
}

pub fn report(args: &ReportArgs) -> Result<ReportOutcome> {
    let window = match &args.window {
        Some(w) => parse_window(w)?,
        None => DEFAULT_WINDOW,
    };
    let (records, skipped) = load_records(&args.dir)?;
    let cells = summarize(&records, window)?;
    let out = ReportOutcome {
        table: table_csv(&cells),
        summary: summary_csv(&cells),
        skipped,
    };
    write(&args.dir.join("report_summary.csv"), &out.summary)?;
    write(&args.dir.join("report_table.csv"), &out.table)?;
    Ok(out)
}

pub fn menus_json() -> Result<String> {
    Ok(serde_json::to_string_pretty(&registry_document())?)
}
