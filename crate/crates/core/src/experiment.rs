//! Experiment presets and the game x agent summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Benchmark;
use crate::metrics::{builtin_predicates, equilibrium_follow_pct, mean, FollowMode, DEFAULT_WINDOW};
use crate::sim::{AgentKind, InferenceMode, MatchConfig, MatchRecord, PayoffMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresetId {
    #[serde(rename = "exp1")]
    Exp1,
    #[serde(rename = "exp2")]
    Exp2,
    #[serde(rename = "exp3-any")]
    Exp3Any,
    #[serde(rename = "exp3-coop")]
    Exp3Coop,
}

impl PresetId {
    pub const ALL: [PresetId; 4] = [PresetId::Exp1, PresetId::Exp2, PresetId::Exp3Any, PresetId::Exp3Coop];

    pub fn name(self) -> &'static str {
        match self {
            PresetId::Exp1 => "exp1",
            PresetId::Exp2 => "exp2",
            PresetId::Exp3Any => "exp3-any",
            PresetId::Exp3Coop => "exp3-coop",
        }
    }

    pub fn from_name(s: &str) -> Option<PresetId> {
        PresetId::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn collusive(self) -> bool {
        matches!(self, PresetId::Exp2 | PresetId::Exp3Coop)
    }

    pub fn payoff_mode(self) -> PayoffMode {
        match self {
            PresetId::Exp1 | PresetId::Exp2 => PayoffMode::Known,
            PresetId::Exp3Any | PresetId::Exp3Coop => PayoffMode::GaussianUnknown,
        }
    }
}

/// Labels each player expects from its opponent under the collusive prior.
pub fn collusive_priors(game: Benchmark) -> [Option<String>; 2] {
    let (a, b) = match game {
        Benchmark::Pd => ("grim_trigger", "grim_trigger"),
        Benchmark::Bos => ("alternate_phase0", "alternate_phase0"),
        Benchmark::Promo => ("mad1", "mad0"),
        Benchmark::Samaritan => ("grim_shirk_after_nohelp", "grim_nohelp"),
        Benchmark::Lemons => ("grim_boycott", "grim_hq_until_boycott"),
    };
    [Some(a.to_string()), Some(b.to_string())]
}

/// Column agents of the summary tables.
pub const TABLE_AGENTS: [AgentKind; 3] = [AgentKind::Base, AgentKind::Scot, AgentKind::Psbr];

pub fn agent_column(kind: &AgentKind) -> String {
    match kind {
        AgentKind::Base => "Base".into(),
        AgentKind::Scot => "SCoT".into(),
        AgentKind::MyopicPsbr => "Myopic PS-BR".into(),
        AgentKind::Psbr => "PS-BR".into(),
        AgentKind::Fixed { label } => label.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub id: PresetId,
    pub trials: usize,
    pub rounds: u32,
    pub inference: InferenceMode,
    pub template: MatchConfig,
}

impl Preset {
    pub fn new(id: PresetId) -> Self {
        Preset {
            id,
            trials: 20,
            rounds: 200,
            inference: InferenceMode::Likelihood,
            template: MatchConfig::new(Benchmark::Pd, [AgentKind::Base, AgentKind::Base]),
        }
    }

    /// One self-play config per (game, agent), games in table order.
    pub fn configs(&self) -> Vec<MatchConfig> {
        let mut out = Vec::new();
        for game in Benchmark::ALL {
            for agent in &TABLE_AGENTS {
                let mut c = self.template.clone();
                c.game = game;
                c.agents = [agent.clone(), agent.clone()];
                c.rounds = self.rounds;
                c.inference = self.inference;
                c.payoff_mode = self.id.payoff_mode();
                c.prior_labels = if self.id.collusive() {
                    collusive_priors(game)
                } else {
                    [None, None]
                };
                out.push(c);
            }
        }
        out
    }
}

/// Follow mode implied by a config: the prompted path when a collusive prior is set.
pub fn follow_mode_for(cfg: &MatchConfig) -> FollowMode {
    if cfg.prior_labels.iter().any(Option::is_some) {
        FollowMode::Cooperative
    } else {
        FollowMode::AnyNash
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub game: Benchmark,
    pub agent: String,
    pub mode: FollowMode,
    pub per_trial: Vec<f64>,
    pub mean: f64,
}

/// Follow percentages grouped by (game, agent), trials in record order.
pub fn summarize(records: &[MatchRecord], window: (u32, u32)) -> Result<Vec<SummaryCell>> {
    let mut cells: BTreeMap<(Benchmark, String, String), (FollowMode, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let cfg = r.config();
        let mode = follow_mode_for(cfg);
        let preds = builtin_predicates(cfg.game).for_mode(mode);
        let pct = equilibrium_follow_pct(r, &preds, window)?;
        let agent = if cfg.agents[0] == cfg.agents[1] {
            agent_column(&cfg.agents[0])
        } else {
            format!("{} vs {}", agent_column(&cfg.agents[0]), agent_column(&cfg.agents[1]))
        };
        let mode_key = serde_json::to_string(&mode)?;
        cells
            .entry((cfg.game, agent, mode_key))
            .or_insert((mode, Vec::new()))
            .1
            .push(pct);
    }
    Ok(cells
        .into_iter()
        .map(|((game, agent, _), (mode, per_trial))| SummaryCell {
            game,
            agent,
            mode,
            mean: mean(&per_trial),
            per_trial,
        })
        .collect())
}

/// Long-form CSV: one line per cell with its per-trial values.
pub fn summary_csv(cells: &[SummaryCell]) -> String {
    let mut s = String::from("game,agent,metric,trials,mean,per_trial\n");
    for c in cells {
        let metric = match c.mode {
            FollowMode::AnyNash => "any_nash_follow_pct",
            FollowMode::Cooperative => "cooperative_follow_pct",
        };
        let per: Vec<String> = c.per_trial.iter().map(|v| format!("{v:.1}")).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{:.2},{}",
            c.game.name(),
            c.agent,
            metric,
            c.per_trial.len(),
            c.mean,
            per.join(";")
        );
    }
    s
}

/// Wide table: rows are games, columns are agents, cells are mean follow percentages.
pub fn table_csv(cells: &[SummaryCell]) -> String {
    let mut agents: Vec<String> = Vec::new();
    for a in TABLE_AGENTS.iter().map(agent_column) {
        if cells.iter().any(|c| c.agent == a) {
            agents.push(a);
        }
    }
    for c in cells {
        if !agents.contains(&c.agent) {
            agents.push(c.agent.clone());
        }
    }
    let mut s = String::from("game");
    for a in &agents {
        s.push(',');
        s.push_str(a);
    }
    s.push('\n');
    for g in Benchmark::ALL {
        if !cells.iter().any(|c| c.game == g) {
            continue;
        }
        let row: Vec<String> = agents
            .iter()
            .map(|a| {
                cells
                    .iter()
                    .find(|c| c.game == g && &c.agent == a)
                    .map(|c| format!("{:.1}", c.mean))
                    .unwrap_or_default()
            })
            .collect();
        let _ = writeln!(s, "{},{}", g.name(), row.join(","));
    }
    s
}

pub fn parse_window(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s
        .split_once('-')
        .ok_or_else(|| Error::Config(format!("window {s:?} is not LO-HI")))?;
    let lo = a.trim().parse().map_err(|_| Error::Config(format!("bad window start {a:?}")))?;
    let hi = b.trim().parse().map_err(|_| Error::Config(format!("bad window end {b:?}")))?;
    Ok((lo, hi))
}

pub fn default_window() -> (u32, u32) {
    DEFAULT_WINDOW
}
