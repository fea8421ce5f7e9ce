//! Seeded self-play matches and their records.
//!
//! Each round runs in two phases: both players decide from their own information
//! (public history and their own rewards), then the joint action resolves and
//! rewards are drawn. A player never sees the other's reward.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::belief::{LabelPosterior, PosteriorSnapshot, DEFAULT_PRIOR_BOOST};
use crate::error::{Error, Result};
use crate::game::{Action, Benchmark, GameSpec, History, JointAction, MixedAction, PayoffTable, Role};
use crate::llm::{
    build_base_prompt, build_inference_prompt, build_scot_prompts, infer_action, infer_label,
    ChatBackend, LabelOutcome, DEFAULT_MAX_RETRIES,
};
use crate::payoff_belief::{sigma_for_game, OffsetPosterior, PayoffSummary};
use crate::planners::{
    base_decide, hashed_stage_br, myopic_psbr_decide, psbr_decide_against, scot_decide,
    PlannerConfig,
};
use crate::rng::{derive_seed, purpose, Streams};
use crate::strategy::{find, menu, MenuGame, StrategySpec};

pub const RECORD_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    Base,
    Scot,
    MyopicPsbr,
    Psbr,
    /// Plays one menu strategy. Used for debugging and as a fixed opponent.
    Fixed { label: String },
}

impl AgentKind {
    pub fn name(&self) -> &str {
        match self {
            AgentKind::Base => "base",
            AgentKind::Scot => "scot",
            AgentKind::MyopicPsbr => "myopic_psbr",
            AgentKind::Psbr => "psbr",
            AgentKind::Fixed { label } => label,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    #[default]
    Likelihood,
    LlmLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffMode {
    #[default]
    Known,
    GaussianUnknown,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_boost() -> f64 {
    DEFAULT_PRIOR_BOOST
}

fn default_rounds() -> u32 {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub game: Benchmark,
    pub agents: [AgentKind; 2],
    #[serde(default)]
    pub planner: PlannerConfig,
    /// Label-posterior temperature.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub inference: InferenceMode,
    /// Collusive prior per player: the label that player expects from its opponent.
    #[serde(default)]
    pub prior_labels: [Option<String>; 2],
    #[serde(default = "default_boost")]
    pub prior_boost: f64,
    #[serde(default)]
    pub payoff_mode: PayoffMode,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default)]
    pub seed: u64,
}

impl MatchConfig {
    pub fn new(game: Benchmark, agents: [AgentKind; 2]) -> Self {
        MatchConfig {
            game,
            agents,
            planner: PlannerConfig::default(),
            temperature: 1.0,
            inference: InferenceMode::Likelihood,
            prior_labels: [None, None],
            prior_boost: DEFAULT_PRIOR_BOOST,
            payoff_mode: PayoffMode::Known,
            rounds: 200,
            seed: 0,
        }
    }

    /// Planner settings with the horizon end pinned to this match's length.
    pub fn effective_planner(&self) -> PlannerConfig {
        PlannerConfig {
            total_rounds: self.rounds,
            ..self.planner
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if !self.prior_boost.is_finite() {
            return Err(Error::Config("prior boost must be finite".into()));
        }
        self.effective_planner().validate()?;
        let g = MenuGame::from(self.game);
        for role in Role::BOTH {
            let i = role.index();
            if let AgentKind::Fixed { label } = &self.agents[i] {
                find(&menu(g, role), label)?;
            }
            if let Some(l) = &self.prior_labels[i] {
                find(&menu(g, role.other()), l)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceSource {
    Likelihood,
    Llm,
    /// The model answered but never with a parseable label.
    LlmParseFallback,
    /// No backend or a transport failure; likelihood used instead.
    LikelihoodFallback,
}

/// What one player did in one round, and why.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlayerTrace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_label: Option<String>,
    /// Mean rollout value per own-menu candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<String>,
    /// Mixed action the decision rule realized this round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixed: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceSource>,
}

pub struct Decision {
    pub action: Action,
    pub trace: PlayerTrace,
}

/// Everything a player may condition on when deciding round `t`.
#[derive(Clone, Debug, Serialize)]
pub struct Observation<'a> {
    pub t: u32,
    /// Own-view history `(own, opponent)` of rounds `1..t`.
    pub history: &'a History,
    /// Own realized rewards for rounds `1..t`.
    pub rewards: &'a [f64],
}

pub trait Agent {
    fn decide(&mut self, obs: &Observation<'_>, streams: &Streams) -> Result<Decision>;
    /// Called after resolution with the own-view joint action and own reward.
    fn observe(&mut self, own_view: JointAction, reward: f64);
}

/// The built-in agents: menu posterior plus one decision rule.
pub struct MenuAgent<'a> {
    role: Role,
    kind: AgentKind,
    game: GameSpec,
    own_menu: Vec<StrategySpec>,
    posterior: LabelPosterior,
    payoff_post: Option<OffsetPosterior>,
    planner: PlannerConfig,
    inference: InferenceMode,
    prior_label: Option<String>,
    total_rounds: u32,
    backend: Option<&'a dyn ChatBackend>,
}

impl<'a> MenuAgent<'a> {
    pub fn new(cfg: &MatchConfig, role: Role, backend: Option<&'a dyn ChatBackend>) -> Result<Self> {
        let g = MenuGame::from(cfg.game);
        let game = cfg.game.spec();
        let mut posterior = LabelPosterior::new(menu(g, role.other()), cfg.temperature)?;
        let prior_label = cfg.prior_labels[role.index()].clone();
        if let Some(l) = &prior_label {
            posterior = posterior.with_prior_boost(l, cfg.prior_boost)?;
        }
        let payoff_post = match cfg.payoff_mode {
            PayoffMode::Known => None,
            PayoffMode::GaussianUnknown => Some(OffsetPosterior::for_player(&game, role)),
        };
        Ok(MenuAgent {
            role,
            kind: cfg.agents[role.index()].clone(),
            own_menu: menu(g, role),
            game,
            posterior,
            payoff_post,
            planner: cfg.effective_planner(),
            inference: cfg.inference,
            prior_label,
            total_rounds: cfg.rounds,
            backend,
        })
    }

    pub fn posterior(&self) -> &LabelPosterior {
        &self.posterior
    }

    fn payoffs(&self, streams: &Streams) -> PayoffTable {
        match &self.payoff_post {
            None => self.game.own_payoffs(self.role),
            // the planner commits to one sampled matrix for all of this round's rollouts
            Some(pp) if self.kind == AgentKind::Psbr => {
                pp.sample_mean_matrix(&mut streams.rng(&[purpose::PAYOFF_SAMPLE]))
            }
            Some(pp) => pp.mean_matrix(),
        }
    }

    /// Opponent label for this round, from the model when configured.
    fn sample_label(&self, obs: &Observation<'_>, streams: &Streams) -> (usize, InferenceSource) {
        let likelihood = |src| (self.posterior.sample_index(&mut streams.rng(&[purpose::LABEL])), src);
        if self.inference == InferenceMode::Likelihood {
            return likelihood(InferenceSource::Likelihood);
        }
        let Some(backend) = self.backend else {
            return likelihood(InferenceSource::LikelihoodFallback);
        };
        let prompt = build_inference_prompt(
            &self.game,
            self.role,
            &obs.history.swapped(),
            self.posterior.menu(),
            obs.t,
            self.total_rounds,
            self.payoff_post.is_none(),
            self.prior_label.as_deref(),
        );
        match infer_label(backend, &prompt, self.posterior.menu(), DEFAULT_MAX_RETRIES) {
            Ok(out) => {
                let idx = self.posterior.index_of(out.label()).expect("parsed label is in the menu");
                let src = match out {
                    LabelOutcome::Parsed(_) => InferenceSource::Llm,
                    LabelOutcome::Fallback(_) => InferenceSource::LlmParseFallback,
                };
                (idx, src)
            }
            Err(_) => likelihood(InferenceSource::LikelihoodFallback),
        }
    }

    fn action_tokens(&self, role: Role) -> Vec<String> {
        self.game.actions[role.index()].clone()
    }

    fn llm_base(&self, backend: &dyn ChatBackend, obs: &Observation<'_>) -> Option<Action> {
        let prompt = build_base_prompt(
            &self.game,
            self.role,
            obs.history,
            self.posterior.menu(),
            obs.t,
            self.total_rounds,
            self.payoff_post.is_none(),
            self.prior_label.as_deref(),
        );
        infer_action(backend, &prompt, &self.action_tokens(self.role), DEFAULT_MAX_RETRIES)
            .ok()
            .flatten()
            .map(|i| Action(i as u8))
    }

    fn llm_scot(&self, backend: &dyn ChatBackend, obs: &Observation<'_>) -> Option<(Action, Action)> {
        let stage = |pred: Option<&str>| {
            build_scot_prompts(
                &self.game,
                self.role,
                obs.history,
                self.posterior.menu(),
                obs.t,
                self.total_rounds,
                self.payoff_post.is_none(),
                self.prior_label.as_deref(),
                pred,
            )
        };
        let opp_tokens = self.action_tokens(self.role.other());
        let p = infer_action(backend, &stage(None), &opp_tokens, DEFAULT_MAX_RETRIES).ok()??;
        let a = infer_action(
            backend,
            &stage(Some(&opp_tokens[p])),
            &self.action_tokens(self.role),
            DEFAULT_MAX_RETRIES,
        )
        .ok()??;
        Some((Action(p as u8), Action(a as u8)))
    }
}

impl Agent for MenuAgent<'_> {
    fn decide(&mut self, obs: &Observation<'_>, streams: &Streams) -> Result<Decision> {
        let t = obs.t;
        let n_own = self.game.num_actions(self.role);
        let mut trace = PlayerTrace {
            posterior: Some(self.posterior.snapshot()),
            payoff: self.payoff_post.as_ref().map(OffsetPosterior::summary),
            ..PlayerTrace::default()
        };
        let salt = self.planner.tie_break_salt;
        let action = match self.kind.clone() {
            AgentKind::Fixed { label } => {
                let s = find(&self.own_menu, &label)?;
                let dist = s.action_distribution(t, obs.history)?;
                let a = s.sample_action(t, obs.history, &mut streams.rng(&[purpose::ACTION]))?;
                trace.chosen_label = Some(label);
                trace.mixed = Some(dist.probs().to_vec());
                a
            }
            AgentKind::Base => match self.backend.and_then(|b| self.llm_base(b, obs)) {
                Some(a) => {
                    trace.mixed = Some(MixedAction::point(n_own, a).probs().to_vec());
                    trace.inference = Some(InferenceSource::Llm);
                    a
                }
                None => {
                    trace.mixed = Some(MixedAction::uniform(n_own).probs().to_vec());
                    base_decide(n_own, &mut streams.rng(&[purpose::BASE]))
                }
            },
            AgentKind::Scot => {
                let llm = self.backend.and_then(|b| self.llm_scot(b, obs));
                let (predicted, a) = match llm {
                    Some(pa) => {
                        trace.inference = Some(InferenceSource::Llm);
                        pa
                    }
                    None => {
                        let out = scot_decide(&self.payoffs(streams), &self.posterior);
                        (out.predicted, out.action)
                    }
                };
                trace.predicted = Some(self.game.action_name(self.role.other(), predicted).to_string());
                trace.mixed = Some(MixedAction::point(n_own, a).probs().to_vec());
                a
            }
            AgentKind::MyopicPsbr => {
                let payoffs = self.payoffs(streams);
                let names = self.action_tokens(self.role);
                if self.inference == InferenceMode::Likelihood {
                    let out = myopic_psbr_decide(&payoffs, &names, t, &self.posterior, salt, streams);
                    trace.sampled_label = Some(out.sampled_label);
                    trace.mixed = Some(out.mixed.probs().to_vec());
                    trace.inference = Some(InferenceSource::Likelihood);
                    out.action
                } else {
                    let (idx, src) = self.sample_label(obs, streams);
                    let s = &self.posterior.menu()[idx];
                    let q = s.distribution(&self.posterior.states()[idx]);
                    let a = hashed_stage_br(&payoffs, &q, &names, t, salt);
                    trace.sampled_label = Some(s.label.clone());
                    trace.mixed = Some(MixedAction::point(n_own, a).probs().to_vec());
                    trace.inference = Some(src);
                    a
                }
            }
            AgentKind::Psbr => {
                let payoffs = self.payoffs(streams);
                let (idx, src) = self.sample_label(obs, streams);
                let out = psbr_decide_against(
                    &payoffs,
                    &self.own_menu,
                    obs.history,
                    t,
                    &self.posterior,
                    idx,
                    &self.planner,
                    streams,
                )?;
                trace.sampled_label = Some(out.sampled_label);
                trace.chosen_label = Some(out.chosen_label);
                trace.candidate_values = Some(out.values);
                trace.mixed = Some(out.chosen_dist.probs().to_vec());
                trace.inference = Some(src);
                out.action
            }
        };
        Ok(Decision { action, trace })
    }

    fn observe(&mut self, own_view: JointAction, reward: f64) {
        self.posterior.observe(own_view.swap());
        if let Some(pp) = &mut self.payoff_post {
            pp.update(own_view, reward);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: u32,
    /// Role-ordered action names.
    pub actions: [String; 2],
    pub rewards: [f64; 2],
    pub players: [PlayerTrace; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchHeader {
    pub format: u32,
    pub config: MatchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub header: MatchHeader,
    pub rounds: Vec<RoundEntry>,
}

impl MatchRecord {
    pub fn config(&self) -> &MatchConfig {
        &self.header.config
    }

    /// Role-ordered joint actions.
    pub fn history(&self) -> Result<History> {
        let g = self.config().game.spec();
        let rounds = self
            .rounds
            .iter()
            .map(|r| g.parse_joint(&r.actions))
            .collect::<Result<Vec<_>>>()?;
        Ok(History::from_rounds(rounds))
    }

    /// Header line followed by one line per round.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(r).expect("round serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| Error::Record("empty record".into()))?;
        let header: MatchHeader = serde_json::from_str(first)?;
        if header.format != RECORD_FORMAT {
            return Err(Error::Record(format!("unsupported record format {}", header.format)));
        }
        let rounds = lines
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect::<Result<Vec<RoundEntry>>>()?;
        if rounds.len() != header.config.rounds as usize {
            return Err(Error::Record(format!(
                "expected {} rounds, found {}",
                header.config.rounds,
                rounds.len()
            )));
        }
        for (k, r) in rounds.iter().enumerate() {
            if r.round as usize != k + 1 {
                return Err(Error::Record(format!("round {} out of order", r.round)));
            }
        }
        Ok(MatchRecord { header, rounds })
    }
}

/// Plays `rounds` rounds between two agents. Rewards get `N(0, sigma^2)` noise in
/// gaussian mode, drawn from stream `[NOISE, player, round]`.
pub fn play(
    game: &GameSpec,
    agents: &mut [&mut dyn Agent; 2],
    rounds: u32,
    payoff_mode: PayoffMode,
    streams: &Streams,
) -> Result<Vec<RoundEntry>> {
    let sigma = sigma_for_game(game);
    let mut views = [History::new(), History::new()];
    let mut rewards: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut out = Vec::with_capacity(rounds as usize);
    for t in 1..=rounds {
        let mut decisions = Vec::with_capacity(2);
        for role in Role::BOTH {
            let i = role.index();
            let obs = Observation {
                t,
                history: &views[i],
                rewards: &rewards[i],
            };
            decisions.push(agents[i].decide(&obs, &streams.child(&[i as u64, u64::from(t)]))?);
        }
        let joint = JointAction(decisions[0].action, decisions[1].action);
        let u = game.payoff(joint)?;
        let mut r = u;
        if payoff_mode == PayoffMode::GaussianUnknown {
            for (i, ri) in r.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut streams.rng(&[purpose::NOISE, i as u64, u64::from(t)]));
                *ri += sigma * z;
            }
        }
        for role in Role::BOTH {
            let i = role.index();
            views[i].push(joint.view(role));
            rewards[i].push(r[i]);
            agents[i].observe(joint.view(role), r[i]);
        }
        let [d0, d1]: [Decision; 2] = decisions.try_into().ok().expect("two decisions");
        out.push(RoundEntry {
            round: t,
            actions: game.joint_names(joint),
            rewards: r,
            players: [d0.trace, d1.trace],
        });
    }
    Ok(out)
}

pub fn run_match(cfg: &MatchConfig) -> Result<MatchRecord> {
    run_match_with_backend(cfg, None)
}

/// As [`run_match`], routing model-backed inference and prompts through `backend`.
pub fn run_match_with_backend(cfg: &MatchConfig, backend: Option<&dyn ChatBackend>) -> Result<MatchRecord> {
    cfg.validate()?;
    let game = cfg.game.spec();
    let mut a = MenuAgent::new(cfg, Role::First, backend)?;
    let mut b = MenuAgent::new(cfg, Role::Second, backend)?;
    let rounds = play(&game, &mut [&mut a, &mut b], cfg.rounds, cfg.payoff_mode, &Streams::new(cfg.seed))?;
    Ok(MatchRecord {
        header: MatchHeader {
            format: RECORD_FORMAT,
            config: cfg.clone(),
        },
        rounds,
    })
}

/// Seed of trial `k` of config `config_index`.
pub fn trial_seed(seed_base: u64, config_index: usize, k: usize) -> u64 {
    derive_seed(seed_base, &[purpose::TRIAL, config_index as u64, k as u64])
}

/// Every trial's config with its seed filled in, in (config, trial) order.
pub fn trial_configs(configs: &[MatchConfig], trials: usize, seed_base: u64) -> Vec<MatchConfig> {
    configs
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| {
            (0..trials).map(move |k| MatchConfig {
                seed: trial_seed(seed_base, ci, k),
                ..c.clone()
            })
        })
        .collect()
}

pub fn run_suite(configs: &[MatchConfig], trials: usize, seed_base: u64) -> Result<Vec<MatchRecord>> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    trial_configs(configs, trials, seed_base)
        .iter()
        .map(run_match)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(l: &str) -> AgentKind {
        AgentKind::Fixed { label: l.into() }
    }

    #[test]
    fn alld_pair_defects() {
        let mut cfg = MatchConfig::new(Benchmark::Pd, [fixed("alld"), fixed("alld")]);
        cfg.rounds = 5;
        let rec = run_match(&cfg).unwrap();
        assert_eq!(rec.rounds.len(), 5);
        for r in &rec.rounds {
            assert_eq!(r.actions, ["F".to_string(), "F".to_string()]);
            assert_eq!(r.rewards, [0.0, 0.0]);
        }
    }

    #[test]
    fn replay_is_identical() {
        let mut cfg = MatchConfig::new(Benchmark::Promo, [AgentKind::Psbr, AgentKind::MyopicPsbr]);
        cfg.rounds = 40;
        cfg.seed = 99;
        cfg.payoff_mode = PayoffMode::GaussianUnknown;
        let a = run_match(&cfg).unwrap();
        let b = run_match(&cfg).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let back = MatchRecord::from_jsonl(&a.to_jsonl()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = MatchConfig::new(Benchmark::Pd, [fixed("nope"), AgentKind::Base]);
        assert!(matches!(run_match(&cfg), Err(Error::NotFound(_))));
        let mut cfg = MatchConfig::new(Benchmark::Pd, [AgentKind::Base, AgentKind::Base]);
        cfg.prior_labels[0] = Some("mad0".into());
        assert!(cfg.validate().is_err());
        cfg.prior_labels[0] = None;
        cfg.rounds = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn llm_mode_without_backend_falls_back() {
        let mut cfg = MatchConfig::new(Benchmark::Pd, [AgentKind::Psbr, AgentKind::Psbr]);
        cfg.rounds = 3;
        cfg.inference = InferenceMode::LlmLabel;
        let rec = run_match(&cfg).unwrap();
        for r in &rec.rounds {
            for p in &r.players {
                assert_eq!(p.inference, Some(InferenceSource::LikelihoodFallback));
            }
        }
        // the fallback draws exactly as likelihood mode does
        let mut lik = cfg.clone();
        lik.inference = InferenceMode::Likelihood;
        let other = run_match(&lik).unwrap();
        for (x, y) in rec.rounds.iter().zip(&other.rounds) {
            assert_eq!(x.actions, y.actions);
        }
    }

    #[test]
    fn suite_seeds_are_distinct() {
        let cfg = MatchConfig::new(Benchmark::Pd, [AgentKind::Base, AgentKind::Base]);
        let all = trial_configs(&[cfg.clone()], 20, 7);
        let mut seeds: Vec<u64> = all.iter().map(|c| c.seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 20);
        assert!(run_suite(&[], 3, 7).unwrap().is_empty());
    }
}
