//! Decision rules: rollout PS-BR, myopic PS-BR, predict-then-act, uniform base,
//! plus exact value-iteration best response as a diagnostic.

pub mod exact;
pub mod gap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::LabelPosterior;
use crate::error::{Error, Result};
use crate::game::{Action, History, JointAction, MixedAction, PayoffTable};
use crate::rng::{purpose, sample_index, tie_break_key, Streams};
use crate::strategy::{MachineState, StrategySpec};

pub use exact::{bellman, exact_best_response, OpponentModel, ValueFunction};

/// Rollout values closer than this are treated as tied.
pub const VALUE_TIE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Rollouts per candidate.
    pub samples: u32,
    /// Lookahead in rounds; 0 plans to the end of the game.
    pub horizon: u32,
    pub gamma: f64,
    pub total_rounds: u32,
    pub tie_break_salt: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            samples: 1,
            horizon: 20,
            gamma: 0.95,
            total_rounds: 200,
            tie_break_salt: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("rollout samples must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        if self.total_rounds == 0 {
            return Err(Error::Config("total rounds must be >= 1".into()));
        }
        Ok(())
    }

    /// Last simulated round when planning from round `t`.
    pub fn last_round(&self, t: u32) -> u32 {
        if self.horizon > 0 {
            self.total_rounds.min(t + self.horizon - 1)
        } else {
            self.total_rounds
        }
    }
}

/// One simulated continuation from folded states.
///
/// `own_state` is the candidate's state over the own-view history, `opp_state` the
/// opponent strategy's state over the opponent-view history; both cover `t-1` rounds.
#[allow(clippy::too_many_arguments)]
pub fn rollout_from_states<G: Rng + ?Sized>(
    payoffs: &PayoffTable,
    self_strat: &StrategySpec,
    opp_strat: &StrategySpec,
    mut own_state: MachineState,
    mut opp_state: MachineState,
    t: u32,
    cfg: &PlannerConfig,
    rng: &mut G,
) -> f64 {
    let mut value = 0.0;
    let mut discount = 1.0;
    for _ in t..=cfg.last_round(t) {
        let a = Action(sample_index(self_strat.distribution(&own_state).probs(), rng) as u8);
        let b = Action(sample_index(opp_strat.distribution(&opp_state).probs(), rng) as u8);
        value += discount * payoffs.get(JointAction(a, b));
        discount *= cfg.gamma;
        own_state = self_strat.advance(&own_state, JointAction(a, b));
        opp_state = opp_strat.advance(&opp_state, JointAction(b, a));
    }
    value
}

/// One rollout of `self_strat` against `opp_strat` from own-view history `own_h` (t-1 rounds).
#[allow(clippy::too_many_arguments)]
pub fn rollout_value<G: Rng + ?Sized>(
    payoffs: &PayoffTable,
    self_strat: &StrategySpec,
    opp_strat: &StrategySpec,
    own_h: &History,
    t: u32,
    cfg: &PlannerConfig,
    rng: &mut G,
) -> Result<f64> {
    self_strat.validate(t, own_h)?;
    let opp_h = own_h.swapped();
    opp_strat.validate(t, &opp_h)?;
    Ok(rollout_from_states(
        payoffs,
        self_strat,
        opp_strat,
        self_strat.state_after(own_h.rounds()),
        opp_strat.state_after(opp_h.rounds()),
        t,
        cfg,
        rng,
    ))
}

/// Index of the best value, ties broken by lowest hash of `(name, round, salt)`.
pub fn argmax_hashed(values: &[f64], names: &[&str], round: u32, salt: u64, tol: f64) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..values.len())
        .filter(|&i| best - values[i] <= tol)
        .min_by_key(|&i| (tie_break_key(names[i], round, salt), i))
        .expect("nonempty values")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsbrTrace {
    pub sampled_label: String,
    /// Mean rollout value per own-menu candidate, in menu order.
    pub values: Vec<f64>,
    pub chosen_label: String,
    pub action: Action,
    /// Distribution the chosen strategy assigns at the real history.
    pub chosen_dist: MixedAction,
}

/// Posterior-sampling best response over the own menu.
///
/// Draws: `[LABEL]` for the opponent label, `[ROLLOUT, candidate, sample]` per
/// rollout, `[ACTION]` for the executed action, all under `streams`.
#[allow(clippy::too_many_arguments)]
pub fn psbr_decide(
    payoffs: &PayoffTable,
    own_menu: &[StrategySpec],
    own_h: &History,
    t: u32,
    posterior: &LabelPosterior,
    cfg: &PlannerConfig,
    streams: &Streams,
) -> Result<PsbrTrace> {
    let sampled = posterior.sample_index(&mut streams.rng(&[purpose::LABEL]));
    psbr_decide_against(payoffs, own_menu, own_h, t, posterior, sampled, cfg, streams)
}

/// As [`psbr_decide`] with the opponent hypothesis already chosen.
#[allow(clippy::too_many_arguments)]
pub fn psbr_decide_against(
    payoffs: &PayoffTable,
    own_menu: &[StrategySpec],
    own_h: &History,
    t: u32,
    posterior: &LabelPosterior,
    sampled: usize,
    cfg: &PlannerConfig,
    streams: &Streams,
) -> Result<PsbrTrace> {
    if own_menu.is_empty() {
        return Err(Error::Config("empty own strategy menu".into()));
    }
    let opp = &posterior.menu()[sampled];
    let opp_state = posterior.states()[sampled];
    if opp_state.round + 1 != t {
        return Err(Error::InvalidHistory(format!(
            "posterior has absorbed {} rounds, deciding round {t}",
            opp_state.round
        )));
    }
    let own_states: Vec<MachineState> = own_menu
        .iter()
        .map(|s| {
            s.validate(t, own_h)?;
            Ok(s.state_after(own_h.rounds()))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = own_menu
        .iter()
        .enumerate()
        .map(|(c, cand)| {
            let total: f64 = (0..cfg.samples)
                .map(|k| {
                    let mut rng = streams.rng(&[purpose::ROLLOUT, c as u64, k as u64]);
                    rollout_from_states(
                        payoffs,
                        cand,
                        opp,
                        own_states[c],
                        opp_state,
                        t,
                        cfg,
                        &mut rng,
                    )
                })
                .sum();
            total / cfg.samples as f64
        })
        .collect();
    let names: Vec<&str> = own_menu.iter().map(|s| s.label.as_str()).collect();
    let chosen = argmax_hashed(&values, &names, t, cfg.tie_break_salt, VALUE_TIE_TOL);
    let chosen_dist = own_menu[chosen].distribution(&own_states[chosen]);
    let action = Action(
        sample_index(chosen_dist.probs(), &mut streams.rng(&[purpose::ACTION])) as u8,
    );
    Ok(PsbrTrace {
        sampled_label: opp.label.clone(),
        values,
        chosen_label: own_menu[chosen].label.clone(),
        action,
        chosen_dist,
    })
}

/// Pure stage best response to `q`, ties broken by hashed action name.
pub fn hashed_stage_br(
    payoffs: &PayoffTable,
    q: &MixedAction,
    action_names: &[String],
    t: u32,
    salt: u64,
) -> Action {
    let vals = payoffs.action_values(q);
    let names: Vec<&str> = action_names.iter().map(String::as_str).collect();
    Action(argmax_hashed(&vals, &names, t, salt, crate::game::TIE_TOL) as u8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MyopicTrace {
    pub sampled_label: String,
    pub action: Action,
    /// Ex-ante mixed action: the best response averaged over the posterior draw.
    pub mixed: MixedAction,
}

/// One-step posterior sampling: best respond to the sampled strategy's next-round play.
pub fn myopic_psbr_decide(
    payoffs: &PayoffTable,
    action_names: &[String],
    t: u32,
    posterior: &LabelPosterior,
    salt: u64,
    streams: &Streams,
) -> MyopicTrace {
    let weights = posterior.weights();
    let mut mixed = vec![0.0; payoffs.num_own()];
    let mut responses = Vec::with_capacity(weights.len());
    for (s, state) in posterior.menu().iter().zip(posterior.states()) {
        let q = s.distribution(state);
        responses.push(hashed_stage_br(payoffs, &q, action_names, t, salt));
    }
    for (w, a) in weights.iter().zip(&responses) {
        mixed[a.index()] += w;
    }
    let sampled = sample_index(&weights, &mut streams.rng(&[purpose::LABEL]));
    let total: f64 = mixed.iter().sum();
    mixed.iter_mut().for_each(|m| *m /= total);
    MyopicTrace {
        sampled_label: posterior.menu()[sampled].label.clone(),
        action: responses[sampled],
        mixed: MixedAction::new(mixed).unwrap_or_else(|_| MixedAction::point(payoffs.num_own(), responses[sampled])),
    }
}

/// Posterior-predictive distribution of the opponent's next action.
pub fn predictive(posterior: &LabelPosterior, n_opp: usize) -> Vec<f64> {
    let mut q = vec![0.0; n_opp];
    for ((s, state), w) in posterior
        .menu()
        .iter()
        .zip(posterior.states())
        .zip(posterior.weights())
    {
        for (qa, p) in q.iter_mut().zip(s.distribution(state).probs()) {
            *qa += w * p;
        }
    }
    q
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScotTrace {
    pub predicted: Action,
    pub action: Action,
}

/// Deterministic predict-then-act: MAP opponent action, then pure stage best response.
/// Both selectors break ties toward the lowest action index.
pub fn scot_decide(payoffs: &PayoffTable, posterior: &LabelPosterior) -> ScotTrace {
    let q = predictive(posterior, payoffs.num_opp());
    let best_q = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let predicted = Action(
        q.iter()
            .position(|&x| best_q - x <= crate::game::TIE_TOL)
            .expect("nonempty") as u8,
    );
    let (brs, _) = payoffs.best_responses(&MixedAction::point(payoffs.num_opp(), predicted));
    ScotTrace {
        predicted,
        action: brs[0],
    }
}

/// Uniform random legal action.
pub fn base_decide<G: Rng + ?Sized>(n_actions: usize, rng: &mut G) -> Action {
    Action(rng.random_range(0..n_actions) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Benchmark, Role};
    use crate::strategy::{find, menu, MenuGame};

    fn pd_table() -> PayoffTable {
        Benchmark::Pd.spec().own_payoffs(Role::First)
    }

    fn strat(label: &str) -> StrategySpec {
        find(&menu(MenuGame::Pd, Role::First), label).unwrap().clone()
    }

    fn point_posterior(game: MenuGame, role: Role, label: &str) -> LabelPosterior {
        LabelPosterior::new(menu(game, role), 1.0)
            .unwrap()
            .with_prior_boost(label, 1e6)
            .unwrap()
    }

    #[test]
    fn rollout_examples() {
        let u = pd_table();
        let mut rng = Streams::new(0).rng(&[]);
        let h1 = PlannerConfig { horizon: 1, ..Default::default() };
        let v = rollout_value(&u, &strat("allc"), &strat("alld"), &History::new(), 1, &h1, &mut rng).unwrap();
        assert_eq!(v, -5.0);
        let h3 = PlannerConfig { horizon: 3, gamma: 1.0, ..Default::default() };
        let v = rollout_value(&u, &strat("alld"), &strat("alld"), &History::new(), 1, &h3, &mut rng).unwrap();
        assert_eq!(v, 0.0);
        let g0 = |h| PlannerConfig { horizon: h, gamma: 0.0, ..Default::default() };
        for (a, b) in [("tft", "alld"), ("allc", "wsls"), ("alld", "grim_trigger")] {
            let one = rollout_value(&u, &strat(a), &strat(b), &History::new(), 1, &g0(1), &mut rng).unwrap();
            let two = rollout_value(&u, &strat(a), &strat(b), &History::new(), 1, &g0(2), &mut rng).unwrap();
            assert_eq!(one, two);
        }
    }

    #[test]
    fn horizon_clamps_to_game_end() {
        let cfg = PlannerConfig { horizon: 20, total_rounds: 200, ..Default::default() };
        assert_eq!(cfg.last_round(1), 20);
        assert_eq!(cfg.last_round(190), 200);
        let cfg = PlannerConfig { horizon: 0, ..cfg };
        assert_eq!(cfg.last_round(5), 200);
    }

    #[test]
    fn deterministic_rollout_matches_direct_sum() {
        let u = pd_table();
        let cfg = PlannerConfig { horizon: 6, gamma: 0.9, ..Default::default() };
        let h = History::from_rounds(vec![JointAction::new(0, 1), JointAction::new(1, 1)]);
        let v = rollout_value(&u, &strat("tft"), &strat("grim_trigger"), &h, 3, &cfg, &mut Streams::new(1).rng(&[])).unwrap();
        // direct replay: tft copies the opponent's last move, grim fires once we have played F
        let mut own = h.rounds().to_vec();
        let mut direct = 0.0;
        let mut disc = 1.0;
        for _ in 0..6 {
            let last_opp = own.last().unwrap().1;
            let a = if last_opp == Action(0) { Action(0) } else { Action(1) };
            let triggered = own.iter().any(|r| r.0 == Action(1));
            let b = if triggered { Action(1) } else { Action(0) };
            direct += disc * u.get(JointAction(a, b));
            disc *= 0.9;
            own.push(JointAction(a, b));
        }
        assert_eq!(v, direct);
    }

    #[test]
    fn psbr_against_alld_defects() {
        let u = pd_table();
        let own = menu(MenuGame::Pd, Role::First);
        let post = point_posterior(MenuGame::Pd, Role::Second, "alld");
        let cfg = PlannerConfig { horizon: 5, ..Default::default() };
        let tr = psbr_decide(&u, &own, &History::new(), 1, &post, &cfg, &Streams::new(3)).unwrap();
        assert_eq!(tr.sampled_label, "alld");
        assert_eq!(tr.chosen_label, "alld");
        assert_eq!(tr.action, Action(1));
        let best = tr.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, 0.0);
    }

    #[test]
    fn psbr_against_grim_cooperates() {
        let u = pd_table();
        let own = menu(MenuGame::Pd, Role::First);
        let post = point_posterior(MenuGame::Pd, Role::Second, "grim_trigger");
        let cfg = PlannerConfig::default();
        let tr = psbr_decide(&u, &own, &History::new(), 1, &post, &cfg, &Streams::new(3)).unwrap();
        assert_eq!(tr.action, Action(0));
        let coop: f64 = (0..20).map(|k| 3.0 * 0.95f64.powi(k)).sum();
        let best = tr.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((best - coop).abs() < 1e-9);
        assert!(coop > 5.0);
        let again = psbr_decide(&u, &own, &History::new(), 1, &post, &cfg, &Streams::new(3)).unwrap();
        assert_eq!(tr, again);
    }

    #[test]
    fn myopic_examples() {
        let pd = Benchmark::Pd.spec();
        let post = point_posterior(MenuGame::Pd, Role::Second, "alld");
        let tr = myopic_psbr_decide(&pd.own_payoffs(Role::First), &pd.actions[0], 1, &post, 0, &Streams::new(0));
        assert_eq!(tr.action, Action(1));
        let bos = Benchmark::Bos.spec();
        let post = point_posterior(MenuGame::Bos, Role::Second, "insist_j");
        let tr = myopic_psbr_decide(&bos.own_payoffs(Role::First), &bos.actions[0], 1, &post, 0, &Streams::new(0));
        assert_eq!(tr.action, Action(0));
        let sam = Benchmark::Samaritan.spec();
        let post = point_posterior(MenuGame::Samaritan, Role::First, "always_help");
        let tr = myopic_psbr_decide(&sam.own_payoffs(Role::Second), &sam.actions[1], 1, &post, 0, &Streams::new(0));
        assert_eq!(tr.action, Action(1));
    }

    #[test]
    fn scot_examples() {
        let u = pd_table();
        let post = point_posterior(MenuGame::Pd, Role::Second, "alld");
        assert_eq!(scot_decide(&u, &post), ScotTrace { predicted: Action(1), action: Action(1) });
        // 0.6 on insist_j, the rest spread so that J stays the MAP action
        let bos = Benchmark::Bos.spec().own_payoffs(Role::First);
        let m = menu(MenuGame::Bos, Role::Second);
        let mut post = LabelPosterior::new(m, 1.0).unwrap();
        let rest = 0.4 / 7.0;
        post = post.with_prior_boost("insist_j", (0.6f64 / rest).ln()).unwrap();
        assert!((post.weights()[0] - 0.6).abs() < 1e-12);
        assert_eq!(scot_decide(&bos, &post).action, Action(0));
    }

    #[test]
    fn base_examples() {
        let mut rng = Streams::new(8).rng(&[]);
        let n = 10_000;
        let j = (0..n).filter(|_| base_decide(2, &mut rng) == Action(0)).count();
        assert!((j as f64 / n as f64 - 0.5).abs() < 0.02);
        let mut seen = [false; 3];
        for _ in 0..100 {
            seen[base_decide(3, &mut rng).index()] = true;
        }
        assert!(seen.iter().all(|&s| s));
        let a = base_decide(3, &mut Streams::new(2).rng(&[]));
        let b = base_decide(3, &mut Streams::new(2).rng(&[]));
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        assert!(PlannerConfig { samples: 0, ..Default::default() }.validate().is_err());
        assert!(PlannerConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(PlannerConfig { gamma: 1.0, ..Default::default() }.validate().is_ok());
    }
}
