//! Evaluation of finished matches: equilibrium-path predicates and follow rates,
//! truncated weak distance between play-path distributions, stage-Nash traces,
//! the on-path KL separation report, and belief diagnostics.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Benchmark, GameSpec, History, JointAction, MixedAction, Role};
use crate::sim::MatchRecord;
use crate::strategy::{phase_pair, CanonicalState, MachineState, StrategySpec, PUNISH_ROUNDS};

pub const DEFAULT_WINDOW: (u32, u32) = (161, 180);
/// Largest prefix tree the weak distance may enumerate: `4^12` leaves.
pub const WEAK_DISTANCE_BUDGET: u64 = 1 << 24;
pub const KL_CLIP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Trigger {
    AnyDeviation,
    Profiles(Vec<JointAction>),
}

impl Trigger {
    fn fires(&self, a: JointAction) -> bool {
        match self {
            Trigger::AnyDeviation => true,
            Trigger::Profiles(p) => p.contains(&a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PathRule {
    /// Any of these profiles in every round.
    Profiles(Vec<JointAction>),
    /// `odd` on odd rounds, `even` on even rounds.
    Alternating { odd: JointAction, even: JointAction },
    /// A chain of phases: phase 0 prescribes `phases[0].1`; a round in phase `k`
    /// hitting `phases[k+1].0` moves to phase `k+1` for good. The triggering
    /// round itself counts as on path.
    Chain { start: JointAction, phases: Vec<(Trigger, JointAction)> },
    /// Promo alternation of the given phase with a finite `(Z,Z)` punishment after
    /// any deviation, then back to the alternation.
    PhaseCycle { phase: u8, punish: JointAction, rounds: u8 },
}

/// Fold state of a path predicate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathState {
    phase: usize,
    punish: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPredicate {
    pub name: String,
    pub rule: PathRule,
}

impl PathPredicate {
    pub fn new(name: &str, rule: PathRule) -> Self {
        PathPredicate {
            name: name.into(),
            rule,
        }
    }

    /// Classifies round `t` (1-based) and returns the state for round `t+1`.
    pub fn step(&self, s: PathState, t: u32, a: JointAction) -> (bool, PathState) {
        match &self.rule {
            PathRule::Profiles(p) => (p.contains(&a), s),
            PathRule::Alternating { odd, even } => {
                (a == if t % 2 == 1 { *odd } else { *even }, s)
            }
            PathRule::Chain { start, phases } => {
                let prescribed = if s.phase == 0 { *start } else { phases[s.phase - 1].1 };
                if a == prescribed {
                    return (true, s);
                }
                match phases.get(s.phase) {
                    Some((trig, _)) if trig.fires(a) => (
                        true,
                        PathState {
                            phase: s.phase + 1,
                            ..s
                        },
                    ),
                    _ => (false, s),
                }
            }
            PathRule::PhaseCycle { phase, punish, rounds } => {
                if s.punish > 0 {
                    let next = PathState {
                        punish: s.punish - 1,
                        ..s
                    };
                    return (a == *punish, next);
                }
                if a == phase_pair(*phase, t) {
                    (true, s)
                } else {
                    (
                        true,
                        PathState {
                            punish: *rounds,
                            ..s
                        },
                    )
                }
            }
        }
    }

    /// Per-round on-path indicators for a role-ordered history.
    pub fn trace(&self, h: &[JointAction]) -> Vec<bool> {
        let mut s = PathState::default();
        h.iter()
            .enumerate()
            .map(|(k, &a)| {
                let (on, next) = self.step(s, k as u32 + 1, a);
                s = next;
                on
            })
            .collect()
    }

    /// Whether round `t` with joint action `a` is on path after `prefix` (rounds `1..t`).
    pub fn on_path(&self, t: u32, a: JointAction, prefix: &[JointAction]) -> bool {
        let s = prefix
            .iter()
            .enumerate()
            .fold(PathState::default(), |s, (k, &b)| self.step(s, k as u32 + 1, b).1);
        self.step(s, t, a).0
    }
}

/// Which predicates a follow percentage credits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FollowMode {
    /// One-shot Nash profiles or any cooperative path.
    AnyNash,
    /// The single prompt-specified cooperative path.
    Cooperative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamePredicates {
    pub one_shot: PathPredicate,
    pub cooperative: Vec<PathPredicate>,
    /// The path the collusive prior points at.
    pub prompted: PathPredicate,
}

impl GamePredicates {
    pub fn any_nash(&self) -> Vec<PathPredicate> {
        let mut v = vec![self.one_shot.clone()];
        v.extend(self.cooperative.iter().cloned());
        v
    }

    pub fn for_mode(&self, mode: FollowMode) -> Vec<PathPredicate> {
        match mode {
            FollowMode::AnyNash => self.any_nash(),
            FollowMode::Cooperative => vec![self.prompted.clone()],
        }
    }
}

fn ja(a: u8, b: u8) -> JointAction {
    JointAction::new(a, b)
}

pub fn builtin_predicates(game: Benchmark) -> GamePredicates {
    match game {
        Benchmark::Pd => {
            let grim = PathPredicate::new(
                "grim_cooperation",
                PathRule::Chain {
                    start: ja(0, 0),
                    phases: vec![(Trigger::AnyDeviation, ja(1, 1))],
                },
            );
            GamePredicates {
                one_shot: PathPredicate::new("one_shot_nash", PathRule::Profiles(vec![ja(1, 1)])),
                cooperative: vec![grim.clone()],
                prompted: grim,
            }
        }
        Benchmark::Bos => {
            let phase0 = PathPredicate::new(
                "turn_taking_phase0",
                PathRule::Alternating {
                    odd: ja(0, 0),
                    even: ja(1, 1),
                },
            );
            GamePredicates {
                one_shot: PathPredicate::new(
                    "one_shot_nash",
                    PathRule::Profiles(vec![ja(0, 0), ja(1, 1)]),
                ),
                cooperative: vec![
                    PathPredicate::new("stick_j", PathRule::Profiles(vec![ja(0, 0)])),
                    PathPredicate::new("stick_f", PathRule::Profiles(vec![ja(1, 1)])),
                    phase0.clone(),
                    PathPredicate::new(
                        "turn_taking_phase1",
                        PathRule::Alternating {
                            odd: ja(1, 1),
                            even: ja(0, 0),
                        },
                    ),
                ],
                prompted: phase0,
            }
        }
        Benchmark::Promo => {
            let alt = PathPredicate::new(
                "alternating_promotions",
                PathRule::PhaseCycle {
                    phase: 0,
                    punish: ja(2, 2),
                    rounds: PUNISH_ROUNDS,
                },
            );
            GamePredicates {
                one_shot: PathPredicate::new("one_shot_nash", PathRule::Profiles(vec![ja(1, 1)])),
                cooperative: vec![alt.clone()],
                prompted: alt,
            }
        }
        Benchmark::Samaritan => {
            // (H,W) until the recipient shirks, then (N,W) until the helper helps, then (H,S)
            let coop = PathPredicate::new(
                "work_for_help",
                PathRule::Chain {
                    start: ja(0, 0),
                    phases: vec![
                        (Trigger::Profiles(vec![ja(0, 1), ja(1, 1)]), ja(1, 0)),
                        (Trigger::Profiles(vec![ja(0, 0), ja(0, 1)]), ja(0, 1)),
                    ],
                },
            );
            GamePredicates {
                one_shot: PathPredicate::new("one_shot_nash", PathRule::Profiles(vec![ja(0, 1)])),
                cooperative: vec![coop.clone()],
                prompted: coop,
            }
        }
        Benchmark::Lemons => {
            let trust = PathPredicate::new(
                "trust",
                PathRule::Chain {
                    start: ja(0, 0),
                    phases: vec![(Trigger::Profiles(vec![ja(1, 0)]), ja(1, 1))],
                },
            );
            GamePredicates {
                one_shot: PathPredicate::new("one_shot_nash", PathRule::Profiles(vec![ja(1, 1)])),
                cooperative: vec![trust.clone()],
                prompted: trust,
            }
        }
    }
}

/// Rounds on which at least one predicate holds.
pub fn follow_indicators(h: &[JointAction], preds: &[PathPredicate]) -> Vec<bool> {
    let traces: Vec<Vec<bool>> = preds.iter().map(|p| p.trace(h)).collect();
    (0..h.len())
        .map(|k| traces.iter().any(|tr| tr[k]))
        .collect()
}

/// Percentage of rounds in the inclusive `window` on which any predicate holds.
pub fn follow_pct(h: &[JointAction], preds: &[PathPredicate], window: (u32, u32)) -> Result<f64> {
    let (lo, hi) = window;
    if lo == 0 || lo > hi || hi as usize > h.len() {
        return Err(Error::EmptyWindow(format!(
            "window {lo}..={hi} over {} rounds",
            h.len()
        )));
    }
    let ind = follow_indicators(h, preds);
    let hits = ind[lo as usize - 1..hi as usize].iter().filter(|&&b| b).count();
    Ok(100.0 * hits as f64 / (hi - lo + 1) as f64)
}

pub fn equilibrium_follow_pct(
    record: &MatchRecord,
    preds: &[PathPredicate],
    window: (u32, u32),
) -> Result<f64> {
    follow_pct(record.history()?.rounds(), preds, window)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// A strategy profile given as each player's own-view strategy.
#[derive(Clone, Debug)]
pub struct Profile {
    pub players: [StrategySpec; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakDistance {
    pub value: f64,
    pub tail_bound: f64,
}

/// `sum_{t <= k_max} 2^-t TV(mu_t, nu_t)` over length-`t` prefix distributions, by
/// exact enumeration of the prefix tree.
pub fn truncated_weak_distance(
    game: &GameSpec,
    mu: &Profile,
    nu: &Profile,
    k_max: u32,
) -> Result<WeakDistance> {
    let joint = game.joint_actions();
    let leaves = (joint.len() as u64).checked_pow(k_max);
    if leaves.is_none_or(|n| n > WEAK_DISTANCE_BUDGET) {
        return Err(Error::BudgetExceeded(format!(
            "{}^{k_max} prefixes exceed the enumeration budget",
            joint.len()
        )));
    }
    struct Node {
        p: [f64; 2],
        states: [[MachineState; 2]; 2],
    }
    let profiles = [mu, nu];
    let init = |pr: &Profile| [pr.players[0].initial_state(), pr.players[1].initial_state()];
    let mut level = vec![Node {
        p: [1.0, 1.0],
        states: [init(mu), init(nu)],
    }];
    let mut value = 0.0;
    let mut weight = 1.0;
    for _ in 1..=k_max {
        let mut next = Vec::new();
        let mut tv = 0.0;
        for node in &level {
            let dists: Vec<[MixedAction; 2]> = (0..2)
                .map(|m| {
                    [
                        profiles[m].players[0].distribution(&node.states[m][0]),
                        profiles[m].players[1].distribution(&node.states[m][1]),
                    ]
                })
                .collect();
            for &a in &joint {
                let p = [0, 1].map(|m| node.p[m] * dists[m][0].prob(a.0) * dists[m][1].prob(a.1));
                if p[0] == 0.0 && p[1] == 0.0 {
                    continue;
                }
                tv += (p[0] - p[1]).abs();
                let states = [0, 1].map(|m| {
                    [
                        profiles[m].players[0].advance(&node.states[m][0], a),
                        profiles[m].players[1].advance(&node.states[m][1], a.swap()),
                    ]
                });
                next.push(Node { p, states });
            }
        }
        weight *= 0.5;
        value += weight * 0.5 * tv;
        level = next;
    }
    Ok(WeakDistance {
        value,
        tail_bound: 0.5f64.powi(k_max as i32),
    })
}

/// Largest profitable stage deviation per round, from recorded mixed actions.
/// `None` where a player's mixed action was not recorded.
pub fn stage_nash_trace(record: &MatchRecord, eps: f64) -> Vec<Option<bool>> {
    let game = record.config().game.spec();
    record
        .rounds
        .iter()
        .map(|r| {
            let a = MixedAction::new(r.players[0].mixed.clone()?).ok()?;
            let b = MixedAction::new(r.players[1].mixed.clone()?).ok()?;
            Some(game.is_stage_epsilon_nash(&[a, b], eps))
        })
        .collect()
}

fn kl(p: &MixedAction, q: &MixedAction) -> f64 {
    p.probs()
        .iter()
        .zip(q.probs())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_CLIP)).ln())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateKl {
    /// Joint state of the true and alternative strategy.
    pub state: String,
    pub frequency: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlEntry {
    pub label: String,
    /// `sum_s freq(s) KL(f(s) || g(s))` over visited states.
    pub average: f64,
    pub per_state: Vec<StateKl>,
    /// Average below the separation threshold.
    pub below_threshold: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub true_label: String,
    pub rounds: usize,
    pub threshold: f64,
    pub entries: Vec<KlEntry>,
}

fn state_key(a: CanonicalState, b: CanonicalState) -> String {
    format!("{a:?}|{b:?}")
}

/// Whether `f` and `g` prescribe different play at some reachable joint state not in `visited`.
fn differs_off_path(f: &StrategySpec, g: &StrategySpec, visited: &BTreeMap<String, usize>) -> bool {
    const CAP: usize = 4096;
    let mut seen: HashMap<(CanonicalState, CanonicalState), ()> = HashMap::new();
    let mut queue = VecDeque::new();
    let s0 = (f.initial_state(), g.initial_state());
    seen.insert((f.canonical(&s0.0), g.canonical(&s0.1)), ());
    queue.push_back(s0);
    while let Some((sf, sg)) = queue.pop_front() {
        let key = state_key(f.canonical(&sf), g.canonical(&sg));
        if !visited.contains_key(&key) && f.distribution(&sf) != g.distribution(&sg) {
            return true;
        }
        if seen.len() >= CAP {
            continue;
        }
        for own in 0..f.n_actions as u8 {
            for opp in 0..f.n_opp_actions as u8 {
                let a = JointAction::new(own, opp);
                let (nf, ng) = (f.advance(&sf, a), g.advance(&sg, a));
                let k = (f.canonical(&nf), g.canonical(&ng));
                if seen.insert(k, ()).is_none() {
                    queue.push_back((nf, ng));
                }
            }
        }
    }
    false
}

/// KL separation of each alternative from `truth` along a realized own-view history of
/// the strategy's owner, weighted by empirical joint-state frequencies.
pub fn kl_state_report(
    truth: &StrategySpec,
    alts: &[StrategySpec],
    owner_view: &History,
    threshold: f64,
) -> KlReport {
    let n = owner_view.len();
    let entries = alts
        .iter()
        .map(|g| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            let mut kls: BTreeMap<String, f64> = BTreeMap::new();
            let (mut sf, mut sg) = (truth.initial_state(), g.initial_state());
            for &a in owner_view.rounds() {
                let key = state_key(truth.canonical(&sf), g.canonical(&sg));
                *counts.entry(key.clone()).or_default() += 1;
                kls.entry(key)
                    .or_insert_with(|| kl(&truth.distribution(&sf), &g.distribution(&sg)));
                sf = truth.advance(&sf, a);
                sg = g.advance(&sg, a);
            }
            let per_state: Vec<StateKl> = counts
                .iter()
                .map(|(k, &c)| StateKl {
                    state: k.clone(),
                    frequency: c as f64 / n.max(1) as f64,
                    kl: kls[k],
                })
                .collect();
            let average = per_state.iter().map(|s| s.frequency * s.kl).sum();
            let note = (average == 0.0 && differs_off_path(truth, g, &counts))
                .then(|| "differs only at unvisited states".to_string());
            KlEntry {
                label: g.label.clone(),
                average,
                per_state,
                below_threshold: average < threshold,
                note,
            }
        })
        .collect();
    KlReport {
        true_label: truth.label.clone(),
        rounds: n,
        threshold,
        entries,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub round: u32,
    /// Collision complement of each player's label posterior.
    pub d: [Option<f64>; 2],
    /// Posterior mass off the true payoff matrix, unknown-payoff runs only.
    pub delta: [Option<f64>; 2],
}

pub fn dt_and_delta_trace(record: &MatchRecord) -> Vec<DiagnosticRow> {
    record
        .rounds
        .iter()
        .map(|r| DiagnosticRow {
            round: r.round,
            d: [0, 1].map(|i| r.players[i].posterior.as_ref().map(|p| p.collision_complement)),
            delta: [0, 1].map(|i| r.players[i].payoff.as_ref().map(|p| p.delta)),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitCount {
    /// Own-view action names `(own, opponent)`.
    pub actions: [String; 2],
    pub count: usize,
    pub frequency: f64,
}

/// Per-player visit frequencies of own-view joint actions, to confirm every payoff
/// entry is being sampled.
pub fn visit_report(record: &MatchRecord) -> Result<[Vec<VisitCount>; 2]> {
    let game = record.config().game.spec();
    let h = record.history()?;
    let n = h.len().max(1) as f64;
    Ok(Role::BOTH.map(|role| {
        let mut counts: BTreeMap<JointAction, usize> = BTreeMap::new();
        for a in game.joint_actions() {
            counts.insert(a.view(role), 0);
        }
        for &a in h.rounds() {
            *counts.entry(a.view(role)).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(a, count)| VisitCount {
                actions: [
                    game.action_name(role, a.0).to_string(),
                    game.action_name(role.other(), a.1).to_string(),
                ],
                count,
                frequency: count as f64 / n,
            })
            .collect()
    }))
}
