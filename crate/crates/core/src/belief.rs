//! Posterior over an opponent's strategy menu.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Action, History, JointAction};
use crate::rng::sample_index;
use crate::strategy::{MachineState, StrategySpec};

pub const PROB_CLIP: f64 = 1e-6;
pub const MIN_TEMPERATURE: f64 = 1e-5;
/// Default prior tilt toward the designated label in collusive mode (ln 100).
pub const DEFAULT_PRIOR_BOOST: f64 = 4.605_170_185_988_092;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Clipped log-probability that `s` plays `observed` at state `state`.
///
/// Binary games clip the probability of action 0 and take its complement for action 1;
/// larger games clip the observed action's probability directly.
pub fn log_prob_at(s: &StrategySpec, state: &MachineState, observed: Action) -> f64 {
    let dist = s.distribution(state);
    if dist.len() == 2 {
        let p = clip(dist.probs()[0]);
        if observed == Action(0) {
            p.ln()
        } else {
            (1.0 - p).ln()
        }
    } else {
        clip(dist.prob(observed)).ln()
    }
}

/// Log-likelihood increment for round `u` given the opponent-view history of `u-1` rounds.
pub fn log_likelihood_increment(
    s: &StrategySpec,
    u: u32,
    opp_view_h: &History,
    observed: Action,
) -> Result<f64> {
    s.validate(u, opp_view_h)?;
    Ok(log_prob_at(s, &s.state_after(opp_view_h.rounds()), observed))
}

/// Total log-likelihood of an opponent-view history under `s`.
pub fn log_likelihood(s: &StrategySpec, opp_view_h: &History) -> f64 {
    let mut state = s.initial_state();
    let mut total = 0.0;
    for &a in opp_view_h.rounds() {
        total += log_prob_at(s, &state, a.0);
        state = s.advance(&state, a);
    }
    total
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Probability that two independent draws from `weights` differ.
pub fn collision_complement(weights: &[f64]) -> f64 {
    1.0 - weights.iter().map(|w| w * w).sum::<f64>()
}

/// Online likelihood posterior over an opponent menu.
///
/// Each menu entry carries its own folded state over the opponent-view history so an
/// update costs one distribution evaluation per label.
#[derive(Clone, Debug)]
pub struct LabelPosterior {
    menu: Vec<StrategySpec>,
    log_likelihoods: Vec<f64>,
    log_prior: Vec<f64>,
    states: Vec<MachineState>,
    temperature: f64,
}

impl LabelPosterior {
    pub fn new(menu: Vec<StrategySpec>, temperature: f64) -> Result<Self> {
        if menu.is_empty() {
            return Err(Error::Config("empty strategy menu".into()));
        }
        let n = menu.len();
        let states = menu.iter().map(|s| s.initial_state()).collect();
        Ok(LabelPosterior {
            menu,
            log_likelihoods: vec![0.0; n],
            log_prior: vec![0.0; n],
            states,
            temperature,
        })
    }

    /// Adds `boost` to the prior log-weight of `label`.
    pub fn with_prior_boost(mut self, label: &str, boost: f64) -> Result<Self> {
        let i = self.index_of(label)?;
        self.log_prior[i] += boost;
        Ok(self)
    }

    pub fn menu(&self) -> &[StrategySpec] {
        &self.menu
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.menu.iter().map(|s| s.label.as_str())
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.menu
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::NotFound(format!("label {label:?} not in menu")))
    }

    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    /// Temperature after flooring.
    pub fn temperature(&self) -> f64 {
        self.temperature.max(MIN_TEMPERATURE)
    }

    /// Rounds absorbed so far.
    pub fn rounds_seen(&self) -> u32 {
        self.states[0].round
    }

    /// Absorbs one round given as `(opponent action, own action)`.
    pub fn observe(&mut self, opp_view: JointAction) {
        for (i, s) in self.menu.iter().enumerate() {
            self.log_likelihoods[i] += log_prob_at(s, &self.states[i], opp_view.0);
            self.states[i] = s.advance(&self.states[i], opp_view);
        }
    }

    pub fn observe_all(&mut self, opp_view_h: &History) {
        for &a in opp_view_h.rounds() {
            self.observe(a);
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        let tau = self.temperature();
        let logits: Vec<f64> = self
            .log_likelihoods
            .iter()
            .zip(&self.log_prior)
            .map(|(l, p)| l / tau + p)
            .collect();
        softmax(&logits)
    }

    pub fn sample_index<G: Rng + ?Sized>(&self, rng: &mut G) -> usize {
        sample_index(&self.weights(), rng)
    }

    pub fn sample_label<G: Rng + ?Sized>(&self, rng: &mut G) -> &StrategySpec {
        &self.menu[self.sample_index(rng)]
    }

    pub fn collision_complement(&self) -> f64 {
        collision_complement(&self.weights())
    }

    /// Folded state of each menu entry over the absorbed history.
    pub fn states(&self) -> &[MachineState] {
        &self.states
    }

    pub fn snapshot(&self) -> PosteriorSnapshot {
        let weights = self.weights();
        PosteriorSnapshot {
            collision_complement: collision_complement(&weights),
            weights: self
                .menu
                .iter()
                .zip(weights)
                .map(|(s, w)| (s.label.clone(), w))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub weights: BTreeMap<String, f64>,
    pub collision_complement: f64,
}
