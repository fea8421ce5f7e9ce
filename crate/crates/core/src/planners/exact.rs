//! Exact best response to a finite-state opponent by value iteration.
//!
//! The opponent's folded state is projected to its canonical form, which is finite for
//! every menu strategy (suffix plus trigger bit, punishment counter or parity). The
//! best response is stationary on that state space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Action, JointAction, MixedAction, PayoffTable, TIE_TOL};
use crate::strategy::{CanonicalState, MachineState, StrategySpec};

/// Hard cap on reachable canonical states.
const MAX_STATES: usize = 4096;

/// The opponent as a finite automaton seen from the responder's side.
#[derive(Clone, Debug)]
pub struct OpponentModel {
    pub states: Vec<CanonicalState>,
    /// Opponent's mixed action in each state.
    pub dist: Vec<MixedAction>,
    /// `next[s][own][opp]`: successor after the responder plays `own` and the opponent `opp`.
    pub next: Vec<Vec<Vec<usize>>>,
    pub n_own: usize,
}

impl OpponentModel {
    /// Enumerates the canonical states reachable from round 1 under any play.
    pub fn build(opp: &StrategySpec, n_own: usize) -> Result<Self> {
        let mut index: HashMap<CanonicalState, usize> = HashMap::new();
        let mut reps: Vec<MachineState> = Vec::new();
        let start = opp.initial_state();
        index.insert(opp.canonical(&start), 0);
        reps.push(start);
        let mut next = Vec::new();
        let mut i = 0;
        while i < reps.len() {
            let rep = reps[i];
            let mut rows = vec![vec![0; opp.n_actions]; n_own];
            for (own, row) in rows.iter_mut().enumerate() {
                for (b, slot) in row.iter_mut().enumerate() {
                    // the opponent folds its own view: (its action, our action)
                    let succ = opp.advance(&rep, JointAction::new(b as u8, own as u8));
                    let key = opp.canonical(&succ);
                    let j = match index.get(&key) {
                        Some(&j) => j,
                        None => {
                            if reps.len() >= MAX_STATES {
                                return Err(Error::BudgetExceeded(format!(
                                    "{} has more than {MAX_STATES} states",
                                    opp.label
                                )));
                            }
                            index.insert(key, reps.len());
                            reps.push(succ);
                            reps.len() - 1
                        }
                    };
                    *slot = j;
                }
            }
            next.push(rows);
            i += 1;
        }
        Ok(OpponentModel {
            states: reps.iter().map(|r| opp.canonical(r)).collect(),
            dist: reps.iter().map(|r| opp.distribution(r)).collect(),
            next,
            n_own,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// One application of the Bellman operator with stage payoffs `u` (already scaled):
/// `(Tv)(s) = max_a sum_b q(b|s) [(1-gamma) u(a,b) + gamma v(s')]`.
///
/// Returns the new values and the lowest-index maximizer per state.
pub fn bellman(model: &OpponentModel, u: &PayoffTable, gamma: f64, v: &[f64]) -> (Vec<f64>, Vec<Action>) {
    let mut out = Vec::with_capacity(model.len());
    let mut policy = Vec::with_capacity(model.len());
    for s in 0..model.len() {
        let q = model.dist[s].probs();
        let vals: Vec<f64> = (0..model.n_own)
            .map(|a| {
                q.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(b, &p)| {
                        let succ = model.next[s][a][b];
                        p * ((1.0 - gamma) * u.values[a][b] + gamma * v[succ])
                    })
                    .sum()
            })
            .collect();
        let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let arg = vals.iter().position(|&x| best - x <= TIE_TOL).unwrap_or(0);
        out.push(best);
        policy.push(Action(arg as u8));
    }
    (out, policy)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub states: Vec<CanonicalState>,
    /// Values of the normalized objective `(1-gamma) sum gamma^k u_norm`.
    pub values: Vec<f64>,
    /// The same values mapped back to raw payoff units (per-period average scale).
    pub raw_values: Vec<f64>,
    pub policy: Vec<Action>,
    pub residual: f64,
    pub iterations: usize,
}

impl ValueFunction {
    /// Value and action at the round-1 state.
    pub fn initial(&self) -> (f64, Action) {
        (self.raw_values[0], self.policy[0])
    }

    pub fn policy_dist(&self, n_own: usize) -> Vec<MixedAction> {
        self.policy.iter().map(|&a| MixedAction::point(n_own, a)).collect()
    }
}

/// Solves `v = (1-gamma) u_pi + gamma P_pi v` by Gaussian elimination.
/// Returns `None` for large state spaces or a singular system.
pub fn evaluate_policy(
    model: &OpponentModel,
    u: &PayoffTable,
    gamma: f64,
    policy: &[Action],
) -> Option<Vec<f64>> {
    let n = model.len();
    if n > 256 {
        return None;
    }
    let mut a = vec![vec![0.0; n + 1]; n];
    for s in 0..n {
        let act = policy[s].index();
        a[s][s] += 1.0;
        for (b, &p) in model.dist[s].probs().iter().enumerate() {
            if p > 0.0 {
                a[s][model.next[s][act][b]] -= gamma * p;
                a[s][n] += p * (1.0 - gamma) * u.values[act][b];
            }
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        for row in 0..n {
            if row != col && a[row][col] != 0.0 {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Affine map of `u` onto [0, 1]; returns the map's `(min, range)`.
pub fn normalize(u: &PayoffTable) -> (PayoffTable, f64, f64) {
    let lo = u.min();
    let range = u.max() - lo;
    let values = u
        .values
        .iter()
        .map(|row| {
            row.iter()
                .map(|x| if range > 0.0 { (x - lo) / range } else { 0.0 })
                .collect()
        })
        .collect();
    (PayoffTable { values }, lo, range)
}

/// Value iteration against `opp` until the sup-norm residual is at most `tol`.
pub fn exact_best_response(
    u: &PayoffTable,
    opp: &StrategySpec,
    gamma: f64,
    tol: f64,
) -> Result<ValueFunction> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!(
            "value iteration needs 0 < gamma < 1, got {gamma}"
        )));
    }
    if u.num_opp() != opp.n_actions {
        return Err(Error::Config(format!(
            "payoff table has {} opponent actions, {} plays {}",
            u.num_opp(),
            opp.label,
            opp.n_actions
        )));
    }
    let model = OpponentModel::build(opp, u.num_own())?;
    let (un, lo, range) = normalize(u);
    let mut v = vec![0.0; model.len()];
    let mut iterations = 0;
    loop {
        let (nv, _) = bellman(&model, &un, gamma, &v);
        let residual = nv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = nv;
        iterations += 1;
        if residual <= tol {
            // evaluate the greedy policy exactly; keeps it only if it is still a fixed point
            let (_, greedy) = bellman(&model, &un, gamma, &v);
            if let Some(exact) = evaluate_policy(&model, &un, gamma, &greedy) {
                let (check, _) = bellman(&model, &un, gamma, &exact);
                if check.iter().zip(&exact).all(|(a, b)| (a - b).abs() <= tol) {
                    v = exact;
                }
            }
            let (check, policy) = bellman(&model, &un, gamma, &v);
            let residual = check
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            return Ok(ValueFunction {
                states: model.states.clone(),
                raw_values: v.iter().map(|x| lo + range * x).collect(),
                values: v,
                policy,
                residual,
                iterations,
            });
        }
    }
}
