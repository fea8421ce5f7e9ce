//! Known-noise, unknown-mean payoff learning on a finite offset grid.
//!
//! Each joint action carries an independent posterior over offsets `k * sigma` from a
//! base matrix, so a full mean matrix is sampled by drawing one offset per entry.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::softmax;
use crate::game::{GameSpec, JointAction, PayoffTable, Role};
use crate::rng::sample_index;

/// Offset multipliers of sigma.
pub const OFFSET_GRID: [f64; 9] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
pub const TRUTH_INDEX: usize = 4;

pub fn sigma_for_game(game: &GameSpec) -> f64 {
    game.delta_min
}

/// One player's posterior over mean-payoff matrices, indexed own-view `[own][opp]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetPosterior {
    pub sigma: f64,
    pub base: PayoffTable,
    /// `log_weights[own][opp][k]`, unnormalized.
    log_weights: Vec<Vec<[f64; 9]>>,
    visits: Vec<Vec<u32>>,
}

impl OffsetPosterior {
    /// Uniform prior over the grid for every joint action.
    pub fn new(base: PayoffTable, sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        let log_weights = base
            .values
            .iter()
            .map(|row| vec![[0.0; 9]; row.len()])
            .collect();
        let visits = base.values.iter().map(|row| vec![0; row.len()]).collect();
        OffsetPosterior {
            sigma,
            base,
            log_weights,
            visits,
        }
    }

    pub fn for_player(game: &GameSpec, role: Role) -> Self {
        OffsetPosterior::new(game.own_payoffs(role), sigma_for_game(game))
    }

    /// Gaussian log-likelihood update for reward `r` observed at own-view `a`.
    pub fn update(&mut self, a: JointAction, r: f64) {
        let base = self.base.get(a);
        let s = self.sigma;
        let w = &mut self.log_weights[a.0.index()][a.1.index()];
        for (lw, k) in w.iter_mut().zip(OFFSET_GRID) {
            let mean = base + k * s;
            *lw -= (r - mean) * (r - mean) / (2.0 * s * s);
        }
        self.visits[a.0.index()][a.1.index()] += 1;
    }

    pub fn marginal(&self, a: JointAction) -> [f64; 9] {
        let w = softmax(&self.log_weights[a.0.index()][a.1.index()]);
        let mut out = [0.0; 9];
        out.copy_from_slice(&w);
        out
    }

    pub fn log_weights(&self, a: JointAction) -> &[f64; 9] {
        &self.log_weights[a.0.index()][a.1.index()]
    }

    pub fn visits(&self) -> &[Vec<u32>] {
        &self.visits
    }

    pub fn joint_actions(&self) -> impl Iterator<Item = JointAction> + '_ {
        self.base.values.iter().enumerate().flat_map(|(i, row)| {
            (0..row.len()).map(move |j| JointAction::new(i as u8, j as u8))
        })
    }

    /// Draws one offset per joint action, in row-major order.
    pub fn sample_mean_matrix<G: Rng + ?Sized>(&self, rng: &mut G) -> PayoffTable {
        let values = self
            .base
            .values
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &b)| {
                        let w = self.marginal(JointAction::new(i as u8, j as u8));
                        b + OFFSET_GRID[sample_index(&w, rng)] * self.sigma
                    })
                    .collect()
            })
            .collect();
        PayoffTable { values }
    }

    /// Posterior mean of every entry.
    pub fn mean_matrix(&self) -> PayoffTable {
        let values = self
            .base
            .values
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &b)| {
                        let w = self.marginal(JointAction::new(i as u8, j as u8));
                        b + self.sigma * w.iter().zip(OFFSET_GRID).map(|(p, k)| p * k).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        PayoffTable { values }
    }

    /// Posterior mass on the base matrix.
    pub fn truth_mass(&self) -> f64 {
        self.joint_actions()
            .map(|a| self.marginal(a)[TRUTH_INDEX])
            .product()
    }

    pub fn delta(&self) -> f64 {
        1.0 - self.truth_mass()
    }

    pub fn summary(&self) -> PayoffSummary {
        let argmax_offsets = self
            .base
            .values
            .iter()
            .enumerate()
            .map(|(i, row)| {
                (0..row.len())
                    .map(|j| {
                        let w = self.marginal(JointAction::new(i as u8, j as u8));
                        let best = (0..9)
                            .fold(0, |b, k| if w[k] > w[b] { k } else { b });
                        OFFSET_GRID[best]
                    })
                    .collect()
            })
            .collect();
        let truth_mass = self.truth_mass();
        PayoffSummary {
            argmax_offsets,
            truth_mass,
            delta: 1.0 - truth_mass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffSummary {
    /// Most likely offset (in units of sigma) per own-view joint action.
    pub argmax_offsets: Vec<Vec<f64>>,
    pub truth_mass: f64,
    pub delta: f64,
}
