//! Exact check of the posterior-sampling gap bound on a small finite game.
//!
//! A 2x2 game with payoffs in [0, 1], an opponent menu of deterministic one-memory
//! strategies and a finite horizon, evaluated with exact rationals. Values use the
//! normalized objective `(1-l) sum_k l^k u_k`, so they lie in [0, 1].

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// A deterministic strategy with memory one, from the owner's view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetStrategy {
    pub first: u8,
    /// `react[own_last][opp_last]`.
    pub react: [[u8; 2]; 2],
}

impl DetStrategy {
    pub fn act(&self, last: Option<(u8, u8)>) -> u8 {
        match last {
            None => self.first,
            Some((o, p)) => self.react[o as usize][p as usize],
        }
    }
}

pub const ALLC: DetStrategy = DetStrategy {
    first: 0,
    react: [[0, 0], [0, 0]],
};
pub const ALLD: DetStrategy = DetStrategy {
    first: 1,
    react: [[1, 1], [1, 1]],
};
pub const TFT: DetStrategy = DetStrategy {
    first: 0,
    react: [[0, 1], [0, 1]],
};

pub struct GapHarness {
    /// Responder payoffs `u[own][opp]` in [0, 1].
    pub u: [[Q; 2]; 2],
    pub menu: Vec<DetStrategy>,
    pub horizon: usize,
    pub lambda: Q,
}

/// A responder policy: action for every own-view history of length < horizon.
type Policy = std::collections::HashMap<Vec<(u8, u8)>, u8>;

#[derive(Clone, Debug, PartialEq)]
pub struct GapOutcome {
    pub sup_value: Q,
    pub ps_value: Q,
    pub collision: Q,
}

impl GapOutcome {
    pub fn holds(&self) -> bool {
        self.ps_value >= self.sup_value.clone() - self.collision.clone()
    }
}

impl GapHarness {
    fn opp_action(&self, g: &DetStrategy, h: &[(u8, u8)]) -> u8 {
        // the opponent sees (its action, our action)
        g.act(h.last().map(|&(a, b)| (b, a)))
    }

    fn stage_weight(&self, k: usize) -> Q {
        let mut w = Q::one() - self.lambda.clone();
        for _ in 0..k {
            w *= self.lambda.clone();
        }
        w
    }

    /// Value of `policy` against a fixed deterministic opponent.
    pub fn value(&self, policy: &Policy, g: &DetStrategy) -> Q {
        let mut h: Vec<(u8, u8)> = Vec::new();
        let mut total = Q::zero();
        for k in 0..self.horizon {
            let a = policy[&h];
            let b = self.opp_action(g, &h);
            total += self.stage_weight(k) * self.u[a as usize][b as usize].clone();
            h.push((a, b));
        }
        total
    }

    /// Best response to a single opponent by backward induction over the full
    /// history tree (ties to action 0).
    pub fn best_response(&self, g: &DetStrategy) -> Policy {
        let mut policy = Policy::new();
        self.br_rec(g, &mut Vec::new(), &mut policy);
        policy
    }

    fn br_rec(&self, g: &DetStrategy, h: &mut Vec<(u8, u8)>, policy: &mut Policy) -> Q {
        let k = h.len();
        if k == self.horizon {
            return Q::zero();
        }
        let b = self.opp_action(g, h);
        let mut vals = Vec::with_capacity(2);
        for a in 0..2u8 {
            h.push((a, b));
            let cont = self.br_rec(g, h, policy);
            h.pop();
            vals.push(self.stage_weight(k) * self.u[a as usize][b as usize].clone() + cont);
        }
        // off-path histories also need actions; fill them with the same recursion
        for a in 0..2u8 {
            let other = 1 - b;
            h.push((a, other));
            self.br_rec(g, h, policy);
            h.pop();
        }
        let a = if vals[0] >= vals[1] { 0 } else { 1 };
        policy.insert(h.clone(), a);
        vals[a as usize].clone()
    }

    /// Bayes-optimal value against the posterior mixture, by dynamic programming
    /// over histories with unnormalized consistent mass.
    pub fn sup_value(&self, p: &[Q]) -> Q {
        let alive: Vec<usize> = (0..self.menu.len()).filter(|&i| !p[i].is_zero()).collect();
        self.sup_rec(p, &alive, &mut Vec::new())
    }

    fn sup_rec(&self, p: &[Q], alive: &[usize], h: &mut Vec<(u8, u8)>) -> Q {
        let k = h.len();
        if k == self.horizon || alive.is_empty() {
            return Q::zero();
        }
        let mut best: Option<Q> = None;
        for a in 0..2u8 {
            let mut total = Q::zero();
            for b in 0..2u8 {
                let next: Vec<usize> = alive
                    .iter()
                    .copied()
                    .filter(|&i| self.opp_action(&self.menu[i], h) == b)
                    .collect();
                if next.is_empty() {
                    continue;
                }
                let mass: Q = next.iter().map(|&i| p[i].clone()).sum();
                h.push((a, b));
                let cont = self.sup_rec(p, &next, h);
                h.pop();
                total += mass * self.stage_weight(k) * self.u[a as usize][b as usize].clone() + cont;
            }
            if best.as_ref().is_none_or(|x| total > *x) {
                best = Some(total);
            }
        }
        best.expect("two actions")
    }

    /// Value of committing to the best response to one posterior draw.
    pub fn ps_value(&self, p: &[Q]) -> Q {
        let brs: Vec<Policy> = self.menu.iter().map(|g| self.best_response(g)).collect();
        let mut total = Q::zero();
        for (i, gi) in self.menu.iter().enumerate() {
            for (j, br) in brs.iter().enumerate() {
                if p[i].is_zero() || p[j].is_zero() {
                    continue;
                }
                total += p[i].clone() * p[j].clone() * self.value(br, gi);
            }
        }
        total
    }

    pub fn check(&self, p: &[Q]) -> GapOutcome {
        let collision = Q::one() - p.iter().map(|x| x.clone() * x.clone()).sum::<Q>();
        GapOutcome {
            sup_value: self.sup_value(p),
            ps_value: self.ps_value(p),
            collision,
        }
    }
}

/// PD-shaped harness: payoffs `(u - min)/(max - min)` of the PD matrix, menu
/// `{allc, alld, tft}`, horizon 3, `l = 9/10`.
pub fn pd_harness() -> GapHarness {
    GapHarness {
        u: [[q(8, 10), q(0, 1)], [q(1, 1), q(5, 10)]],
        menu: vec![ALLC, ALLD, TFT],
        horizon: 3,
        lambda: q(9, 10),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_posterior_has_no_gap() {
        let h = pd_harness();
        for i in 0..3 {
            let mut p = vec![Q::zero(); 3];
            p[i] = Q::one();
            let out = h.check(&p);
            assert_eq!(out.collision, Q::zero());
            assert_eq!(out.ps_value, out.sup_value);
        }
    }

    #[test]
    fn best_response_to_alld_defects() {
        let h = pd_harness();
        let br = h.best_response(&ALLD);
        assert_eq!(br[&vec![]], 1);
        // (1-l)(0.5)(1 + l + l^2)
        let expect = q(1, 10) * q(5, 10) * (q(1, 1) + q(9, 10) + q(81, 100));
        assert_eq!(h.value(&br, &ALLD), expect);
    }

    #[test]
    fn uniform_posterior_satisfies_bound() {
        let h = pd_harness();
        let p = vec![q(1, 3), q(1, 3), q(1, 3)];
        let out = h.check(&p);
        assert!(out.holds());
        assert!(out.sup_value >= out.ps_value);
    }
}
