//! Stage games, joint actions, histories and one-shot best responses.
//!
//! Joint actions are role-ordered `(player 1, player 2)` in the public history and
//! own-view ordered `(self, opponent)` when handed to a strategy. The only place the
//! order flips is [`JointAction::swap`] / [`History::swapped`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when collecting best-response sets.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub u8);

impl Action {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    First,
    Second,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::First, Role::Second];

    pub fn index(self) -> usize {
        match self {
            Role::First => 0,
            Role::Second => 1,
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::First => Role::Second,
            Role::Second => Role::First,
        }
    }

    pub fn from_index(i: usize) -> Role {
        if i == 0 {
            Role::First
        } else {
            Role::Second
        }
    }
}

/// Pair of actions. Whether the pair is role-ordered or own-view ordered is
/// determined by where it lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction(pub Action, pub Action);

impl JointAction {
    pub fn new(a: u8, b: u8) -> Self {
        JointAction(Action(a), Action(b))
    }

    pub fn swap(self) -> Self {
        JointAction(self.1, self.0)
    }

    /// Own-view pair for `role` from a role-ordered pair.
    pub fn view(self, role: Role) -> Self {
        match role {
            Role::First => self,
            Role::Second => self.swap(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct History {
    rounds: Vec<JointAction>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rounds(rounds: Vec<JointAction>) -> Self {
        Self { rounds }
    }

    pub fn rounds(&self) -> &[JointAction] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn push(&mut self, a: JointAction) {
        self.rounds.push(a);
    }

    pub fn last(&self) -> Option<JointAction> {
        self.rounds.last().copied()
    }

    /// Every round with its components swapped.
    pub fn swapped(&self) -> History {
        History {
            rounds: self.rounds.iter().map(|a| a.swap()).collect(),
        }
    }

    /// Own-view history for `role` from a role-ordered public history.
    pub fn view(&self, role: Role) -> History {
        match role {
            Role::First => self.clone(),
            Role::Second => self.swapped(),
        }
    }
}

impl From<Vec<JointAction>> for History {
    fn from(rounds: Vec<JointAction>) -> Self {
        History::from_rounds(rounds)
    }
}

/// A distribution over one role's actions, indexed by action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixedAction(Vec<f64>);

impl MixedAction {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidMixedAction("empty support".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidMixedAction(format!("{probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMixedAction(format!("sums to {total}")));
        }
        Ok(MixedAction(probs))
    }

    pub fn point(n: usize, a: Action) -> Self {
        let mut probs = vec![0.0; n];
        probs[a.index()] = 1.0;
        MixedAction(probs)
    }

    pub fn uniform(n: usize) -> Self {
        MixedAction(vec![1.0 / n as f64; n])
    }

    /// Binary distribution with `p` on action 0.
    pub fn binary(p: f64) -> Self {
        MixedAction(vec![p, 1.0 - p])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn prob(&self, a: Action) -> f64 {
        self.0.get(a.index()).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_point_mass(&self) -> bool {
        self.0.contains(&1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Benchmark {
    #[serde(rename = "BoS")]
    Bos,
    #[serde(rename = "PD")]
    Pd,
    Promo,
    Samaritan,
    Lemons,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Bos,
        Benchmark::Pd,
        Benchmark::Promo,
        Benchmark::Samaritan,
        Benchmark::Lemons,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Bos => "BoS",
            Benchmark::Pd => "PD",
            Benchmark::Promo => "Promo",
            Benchmark::Samaritan => "Samaritan",
            Benchmark::Lemons => "Lemons",
        }
    }

    pub fn from_name(name: &str) -> Option<Benchmark> {
        let lower = name.to_ascii_lowercase();
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name().to_ascii_lowercase() == lower)
    }

    /// Name used in prompts ("Samaritan's dilemma" for the Samaritan game).
    pub fn display_name(self) -> &'static str {
        match self {
            Benchmark::Samaritan => "Samaritan's dilemma",
            b => b.name(),
        }
    }

    pub fn spec(self) -> GameSpec {
        let (roles, actions, payoff): ([&str; 2], [&[&str]; 2], Vec<Vec<[f64; 2]>>) = match self {
            Benchmark::Bos => (
                ["Player 1", "Player 2"],
                [&["J", "F"], &["J", "F"]],
                vec![
                    vec![[10.0, 7.0], [0.0, 0.0]],
                    vec![[0.0, 0.0], [7.0, 10.0]],
                ],
            ),
            Benchmark::Pd => (
                ["Player 1", "Player 2"],
                [&["J", "F"], &["J", "F"]],
                vec![
                    vec![[3.0, 3.0], [-5.0, 5.0]],
                    vec![[5.0, -5.0], [0.0, 0.0]],
                ],
            ),
            Benchmark::Promo => (
                ["Player 1", "Player 2"],
                [&["R", "P", "Z"], &["R", "P", "Z"]],
                vec![
                    vec![[1.0, 1.0], [-1.0, 4.0], [-2.0, -2.0]],
                    vec![[4.0, -1.0], [0.0, 0.0], [-2.0, -2.0]],
                    vec![[-2.0, -2.0], [-2.0, -2.0], [-2.0, -2.0]],
                ],
            ),
            Benchmark::Samaritan => (
                ["Helper", "Recipient"],
                [&["H", "N"], &["W", "S"]],
                vec![
                    vec![[2.0, -1.0], [0.0, 0.0]],
                    vec![[1.0, -2.0], [-1.0, -3.0]],
                ],
            ),
            Benchmark::Lemons => (
                ["Seller", "Buyer"],
                [&["HQ", "LQ"], &["B", "D"]],
                vec![
                    vec![[3.0, 3.0], [-1.0, 0.0]],
                    vec![[4.0, -1.0], [0.0, 0.0]],
                ],
            ),
        };
        let roles = roles.map(String::from);
        let actions = actions.map(|a| a.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        GameSpec::new(self.name(), roles, actions, payoff, None)
            .expect("built-in game tables are well formed")
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A two-player normal-form stage game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub name: String,
    pub roles: [String; 2],
    pub actions: [Vec<String>; 2],
    /// `payoff[a1][a2] = [u1, u2]`.
    pub payoff: Vec<Vec<[f64; 2]>>,
    pub delta_min: f64,
}

/// Declarative game definition. `delta_min` is derived when omitted.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct GameConfig {
    pub name: String,
    #[serde(default = "default_roles")]
    pub roles: [String; 2],
    pub actions: [Vec<String>; 2],
    pub payoff: Vec<Vec<[f64; 2]>>,
    pub delta_min: Option<f64>,
}

fn default_roles() -> [String; 2] {
    ["Player 1".to_string(), "Player 2".to_string()]
}

impl GameSpec {
    pub fn new(
        name: &str,
        roles: [String; 2],
        actions: [Vec<String>; 2],
        payoff: Vec<Vec<[f64; 2]>>,
        delta_min: Option<f64>,
    ) -> Result<Self> {
        if actions[0].is_empty() || actions[1].is_empty() {
            return Err(Error::Config(format!("{name}: empty action set")));
        }
        if actions.iter().any(|a| a.len() > u8::MAX as usize) {
            return Err(Error::Config(format!("{name}: too many actions")));
        }
        if payoff.len() != actions[0].len() || payoff.iter().any(|row| row.len() != actions[1].len()) {
            return Err(Error::Config(format!(
                "{name}: payoff matrix must be {}x{}",
                actions[0].len(),
                actions[1].len()
            )));
        }
        if payoff.iter().flatten().flatten().any(|u| !u.is_finite()) {
            return Err(Error::Config(format!("{name}: non-finite payoff")));
        }
        let mut game = GameSpec {
            name: name.to_string(),
            roles,
            actions,
            payoff,
            delta_min: 0.0,
        };
        let derived = game.derive_delta_min();
        game.delta_min = match delta_min {
            Some(d) if d > 0.0 => d,
            Some(d) => return Err(Error::Config(format!("{name}: delta_min {d} must be > 0"))),
            None => derived.ok_or_else(|| {
                Error::Config(format!("{name}: every player's payoffs are constant"))
            })?,
        };
        Ok(game)
    }

    pub fn from_config(cfg: GameConfig) -> Result<Self> {
        GameSpec::new(&cfg.name, cfg.roles, cfg.actions, cfg.payoff, cfg.delta_min)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        GameSpec::from_config(toml::from_str(s)?)
    }

    pub fn benchmark(&self) -> Option<Benchmark> {
        Benchmark::from_name(&self.name)
    }

    pub fn num_actions(&self, role: Role) -> usize {
        self.actions[role.index()].len()
    }

    pub fn action_name(&self, role: Role, a: Action) -> &str {
        &self.actions[role.index()][a.index()]
    }

    pub fn action_index(&self, role: Role, name: &str) -> Result<Action> {
        self.actions[role.index()]
            .iter()
            .position(|n| n == name)
            .map(|i| Action(i as u8))
            .ok_or_else(|| Error::InvalidAction {
                game: self.name.clone(),
                role: role.index(),
                action: name.to_string(),
            })
    }

    pub fn is_legal(&self, a: JointAction) -> bool {
        a.0.index() < self.num_actions(Role::First) && a.1.index() < self.num_actions(Role::Second)
    }

    /// Payoff pair for a role-ordered joint action.
    pub fn payoff(&self, a: JointAction) -> Result<[f64; 2]> {
        if !self.is_legal(a) {
            let role = if a.0.index() >= self.num_actions(Role::First) { 0 } else { 1 };
            let action = if role == 0 { a.0 } else { a.1 };
            return Err(Error::InvalidAction {
                game: self.name.clone(),
                role,
                action: action.0.to_string(),
            });
        }
        Ok(self.payoff[a.0.index()][a.1.index()])
    }

    /// `role`'s payoff for an own-view joint action `(own, opponent)`.
    pub fn own_payoff(&self, role: Role, own_view: JointAction) -> f64 {
        let a = own_view.view(role);
        self.payoff[a.0.index()][a.1.index()][role.index()]
    }

    /// `role`'s payoff table indexed `[own][opponent]`.
    pub fn own_payoffs(&self, role: Role) -> PayoffTable {
        let n_own = self.num_actions(role);
        let n_opp = self.num_actions(role.other());
        let values = (0..n_own)
            .map(|i| {
                (0..n_opp)
                    .map(|j| self.own_payoff(role, JointAction::new(i as u8, j as u8)))
                    .collect()
            })
            .collect();
        PayoffTable { values }
    }

    /// Minimum over players of the smallest nonzero gap between that player's payoff values.
    pub fn derive_delta_min(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for p in 0..2 {
            let vals: Vec<f64> = self.payoff.iter().flatten().map(|u| u[p]).collect();
            for (i, a) in vals.iter().enumerate() {
                for b in &vals[i + 1..] {
                    let d = (a - b).abs();
                    if d > 0.0 && best.is_none_or(|x| d < x) {
                        best = Some(d);
                    }
                }
            }
        }
        best
    }

    pub fn joint_actions(&self) -> Vec<JointAction> {
        let mut out = Vec::new();
        for i in 0..self.num_actions(Role::First) {
            for j in 0..self.num_actions(Role::Second) {
                out.push(JointAction::new(i as u8, j as u8));
            }
        }
        out
    }

    pub fn parse_joint(&self, names: &[String; 2]) -> Result<JointAction> {
        Ok(JointAction(
            self.action_index(Role::First, &names[0])?,
            self.action_index(Role::Second, &names[1])?,
        ))
    }

    pub fn joint_names(&self, a: JointAction) -> [String; 2] {
        [
            self.action_name(Role::First, a.0).to_string(),
            self.action_name(Role::Second, a.1).to_string(),
        ]
    }

    /// Expected payoff to `role` from mixed `alpha` against opponent mix `q`.
    pub fn expected_payoff(&self, role: Role, alpha: &MixedAction, q: &MixedAction) -> f64 {
        let table = self.own_payoffs(role);
        table.expected(alpha, q)
    }

    /// All pure best responses of `role` to `q`, with the maximal expected payoff.
    pub fn stage_best_responses(&self, role: Role, q: &MixedAction) -> (Vec<Action>, f64) {
        self.own_payoffs(role).best_responses(q)
    }

    /// Largest unilateral gain available to any player at `profile`.
    pub fn max_deviation_gain(&self, profile: &[MixedAction; 2]) -> f64 {
        Role::BOTH
            .iter()
            .map(|&r| {
                let own = &profile[r.index()];
                let opp = &profile[r.other().index()];
                let (_, best) = self.stage_best_responses(r, opp);
                best - self.expected_payoff(r, own, opp)
            })
            .fold(0.0, f64::max)
    }

    pub fn is_stage_epsilon_nash(&self, profile: &[MixedAction; 2], eps: f64) -> bool {
        self.max_deviation_gain(profile) <= eps + TIE_TOL
    }
}

/// One player's stage payoffs indexed `[own action][opponent action]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    pub values: Vec<Vec<f64>>,
}

impl PayoffTable {
    pub fn get(&self, own_view: JointAction) -> f64 {
        self.values[own_view.0.index()][own_view.1.index()]
    }

    pub fn num_own(&self) -> usize {
        self.values.len()
    }

    pub fn num_opp(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn expected(&self, alpha: &MixedAction, q: &MixedAction) -> f64 {
        let mut total = 0.0;
        for (i, pa) in alpha.probs().iter().enumerate() {
            for (j, pq) in q.probs().iter().enumerate() {
                total += pa * pq * self.values[i][j];
            }
        }
        total
    }

    pub fn action_values(&self, q: &MixedAction) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| row.iter().zip(q.probs()).map(|(u, p)| u * p).sum())
            .collect()
    }

    pub fn best_responses(&self, q: &MixedAction) -> (Vec<Action>, f64) {
        let vals = self.action_values(q);
        let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let set = vals
            .iter()
            .enumerate()
            .filter(|(_, v)| best - **v <= TIE_TOL)
            .map(|(i, _)| Action(i as u8))
            .collect();
        (set, best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(a: u8, b: u8) -> JointAction {
        JointAction::new(a, b)
    }

    #[test]
    fn payoff_lookups() {
        assert_eq!(Benchmark::Pd.spec().payoff(j(0, 0)).unwrap(), [3.0, 3.0]);
        assert_eq!(Benchmark::Bos.spec().payoff(j(0, 1)).unwrap(), [0.0, 0.0]);
        let promo = Benchmark::Promo.spec();
        let pr = JointAction(
            promo.action_index(Role::First, "P").unwrap(),
            promo.action_index(Role::Second, "R").unwrap(),
        );
        assert_eq!(promo.payoff(pr).unwrap(), [4.0, -1.0]);
        assert!(matches!(
            Benchmark::Pd.spec().payoff(j(2, 0)),
            Err(Error::InvalidAction { .. })
        ));
    }

    #[test]
    fn delta_min_matches_pairwise_scan() {
        let expected = [2.0, 3.0, 1.0, 1.0, 1.0];
        for (b, d) in [
            Benchmark::Pd,
            Benchmark::Bos,
            Benchmark::Promo,
            Benchmark::Samaritan,
            Benchmark::Lemons,
        ]
        .iter()
        .zip(expected)
        {
            let g = b.spec();
            assert_eq!(g.delta_min, d, "{b}");
            // independent scan over every ordered pair of joint actions
            let mut scan = f64::INFINITY;
            for p in 0..2 {
                for a in g.joint_actions() {
                    for c in g.joint_actions() {
                        let x = (g.payoff(a).unwrap()[p] - g.payoff(c).unwrap()[p]).abs();
                        if x > 0.0 {
                            scan = scan.min(x);
                        }
                    }
                }
            }
            assert_eq!(scan, d);
        }
    }

    #[test]
    fn stage_best_response_examples() {
        let pd = Benchmark::Pd.spec();
        assert_eq!(
            pd.stage_best_responses(Role::First, &MixedAction::point(2, Action(0))),
            (vec![Action(1)], 5.0)
        );
        assert_eq!(
            pd.stage_best_responses(Role::First, &MixedAction::uniform(2)),
            (vec![Action(1)], 2.5)
        );
        let bos = Benchmark::Bos.spec();
        assert_eq!(
            bos.stage_best_responses(Role::First, &MixedAction::point(2, Action(0))),
            (vec![Action(0)], 10.0)
        );
    }

    #[test]
    fn stage_nash_examples() {
        let pd = Benchmark::Pd.spec();
        let f = MixedAction::point(2, Action(1));
        let c = MixedAction::point(2, Action(0));
        assert!(pd.is_stage_epsilon_nash(&[f.clone(), f], 0.0));
        assert!(!pd.is_stage_epsilon_nash(&[c.clone(), c.clone()], 0.0));
        assert!(pd.is_stage_epsilon_nash(&[c.clone(), c], 2.0));
    }

    #[test]
    fn config_roundtrip_derives_delta() {
        let g = GameSpec::from_toml_str(
            r#"
            name = "Chicken"
            actions = [["S", "D"], ["S", "D"]]
            payoff = [[[0, 0], [-1, 1]], [[1, -1], [-10, -10]]]
            "#,
        )
        .unwrap();
        assert_eq!(g.delta_min, 1.0);
        assert!(GameSpec::from_toml_str(
            r#"
            name = "Bad"
            actions = [["a"], ["b", "c"]]
            payoff = [[[0, 0]]]
            "#
        )
        .is_err());
    }

    #[test]
    fn mixed_action_validation() {
        assert!(MixedAction::new(vec![0.5, 0.5]).is_ok());
        assert!(MixedAction::new(vec![0.5, 0.6]).is_err());
        assert!(MixedAction::new(vec![-0.1, 1.1]).is_err());
    }
}
