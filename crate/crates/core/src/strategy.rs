//! Executable menu strategies.
//!
//! Every strategy is a small state machine whose state is recomputed by folding the
//! owner's own-view history, so evaluation is a pure function of `(t, h)`.
//! In binary games `p` is the probability of action 0 (J, C, H, W, HQ or B).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Action, Benchmark, History, JointAction, MixedAction, Role};
use crate::rng::sample_index;

/// Promo action indices.
pub const R: Action = Action(0);
pub const P: Action = Action(1);
pub const Z: Action = Action(2);

/// Rounds of Z after a detected deviation in the Promo punishment strategies.
pub const PUNISH_ROUNDS: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WinCond {
    /// Both players chose the same action index last round.
    Match,
    /// The opponent chose this action last round.
    OppIs(Action),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Rule {
    /// Same distribution every round.
    Fixed(Vec<f64>),
    /// `first` at t=1, then `hit` if the opponent's last action was `on`, else `miss`.
    React { first: f64, on: Action, hit: f64, miss: f64 },
    /// Repeat own last action when `win` holds, otherwise switch.
    WinStay { first: f64, win: WinCond },
    /// Repeat own last action after a match, otherwise randomize 50/50.
    Mlur { first: f64 },
    /// Action 0 on odd rounds when `odd_first`, on even rounds otherwise.
    Alternate { odd_first: bool },
    /// Action 0 until the opponent has ever played `trigger`, then action 1 forever.
    Grim { trigger: Action },
    /// Action 1 if the opponent played `trigger` in either of the last two rounds.
    Forgiving { trigger: Action },
    /// Promo alternation with a two-round Z punishment after each detected deviation.
    PhaseCycle { phase: u8 },
    /// Promo phase-0 alternation until the first deviation, then Z forever.
    PhaseGrim,
}

/// Folded history summary. Holds more than any single rule needs;
/// [`StrategySpec::canonical`] projects it to the part a rule depends on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MachineState {
    /// Rounds observed so far.
    pub round: u32,
    pub last: Option<JointAction>,
    pub prev: Option<JointAction>,
    pub triggered: bool,
    pub punish: u8,
}

/// Finite projection of a [`MachineState`] that determines current and future play.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CanonicalState {
    Stateless,
    Last(Option<JointAction>),
    LastOpp(Option<Action>),
    Parity(bool),
    Trigger(bool),
    Recent(bool, bool),
    Phase { odd_next: bool, punish: u8 },
    PhaseTrigger { odd_next: bool, triggered: bool },
}

/// Action prescribed on the Promo alternation for `phase` at round `t`.
pub fn phase_action(phase: u8, t: u32) -> Action {
    let odd = t % 2 == 1;
    if odd == (phase == 0) {
        P
    } else {
        R
    }
}

/// Own-view pair prescribed by the Promo path of `phase` at round `t`.
pub fn phase_pair(phase: u8, t: u32) -> JointAction {
    JointAction(phase_action(phase, t), phase_action(1 - phase, t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub label: String,
    pub description: String,
    /// Memory bound for pure suffix strategies; `None` when the rule keeps extra state.
    pub kappa: Option<usize>,
    /// Extra state carried beyond the suffix (trigger bit, parity, punishment counter).
    pub state_bits: u8,
    pub rule: Rule,
    pub n_actions: usize,
    pub n_opp_actions: usize,
}

fn bin(p: f64) -> Vec<f64> {
    vec![p, 1.0 - p]
}

impl StrategySpec {
    fn new(label: &str, description: &str, rule: Rule, n: usize) -> Self {
        let (kappa, state_bits) = match &rule {
            Rule::Fixed(_) => (Some(0), 0),
            Rule::React { .. } | Rule::WinStay { .. } | Rule::Mlur { .. } => (Some(1), 0),
            Rule::Forgiving { .. } => (Some(2), 0),
            Rule::Alternate { .. } => (None, 1),
            Rule::Grim { .. } => (None, 1),
            Rule::PhaseCycle { .. } => (None, 3),
            Rule::PhaseGrim => (None, 2),
        };
        StrategySpec {
            label: label.to_string(),
            description: description.to_string(),
            kappa,
            state_bits,
            rule,
            n_actions: n,
            n_opp_actions: n,
        }
    }

    pub fn initial_state(&self) -> MachineState {
        MachineState::default()
    }

    /// Folds one own-view joint action into the state.
    pub fn advance(&self, s: &MachineState, a: JointAction) -> MachineState {
        let t = s.round + 1;
        let mut next = MachineState {
            round: t,
            last: Some(a),
            prev: s.last,
            triggered: s.triggered,
            punish: s.punish,
        };
        match self.rule {
            Rule::Grim { trigger } => {
                if a.1 == trigger {
                    next.triggered = true;
                }
            }
            Rule::PhaseCycle { phase } => {
                if s.punish > 0 {
                    next.punish = s.punish - 1;
                } else if a != phase_pair(phase, t) {
                    next.punish = PUNISH_ROUNDS;
                }
            }
            Rule::PhaseGrim
                if !s.triggered && a != phase_pair(0, t) => {
                    next.triggered = true;
                }
            _ => {}
        }
        next
    }

    pub fn state_after(&self, h: &[JointAction]) -> MachineState {
        h.iter()
            .fold(self.initial_state(), |s, &a| self.advance(&s, a))
    }

    /// Distribution for round `s.round + 1`.
    pub fn distribution(&self, s: &MachineState) -> MixedAction {
        let t = s.round + 1;
        let probs = match &self.rule {
            Rule::Fixed(p) => p.clone(),
            Rule::React { first, on, hit, miss } => match s.last {
                None => bin(*first),
                Some(a) if a.1 == *on => bin(*hit),
                Some(_) => bin(*miss),
            },
            Rule::WinStay { first, win } => match s.last {
                None => bin(*first),
                Some(a) => {
                    let won = match win {
                        WinCond::Match => a.0 == a.1,
                        WinCond::OppIs(x) => a.1 == *x,
                    };
                    let repeat = a.0 == Action(0);
                    bin(if won == repeat { 1.0 } else { 0.0 })
                }
            },
            Rule::Mlur { first } => match s.last {
                None => bin(*first),
                Some(a) if a.0 == a.1 => bin(if a.0 == Action(0) { 1.0 } else { 0.0 }),
                Some(_) => bin(0.5),
            },
            Rule::Alternate { odd_first } => {
                let odd = t % 2 == 1;
                bin(if odd == *odd_first { 1.0 } else { 0.0 })
            }
            Rule::Grim { .. } => bin(if s.triggered { 0.0 } else { 1.0 }),
            Rule::Forgiving { trigger } => {
                let hit = [s.last, s.prev]
                    .iter()
                    .any(|a| a.is_some_and(|a| a.1 == *trigger));
                bin(if hit { 0.0 } else { 1.0 })
            }
            Rule::PhaseCycle { phase } => {
                if s.punish > 0 {
                    return MixedAction::point(3, Z);
                }
                return MixedAction::point(3, phase_action(*phase, t));
            }
            Rule::PhaseGrim => {
                if s.triggered {
                    return MixedAction::point(3, Z);
                }
                return MixedAction::point(3, phase_action(0, t));
            }
        };
        MixedAction::new(probs).expect("menu rules produce valid distributions")
    }

    /// Projection of `s` that determines all current and future behavior.
    pub fn canonical(&self, s: &MachineState) -> CanonicalState {
        let odd_next = (s.round + 1) % 2 == 1;
        match self.rule {
            Rule::Fixed(_) => CanonicalState::Stateless,
            Rule::React { .. } => CanonicalState::LastOpp(s.last.map(|a| a.1)),
            Rule::WinStay { .. } | Rule::Mlur { .. } => CanonicalState::Last(s.last),
            Rule::Alternate { .. } => CanonicalState::Parity(odd_next),
            Rule::Grim { .. } => CanonicalState::Trigger(s.triggered),
            Rule::Forgiving { trigger } => CanonicalState::Recent(
                s.last.is_some_and(|a| a.1 == trigger),
                s.prev.is_some_and(|a| a.1 == trigger),
            ),
            Rule::PhaseCycle { .. } => CanonicalState::Phase {
                odd_next,
                punish: s.punish,
            },
            Rule::PhaseGrim => CanonicalState::PhaseTrigger {
                odd_next,
                triggered: s.triggered,
            },
        }
    }

    /// Distribution at round `t` given the owner's own-view history `h` of `t-1` rounds.
    pub fn action_distribution(&self, t: u32, h: &History) -> Result<MixedAction> {
        self.validate(t, h)?;
        Ok(self.distribution(&self.state_after(h.rounds())))
    }

    pub fn validate(&self, t: u32, h: &History) -> Result<()> {
        if t == 0 || h.len() as u64 != t as u64 - 1 {
            return Err(Error::InvalidHistory(format!(
                "round {t} needs {} prior rounds, got {}",
                t.saturating_sub(1),
                h.len()
            )));
        }
        if let Some(bad) = h
            .rounds()
            .iter()
            .find(|a| a.0.index() >= self.n_actions || a.1.index() >= self.n_opp_actions)
        {
            return Err(Error::InvalidHistory(format!(
                "{} cannot read joint action {bad:?}",
                self.label
            )));
        }
        Ok(())
    }

    pub fn sample_action<G: Rng + ?Sized>(
        &self,
        t: u32,
        h: &History,
        rng: &mut G,
    ) -> Result<Action> {
        let dist = self.action_distribution(t, h)?;
        Ok(Action(sample_index(dist.probs(), rng) as u8))
    }

    pub fn is_deterministic_rule(&self) -> bool {
        match &self.rule {
            Rule::Fixed(p) => p.contains(&1.0),
            Rule::React { first, hit, miss, .. } => {
                [first, hit, miss].iter().all(|&&p| p == 0.0 || p == 1.0)
            }
            Rule::WinStay { first, .. } => *first == 0.0 || *first == 1.0,
            Rule::Mlur { .. } => false,
            _ => true,
        }
    }
}

/// Games that carry a strategy menu. Harmony has a menu but no payoff matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MenuGame {
    Bos,
    Pd,
    Harmony,
    Promo,
    Samaritan,
    Lemons,
}

impl MenuGame {
    pub const ALL: [MenuGame; 6] = [
        MenuGame::Bos,
        MenuGame::Pd,
        MenuGame::Harmony,
        MenuGame::Promo,
        MenuGame::Samaritan,
        MenuGame::Lemons,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MenuGame::Bos => "BoS",
            MenuGame::Pd => "PD",
            MenuGame::Harmony => "Harmony",
            MenuGame::Promo => "Promo",
            MenuGame::Samaritan => "Samaritan",
            MenuGame::Lemons => "Lemons",
        }
    }

    pub fn from_name(name: &str) -> Option<MenuGame> {
        let lower = name.to_ascii_lowercase();
        MenuGame::ALL
            .into_iter()
            .find(|g| g.name().to_ascii_lowercase() == lower)
    }
}

impl From<Benchmark> for MenuGame {
    fn from(b: Benchmark) -> Self {
        match b {
            Benchmark::Bos => MenuGame::Bos,
            Benchmark::Pd => MenuGame::Pd,
            Benchmark::Promo => MenuGame::Promo,
            Benchmark::Samaritan => MenuGame::Samaritan,
            Benchmark::Lemons => MenuGame::Lemons,
        }
    }
}

fn fixed(label: &str, desc: &str, p: f64) -> StrategySpec {
    StrategySpec::new(label, desc, Rule::Fixed(bin(p)), 2)
}

fn react(label: &str, desc: &str, first: f64, on: u8, hit: f64, miss: f64) -> StrategySpec {
    StrategySpec::new(
        label,
        desc,
        Rule::React {
            first,
            on: Action(on),
            hit,
            miss,
        },
        2,
    )
}

fn grim(label: &str, desc: &str, trigger: u8) -> StrategySpec {
    StrategySpec::new(label, desc, Rule::Grim { trigger: Action(trigger) }, 2)
}

fn forgiving(label: &str, desc: &str, trigger: u8) -> StrategySpec {
    StrategySpec::new(label, desc, Rule::Forgiving { trigger: Action(trigger) }, 2)
}

fn winstay(label: &str, desc: &str, first: f64, win: WinCond) -> StrategySpec {
    StrategySpec::new(label, desc, Rule::WinStay { first, win }, 2)
}

fn bos_menu() -> Vec<StrategySpec> {
    vec![
        fixed("insist_j", "Always play J.", 1.0),
        fixed("insist_f", "Always play F.", 0.0),
        winstay(
            "wsls_bos",
            "Round 1: J with prob 0.5. Then if both chose the same action last round, repeat own last action; otherwise switch.",
            0.5,
            WinCond::Match,
        ),
        StrategySpec::new(
            "mlur",
            "Round 1: J with prob 0.5. Then if both chose the same action last round, repeat own last action; otherwise play J with prob 0.5.",
            Rule::Mlur { first: 0.5 },
            2,
        ),
        StrategySpec::new(
            "alternate_phase0",
            "Play J on odd rounds and F on even rounds.",
            Rule::Alternate { odd_first: true },
            2,
        ),
        StrategySpec::new(
            "alternate_phase1",
            "Play F on odd rounds and J on even rounds.",
            Rule::Alternate { odd_first: false },
            2,
        ),
        fixed("noisy_insist_j", "Play J with prob 0.9 every round.", 0.9),
        fixed("noisy_insist_f", "Play J with prob 0.1 every round.", 0.1),
    ]
}

fn pd_menu() -> Vec<StrategySpec> {
    vec![
        fixed("allc", "Always play J.", 1.0),
        fixed("alld", "Always play F.", 0.0),
        fixed("soft_allc", "Play J with prob 0.9 every round.", 0.9),
        fixed("soft_alld", "Play J with prob 0.1 every round.", 0.1),
        react(
            "tft",
            "Round 1: J. Then play J iff the opponent played J last round.",
            1.0,
            0,
            1.0,
            0.0,
        ),
        winstay(
            "wsls",
            "Round 1: J. Then if both chose the same action last round, repeat own last action; otherwise switch.",
            1.0,
            WinCond::Match,
        ),
        forgiving(
            "soft_grim_trigger",
            "Play F if the opponent played F in either of the previous two rounds; otherwise J.",
            1,
        ),
        grim(
            "grim_trigger",
            "Play J until the opponent has played F at least once; then F forever.",
            1,
        ),
    ]
}

fn harmony_menu() -> Vec<StrategySpec> {
    vec![
        fixed("allc", "Always play C.", 1.0),
        fixed("alld", "Always play D.", 0.0),
        react(
            "tft",
            "Round 1: C. Then play C iff the opponent played C last round.",
            1.0,
            0,
            1.0,
            0.0,
        ),
        react(
            "stft",
            "Round 1: D. Then play C iff the opponent played C last round.",
            0.0,
            0,
            1.0,
            0.0,
        ),
        react(
            "generous_tft",
            "Round 1: C. Then C if the opponent played C last round, otherwise C with prob 0.3.",
            1.0,
            0,
            1.0,
            0.3,
        ),
        grim(
            "grim_trigger",
            "Play C until the opponent has played D at least once; then D forever.",
            1,
        ),
        winstay(
            "wsls_pavlov",
            "Round 1: C. Then if both chose the same action last round, repeat own last action; otherwise switch.",
            1.0,
            WinCond::Match,
        ),
        fixed("random_pc", "Play C with prob 0.5 every round.", 0.5),
    ]
}

fn promo_menu() -> Vec<StrategySpec> {
    let f = |label: &str, desc: &str, probs: [f64; 3]| {
        StrategySpec::new(label, desc, Rule::Fixed(probs.to_vec()), 3)
    };
    vec![
        f("allR", "Play R every round.", [1.0, 0.0, 0.0]),
        f("allP", "Play P every round.", [0.0, 1.0, 0.0]),
        f("allZ", "Play Z every round.", [0.0, 0.0, 1.0]),
        f("soft_allR", "Play R with prob 0.9 and P with prob 0.1.", [0.9, 0.1, 0.0]),
        f("soft_allP", "Play P with prob 0.9 and R with prob 0.1.", [0.1, 0.9, 0.0]),
        StrategySpec::new(
            "mad0",
            "Cooperative path is odd-round P / even-round R; after a detected deviation play Z for 2 rounds, then return to the phase-0 alternation.",
            Rule::PhaseCycle { phase: 0 },
            3,
        ),
        StrategySpec::new(
            "mad1",
            "Cooperative path is odd-round R / even-round P; after a detected deviation play Z for 2 rounds, then return to the phase-1 alternation.",
            Rule::PhaseCycle { phase: 1 },
            3,
        ),
        StrategySpec::new(
            "grim_trigger",
            "Follow the phase-0 alternating path until the first deviation, then play Z forever.",
            Rule::PhaseGrim,
            3,
        ),
    ]
}

fn helper_menu() -> Vec<StrategySpec> {
    vec![
        fixed("always_help", "Always play H.", 1.0),
        fixed("never_help", "Always play N.", 0.0),
        react(
            "tft_help",
            "Round 1: H. Then play H iff the recipient played W last round.",
            1.0,
            0,
            1.0,
            0.0,
        ),
        forgiving(
            "grim_forgive",
            "Play N if the recipient played S in either of the previous two rounds; otherwise H.",
            1,
        ),
        grim(
            "grim_nohelp",
            "Play H until the recipient has played S at least once; then N forever.",
            1,
        ),
        winstay(
            "wsls_helper",
            "Round 1: H. Then if the recipient played W last round, repeat own last action; otherwise switch.",
            1.0,
            WinCond::OppIs(Action(0)),
        ),
        fixed("noisy_help", "Play H with prob 0.9 every round.", 0.9),
        fixed("noisy_nohelp", "Play H with prob 0.1 every round.", 0.1),
    ]
}

fn recipient_menu() -> Vec<StrategySpec> {
    vec![
        fixed("always_work", "Always play W.", 1.0),
        fixed("always_shirk", "Always play S.", 0.0),
        react(
            "work_if_helped",
            "Round 1: W with prob 0.5. Then play W iff the helper played H last round.",
            0.5,
            0,
            1.0,
            0.0,
        ),
        // as listed: work iff the helper did NOT help last round
        react(
            "exploit_help",
            "Round 1: W with prob 0.5. Then play W iff the helper played N last round.",
            0.5,
            1,
            1.0,
            0.0,
        ),
        grim(
            "grim_shirk_after_nohelp",
            "Play W until the helper has played N at least once; then S forever.",
            1,
        ),
        react(
            "forgiving_work",
            "Round 1: W. Then W if the helper played H last round, otherwise W with prob 0.3.",
            1.0,
            0,
            1.0,
            0.3,
        ),
        fixed("noisy_work", "Play W with prob 0.9 every round.", 0.9),
        fixed("noisy_shirk", "Play W with prob 0.1 every round.", 0.1),
    ]
}

fn seller_menu() -> Vec<StrategySpec> {
    vec![
        fixed("always_hq", "Always play HQ.", 1.0),
        fixed("always_lq", "Always play LQ.", 0.0),
        react(
            "hq_if_bought_last",
            "Round 1: HQ with prob 0.5. Then play HQ iff the buyer played B last round.",
            0.5,
            0,
            1.0,
            0.0,
        ),
        grim(
            "grim_hq_until_boycott",
            "Play HQ until the buyer has played D at least once; then LQ forever.",
            1,
        ),
        react(
            "lq_if_boycott_last",
            "Round 1: HQ with prob 0.5. Then play LQ iff the buyer played D last round.",
            0.5,
            1,
            0.0,
            1.0,
        ),
        forgiving(
            "grim_forgiving",
            "Play LQ if the buyer played D in either of the previous two rounds; otherwise HQ.",
            1,
        ),
        fixed("noisy_hq", "Play HQ with prob 0.9 every round.", 0.9),
        fixed("noisy_lq", "Play HQ with prob 0.1 every round.", 0.1),
    ]
}

fn buyer_menu() -> Vec<StrategySpec> {
    vec![
        fixed("always_buy", "Always play B.", 1.0),
        fixed("never_buy", "Always play D.", 0.0),
        fixed("soft_always_buy", "Play B with prob 0.9 every round.", 0.9),
        fixed("soft_never_buy", "Play B with prob 0.1 every round.", 0.1),
        react(
            "tft_buy",
            "Round 1: B with prob 0.5. Then play B iff the seller played HQ last round.",
            0.5,
            0,
            1.0,
            0.0,
        ),
        react(
            "generous_buy",
            "Round 1: B. Then B if the seller played HQ last round, otherwise B with prob 0.3.",
            1.0,
            0,
            1.0,
            0.3,
        ),
        grim(
            "grim_boycott",
            "Play B until the seller has played LQ at least once; then D forever.",
            1,
        ),
        forgiving(
            "grim_forgiving",
            "Play D if the seller played LQ in either of the previous two rounds; otherwise B.",
            1,
        ),
    ]
}

/// The menu for `(game, role)`, in listed order.
pub fn menu(game: MenuGame, role: Role) -> Vec<StrategySpec> {
    match (game, role) {
        (MenuGame::Bos, _) => bos_menu(),
        (MenuGame::Pd, _) => pd_menu(),
        (MenuGame::Harmony, _) => harmony_menu(),
        (MenuGame::Promo, _) => promo_menu(),
        (MenuGame::Samaritan, Role::First) => helper_menu(),
        (MenuGame::Samaritan, Role::Second) => recipient_menu(),
        (MenuGame::Lemons, Role::First) => seller_menu(),
        (MenuGame::Lemons, Role::Second) => buyer_menu(),
    }
}

pub fn menu_for(game: &str, role: Role) -> Result<Vec<StrategySpec>> {
    MenuGame::from_name(game)
        .map(|g| menu(g, role))
        .ok_or_else(|| Error::NotFound(format!("no strategy menu for game {game:?}")))
}

pub fn find<'a>(menu: &'a [StrategySpec], label: &str) -> Result<&'a StrategySpec> {
    menu.iter()
        .find(|s| s.label == label)
        .ok_or_else(|| Error::NotFound(format!("no strategy labelled {label:?}")))
}

pub fn opponent_view(h: &History) -> History {
    h.swapped()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenuDocument {
    pub game: String,
    pub role: String,
    pub strategies: Vec<LabelEntry>,
}

/// Every registered menu as a labels-plus-descriptions document.
pub fn registry_document() -> Vec<MenuDocument> {
    let mut out = Vec::new();
    for g in MenuGame::ALL {
        let roles: &[(Role, &str)] = match g {
            MenuGame::Samaritan => &[(Role::First, "Helper"), (Role::Second, "Recipient")],
            MenuGame::Lemons => &[(Role::First, "Seller"), (Role::Second, "Buyer")],
            _ => &[(Role::First, "Player")],
        };
        for &(role, name) in roles {
            out.push(MenuDocument {
                game: g.name().to_string(),
                role: name.to_string(),
                strategies: menu(g, role)
                    .into_iter()
                    .map(|s| LabelEntry {
                        label: s.label,
                        description: s.description,
                    })
                    .collect(),
            });
        }
    }
    out
}
