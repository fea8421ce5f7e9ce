//! Optional language-model backend: prompt builders, a chat-completions HTTP client,
//! and strict label/action parsing.
//!
//! Nothing else in the crate blocks on this module. With no backend configured the
//! simulator uses likelihood inference and the built-in decision rules.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::game::{Benchmark, GameSpec, History, Role};
use crate::strategy::StrategySpec;

pub const OUTPUT_ONLY_LABEL: &str = "**Output only the label.**";
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: Option<String>,
    pub user: String,
}

impl PromptBundle {
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::new();
        if let Some(s) = &self.system {
            out.push(ChatMessage {
                role: "system".into(),
                content: s.clone(),
            });
        }
        out.push(ChatMessage {
            role: "user".into(),
            content: self.user.clone(),
        });
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: Option<f64>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub api_key: Option<String>,
}

fn default_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Protocol(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError>;
}

/// OpenAI-style `/chat/completions` client.
pub struct HttpProvider {
    cfg: ProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(cfg: ProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        HttpProvider { cfg, agent }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    pub fn request_body(&self, prompt: &PromptBundle) -> serde_json::Value {
        let mut body = json!({
            "model": self.cfg.model,
            "messages": prompt.messages(),
        });
        if let Some(t) = self.cfg.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

impl ChatBackend for HttpProvider {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.request_body(prompt))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let v: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Protocol(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Protocol(format!("no message content in {v}")))
    }
}

/// Exact-match parse of a single token against `allowed` after trimming and case folding.
pub fn parse_token<'a>(response: &str, allowed: &[&'a str]) -> Option<&'a str> {
    let t = response.trim();
    if t.is_empty() || t.split_whitespace().count() != 1 {
        return None;
    }
    allowed.iter().copied().find(|a| a.eq_ignore_ascii_case(t))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelOutcome {
    Parsed(String),
    /// Every attempt failed to parse; the first menu label was used.
    Fallback(String),
}

impl LabelOutcome {
    pub fn label(&self) -> &str {
        match self {
            LabelOutcome::Parsed(l) | LabelOutcome::Fallback(l) => l,
        }
    }
}

/// Asks for a label, retrying unparseable answers up to `max_retries` times.
/// A transport failure is returned to the caller, which falls back to likelihood mode.
pub fn infer_label(
    backend: &dyn ChatBackend,
    prompt: &PromptBundle,
    menu: &[StrategySpec],
    max_retries: u32,
) -> Result<LabelOutcome, LlmError> {
    let labels: Vec<&str> = menu.iter().map(|s| s.label.as_str()).collect();
    for _ in 0..=max_retries {
        let text = backend.complete(prompt)?;
        if let Some(l) = parse_token(&text, &labels) {
            return Ok(LabelOutcome::Parsed(l.to_string()));
        }
    }
    Ok(LabelOutcome::Fallback(labels[0].to_string()))
}

/// Asks for one action token; `None` after all attempts fail to parse.
pub fn infer_action(
    backend: &dyn ChatBackend,
    prompt: &PromptBundle,
    tokens: &[String],
    max_retries: u32,
) -> Result<Option<usize>, LlmError> {
    let allowed: Vec<&str> = tokens.iter().map(String::as_str).collect();
    for _ in 0..=max_retries {
        let text = backend.complete(prompt)?;
        let text = text.trim().trim_start_matches("Option").trim();
        if let Some(tok) = parse_token(text, &allowed) {
            return Ok(allowed.iter().position(|a| *a == tok));
        }
    }
    Ok(None)
}

fn game_name(game: &GameSpec) -> String {
    game.benchmark()
        .map(|b| b.display_name().to_string())
        .unwrap_or_else(|| game.name.clone())
}

/// Plain-language rules for `role`. Payoff numbers are omitted when they are unknown.
pub fn rules_text(game: &GameSpec, role: Role, total_rounds: u32, payoffs_known: bool) -> String {
    let me = role.index();
    let other = role.other().index();
    // "Player 1" reads wrong with an article, "Helper" without one
    let named = |r: &str| {
        if r.starts_with("Player") {
            r.to_string()
        } else {
            format!("the {r}")
        }
    };
    let mut s = format!(
        "You are playing a repeated {} game with another player for {} rounds. You are {}; the other player is {}.\n",
        game_name(game),
        total_rounds,
        named(&game.roles[me]),
        named(&game.roles[other])
    );
    s.push_str(&format!(
        "Your actions: {}. The other player's actions: {}.\n",
        game.actions[me].join(", "),
        game.actions[other].join(", ")
    ));
    if payoffs_known {
        s.push_str("Payoffs per round (you, other player):\n");
        for a in game.joint_actions() {
            let own = a.view(role);
            let u = game.payoff(a).expect("legal joint action");
            s.push_str(&format!(
                "- you {}, other {}: ({}, {})\n",
                game.action_name(role, own.0),
                game.action_name(role.other(), own.1),
                u[me],
                u[other]
            ));
        }
    } else {
        s.push_str("Payoffs are not shown. After each round you privately observe a noisy payoff for yourself.\n");
    }
    s
}

fn labels_block(menu: &[StrategySpec]) -> String {
    menu.iter()
        .map(|s| format!("- {}: {}\n", s.label, s.description))
        .collect()
}

/// Opponent-label inference prompt. `opp_view_h` holds `(opponent, self)` tuples.
#[allow(clippy::too_many_arguments)]
pub fn build_inference_prompt(
    game: &GameSpec,
    role: Role,
    opp_view_h: &History,
    opp_menu: &[StrategySpec],
    t: u32,
    total_rounds: u32,
    payoffs_known: bool,
    prior_label: Option<&str>,
) -> PromptBundle {
    let name = game_name(game);
    let opp = role.other();
    let observed = t.saturating_sub(1);
    let mut s = format!("You are inferring Player A's strategy (the opponent) in repeated {name}.\n");
    s.push_str("In a repeated-game setting, a strategy is a rule that maps prior history to the\nplayer's next action (possibly probabilistically).\n");
    s.push_str(&rules_text(game, role, total_rounds, payoffs_known));
    s.push_str(&format!("Observed rounds so far: {observed}.\n\n"));
    s.push_str("Allowed labels:\n");
    s.push_str(&labels_block(opp_menu));
    s.push('\n');
    s.push_str("Observed action history tuple format: (Player A action, Player B action).\n");
    s.push_str("Player A is the opponent whose strategy label you must infer.\n");
    s.push_str("Player B is you (the decision-maker).\n");
    s.push_str(&format!("Context: full history prefix up to round {observed}.\n"));
    if observed > 0 {
        s.push_str(&format!("Context history as (Player A, Player B), rounds 1-{observed}:\n"));
        for (k, a) in opp_view_h.rounds().iter().enumerate() {
            s.push_str(&format!(
                "round {}: Player A={}, Player B={}\n",
                k + 1,
                game.action_name(opp, a.0),
                game.action_name(role, a.1)
            ));
        }
    }
    if let Some(l) = prior_label {
        s.push_str(&format!("Strongly expect Player A to play with strategy '{l}'.\n"));
    }
    s.push_str("Player A's strategy may have changed over time, so weigh recent rounds more heavily\nthan earlier rounds.\n");
    s.push_str("Output rule: do NOT output scores, reasoning, or ranking.\nRespond with exactly one label only.\n\n");
    s.push_str(OUTPUT_ONLY_LABEL);
    PromptBundle {
        system: None,
        user: s,
    }
}

fn history_block(game: &GameSpec, role: Role, own_h: &History) -> String {
    let mut s = String::from("Observed action history (your action, opponent action):\n");
    for (k, a) in own_h.rounds().iter().enumerate() {
        s.push_str(&format!(
            "Round {}: {}, {}\n",
            k + 1,
            game.action_name(role, a.0),
            game.action_name(role.other(), a.1)
        ));
    }
    s
}

fn strategy_context(
    game: &GameSpec,
    role: Role,
    opp_menu: &[StrategySpec],
    t: u32,
    prior_label: Option<&str>,
) -> String {
    let observed = t.saturating_sub(1);
    let mut s = format!(
        "In repeated {}, a strategy maps prior history to a player's next action\n(possibly probabilistically).\nAllowed strategies:\n",
        game_name(game)
    );
    s.push_str(&labels_block(opp_menu));
    s.push_str("\nRole mapping in this prompt:\n- Player A is the other player.\n- Player B is you.\n");
    s.push_str(&format!("Observed rounds so far: {observed}.\n"));
    s.push_str(&format!("Context: full history prefix up to round {observed}.\n"));
    if let Some(l) = prior_label {
        s.push_str(&format!("Strongly expect Player A to play with strategy '{l}'.\n"));
    }
    s.push_str(&format!(
        "Allowed action tokens: {}.\n",
        game.actions[role.index()].join(", ")
    ));
    s.push_str("Output rule: do NOT output scores, reasoning, or ranking.\nRespond with exactly one action only.\n");
    s
}

fn base_query(b: Benchmark, role: Role) -> &'static str {
    match (b, role) {
        (Benchmark::Bos, _) => "Q: Which Option do you choose,  J or  F?",
        (Benchmark::Pd, _) => "Q: Which action do you choose, J or F?",
        (Benchmark::Promo, _) => "Q: Which action do you choose, R, P, or Z?",
        (Benchmark::Samaritan, Role::First) => "Q: Which action do you choose, H or N?",
        (Benchmark::Samaritan, Role::Second) => "Q: Which action do you choose, W or S?",
        (Benchmark::Lemons, Role::First) => "Q: Which action do you choose, HQ or LQ?",
        (Benchmark::Lemons, Role::Second) => "Q: Which action do you choose,  B or  D?",
    }
}

fn predict_query(b: Benchmark, role: Role) -> &'static str {
    match (b, role) {
        (Benchmark::Bos | Benchmark::Pd, _) => {
            "Q: Which action do you predict the other player will choose, J or F?"
        }
        (Benchmark::Promo, _) => {
            "Q: Which action do you predict the other player will choose, R, P, or Z?"
        }
        (Benchmark::Samaritan, Role::First) => {
            "Q: Which action do you predict the other player will choose, W or S?"
        }
        (Benchmark::Samaritan, Role::Second) => {
            "Q: Which action do you predict the other player will choose, action H or action N?"
        }
        (Benchmark::Lemons, Role::First) => {
            "Q: Which Option do you predict the other player will choose, Option B or Option D?"
        }
        (Benchmark::Lemons, Role::Second) => {
            "Q: Which Option do you predict the other player will choose, Option HQ or Option LQ?"
        }
    }
}

fn act_query(b: Benchmark, role: Role, pred: &str, t: u32) -> String {
    match b {
        Benchmark::Promo => format!(
            "Q: Given that you think the other player will choose {pred} in round {t},\nimagine the outcome for your possible actions (R, P, and Z),\ncompare which gives you a better result, and then choose.\nWhich action do you think is best for you in this round, R, P, or Z?\nOutput only one action: R, P, or Z."
        ),
        _ => {
            let (x, y) = match (b, role) {
                (Benchmark::Samaritan, Role::First) => ("H", "N"),
                (Benchmark::Samaritan, Role::Second) => ("W", "S"),
                (Benchmark::Lemons, Role::First) => ("HQ", "LQ"),
                (Benchmark::Lemons, Role::Second) => ("B", "D"),
                _ => ("J", "F"),
            };
            let best = if matches!(b, Benchmark::Bos | Benchmark::Pd) {
                "the best"
            } else {
                "best"
            };
            format!(
                "Q: Given that you think the other player will choose Option {pred} in round {t},\nimagine the outcome for both of your possible actions (Option {x} and Option {y}),\ncompare which gives you a better result, and then choose.\nWhich Option do you think is {best} to choose for you in this round, Option {x} or Option {y}?\nOutput only one letter: {x} or {y}."
            )
        }
    }
}

/// Direct action prompt used by the Base agent.
#[allow(clippy::too_many_arguments)]
pub fn build_base_prompt(
    game: &GameSpec,
    role: Role,
    own_h: &History,
    opp_menu: &[StrategySpec],
    t: u32,
    total_rounds: u32,
    payoffs_known: bool,
    prior_label: Option<&str>,
) -> PromptBundle {
    let b = game.benchmark().expect("prompts exist for benchmark games");
    let mut s = rules_text(game, role, total_rounds, payoffs_known);
    s.push_str(&history_block(game, role, own_h));
    s.push_str(&format!("You are currently playing round {t}\n"));
    s.push_str(base_query(b, role));
    s.push('\n');
    s.push_str(&strategy_context(game, role, opp_menu, t, prior_label));
    s.push_str("A:");
    PromptBundle {
        system: None,
        user: s,
    }
}

/// Two-stage predict-then-act prompts. Stage 1 when `prediction` is `None`,
/// stage 2 conditioned on the stage-1 token otherwise.
#[allow(clippy::too_many_arguments)]
pub fn build_scot_prompts(
    game: &GameSpec,
    role: Role,
    own_h: &History,
    opp_menu: &[StrategySpec],
    t: u32,
    total_rounds: u32,
    payoffs_known: bool,
    prior_label: Option<&str>,
    prediction: Option<&str>,
) -> PromptBundle {
    let b = game.benchmark().expect("prompts exist for benchmark games");
    let mut s = rules_text(game, role, total_rounds, payoffs_known);
    s.push_str(&history_block(game, role, own_h));
    s.push_str(&format!("You are currently playing round {t}\n"));
    match prediction {
        None => {
            s.push_str(predict_query(b, role));
            s.push('\n');
            s.push_str(&strategy_context(game, role, opp_menu, t, prior_label));
        }
        Some(pred) => {
            s.push_str(&act_query(b, role, pred, t));
            s.push('\n');
        }
    }
    s.push_str("A:");
    PromptBundle {
        system: None,
        user: s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::JointAction;
    use crate::strategy::{menu, MenuGame};
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<String, LlmError>>>,
        calls: Mutex<u32>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<String, LlmError>>) -> Self {
            Scripted {
                replies: Mutex::new(replies),
                calls: Mutex::new(0),
            }
        }
    }

    impl ChatBackend for Scripted {
        fn complete(&self, _: &PromptBundle) -> Result<String, LlmError> {
            *self.calls.lock().unwrap() += 1;
            let mut r = self.replies.lock().unwrap();
            if r.is_empty() {
                Ok("nonsense".into())
            } else {
                r.remove(0)
            }
        }
    }

    fn pd_menu() -> Vec<StrategySpec> {
        menu(MenuGame::Pd, Role::Second)
    }

    #[test]
    fn inference_prompt_shape() {
        let pd = Benchmark::Pd.spec();
        let p = build_inference_prompt(&pd, Role::First, &History::new(), &pd_menu(), 1, 200, true, None);
        assert!(p.user.contains("Observed rounds so far: 0."));
        assert!(!p.user.contains("round 1: Player A="));
        assert!(p.user.ends_with(OUTPUT_ONLY_LABEL));
        for s in pd_menu() {
            assert_eq!(p.user.matches(&format!("- {}: ", s.label)).count(), 1, "{}", s.label);
        }
        let h = History::from_rounds(vec![JointAction::new(1, 0)]);
        let p = build_inference_prompt(&pd, Role::First, &h, &pd_menu(), 2, 200, true, Some("grim_trigger"));
        assert!(p.user.contains("Strongly expect Player A to play with strategy 'grim_trigger'."));
        assert!(p.user.contains("round 1: Player A=F, Player B=J"));
        let again = build_inference_prompt(&pd, Role::First, &h, &pd_menu(), 2, 200, true, Some("grim_trigger"));
        assert_eq!(p, again);
    }

    #[test]
    fn scot_prompt_texts() {
        let pd = Benchmark::Pd.spec();
        let m = pd_menu();
        let s1 = build_scot_prompts(&pd, Role::First, &History::new(), &m, 1, 200, true, None, None);
        assert!(s1.user.contains("predict the other player"));
        let bos = Benchmark::Bos.spec();
        let h = History::from_rounds(vec![JointAction::new(0, 0); 4]);
        let s2 = build_scot_prompts(&bos, Role::First, &h, &m, 5, 200, true, None, Some("J"));
        assert!(s2.user.contains("Option J in round 5"));
        let lem = Benchmark::Lemons.spec();
        let s2 = build_scot_prompts(&lem, Role::Second, &History::new(), &m, 1, 200, true, None, Some("HQ"));
        assert!(s2.user.contains("Option B or Option D"));
    }

    #[test]
    fn label_parsing_is_strict() {
        let m = pd_menu();
        let labels: Vec<&str> = m.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(parse_token(" tft\n", &labels), Some("tft"));
        assert_eq!(parse_token("TFT", &labels), Some("tft"));
        assert_eq!(parse_token("I think tft because", &labels), None);
        assert_eq!(parse_token("tft alld", &labels), None);
        assert_eq!(parse_token("", &labels), None);
    }

    #[test]
    fn retries_then_falls_back() {
        let m = pd_menu();
        let prompt = PromptBundle { system: None, user: "x".into() };
        let ok = Scripted::new(vec![Ok("tft".into())]);
        assert_eq!(infer_label(&ok, &prompt, &m, 3).unwrap(), LabelOutcome::Parsed("tft".into()));
        let late = Scripted::new(vec![Ok("I think tft because".into()), Ok("wsls".into())]);
        assert_eq!(infer_label(&late, &prompt, &m, 3).unwrap(), LabelOutcome::Parsed("wsls".into()));
        let never = Scripted::new(vec![]);
        assert_eq!(infer_label(&never, &prompt, &m, 3).unwrap(), LabelOutcome::Fallback("allc".into()));
        assert_eq!(*never.calls.lock().unwrap(), 4);
        let down = Scripted::new(vec![Err(LlmError::Transport("refused".into()))]);
        assert!(matches!(infer_label(&down, &prompt, &m, 3), Err(LlmError::Transport(_))));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let p = HttpProvider::new(ProviderConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "m".into(),
            temperature: Some(1.0),
            max_retries: 0,
            timeout_secs: 2,
            api_key: None,
        });
        let prompt = PromptBundle { system: None, user: "x".into() };
        assert!(matches!(p.complete(&prompt), Err(LlmError::Transport(_))));
        let body = p.request_body(&prompt);
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "user");
    }
}
