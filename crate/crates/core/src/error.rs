use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action {action} for role {role} in game {game}")]
    InvalidAction {
        game: String,
        role: usize,
        action: String,
    },
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("invalid mixed action: {0}")]
    InvalidMixedAction(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("empty evaluation window: {0}")]
    EmptyWindow(String),
    #[error("record format error: {0}")]
    Record(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
