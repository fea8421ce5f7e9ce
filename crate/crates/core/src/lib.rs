//! Repeated-game laboratory.
//!
//! Finite strategy menus, Bayesian label posteriors, posterior-sampling best response,
//! exact value-iteration best response, myopic and predict-then-act variants, Gaussian
//! unknown-payoff learning, and the metrics used to judge convergence.

pub mod belief;
pub mod error;
pub mod experiment;
pub mod game;
pub mod llm;
pub mod memory;
pub mod metrics;
pub mod payoff_belief;
pub mod planners;
pub mod rng;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
pub use belief::{LabelPosterior, PosteriorSnapshot};
pub use game::{Action, Benchmark, GameSpec, History, JointAction, MixedAction, PayoffTable, Role};
pub use memory::{suffix_kappa, update_state, MemoryState};
pub use rng::Streams;
pub use strategy::{menu, menu_for, opponent_view, MenuGame, StrategySpec};
pub use payoff_belief::OffsetPosterior;
pub use planners::PlannerConfig;
