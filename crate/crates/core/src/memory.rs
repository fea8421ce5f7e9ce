//! Bounded-memory suffix states.

use serde::{Deserialize, Serialize};

use crate::game::{History, JointAction};

/// The last `min(kappa, |h|)` joint actions of a history.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemoryState {
    pub suffix: Vec<JointAction>,
}

impl MemoryState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.suffix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.suffix.is_empty()
    }
}

pub fn suffix_kappa(h: &[JointAction], kappa: usize) -> MemoryState {
    let start = h.len().saturating_sub(kappa);
    MemoryState {
        suffix: h[start..].to_vec(),
    }
}

pub fn suffix_of(h: &History, kappa: usize) -> MemoryState {
    suffix_kappa(h.rounds(), kappa)
}

pub fn update_state(s: &MemoryState, a: JointAction, kappa: usize) -> MemoryState {
    let mut suffix = s.suffix.clone();
    suffix.push(a);
    suffix_kappa(&suffix, kappa)
}
