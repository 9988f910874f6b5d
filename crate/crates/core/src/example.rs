use serde::{Deserialize, Serialize};

/// Model input: a dense feature vector or a token-id sequence.
///
/// Untagged in JSON: an array of integers reads as tokens, anything with a
/// fractional literal as features. Loaders that know the expected kind
/// should not rely on that guess.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    Tokens(Vec<usize>),
    Features(Vec<f64>),
}

impl Input {
    pub fn len(&self) -> usize {
        match self {
            Input::Features(v) => v.len(),
            Input::Tokens(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Span { start: usize, end: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Input,
    pub y: Label,
    /// Shared by translations of the same underlying example across languages.
    pub latent_id: Option<u64>,
}
