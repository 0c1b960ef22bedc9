//! Semantic textual similarity toolkit.
//!
//! Traditional similarity algorithms (character, term, vector-space and
//! taxonomy based) produce per-pair scores that become feature columns for
//! regression models. Feature subsets and model hyperparameters are tuned
//! jointly with an artificial bee colony, scored by cross-validated Pearson
//! correlation.

pub mod abcopt;
pub mod corpus;
pub mod embedclient;
pub mod error;
pub mod eval;
pub mod features;
pub mod knowsim;
pub mod mlmodels;
pub mod stringsim;
pub mod synth;
pub mod termsim;
pub mod vecspace;

use serde::{Deserialize, Serialize};

pub use corpus::{Dataset, Sentence, SentencePair, TokenMode};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, FeatureSpec, FeatureTable};
pub use mlmodels::{ModelKind, TrainedModel};

/// A similarity value in `[0, 1]`, flagged when it comes from a fallback
/// (no usable vectors, no defined word pair, zero-norm vector).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

impl Score {
    pub fn new(value: f64) -> Self {
        Score {
            value: value.clamp(0.0, 1.0),
            degenerate: false,
        }
    }

    pub fn degenerate() -> Self {
        Score {
            value: 0.0,
            degenerate: true,
        }
    }
}
