//! Distillation mathematics: softened entropies, the entropy-based sample
//! weighting family, and per-sample KD / decoupled-KD losses.
//!
//! Entropies and weights are plain numbers computed from logits that have
//! already been evaluated; they enter a [`Graph`](crate::tensor::Graph) only as
//! constants, so a weight scales a sample's gradient but never has one itself.

mod entropy;
mod loss;
mod weights;

use std::fmt;
use std::str::FromStr;

pub use entropy::{entropy, EntropyPair};
pub use loss::{
    cross_entropy, dkd_loss, dkd_loss_values, kd_loss, kd_loss_values, reweighted_loss, LossVector,
    Reduction,
};
pub use weights::{
    ea_weight_factored, weight_base, weight_ea, weight_interact, weight_inverted, SampleWeights,
};

use crate::error::{Error, Result};

/// Which per-sample factor multiplies the distillation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightingMode {
    /// Uniform weight 1: vanilla distillation.
    None,
    /// Teacher entropy.
    Base,
    /// Normalized product of teacher and student entropy.
    Interact,
    /// Average of `Base` and `Interact`.
    Ea,
    /// `ln C - H^T`.
    InvertedBase,
    /// `ln C - H^S`.
    InvertedStudent,
}

impl WeightingMode {
    pub const ALL: [WeightingMode; 6] = [
        WeightingMode::None,
        WeightingMode::Base,
        WeightingMode::Interact,
        WeightingMode::Ea,
        WeightingMode::InvertedBase,
        WeightingMode::InvertedStudent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightingMode::None => "none",
            WeightingMode::Base => "base",
            WeightingMode::Interact => "interact",
            WeightingMode::Ea => "ea",
            WeightingMode::InvertedBase => "inverted_base",
            WeightingMode::InvertedStudent => "inverted_student",
        }
    }

    /// Whether the weights depend on entropies (everything except `None`).
    pub fn is_entropy_based(self) -> bool {
        self != WeightingMode::None
    }
}

impl fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown weighting mode {s:?} (expected one of none, base, interact, ea, inverted_base, inverted_student)"
                ))
            })
    }
}

/// Per-sample distillation objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Kd,
    Dkd,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Kd => "kd",
            LossKind::Dkd => "dkd",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kd" => Ok(LossKind::Kd),
            "dkd" => Ok(LossKind::Dkd),
            _ => Err(Error::config(format!("unknown loss kind {s:?} (expected kd or dkd)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    /// Softmax temperature of the distillation loss.
    pub distill_temperature: f64,
    /// Softmax temperature used when measuring entropies for weighting.
    pub entropy_temperature: f64,
    pub class_count: usize,
    pub ce_weight: f64,
    /// Multiplies the (reweighted) distillation term.
    pub kd_weight: f64,
    pub dkd_alpha: f64,
    pub dkd_beta: f64,
    pub weighting_mode: WeightingMode,
    /// Divide weights by their batch mean before use. Off by default.
    pub normalize_weights: bool,
    /// Entropy temperature of the per-epoch diagnostics (quartiles, segments, box stats).
    pub diagnostic_temperature: f64,
}

impl DistillConfig {
    pub fn new(class_count: usize) -> Self {
        DistillConfig {
            distill_temperature: 4.0,
            entropy_temperature: 3.0,
            class_count,
            ce_weight: 1.0,
            kd_weight: 1.0,
            dkd_alpha: 1.0,
            dkd_beta: 8.0,
            weighting_mode: WeightingMode::None,
            normalize_weights: false,
            diagnostic_temperature: 1.0,
        }
    }

    /// Entropy upper bound `ln C`.
    pub fn entropy_bound(&self) -> f64 {
        (self.class_count as f64).ln()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("distill_temperature", self.distill_temperature),
            ("entropy_temperature", self.entropy_temperature),
            ("diagnostic_temperature", self.diagnostic_temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonnegative = [
            ("ce_weight", self.ce_weight),
            ("kd_weight", self.kd_weight),
            ("dkd_alpha", self.dkd_alpha),
            ("dkd_beta", self.dkd_beta),
        ];
        for (name, v) in nonnegative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.class_count < 2 {
            return Err(Error::config(format!(
                "class_count must be at least 2, got {}",
                self.class_count
            )));
        }
        Ok(())
    }
}
