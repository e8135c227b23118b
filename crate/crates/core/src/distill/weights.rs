use super::{EntropyPair, WeightingMode};
use crate::error::{Error, Result};

/// Per-sample loss coefficients and the mode that produced them.
///
/// Entropy-based modes stay inside `[0, ln C]`. `WeightingMode::None` is the
/// uniform weight 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWeights {
    values: Vec<f64>,
    mode: WeightingMode,
}

impl SampleWeights {
    pub fn new(values: Vec<f64>, mode: WeightingMode) -> Self {
        SampleWeights { values, mode }
    }

    pub fn uniform(n: usize) -> Self {
        SampleWeights::new(vec![1.0; n], WeightingMode::None)
    }

    /// Weights of `mode` for the samples of `pair`.
    pub fn compute(mode: WeightingMode, pair: &EntropyPair) -> Result<Self> {
        let bound = pair.bound();
        Ok(match mode {
            WeightingMode::None => SampleWeights::uniform(pair.len()),
            WeightingMode::Base => weight_base(pair),
            WeightingMode::Interact => weight_interact(pair),
            WeightingMode::Ea => weight_ea(pair),
            WeightingMode::InvertedBase => {
                SampleWeights { mode, ..weight_inverted(&weight_base(pair), bound)? }
            }
            WeightingMode::InvertedStudent => {
                let student = SampleWeights::new(pair.student().to_vec(), mode);
                weight_inverted(&student, bound)?
            }
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> WeightingMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rescaled so the batch mean is 1. An all-zero batch is returned unchanged.
    pub fn mean_normalized(&self) -> SampleWeights {
        let mean = self.values.iter().sum::<f64>() / self.values.len().max(1) as f64;
        if mean <= 0.0 {
            return self.clone();
        }
        SampleWeights::new(self.values.iter().map(|w| w / mean).collect(), self.mode)
    }

    /// `(min, mean, max)`; all zero for an empty set.
    pub fn stats(&self) -> (f64, f64, f64) {
        if self.values.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        (min, mean, max)
    }
}

fn clamp_to(bound: f64, w: f64) -> f64 {
    w.clamp(0.0, bound)
}

/// `w = H^T`.
pub fn weight_base(pair: &EntropyPair) -> SampleWeights {
    let bound = pair.bound();
    let values = pair.teacher().iter().map(|&h| clamp_to(bound, h)).collect();
    SampleWeights::new(values, WeightingMode::Base)
}

/// `w = H^T * H^S / ln C`.
pub fn weight_interact(pair: &EntropyPair) -> SampleWeights {
    let bound = pair.bound();
    let values = pair
        .teacher()
        .iter()
        .zip(pair.student())
        .map(|(&ht, &hs)| clamp_to(bound, ht * hs / bound))
        .collect();
    SampleWeights::new(values, WeightingMode::Interact)
}

/// Average of the base and interaction weights.
pub fn weight_ea(pair: &EntropyPair) -> SampleWeights {
    let bound = pair.bound();
    let values = weight_base(pair)
        .values
        .iter()
        .zip(weight_interact(pair).values())
        .map(|(&base, &interact)| clamp_to(bound, (base + interact) / 2.0))
        .collect();
    SampleWeights::new(values, WeightingMode::Ea)
}

/// The same weight written as teacher entropy scaled by the student's
/// relative uncertainty: `½ · H^T · (1 + H^S / H_ub)`.
pub fn ea_weight_factored(teacher_entropy: f64, student_entropy: f64, bound: f64) -> f64 {
    0.5 * teacher_entropy * (1.0 + student_entropy / bound)
}

/// `ln C - w` for each weight; keeps the input's mode.
pub fn weight_inverted(weights: &SampleWeights, bound: f64) -> Result<SampleWeights> {
    if let Some((i, &w)) = weights.values.iter().enumerate().find(|&(_, &w)| w > bound) {
        return Err(Error::contract(format!(
            "weight {w} at sample {i} exceeds the entropy bound {bound}"
        )));
    }
    let values = weights.values.iter().map(|&w| (bound - w).max(0.0)).collect();
    Ok(SampleWeights::new(values, weights.mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(ht: f64, hs: f64, c: usize) -> EntropyPair {
        EntropyPair::new(vec![ht], vec![hs], c).unwrap()
    }

    #[test]
    fn base_examples() {
        let ub = 100f64.ln();
        assert_eq!(weight_base(&pair(ub, 0.3, 100)).values(), &[ub]);
        assert_eq!(weight_base(&pair(0.0, 0.3, 100)).values(), &[0.0]);
        assert_eq!(weight_base(&pair(2.0, 0.3, 100)).values(), &[2.0]);
    }

    #[test]
    fn interact_examples() {
        let ub = 100f64.ln();
        assert!((weight_interact(&pair(ub, ub, 100)).values()[0] - ub).abs() < 1e-15);
        assert_eq!(weight_interact(&pair(1.0, 0.0, 100)).values(), &[0.0]);
        // 2 / ln 100 at 40 digits
        let w = weight_interact(&pair(2.0, 1.0, 100)).values()[0];
        assert!((w - 0.4342944819032518).abs() < 1e-15);
    }

    #[test]
    fn ea_examples() {
        let w = weight_ea(&pair(2.0, 1.0, 100)).values()[0];
        assert!((w - 1.2171472409516259).abs() < 1e-15);
        for c in [2usize, 10, 100] {
            let ub = (c as f64).ln();
            assert!((weight_ea(&pair(ub, ub, c)).values()[0] - ub).abs() < 1e-9);
            assert!((weight_ea(&pair(ub, 0.0, c)).values()[0] - ub / 2.0).abs() < 1e-9);
            assert_eq!(weight_ea(&pair(0.0, ub, c)).values()[0], 0.0);
        }
    }

    #[test]
    fn inverted_examples() {
        let ub = 100f64.ln();
        let inv = |w: f64| weight_inverted(&SampleWeights::new(vec![w], WeightingMode::Base), ub);
        assert_eq!(inv(0.0).unwrap().values(), &[ub]);
        assert_eq!(inv(ub).unwrap().values(), &[0.0]);
        assert!((inv(2.0).unwrap().values()[0] - 2.605170185988091).abs() < 1e-15);
        assert!(matches!(inv(ub + 1e-6), Err(Error::Contract(_))));
    }

    #[test]
    fn compute_dispatches_modes() {
        let ub = 10f64.ln();
        let p = EntropyPair::new(vec![1.0, 2.0], vec![0.5, ub], 10).unwrap();
        let w = SampleWeights::compute(WeightingMode::InvertedStudent, &p).unwrap();
        assert_eq!(w.mode(), WeightingMode::InvertedStudent);
        assert!((w.values()[0] - (ub - 0.5)).abs() < 1e-15);
        assert_eq!(w.values()[1], 0.0);
        let w = SampleWeights::compute(WeightingMode::InvertedBase, &p).unwrap();
        assert_eq!(w.mode(), WeightingMode::InvertedBase);
        assert!((w.values()[1] - (ub - 2.0)).abs() < 1e-15);
        let w = SampleWeights::compute(WeightingMode::None, &p).unwrap();
        assert_eq!(w.values(), &[1.0, 1.0]);
    }

    #[test]
    fn mean_normalized_has_unit_mean() {
        let w = SampleWeights::new(vec![1.0, 2.0, 3.0], WeightingMode::Ea).mean_normalized();
        assert!((w.values().iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-15);
        let zero = SampleWeights::new(vec![0.0, 0.0], WeightingMode::Ea);
        assert_eq!(zero.mean_normalized(), zero);
    }
}
