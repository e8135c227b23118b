use crate::error::{Error, Result};
use crate::tensor::{log_softmax_rows, Tensor};

/// Shannon entropy (nats) of each row's softmax at `temperature`.
///
/// Results are clamped into `[0, ln C]` to absorb rounding at the extremes.
pub fn entropy(logits: &Tensor, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::config(format!(
            "entropy temperature must be positive, got {temperature}"
        )));
    }
    let (_, c) = logits.dims2()?;
    if !logits.is_finite() {
        return Err(Error::input("entropy of non-finite logits"));
    }
    let bound = (c as f64).ln();
    let log_p = log_softmax_rows(logits.data(), c, temperature);
    Ok(log_p
        .chunks(c)
        .map(|row| {
            let h: f64 = -row.iter().map(|&lp| lp.exp() * lp).sum::<f64>();
            h.clamp(0.0, bound)
        })
        .collect())
}

/// Teacher and student entropies of the same samples, with the bound `ln C`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyPair {
    teacher: Vec<f64>,
    student: Vec<f64>,
    bound: f64,
}

impl EntropyPair {
    const SLACK: f64 = 1e-9;

    pub fn new(teacher: Vec<f64>, student: Vec<f64>, class_count: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::config(format!("class count must be at least 2, got {class_count}")));
        }
        if teacher.len() != student.len() {
            return Err(Error::dim(format!(
                "{} teacher entropies vs {} student entropies",
                teacher.len(),
                student.len()
            )));
        }
        let bound = (class_count as f64).ln();
        for (who, values) in [("teacher", &teacher), ("student", &student)] {
            if let Some((i, h)) = values
                .iter()
                .enumerate()
                .find(|&(_, &h)| !(h >= 0.0 && h <= bound + Self::SLACK))
            {
                return Err(Error::input(format!(
                    "{who} entropy {h} at sample {i} outside [0, ln {class_count}]"
                )));
            }
        }
        Ok(EntropyPair {
            teacher,
            student,
            bound,
        })
    }

    /// Entropies of two logit batches at a shared temperature.
    pub fn from_logits(teacher: &Tensor, student: &Tensor, temperature: f64) -> Result<Self> {
        if teacher.shape() != student.shape() {
            return Err(Error::dim(format!(
                "teacher logits {:?} vs student logits {:?}",
                teacher.shape(),
                student.shape()
            )));
        }
        let (_, c) = teacher.dims2()?;
        EntropyPair::new(entropy(teacher, temperature)?, entropy(student, temperature)?, c)
    }

    pub fn teacher(&self) -> &[f64] {
        &self.teacher
    }

    pub fn student(&self) -> &[f64] {
        &self.student
    }

    /// `ln C`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.teacher.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teacher.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> Tensor {
        Tensor::from_rows(&[values]).unwrap()
    }

    #[test]
    fn uniform_logits_reach_the_bound() {
        for t in [0.5, 1.0, 3.0] {
            let h = entropy(&row(&[2.0; 4]), t).unwrap();
            assert!((h[0] - 1.3862944).abs() < 1e-7);
            assert!((h[0] - 4f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn near_one_hot_is_near_zero() {
        let h = entropy(&row(&[50.0, 0.0, 0.0, 0.0]), 1.0).unwrap();
        assert!(h[0] < 1e-18);
    }

    #[test]
    fn two_class_value() {
        // -(0.7 ln 0.7 + 0.3 ln 0.3), evaluated at 40 digits
        let h = entropy(&row(&[0.7f64.ln(), 0.3f64.ln()]), 1.0).unwrap();
        assert!((h[0] - 0.6108643020548935).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite_and_bad_temperature() {
        assert!(matches!(entropy(&row(&[f64::NAN, 0.0]), 1.0), Err(Error::Input(_))));
        assert!(matches!(entropy(&row(&[1.0, 0.0]), 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn pair_validates_range() {
        let bound = 10f64.ln();
        assert!(EntropyPair::new(vec![bound], vec![0.0], 10).is_ok());
        assert!(EntropyPair::new(vec![bound + 1e-6], vec![0.0], 10).is_err());
        assert!(EntropyPair::new(vec![-0.1], vec![0.0], 10).is_err());
        assert!(EntropyPair::new(vec![0.1, 0.2], vec![0.0], 10).is_err());
    }
}
