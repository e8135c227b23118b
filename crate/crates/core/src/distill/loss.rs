use super::SampleWeights;
use crate::error::{Error, Result};
use crate::tensor::{log_softmax_rows, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    None,
    Mean,
    Sum,
}

/// Unreduced per-sample losses.
#[derive(Clone, Debug, PartialEq)]
pub struct LossVector {
    pub per_sample: Vec<f64>,
}

impl LossVector {
    pub fn reduce(&self, reduction: Reduction) -> Vec<f64> {
        let sum: f64 = self.per_sample.iter().sum();
        match reduction {
            Reduction::None => self.per_sample.clone(),
            Reduction::Sum => vec![sum],
            Reduction::Mean => vec![sum / self.per_sample.len().max(1) as f64],
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("temperature must be positive, got {t}")))
    }
}

fn check_pair(g: &Graph, teacher: &Tensor, student: Var) -> Result<(usize, usize)> {
    if teacher.shape() != g.value(student).shape() {
        return Err(Error::dim(format!(
            "teacher logits {:?} vs student logits {:?}",
            teacher.shape(),
            g.value(student).shape()
        )));
    }
    teacher.dims2()
}

/// Per-sample `KLD(p^T(T) || p^S(T)) · T²` as an `[N]` node.
///
/// The teacher enters as constants; only `student` is differentiable.
pub fn kd_loss(g: &mut Graph, teacher: &Tensor, student: Var, temperature: f64) -> Result<Var> {
    check_temperature(temperature)?;
    let (n, c) = check_pair(g, teacher, student)?;
    let log_pt = log_softmax_rows(teacher.data(), c, temperature);
    let pt: Vec<f64> = log_pt.iter().map(|lp| lp.exp()).collect();
    // Σ p log p per row
    let neg_entropy: Vec<f64> = pt
        .chunks(c)
        .zip(log_pt.chunks(c))
        .map(|(p, lp)| p.iter().zip(lp).map(|(a, b)| a * b).sum())
        .collect();

    let pt = g.constant(Tensor::matrix(n, c, pt)?);
    let neg_entropy = g.constant(Tensor::vector(neg_entropy));
    let log_ps = g.log_softmax(student, temperature)?;
    let cross = g.mul(pt, log_ps)?;
    let cross = g.sum_rows(cross)?;
    let kl = g.sub(neg_entropy, cross)?;
    Ok(g.scale(kl, temperature * temperature))
}

/// Decoupled distillation loss per sample, `(α·TCKD + β·NCKD) · T²`.
///
/// TCKD is the KL divergence between the binary target / rest distributions;
/// NCKD is the KL divergence between the distributions renormalized over the
/// non-target classes.
pub fn dkd_loss(
    g: &mut Graph,
    teacher: &Tensor,
    student: Var,
    targets: &[usize],
    alpha: f64,
    beta: f64,
    temperature: f64,
) -> Result<Var> {
    check_temperature(temperature)?;
    let (n, c) = check_pair(g, teacher, student)?;
    if c < 2 {
        return Err(Error::dim("decoupled loss needs at least two classes"));
    }
    if targets.len() != n {
        return Err(Error::dim(format!("{} targets for {n} samples", targets.len())));
    }
    if let Some((i, &t)) = targets.iter().enumerate().find(|&(_, &t)| t >= c) {
        return Err(Error::input(format!("target {t} at sample {i} out of range for {c} classes")));
    }

    // Teacher side, all constants.
    let mut tg = Graph::new();
    let tz = tg.constant(teacher.clone());
    let t_log_p = tg.log_softmax(tz, temperature)?;
    let t_log_target = tg.gather(t_log_p, targets)?;
    let t_log_rest = tg.log_complement(tz, temperature, targets)?;
    let t_log_q = tg.log_softmax_excluding(tz, temperature, targets)?;

    let b_target: Vec<f64> = tg.value(t_log_target).data().iter().map(|l| l.exp()).collect();
    let b_rest: Vec<f64> = tg.value(t_log_rest).data().iter().map(|l| l.exp()).collect();
    let binary_neg_entropy: Vec<f64> = (0..n)
        .map(|i| {
            b_target[i] * tg.value(t_log_target).data()[i] + b_rest[i] * tg.value(t_log_rest).data()[i]
        })
        .collect();
    let mut q = vec![0.0; n * c];
    let mut rest_neg_entropy = vec![0.0; n];
    for (i, (&k, lq)) in targets.iter().zip(tg.value(t_log_q).rows()).enumerate() {
        for j in (0..c).filter(|&j| j != k) {
            let qj = lq[j].exp();
            q[i * c + j] = qj;
            rest_neg_entropy[i] += qj * lq[j];
        }
    }

    // Student side.
    let s_log_p = g.log_softmax(student, temperature)?;
    let s_log_target = g.gather(s_log_p, targets)?;
    let s_log_rest = g.log_complement(student, temperature, targets)?;
    let s_log_q = g.log_softmax_excluding(student, temperature, targets)?;

    let b_target = g.constant(Tensor::vector(b_target));
    let b_rest = g.constant(Tensor::vector(b_rest));
    let cross_target = g.mul(b_target, s_log_target)?;
    let cross_rest = g.mul(b_rest, s_log_rest)?;
    let binary_cross = g.add(cross_target, cross_rest)?;
    let binary_neg_entropy = g.constant(Tensor::vector(binary_neg_entropy));
    let tckd = g.sub(binary_neg_entropy, binary_cross)?;

    let q = g.constant(Tensor::matrix(n, c, q)?);
    let rest_cross = g.mul(q, s_log_q)?;
    let rest_cross = g.sum_rows(rest_cross)?;
    let rest_neg_entropy = g.constant(Tensor::vector(rest_neg_entropy));
    let nckd = g.sub(rest_neg_entropy, rest_cross)?;

    let tckd = g.scale(tckd, alpha);
    let nckd = g.scale(nckd, beta);
    let total = g.add(tckd, nckd)?;
    Ok(g.scale(total, temperature * temperature))
}

/// [`kd_loss`] evaluated on plain tensors.
pub fn kd_loss_values(teacher: &Tensor, student: &Tensor, temperature: f64) -> Result<LossVector> {
    let mut g = Graph::new();
    let s = g.constant(student.clone());
    let loss = kd_loss(&mut g, teacher, s, temperature)?;
    Ok(LossVector {
        per_sample: g.value(loss).data().to_vec(),
    })
}

/// [`dkd_loss`] evaluated on plain tensors.
pub fn dkd_loss_values(
    teacher: &Tensor,
    student: &Tensor,
    targets: &[usize],
    alpha: f64,
    beta: f64,
    temperature: f64,
) -> Result<LossVector> {
    let mut g = Graph::new();
    let s = g.constant(student.clone());
    let loss = dkd_loss(&mut g, teacher, s, targets, alpha, beta, temperature)?;
    Ok(LossVector {
        per_sample: g.value(loss).data().to_vec(),
    })
}

/// `Σ w_n L_n` (or its mean). Weights enter as constants.
pub fn reweighted_loss(
    g: &mut Graph,
    per_sample: Var,
    weights: &SampleWeights,
    reduction: Reduction,
) -> Result<Var> {
    let len = g.value(per_sample).len();
    if g.value(per_sample).rank() != 1 || len != weights.len() {
        return Err(Error::dim(format!(
            "{} weights for losses of shape {:?}",
            weights.len(),
            g.value(per_sample).shape()
        )));
    }
    let w = g.constant(Tensor::vector(weights.values().to_vec()));
    let weighted = g.mul(w, per_sample)?;
    match reduction {
        Reduction::Sum => Ok(g.sum_all(weighted)),
        Reduction::Mean => Ok(g.mean_all(weighted)),
        Reduction::None => Err(Error::contract("reweighted loss must be reduced to a scalar")),
    }
}

/// Mean of `-ln p_target` at temperature 1.
pub fn cross_entropy(g: &mut Graph, logits: Var, targets: &[usize]) -> Result<Var> {
    let log_p = g.log_softmax(logits, 1.0)?;
    let picked = g.gather(log_p, targets)?;
    let mean = g.mean_all(picked);
    Ok(g.scale(mean, -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::WeightingMode;

    fn rows(r: &[&[f64]]) -> Tensor {
        Tensor::from_rows(r).unwrap()
    }

    fn one_hot_logits(c: usize) -> Vec<f64> {
        let mut z = vec![0.0; c];
        z[0] = 1000.0;
        z
    }

    #[test]
    fn kd_zero_for_identical_logits() {
        let z = rows(&[&[0.3, -1.2, 2.0], &[5.0, 5.0, 0.0]]);
        let l = kd_loss_values(&z, &z, 4.0).unwrap();
        for v in l.per_sample {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn kd_one_hot_teacher_vs_uniform_student_is_ln_c() {
        let c = 100;
        let teacher = rows(&[&one_hot_logits(c)]);
        let student = rows(&[&vec![0.0; c]]);
        let l = kd_loss_values(&teacher, &student, 1.0).unwrap();
        assert!((l.per_sample[0] - 4.605170185988091).abs() < 1e-9);
        let uniform = kd_loss_values(&student, &student, 1.0).unwrap();
        assert!(uniform.per_sample[0].abs() <= 1e-12);
    }

    #[test]
    fn kd_shape_mismatch() {
        let a = rows(&[&[0.0, 1.0]]);
        let b = rows(&[&[0.0, 1.0, 2.0]]);
        assert!(matches!(kd_loss_values(&a, &b, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn dkd_zero_for_identical_logits() {
        let z = rows(&[&[0.3, -1.2, 2.0], &[5.0, 5.0, 0.0]]);
        let l = dkd_loss_values(&z, &z, &[2, 0], 1.0, 8.0, 4.0).unwrap();
        for v in l.per_sample {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn dkd_tckd_only_for_one_hot_teacher() {
        let c = 10;
        let teacher = rows(&[&one_hot_logits(c)]);
        let student = rows(&[&vec![0.0; c]]);
        let l = dkd_loss_values(&teacher, &student, &[0], 1.0, 0.0, 1.0).unwrap();
        // KLD((1, 0) || (1/C, (C-1)/C)) = ln C
        assert!((l.per_sample[0] - (c as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn dkd_rejects_bad_target() {
        let z = rows(&[&[0.0, 1.0, 2.0]]);
        assert!(matches!(
            dkd_loss_values(&z, &z, &[3], 1.0, 1.0, 1.0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn reweighted_sum_example() {
        let mut g = Graph::new();
        let l = g.param(Tensor::vector(vec![1.0, 2.0]));
        let w = SampleWeights::new(vec![0.5, 2.0], WeightingMode::Ea);
        let total = reweighted_loss(&mut g, l, &w, Reduction::Sum).unwrap();
        assert_eq!(g.value(total).item().unwrap(), 4.5);
        g.backward(total).unwrap();
        assert_eq!(g.grad(l).unwrap(), &[0.5, 2.0]);
    }

    #[test]
    fn reweighted_zero_weights_give_zero_gradient() {
        let mut g = Graph::new();
        let l = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let w = SampleWeights::new(vec![0.0; 3], WeightingMode::Ea);
        let total = reweighted_loss(&mut g, l, &w, Reduction::Mean).unwrap();
        assert_eq!(g.value(total).item().unwrap(), 0.0);
        g.backward(total).unwrap();
        assert_eq!(g.grad(l).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn reweighted_unit_weights_is_plain_sum() {
        let mut g = Graph::new();
        let l = g.param(Tensor::vector(vec![1.5, 2.25, 3.0]));
        let total = reweighted_loss(&mut g, l, &SampleWeights::uniform(3), Reduction::Sum).unwrap();
        assert_eq!(g.value(total).item().unwrap(), 6.75);
        let short = SampleWeights::uniform(2);
        assert!(matches!(
            reweighted_loss(&mut g, l, &short, Reduction::Sum),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::new();
        let z = g.constant(rows(&[&[1000.0, 0.0, 0.0]]));
        let ce = cross_entropy(&mut g, z, &[0]).unwrap();
        assert!(g.value(ce).item().unwrap().abs() < 1e-12);

        let z = g.constant(Tensor::zeros(&[3, 10]));
        let ce = cross_entropy(&mut g, z, &[0, 4, 9]).unwrap();
        assert!((g.value(ce).item().unwrap() - 10f64.ln()).abs() < 1e-12);

        let z = g.constant(rows(&[&[1.0, 2.0, 3.0]]));
        let ce = cross_entropy(&mut g, z, &[2]).unwrap();
        assert!((g.value(ce).item().unwrap() - 0.4076059644443803).abs() < 1e-14);

        assert!(matches!(cross_entropy(&mut g, z, &[3]), Err(Error::Input(_))));
    }

    #[test]
    fn loss_vector_reductions() {
        let l = LossVector {
            per_sample: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(l.reduce(Reduction::Sum), vec![6.0]);
        assert_eq!(l.reduce(Reduction::Mean), vec![2.0]);
        assert_eq!(l.reduce(Reduction::None), vec![1.0, 2.0, 3.0]);
    }
}
