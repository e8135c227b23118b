//! Per-epoch statistics keyed to the teacher's entropy ranking: loss share by
//! entropy quartile, teacher-student accuracy gap by entropy segment, and the
//! spread of student entropy over the teacher's most uncertain samples.

/// Quartile (0..4) of each sample when ranked by ascending `entropy`.
/// Ties are broken by sample index.
pub fn entropy_quartiles(entropy: &[f64]) -> Vec<usize> {
    let n = entropy.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| entropy[a].total_cmp(&entropy[b]).then(a.cmp(&b)));
    let mut quartile = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        quartile[i] = rank * 4 / n;
    }
    quartile
}

/// Fraction of the total loss carried by each quartile. A zero total is
/// reported as an even split.
pub fn quartile_shares(loss: &[f64], quartile: &[usize]) -> [f64; 4] {
    let mut sums = [0.0; 4];
    for (&l, &q) in loss.iter().zip(quartile) {
        sums[q] += l;
    }
    let total: f64 = sums.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return [0.25; 4];
    }
    sums.map(|s| s / total)
}

/// Teacher accuracy minus student accuracy within each quartile.
pub fn segment_gaps(teacher_correct: &[bool], student_correct: &[bool], quartile: &[usize]) -> [f64; 4] {
    let mut counts = [0usize; 4];
    let mut teacher = [0usize; 4];
    let mut student = [0usize; 4];
    for ((&t, &s), &q) in teacher_correct.iter().zip(student_correct).zip(quartile) {
        counts[q] += 1;
        teacher[q] += usize::from(t);
        student[q] += usize::from(s);
    }
    std::array::from_fn(|q| {
        if counts[q] == 0 {
            0.0
        } else {
            (teacher[q] as f64 - student[q] as f64) / counts[q] as f64
        }
    })
}

/// Indices of the top tenth (at least one sample) by descending `entropy`.
pub fn top_decile(entropy: &[f64]) -> Vec<usize> {
    let n = entropy.len();
    let k = n.div_ceil(10).max(1).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| entropy[b].total_cmp(&entropy[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// `[min, Q1, median, Q3, max]`.
pub fn five_number_summary(values: &[f64]) -> [f64; 5] {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&sorted, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_rank_by_entropy() {
        let h = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4];
        assert_eq!(entropy_quartiles(&h), vec![3, 0, 2, 1, 2, 0, 3, 1]);
    }

    #[test]
    fn shares_sum_to_one() {
        let q = [0, 1, 2, 3, 3];
        let s = quartile_shares(&[1.0, 2.0, 3.0, 2.0, 2.0], &q);
        assert_eq!(s, [0.1, 0.2, 0.3, 0.4]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_loss_in_top_quartile() {
        let q = [0, 1, 2, 3];
        assert_eq!(quartile_shares(&[0.0, 0.0, 0.0, 5.0], &q), [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(quartile_shares(&[0.0; 4], &q), [0.25; 4]);
    }

    #[test]
    fn gaps_per_segment() {
        let q = [0, 0, 1, 1, 2, 3];
        let t = [true, true, true, false, true, true];
        let s = [true, false, false, false, true, false];
        assert_eq!(segment_gaps(&t, &s, &q), [0.5, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn decile_picks_highest() {
        let h: Vec<f64> = (0..25).map(|i| i as f64).collect();
        assert_eq!(top_decile(&h), vec![24, 23, 22]);
        assert_eq!(top_decile(&[1.0]), vec![0]);
    }

    #[test]
    fn five_numbers() {
        assert_eq!(five_number_summary(&[5.0, 1.0, 3.0, 2.0, 4.0]), [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(five_number_summary(&[1.0, 2.0]), [1.0, 1.25, 1.5, 1.75, 2.0]);
    }
}
