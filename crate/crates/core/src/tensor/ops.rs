//! Row-wise softmax helpers. Every probability in the crate is produced here,
//! as `exp(log_softmax)`, so logits are never exponentiated directly.

/// `ln Σ exp(x_i)`, shifted by the row maximum. Returns `-inf` for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Row-wise `z/T - logsumexp(z/T)` over a row-major `[rows, cols]` buffer.
pub fn log_softmax_rows(data: &[f64], cols: usize, temperature: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    let mut scaled = vec![0.0; cols];
    for row in data.chunks(cols) {
        for (s, &z) in scaled.iter_mut().zip(row) {
            *s = z / temperature;
        }
        let lse = logsumexp(&scaled);
        out.extend(scaled.iter().map(|&s| s - lse));
    }
    out
}

pub fn softmax_rows(data: &[f64], cols: usize, temperature: f64) -> Vec<f64> {
    let mut out = log_softmax_rows(data, cols, temperature);
    for v in &mut out {
        *v = v.exp();
    }
    out
}

/// Log-softmax of one row with entry `skip` removed; `skip` gets 0.
pub(crate) fn log_softmax_excluding(row: &[f64], skip: usize, temperature: f64, out: &mut [f64]) -> f64 {
    let scaled: Vec<f64> = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &z)| z / temperature)
        .collect();
    let lse = logsumexp(&scaled);
    for (i, (o, &z)) in out.iter_mut().zip(row).enumerate() {
        *o = if i == skip { 0.0 } else { z / temperature - lse };
    }
    lse
}
