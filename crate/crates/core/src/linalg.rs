use ndarray::{Array1, Array2, ArrayView1};

/// Cosine similarity, `None` when either vector has zero norm.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(a.dot(&b) / (na * nb))
}

/// Cosine similarity with its gradients with respect to both arguments.
pub fn cosine_grads(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
) -> Option<(f64, Array1<f64>, Array1<f64>)> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let c = a.dot(&b) / (na * nb);
    let ga = &b / (na * nb) - &(&a * (c / (na * na)));
    let gb = &a / (na * nb) - &(&b * (c / (nb * nb)));
    Some((c, ga, gb))
}

/// Row-wise L2 normalization; returns the normalized matrix and the norms.
/// The index of the first zero row is reported as the error.
pub fn normalize_rows(m: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>), usize> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.nrows());
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(i);
        }
        row /= n;
        norms.push(n);
    }
    Ok((out, norms))
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
