//! Small numeric helpers shared across stages.

/// Pairwise (cascade) summation.
///
/// The result depends only on the order of `values`, never on how the work
/// that produced them was scheduled, and the rounding error grows as
/// O(log n) rather than O(n).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Arithmetic mean via [`pairwise_sum`]; `NaN` for empty input.
pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Biased sample autocorrelation at lags `0..=max_lag`.
///
/// `r(k) = Σ (x_t - μ)(x_{t+k} - μ) / Σ (x_t - μ)²`. Returns `None` when the
/// series has zero variance.
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let mu = mean(values);
    let centered: Vec<f64> = values.iter().map(|v| v - mu).collect();
    let denom = pairwise_sum(&centered.iter().map(|c| c * c).collect::<Vec<_>>());
    if denom <= 0.0 || !denom.is_finite() {
        return None;
    }
    let max_lag = max_lag.min(values.len().saturating_sub(1));
    let acf = (0..=max_lag)
        .map(|k| {
            let prods: Vec<f64> = centered
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .collect();
            pairwise_sum(&prods) / denom
        })
        .collect();
    Some(acf)
}

/// Pearson correlation of two equal-length slices; `None` if either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}
