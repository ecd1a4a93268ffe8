//! Brute-force reference implementations shared by the integration tests and
//! the acceptance harness. Each one is written for clarity, not speed, and
//! shares no code with the library routines it checks.
#![allow(dead_code)]

use brainscale::data::Label;
use nalgebra::DMatrix;

/// Delay vector `(v_i, v_{i+τ}, …)` of dimension `d`.
fn delay(values: &[f64], i: usize, tau: usize, d: usize) -> Vec<f64> {
    (0..d).map(|c| values[i + c * tau]).collect()
}

fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Cao's E1 and E2 by exhaustive neighbor scan: candidates within `theiler`
/// samples of `i` or at distance exactly zero are passed over; ties go to
/// the lower index.
pub fn brute_cao(values: &[f64], tau: usize, d_max: usize, theiler: usize) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let mut e = Vec::new();
    let mut e_star = Vec::new();
    for d in 1..=d_max {
        let len = n - d * tau;
        let vecs: Vec<Vec<f64>> = (0..len).map(|i| delay(values, i, tau, d)).collect();
        let mut sum_a = 0.0;
        let mut sum_star = 0.0;
        let mut count = 0usize;
        for i in 0..len {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..len {
                if i.abs_diff(j) <= theiler {
                    continue;
                }
                let dist = chebyshev(&vecs[i], &vecs[j]);
                if dist == 0.0 {
                    continue;
                }
                if best.is_none_or(|(bd, _)| dist < bd) {
                    best = Some((dist, j));
                }
            }
            if let Some((dist, j)) = best {
                let next = (values[i + d * tau] - values[j + d * tau]).abs();
                sum_a += dist.max(next) / dist;
                sum_star += next;
                count += 1;
            }
        }
        e.push(sum_a / count as f64);
        e_star.push(sum_star / count as f64);
    }
    let ratios = |v: &[f64]| v.windows(2).map(|w| w[1] / w[0]).collect::<Vec<_>>();
    (ratios(&e), ratios(&e_star))
}

/// Lengths of every maximal run of `true` cells along the given walk.
fn runs(cells: impl Iterator<Item = bool>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run = 0;
    for c in cells {
        if c {
            run += 1;
        } else if run > 0 {
            out.push(run);
            run = 0;
        }
    }
    if run > 0 {
        out.push(run);
    }
    out
}

/// Every diagonal run off the main diagonal, found by starting a walk at each
/// cell whose up-left neighbor is empty.
pub fn brute_diagonal_runs(bits: &[Vec<bool>]) -> Vec<usize> {
    let k = bits.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i == j || !bits[i][j] {
                continue;
            }
            if i > 0 && j > 0 && bits[i - 1][j - 1] {
                continue;
            }
            let mut len = 0;
            while i + len < k && j + len < k && bits[i + len][j + len] {
                len += 1;
            }
            out.push(len);
        }
    }
    out
}

/// Every vertical run, main diagonal included.
pub fn brute_vertical_runs(bits: &[Vec<bool>]) -> Vec<usize> {
    let k = bits.len();
    (0..k).flat_map(|j| runs((0..k).map(move |i| bits[i][j]))).collect()
}

/// `Σ_{l ≥ min} l / Σ l` over a list of run lengths.
pub fn determinism_from_runs(lengths: &[usize], min: usize) -> f64 {
    let total: usize = lengths.iter().sum();
    let long: usize = lengths.iter().filter(|&&l| l >= min).sum();
    if total == 0 {
        0.0
    } else {
        long as f64 / total as f64
    }
}

/// Two-pass covariance with the textbook double loop.
pub fn two_pass_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let means: Vec<f64> = (0..p).map(|j| (0..n).map(|t| x[(t, j)]).sum::<f64>() / n as f64).collect();
    DMatrix::from_fn(p, p, |a, b| {
        (0..n).map(|t| (x[(t, a)] - means[a]) * (x[(t, b)] - means[b])).sum::<f64>() / (n - 1) as f64
    })
}

/// Residuals of column `target` after least-squares regression on the
/// columns in `others` plus an intercept (QR-based solve).
fn residuals(x: &DMatrix<f64>, target: usize, others: &[usize]) -> Vec<f64> {
    let n = x.nrows();
    let design = DMatrix::from_fn(n, others.len() + 1, |t, c| if c == 0 { 1.0 } else { x[(t, others[c - 1])] });
    let y = x.column(target).into_owned();
    let qr = design.clone().qr();
    let rhs = qr.q().transpose() * &y;
    let beta = qr.r().solve_upper_triangular(&rhs).expect("full-rank design");
    (y - design * beta).iter().copied().collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Partial correlation of columns `i` and `j` given all others, as the
/// correlation of regression residuals.
pub fn residual_partial_correlation(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let others: Vec<usize> = (0..x.ncols()).filter(|&c| c != i && c != j).collect();
    correlation(&residuals(x, i, &others), &residuals(x, j, &others))
}

pub fn marginal_correlation(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let a: Vec<f64> = x.column(i).iter().copied().collect();
    let b: Vec<f64> = x.column(j).iter().copied().collect();
    correlation(&a, &b)
}

fn gini_of(labels: &[Label]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let n = labels.len() as f64;
    let p1 = labels.iter().filter(|&&l| l == Label::Class1).count() as f64 / n;
    1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)
}

/// Exhaustive split search: every feature, every midpoint between distinct
/// sorted values, impurity recomputed from scratch. Returns
/// `(feature, threshold, gain)` with ties to the lowest feature, then the
/// smallest threshold.
pub fn exhaustive_split(x: &[Vec<f64>], y: &[Label], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let n = x.len();
    let parent = gini_of(y);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<Label> = (0..n).filter(|&i| x[i][f] <= t).map(|i| y[i]).collect();
            let right: Vec<Label> = (0..n).filter(|&i| x[i][f] > t).map(|i| y[i]).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let gain = parent
                - left.len() as f64 / n as f64 * gini_of(&left)
                - right.len() as f64 / n as f64 * gini_of(&right);
            if best.is_none_or(|(_, _, g)| gain > g + 1e-12) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

/// Empirical quantile by sorting (nearest-rank).
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    values[idx]
}

/// Kendall's W from raw series: ranks by counting smaller and equal values,
/// tie correction from explicit group sizes.
pub fn brute_kendall_w(rows: &[&[f64]]) -> f64 {
    let m = rows.len() as f64;
    let n = rows[0].len();
    let ranks: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            (0..n)
                .map(|t| {
                    let less = r.iter().filter(|&&v| v < r[t]).count() as f64;
                    let equal = r.iter().filter(|&&v| v == r[t]).count() as f64;
                    less + (equal + 1.0) / 2.0
                })
                .collect()
        })
        .collect();
    let totals: Vec<f64> = (0..n).map(|t| ranks.iter().map(|r| r[t]).sum()).collect();
    let mean = totals.iter().sum::<f64>() / n as f64;
    let s: f64 = totals.iter().map(|r| (r - mean).powi(2)).sum();
    let ties: f64 = rows
        .iter()
        .map(|r| {
            let mut sorted = r.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted
                .chunk_by(|a, b| a == b)
                .map(|g| (g.len().pow(3) - g.len()) as f64)
                .sum::<f64>()
        })
        .sum();
    let nf = n as f64;
    12.0 * s / (m * m * (nf.powi(3) - nf) - m * ties)
}
