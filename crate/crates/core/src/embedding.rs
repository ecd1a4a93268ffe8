//! Delay-coordinate embedding: delay selection, Cao's false-neighbor
//! statistics for the embedding dimension, and the K×M state matrix.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{autocorrelation, pairwise_sum};

/// Embedding dimension `m` and delay `tau`, both at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EmbeddingParams {
    pub m: usize,
    pub tau: usize,
}

impl EmbeddingParams {
    pub fn new(m: usize, tau: usize) -> Result<Self> {
        if m == 0 || tau == 0 {
            return Err(Error::InvalidParams(format!("m = {m}, tau = {tau}; both must be ≥ 1")));
        }
        Ok(Self { m, tau })
    }

    /// Span `(m - 1)·tau` covered by one state vector.
    pub fn window(&self) -> usize {
        (self.m - 1) * self.tau
    }

    /// Number of states for a series of length `n`, if at least one fits.
    pub fn state_count(&self, n: usize) -> Option<usize> {
        n.checked_sub(self.window()).filter(|k| *k >= 1)
    }
}

/// K delay vectors of dimension M, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    k: usize,
    m: usize,
    data: Vec<f64>,
}

impl StateMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || m == 0 {
            return Err(Error::InvalidParams("state matrix needs at least one non-empty row".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::LengthMismatch {
                context: "state vector".into(),
                expected: m,
                found: bad.len(),
            });
        }
        Ok(Self {
            k: rows.len(),
            m,
            data: rows.concat(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }

    /// Keeps only the first `k` states.
    pub fn truncate(&mut self, k: usize) {
        if k < self.k {
            self.k = k;
            self.data.truncate(k * self.m);
        }
    }
}

/// Row `i` is `(v[i], v[i + tau], …, v[i + (m-1)·tau])`.
pub fn embed_series(values: &[f64], params: EmbeddingParams) -> Result<StateMatrix> {
    let k = params.state_count(values.len()).ok_or_else(|| {
        Error::InvalidParams(format!(
            "(m-1)·tau = {} must be below the series length {}",
            params.window(),
            values.len()
        ))
    })?;
    let mut data = Vec::with_capacity(k * params.m);
    for i in 0..k {
        data.extend((0..params.m).map(|j| values[i + j * params.tau]));
    }
    Ok(StateMatrix { k, m: params.m, data })
}

/// How a delay was arrived at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayRule {
    /// First lag where the autocorrelation falls below 1/e.
    InverseE,
    /// First local minimum of the autocorrelation.
    FirstMinimum,
    /// Neither criterion met inside the lag range.
    Fallback,
    /// Constant series; autocorrelation undefined.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DelayChoice {
    pub tau: usize,
    pub rule: DelayRule,
}

/// Largest admissible `max_lag` for [`select_delay`] on a series of length `n`.
pub fn default_max_lag(n: usize) -> usize {
    n.saturating_sub(1) / 2
}

/// Autocorrelation-based delay: the 1/e crossing, else the first local
/// minimum, else 1.
pub fn select_delay(values: &[f64], max_lag: usize) -> Result<DelayChoice> {
    let n = values.len();
    if n < 8 {
        return Err(Error::SeriesTooShort { needed: 8, len: n });
    }
    if max_lag == 0 || 2 * max_lag >= n {
        return Err(Error::InvalidParams(format!("max_lag {max_lag} must lie in 1..{}", n / 2)));
    }
    let Some(acf) = autocorrelation(values, max_lag) else {
        return Ok(DelayChoice {
            tau: 1,
            rule: DelayRule::Degenerate,
        });
    };
    let threshold = (-1.0f64).exp();
    if let Some(k) = (1..=max_lag).find(|&k| acf[k] < threshold) {
        return Ok(DelayChoice {
            tau: k,
            rule: DelayRule::InverseE,
        });
    }
    if let Some(k) = (1..max_lag).find(|&k| acf[k] < acf[k - 1] && acf[k] <= acf[k + 1]) {
        return Ok(DelayChoice {
            tau: k,
            rule: DelayRule::FirstMinimum,
        });
    }
    Ok(DelayChoice {
        tau: 1,
        rule: DelayRule::Fallback,
    })
}

/// Cao's E1/E2 statistics for dimensions `1..d_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaoCurve {
    pub tau: usize,
    pub theiler: usize,
    /// `E(d)` for `d = 1..=d_max`.
    pub e: Vec<f64>,
    /// `E*(d)` for `d = 1..=d_max`.
    pub e_star: Vec<f64>,
    /// `E1(d) = E(d+1)/E(d)` for `d = 1..d_max`.
    pub e1: Vec<f64>,
    /// `E2(d) = E*(d+1)/E*(d)` for `d = 1..d_max`.
    pub e2: Vec<f64>,
    /// States per dimension whose every candidate neighbor coincided with them.
    pub skipped: Vec<usize>,
    /// Coincident candidate pairs passed over during the neighbor search.
    pub coincident_pairs: Vec<usize>,
}

impl CaoCurve {
    pub fn d_max(&self) -> usize {
        self.e.len()
    }
}

/// Nearest non-coincident neighbor of `i` under the Chebyshev metric, among
/// states `0..len` of dimension `dim`. Ties go to the lower index.
struct NeighborSearch<'a> {
    values: &'a [f64],
    tau: usize,
    dim: usize,
    theiler: usize,
    // state indices sorted by their first coordinate, and the inverse map
    order: Vec<usize>,
    position: Vec<usize>,
}

struct Neighbor {
    /// `(index, distance)` of the nearest non-coincident state, if any.
    nearest: Option<(usize, f64)>,
    coincident: usize,
}

impl<'a> NeighborSearch<'a> {
    fn new(values: &'a [f64], tau: usize, dim: usize, theiler: usize, len: usize) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let mut position = vec![0; len];
        for (p, &i) in order.iter().enumerate() {
            position[i] = p;
        }
        Self {
            values,
            tau,
            dim,
            theiler,
            order,
            position,
        }
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        (0..self.dim)
            .map(|c| (self.values[i + c * self.tau] - self.values[j + c * self.tau]).abs())
            .fold(0.0, f64::max)
    }

    fn nearest(&self, i: usize) -> Neighbor {
        let x = self.values[i];
        let p = self.position[i];
        let mut best: Option<(f64, usize)> = None;
        let mut coincident = 0;
        let mut consider = |j: usize, best: &mut Option<(f64, usize)>| {
            if i.abs_diff(j) <= self.theiler {
                return;
            }
            let d = self.dist(i, j);
            if d == 0.0 {
                coincident += 1;
                return;
            }
            let better = match *best {
                None => true,
                Some((bd, bj)) => match d.total_cmp(&bd) {
                    Ordering::Less => true,
                    Ordering::Equal => j < bj,
                    Ordering::Greater => false,
                },
            };
            if better {
                *best = Some((d, j));
            }
        };
        // walk outward in first-coordinate order; |x_j - x_i| bounds the distance
        let (mut lo, mut hi) = (p, p + 1);
        let (mut lo_open, mut hi_open) = (true, true);
        while lo_open || hi_open {
            if lo_open {
                if lo == 0 {
                    lo_open = false;
                } else {
                    let j = self.order[lo - 1];
                    if best.is_some_and(|(bd, _)| (self.values[j] - x).abs() > bd) {
                        lo_open = false;
                    } else {
                        consider(j, &mut best);
                        lo -= 1;
                    }
                }
            }
            if hi_open {
                if hi >= self.order.len() {
                    hi_open = false;
                } else {
                    let j = self.order[hi];
                    if best.is_some_and(|(bd, _)| (self.values[j] - x).abs() > bd) {
                        hi_open = false;
                    } else {
                        consider(j, &mut best);
                        hi += 1;
                    }
                }
            }
        }
        Neighbor {
            nearest: best.map(|(d, j)| (j, d)),
            coincident,
        }
    }
}

/// Default temporal exclusion for [`cao_curves`]: states closer in time than
/// one delay are not neighbor candidates.
pub fn default_theiler(tau: usize) -> usize {
    tau
}

/// Cao's averaged neighbor-distance ratios for `d = 1..=d_max`.
///
/// For each state `y_i(d)` the nearest neighbor (maximum norm) is located
/// among the states that extend to dimension `d+1`, skipping states within
/// `theiler` samples of `i` and states coincident with `y_i(d)`. `a(i,d)` is
/// the ratio of the pair's distances in `d+1` and `d` dimensions and `E(d)`
/// its mean. `E*(d)` averages `|x_{i+dτ} - x_{n+dτ}|` over the same pairs.
pub fn cao_curves(values: &[f64], tau: usize, d_max: usize, theiler: usize) -> Result<CaoCurve> {
    if d_max < 3 {
        return Err(Error::InvalidParams(format!("d_max = {d_max}; need at least 3")));
    }
    if tau == 0 {
        return Err(Error::InvalidParams("tau must be ≥ 1".into()));
    }
    let n = values.len();
    let needed = d_max * tau + theiler + 2;
    if n < needed {
        return Err(Error::SeriesTooShort { needed, len: n });
    }
    let mut e = Vec::with_capacity(d_max);
    let mut e_star = Vec::with_capacity(d_max);
    let mut skipped = Vec::with_capacity(d_max);
    let mut coincident_pairs = Vec::with_capacity(d_max);
    for d in 1..=d_max {
        let len = n - d * tau;
        let search = NeighborSearch::new(values, tau, d, theiler, len);
        let per_state: Vec<Neighbor> = (0..len).into_par_iter().map(|i| search.nearest(i)).collect();
        let mut ratios = Vec::with_capacity(len);
        let mut next_diffs = Vec::with_capacity(len);
        let mut coincident = 0;
        let mut skip = 0;
        for (i, nb) in per_state.into_iter().enumerate() {
            coincident += nb.coincident;
            let Some((j, dist)) = nb.nearest else {
                skip += 1;
                continue;
            };
            let next = (values[i + d * tau] - values[j + d * tau]).abs();
            ratios.push(dist.max(next) / dist);
            next_diffs.push(next);
        }
        if ratios.is_empty() {
            return Err(Error::DegenerateSeries(format!(
                "every state coincides with all of its candidate neighbors in dimension {d}"
            )));
        }
        e.push(pairwise_sum(&ratios) / ratios.len() as f64);
        e_star.push(pairwise_sum(&next_diffs) / next_diffs.len() as f64);
        skipped.push(skip);
        coincident_pairs.push(coincident / 2);
    }
    let ratio = |v: &[f64]| v.windows(2).map(|w| w[1] / w[0]).collect::<Vec<_>>();
    Ok(CaoCurve {
        tau,
        theiler,
        e1: ratio(&e),
        e2: ratio(&e_star),
        e,
        e_star,
        skipped,
        coincident_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DimensionChoice {
    pub m: usize,
    pub saturation_found: bool,
}

/// Smallest `d` from which every remaining `E1` value stays within
/// `epsilon` of 1; `d_max` (unsaturated) when no such `d` exists.
pub fn choose_dimension(e1: &[f64], epsilon: f64) -> DimensionChoice {
    let in_band = |v: &f64| (v - 1.0).abs() < epsilon;
    let tail_start = e1.iter().rposition(|v| !in_band(v)).map_or(0, |p| p + 1);
    if tail_start < e1.len() {
        DimensionChoice {
            m: tail_start + 1,
            saturation_found: true,
        }
    } else {
        DimensionChoice {
            m: e1.len() + 1,
            saturation_found: false,
        }
    }
}

/// How the delay is obtained for [`choose_embedding`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for TauMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(TauMode::Auto),
            other => match other.parse::<usize>() {
                Ok(t) if t >= 1 => Ok(TauMode::Fixed(t)),
                _ => Err(Error::InvalidParams(format!("tau must be `auto` or a positive integer, got {other:?}"))),
            },
        }
    }
}

/// Per-series delay and dimension with the evidence behind them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingChoice {
    pub params: EmbeddingParams,
    /// `None` when the delay was fixed by the caller.
    pub delay_rule: Option<DelayRule>,
    pub saturation_found: bool,
    /// Largest dimension evaluated; below the request when the series is short.
    pub d_max_used: usize,
    pub curve: CaoCurve,
}

/// Delay from `tau` and dimension from Cao's E1 curve up to `d_max`, lowered
/// to what the series length supports.
pub fn choose_embedding(values: &[f64], tau: TauMode, d_max: usize, epsilon: f64) -> Result<EmbeddingChoice> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} must be > 0")));
    }
    let (tau, delay_rule) = match tau {
        TauMode::Fixed(t) => (t, None),
        TauMode::Auto => {
            let c = select_delay(values, default_max_lag(values.len()))?;
            (c.tau, Some(c.rule))
        }
    };
    let theiler = default_theiler(tau);
    let fits = values.len().saturating_sub(theiler + 2) / tau.max(1);
    let d_max_used = d_max.min(fits);
    if d_max_used < 3 {
        return Err(Error::SeriesTooShort {
            needed: 3 * tau + theiler + 2,
            len: values.len(),
        });
    }
    let curve = cao_curves(values, tau, d_max_used, theiler)?;
    let dim = choose_dimension(&curve.e1, epsilon);
    Ok(EmbeddingChoice {
        params: EmbeddingParams::new(dim.m, tau)?,
        delay_rule,
        saturation_found: dim.saturation_found,
        d_max_used,
        curve,
    })
}
