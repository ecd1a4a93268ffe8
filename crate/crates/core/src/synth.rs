//! Ground-truth signals and cohorts.
//!
//! Every generator is a pure function of its spec and seed. Cohort subjects
//! draw from independent ChaCha streams keyed by subject index, so they can
//! be generated in parallel without changing the output.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{CohortDataset, Label, NetworkId, RoiTimeSeries, Subject};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, spd_inverse_from_factor};

/// Lorenz integration steps dropped before recording.
pub const LORENZ_TRANSIENT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    /// `A·sin(2π·(t mod p)/p + φ)`
    Sine { amplitude: f64, period: f64, phase: f64 },
    /// `v_t = φ·v_{t-1} + ε_t`, `ε_t ~ N(0, σ²)`, started from the stationary law.
    Ar1 { phi: f64, noise_sd: f64 },
    GaussianNoise { sd: f64 },
    /// x-coordinate of the Lorenz system (σ=10, ρ=28, β=8/3), one sample per RK4 step.
    LorenzX { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorSpec {
    pub kind: SignalKind,
    pub n_timepoints: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: SignalKind, n_timepoints: usize, seed: u64) -> Self {
        Self {
            kind,
            n_timepoints,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_timepoints < 8 {
            return Err(Error::InvalidSpec(format!("N = {} < 8", self.n_timepoints)));
        }
        let ok = match self.kind {
            SignalKind::Sine { amplitude, period, phase } => {
                amplitude.is_finite() && period.is_finite() && period > 0.0 && phase.is_finite()
            }
            SignalKind::Ar1 { phi, noise_sd } => phi.abs() < 1.0 && noise_sd > 0.0 && noise_sd.is_finite(),
            SignalKind::GaussianNoise { sd } => sd > 0.0 && sd.is_finite(),
            SignalKind::LorenzX { dt } => dt > 0.0 && dt.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("parameters out of range: {:?}", self.kind)))
        }
    }
}

pub fn gen_signal(spec: &GeneratorSpec) -> Result<RoiTimeSeries> {
    spec.validate()?;
    let n = spec.n_timepoints;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = match spec.kind {
        SignalKind::Sine { amplitude, period, phase } => (0..n)
            .map(|t| amplitude * (2.0 * PI * ((t as f64) % period) / period + phase).sin())
            .collect(),
        SignalKind::Ar1 { phi, noise_sd } => {
            let mut v = noise_sd / (1.0 - phi * phi).sqrt() * normal(&mut rng);
            let mut out = Vec::with_capacity(n);
            out.push(v);
            for _ in 1..n {
                v = phi * v + noise_sd * normal(&mut rng);
                out.push(v);
            }
            out
        }
        SignalKind::GaussianNoise { sd } => (0..n).map(|_| sd * normal(&mut rng)).collect(),
        SignalKind::LorenzX { dt } => lorenz_x(n, dt, &mut rng),
    };
    Ok(RoiTimeSeries::from_values(values))
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn lorenz_deriv([x, y, z]: [f64; 3]) -> [f64; 3] {
    const SIGMA: f64 = 10.0;
    const RHO: f64 = 28.0;
    const BETA: f64 = 8.0 / 3.0;
    [SIGMA * (y - x), x * (RHO - z) - y, x * y - BETA * z]
}

fn rk4_step(s: [f64; 3], dt: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
    let k1 = lorenz_deriv(s);
    let k2 = lorenz_deriv(add(s, k1, dt / 2.0));
    let k3 = lorenz_deriv(add(s, k2, dt / 2.0));
    let k4 = lorenz_deriv(add(s, k3, dt));
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn lorenz_x(n: usize, dt: f64, rng: &mut impl Rng) -> Vec<f64> {
    // seeded jitter around (1, 1, 1) so different seeds give different orbits
    let mut s: [f64; 3] = std::array::from_fn(|_| 1.0 + rng.random_range(-0.5..0.5));
    for _ in 0..LORENZ_TRANSIENT {
        s = rk4_step(s, dt);
    }
    (0..n)
        .map(|_| {
            s = rk4_step(s, dt);
            s[0]
        })
        .collect()
}

/// Tridiagonal precision with unit diagonal and `-rho` on the first off-diagonals.
pub fn chain_precision(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => -rho,
        _ => 0.0,
    })
}

/// Unit-diagonal precision with `-weight` between `hub` and each leaf.
pub fn star_precision(n: usize, hub: usize, leaves: &[usize], weight: f64) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n);
    for &j in leaves {
        p[(hub, j)] = -weight;
        p[(j, hub)] = -weight;
    }
    p
}

/// Ground-truth partial correlations `-P_ij / sqrt(P_ii P_jj)`, zero diagonal.
pub fn true_partial_correlation(p: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| {
        if i == j {
            0.0
        } else {
            -p[(i, j)] / (p[(i, i)] * p[(j, j)]).sqrt()
        }
    })
}

/// Lower Cholesky factor of `P⁻¹`, used to draw `x = L·z`.
fn covariance_factor(precision: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lp = cholesky(precision).map_err(|(index, pivot)| Error::NotPositiveDefinite { index, pivot })?;
    let cov = spd_inverse_from_factor(&lp);
    cholesky(&cov).map_err(|(index, pivot)| Error::NotPositiveDefinite { index, pivot })
}

/// `n_timepoints` i.i.d. draws from N(0, LLᵀ), as an N×n matrix.
fn sample_gaussian(factor: &DMatrix<f64>, n_timepoints: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = factor.nrows();
    let mut out = DMatrix::zeros(n_timepoints, n);
    for t in 0..n_timepoints {
        let z = DVector::from_fn(n, |_, _| normal(rng));
        out.set_row(t, &(factor * z).transpose());
    }
    out
}

fn subject_rng(seed: u64, subject_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject_index as u64);
    rng
}

fn roi_series(network: NetworkId, samples: &DMatrix<f64>) -> Vec<RoiTimeSeries> {
    (0..samples.ncols())
        .map(|r| {
            RoiTimeSeries::new(
                r,
                format!("{} {}", network.name(), r + 1),
                network,
                samples.column(r).iter().copied().collect(),
            )
        })
        .collect()
}

/// Draws a two-class cohort. `network` follows `precision_class0` /
/// `precision_class1`; every other network is independent unit-variance noise.
///
/// Subjects `s000…` are class 0 followed by class 1.
pub fn gen_cohort_from_precision(
    precision_class0: &DMatrix<f64>,
    precision_class1: &DMatrix<f64>,
    network: NetworkId,
    subjects_per_class: usize,
    n_timepoints: usize,
    seed: u64,
) -> Result<CohortDataset> {
    let n = network.roi_count();
    for p in [precision_class0, precision_class1] {
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::InvalidSpec(format!(
                "precision is {}×{} but {network} has {n} ROIs",
                p.nrows(),
                p.ncols()
            )));
        }
        if (p - p.transpose()).amax() != 0.0 {
            return Err(Error::InvalidSpec("precision matrix is not symmetric".into()));
        }
    }
    if n_timepoints < 8 {
        return Err(Error::InvalidSpec(format!("N = {n_timepoints} < 8")));
    }
    let factors = [covariance_factor(precision_class0)?, covariance_factor(precision_class1)?];
    let subjects: Vec<Subject> = (0..2 * subjects_per_class)
        .into_par_iter()
        .map(|s| {
            let class = usize::from(s >= subjects_per_class);
            let mut rng = subject_rng(seed, s);
            let networks: BTreeMap<NetworkId, Vec<RoiTimeSeries>> = NetworkId::ALL
                .into_iter()
                .map(|id| {
                    let samples = if id == network {
                        sample_gaussian(&factors[class], n_timepoints, &mut rng)
                    } else {
                        DMatrix::from_fn(n_timepoints, id.roi_count(), |_, _| normal(&mut rng))
                    };
                    (id, roi_series(id, &samples))
                })
                .collect();
            Subject {
                subject_id: format!("s{s:03}"),
                label: if class == 0 { Label::Class0 } else { Label::Class1 },
                networks,
            }
        })
        .collect();
    CohortDataset::new(subjects)
}

/// Parameters of the hub-connectivity cohort.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoClassSpec {
    /// Fractional reduction of the hub's precision entries in class 1;
    /// 0 leaves the classes identical, ≥ 1 removes the hub edges.
    pub separation: f64,
    pub subjects_per_class: usize,
    pub n_timepoints: usize,
    pub network: NetworkId,
    /// Hub ROI index; `None` picks the middle ROI.
    pub hub: Option<usize>,
    pub leaves: usize,
    /// Magnitude of the hub's off-diagonal precision entries in class 0.
    pub hub_weight: f64,
    pub seed: u64,
}

impl Default for TwoClassSpec {
    fn default() -> Self {
        Self {
            separation: 1.0,
            subjects_per_class: 50,
            n_timepoints: 190,
            network: NetworkId::DefaultMode,
            hub: None,
            leaves: 12,
            hub_weight: 0.25,
            seed: 7,
        }
    }
}

impl TwoClassSpec {
    pub fn hub_index(&self) -> usize {
        self.hub.unwrap_or(self.network.roi_count() / 2)
    }

    /// Leaves are the ROIs following the hub, wrapping around.
    pub fn leaf_indices(&self) -> Vec<usize> {
        let n = self.network.roi_count();
        let hub = self.hub_index();
        (1..=self.leaves).map(|k| (hub + k) % n).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TwoClassCohort {
    pub dataset: CohortDataset,
    pub hub: usize,
    pub precision_class0: DMatrix<f64>,
    pub precision_class1: DMatrix<f64>,
    /// Diagonal loading added to restore positive definiteness, 0 if none.
    pub diagonal_loading: f64,
}

/// Smallest power-of-two multiple of 1e-3 that makes `p + δI` factorizable.
fn load_diagonal(p: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    if cholesky(p).is_ok() {
        return (p.clone(), 0.0);
    }
    let n = p.nrows();
    let mut delta = 1e-3;
    loop {
        let loaded = p + DMatrix::identity(n, n) * delta;
        if cholesky(&loaded).is_ok() {
            return (loaded, delta);
        }
        delta *= 2.0;
    }
}

/// Class 0 carries a hub ROI coupled to `leaves` neighbors; class 1 scales
/// those couplings by `1 - separation` (floored at zero).
pub fn gen_two_class_cohort(spec: &TwoClassSpec) -> Result<TwoClassCohort> {
    let n = spec.network.roi_count();
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(Error::InvalidSpec(format!("separation {} must be ≥ 0", spec.separation)));
    }
    if spec.hub_index() >= n || spec.leaves >= n {
        return Err(Error::InvalidSpec(format!(
            "hub {} / {} leaves do not fit {n} ROIs",
            spec.hub_index(),
            spec.leaves
        )));
    }
    let leaves = spec.leaf_indices();
    let hub = spec.hub_index();
    let (p0, load0) = load_diagonal(&star_precision(n, hub, &leaves, spec.hub_weight));
    let scale = (1.0 - spec.separation).max(0.0);
    let (p1, load1) = load_diagonal(&star_precision(n, hub, &leaves, spec.hub_weight * scale));
    let dataset = gen_cohort_from_precision(&p0, &p1, spec.network, spec.subjects_per_class, spec.n_timepoints, spec.seed)?;
    Ok(TwoClassCohort {
        dataset,
        hub,
        precision_class0: p0,
        precision_class1: p1,
        diagonal_loading: load0.max(load1),
    })
}
