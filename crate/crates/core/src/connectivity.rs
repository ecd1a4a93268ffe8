//! Partial-correlation graphs per network, their spectra, and degree-based
//! ROI rankings across subjects.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{Label, NetworkId, Subject};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, spd_inverse_from_factor, symmetric_eigen};
use crate::numeric::mean;

/// Unbiased covariance of the columns of an N×n matrix.
///
/// Columns whose samples are all equal contribute exact zeros.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n_t, n) = x.shape();
    if n_t < 2 {
        return Err(Error::SeriesTooShort { needed: 2, len: n_t });
    }
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            col.fill(0.0);
        } else {
            let mu = mean(col.as_slice());
            col.add_scalar_mut(-mu);
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c = centered.column(i).dot(&centered.column(j)) / (n_t - 1) as f64;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    Ok(cov)
}

/// `(1-λ)·cov + λ·diag(cov)`.
pub fn shrink(cov: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        if i == j {
            cov[(i, i)]
        } else {
            (1.0 - lambda) * cov[(i, j)]
        }
    })
}

fn check_shrinkage(lambda: f64) -> Result<()> {
    if (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("shrinkage {lambda} must lie in [0, 1)")))
    }
}

/// Inverse of the shrunk covariance via Cholesky.
pub fn precision_matrix(cov: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_shrinkage(lambda)?;
    let l = cholesky(&shrink(cov, lambda)).map_err(|(index, pivot)| Error::SingularCovariance { index, pivot })?;
    Ok(spd_inverse_from_factor(&l))
}

/// `ρ_ij = -P_ij / sqrt(P_ii·P_jj)` off the diagonal, 0 on it.
pub fn partial_correlation(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(index) = (0..p.nrows()).find(|&i| !(p[(i, i)] > 0.0)) {
        return Err(Error::NonPositiveDiagonal {
            index,
            value: p[(index, index)],
        });
    }
    Ok(DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| {
        if i == j {
            0.0
        } else {
            -p[(i, j)] / (p[(i, i)] * p[(j, j)]).sqrt()
        }
    }))
}

/// Partial-correlation graph of one subject's network.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainGraph {
    pub network: NetworkId,
    pub adjacency: DMatrix<f64>,
    pub roi_labels: Vec<String>,
    /// ROIs whose series were constant and received a floor variance.
    pub constant_rois: Vec<usize>,
}

impl BrainGraph {
    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Adjacency as CSV with ROI labels as header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_matrix_csv(path, &self.adjacency, &self.roi_labels)
    }
}

/// Square matrix as CSV, one row per matrix row, 17 significant digits.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, header: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    wtr.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|&v| crate::data::format_sample(v)))
            .map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Gives zero-variance ROIs a small positive variance so the shrunk
/// covariance stays factorizable: `max(λ, 1e-6)` times the mean positive
/// variance (or 1 when every ROI is constant).
fn floor_constant_variances(cov: &mut DMatrix<f64>, lambda: f64) -> Vec<usize> {
    let n = cov.nrows();
    let constant: Vec<usize> = (0..n).filter(|&i| cov[(i, i)] <= 0.0).collect();
    if constant.is_empty() {
        return constant;
    }
    let positive: Vec<f64> = (0..n).map(|i| cov[(i, i)]).filter(|&v| v > 0.0).collect();
    let base = if positive.is_empty() { 1.0 } else { mean(&positive) };
    let floor = lambda.max(1e-6) * base;
    for &i in &constant {
        cov[(i, i)] = floor;
    }
    constant
}

/// Covariance → shrunk precision → partial correlations for one network.
pub fn build_graph(subject: &Subject, network: NetworkId, lambda: f64) -> Result<BrainGraph> {
    let context = || format!("subject {}, network {network}", subject.subject_id);
    let rois = subject.network(network).ok_or_else(|| Error::MissingNetworkFile {
        subject: subject.subject_id.clone(),
        path: network.file_name().into(),
    })?;
    let x = subject.series_matrix(network).expect("network present");
    let graph = (|| {
        let mut cov = sample_covariance(&x)?;
        let constant_rois = floor_constant_variances(&mut cov, lambda);
        let p = precision_matrix(&cov, lambda)?;
        Ok(BrainGraph {
            network,
            adjacency: partial_correlation(&p)?,
            roi_labels: rois.iter().map(|r| r.roi_label.clone()).collect(),
            constant_rois,
        })
    })();
    graph.map_err(|e: Error| e.context(context()))
}

/// Spectrum of an adjacency matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenFeatures {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvector of the largest eigenvalue, sign-normalized.
    pub leading_vector: Vec<f64>,
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn eigen_features(g: &BrainGraph) -> Result<EigenFeatures> {
    eigen_features_of(&g.adjacency)
}

pub fn eigen_features_of(a: &DMatrix<f64>) -> Result<EigenFeatures> {
    let eig = symmetric_eigen(a)?;
    let mut order: Vec<usize> = (0..eig.values.len()).collect();
    order.sort_by(|&i, &j| eig.values[j].total_cmp(&eig.values[i]));
    let eigenvalues = order.iter().map(|&i| eig.values[i]).collect();
    let mut leading_vector: Vec<f64> = match order.first() {
        Some(&top) => eig.vectors.column(top).iter().copied().collect(),
        None => Vec::new(),
    };
    let norm = leading_vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        leading_vector.iter_mut().for_each(|x| *x /= norm);
    }
    fix_sign(&mut leading_vector);
    Ok(EigenFeatures {
        eigenvalues,
        leading_vector,
    })
}

/// Edge counts per ROI; `signed` keeps only positive correlations above `t`.
pub fn degrees(adjacency: &DMatrix<f64>, t: f64, signed: bool) -> Vec<usize> {
    let n = adjacency.nrows();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    let rho = adjacency[(i, j)];
                    j != i && if signed { rho > t } else { rho.abs() > t }
                })
                .count()
        })
        .collect()
}

/// Degrees and the ROI order they induce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeRanking {
    pub degrees: Vec<usize>,
    /// ROI indices by degree descending, index ascending on ties.
    pub order: Vec<usize>,
}

pub fn degree_and_rank(g: &BrainGraph, t: f64, signed: bool) -> Result<DegreeRanking> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("edge threshold {t} must be ≥ 0")));
    }
    let degrees = degrees(&g.adjacency, t, signed);
    let mut order: Vec<usize> = (0..degrees.len()).collect();
    order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
    Ok(DegreeRanking { degrees, order })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub class: Label,
    pub roi: usize,
    pub roi_label: String,
    pub count: usize,
    pub fraction: f64,
}

/// Per class, how many subjects rank each ROI in their top k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTable {
    pub k: usize,
    pub class_sizes: BTreeMap<Label, usize>,
    /// Grouped by class; within a class by count descending, ROI ascending.
    /// ROIs that never reach the top k are omitted.
    pub rows: Vec<FrequencyRow>,
}

impl FrequencyTable {
    pub fn fraction(&self, class: Label, roi: usize) -> f64 {
        self.rows
            .iter()
            .find(|r| r.class == class && r.roi == roi)
            .map_or(0.0, |r| r.fraction)
    }

    /// Columns `class,ROI no.,Dosenbach ROI,Fraction of subj.`; ROI numbers are 1-based.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["class", "ROI no.", "Dosenbach ROI", "Fraction of subj."])
            .map_err(|e| Error::csv(path, e))?;
        for r in &self.rows {
            wtr.write_record([
                r.class.to_string(),
                (r.roi + 1).to_string(),
                r.roi_label.clone(),
                r.fraction.to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn top_roi_frequency(
    rankings: &[DegreeRanking],
    labels: &[Label],
    k: usize,
    roi_labels: &[String],
) -> Result<FrequencyTable> {
    if rankings.len() != labels.len() {
        return Err(Error::LengthMismatch {
            context: "rankings vs labels".into(),
            expected: labels.len(),
            found: rankings.len(),
        });
    }
    let n = roi_labels.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("top-k {k} must lie in 1..={n}")));
    }
    if let Some(bad) = rankings.iter().find(|r| r.order.len() != n) {
        return Err(Error::LengthMismatch {
            context: "ranking length".into(),
            expected: n,
            found: bad.order.len(),
        });
    }
    let mut class_sizes = BTreeMap::new();
    let mut counts: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (ranking, &label) in rankings.iter().zip(labels) {
        *class_sizes.entry(label).or_insert(0) += 1;
        let c = counts.entry(label).or_insert_with(|| vec![0; n]);
        for &roi in &ranking.order[..k] {
            c[roi] += 1;
        }
    }
    let mut rows = Vec::new();
    for (&class, c) in &counts {
        let size = class_sizes[&class];
        let mut rois: Vec<usize> = (0..n).filter(|&r| c[r] > 0).collect();
        rois.sort_by(|&a, &b| c[b].cmp(&c[a]).then(a.cmp(&b)));
        rows.extend(rois.into_iter().map(|roi| FrequencyRow {
            class,
            roi,
            roi_label: roi_labels[roi].clone(),
            count: c[roi],
            fraction: c[roi] as f64 / size as f64,
        }));
    }
    Ok(FrequencyTable { k, class_sizes, rows })
}
