//! Recurrence matrices, thresholded recurrence plots, line-based
//! quantification, and grayscale rendering.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::StateMatrix;
use crate::error::{Error, Result};

/// K×K pairwise Euclidean distances between states.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceMatrix(DMatrix<f64>);

impl RecurrenceMatrix {
    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Each unordered pair is computed once and mirrored, so the result is
/// exactly symmetric with an exactly zero diagonal.
pub fn recurrence_matrix(states: &StateMatrix) -> RecurrenceMatrix {
    let k = states.k();
    let upper: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| (i + 1..k).map(|j| euclidean(states.row(i), states.row(j))).collect())
        .collect();
    let mut m = DMatrix::zeros(k, k);
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    RecurrenceMatrix(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Recurrent where the distance is at most ε.
    Fixed(f64),
    /// ε is the given quantile of the off-diagonal distances.
    TargetRate(f64),
}

/// Thresholded recurrence plot, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRecurrence {
    k: usize,
    bits: Vec<bool>,
    pub rule: ThresholdRule,
    /// Distance cut-off actually applied.
    pub epsilon: f64,
}

impl BinaryRecurrence {
    /// Wraps an arbitrary square bit pattern (row-major).
    pub fn from_bits(k: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != k * k {
            return Err(Error::LengthMismatch {
                context: "binary recurrence".into(),
                expected: k * k,
                found: bits.len(),
            });
        }
        Ok(Self {
            k,
            bits,
            rule: ThresholdRule::Fixed(f64::NAN),
            epsilon: f64::NAN,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.k + j]
    }

    /// Fraction of off-diagonal cells that are recurrent.
    pub fn recurrence_rate(&self) -> f64 {
        let k = self.k;
        if k < 2 {
            return 0.0;
        }
        let on = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.get(i, j))
            .count();
        on as f64 / (k * (k - 1)) as f64
    }
}

pub fn threshold(rm: &RecurrenceMatrix, rule: ThresholdRule) -> Result<BinaryRecurrence> {
    let k = rm.k();
    let epsilon = match rule {
        ThresholdRule::Fixed(eps) => {
            if !(eps >= 0.0) {
                return Err(Error::InvalidParams(format!("threshold {eps} must be ≥ 0")));
            }
            eps
        }
        ThresholdRule::TargetRate(rate) => {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(Error::InvalidRate(rate));
            }
            let mut dists: Vec<f64> = (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .map(|(i, j)| rm.get(i, j))
                .collect();
            if dists.is_empty() {
                0.0
            } else {
                dists.sort_by(f64::total_cmp);
                let idx = ((rate * dists.len() as f64).ceil() as usize).clamp(1, dists.len()) - 1;
                dists[idx]
            }
        }
    };
    let bits = rm.as_matrix().transpose().iter().map(|&d| d <= epsilon).collect();
    Ok(BinaryRecurrence { k, bits, rule, epsilon })
}

/// Line-based recurrence quantification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RqaFeatures {
    pub rr: f64,
    pub det: f64,
    pub l_mean: f64,
    pub l_max: usize,
    pub lam: f64,
    pub tt: f64,
    pub entr: f64,
    /// No off-diagonal recurrences; every line measure is reported as 0.
    pub no_recurrences: bool,
}

impl RqaFeatures {
    pub const NAMES: [&'static str; 7] = ["rr", "det", "lmean", "lmax", "lam", "tt", "entr"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.rr,
            self.det,
            self.l_mean,
            self.l_max as f64,
            self.lam,
            self.tt,
            self.entr,
        ]
    }
}

/// Run-length histogram: length → number of runs.
type Histogram = BTreeMap<usize, usize>;

fn push_run(hist: &mut Histogram, len: usize) {
    if len > 0 {
        *hist.entry(len).or_insert(0) += 1;
    }
}

/// Diagonal runs in both triangles; the main diagonal is left out.
fn diagonal_histogram(br: &BinaryRecurrence) -> Histogram {
    let k = br.k();
    let mut hist = Histogram::new();
    for offset in 1..k {
        for (row_start, col_start) in [(0, offset), (offset, 0)] {
            let mut run = 0;
            for s in 0..k - offset {
                if br.get(row_start + s, col_start + s) {
                    run += 1;
                } else {
                    push_run(&mut hist, run);
                    run = 0;
                }
            }
            push_run(&mut hist, run);
        }
    }
    hist
}

/// Vertical runs over full columns, main diagonal included.
fn vertical_histogram(br: &BinaryRecurrence) -> Histogram {
    let k = br.k();
    let mut hist = Histogram::new();
    for j in 0..k {
        let mut run = 0;
        for i in 0..k {
            if br.get(i, j) {
                run += 1;
            } else {
                push_run(&mut hist, run);
                run = 0;
            }
        }
        push_run(&mut hist, run);
    }
    hist
}

struct LineStats {
    /// Σ l·P(l) over all lengths.
    points: usize,
    /// Σ l·P(l) over lengths ≥ min.
    long_points: usize,
    /// Σ P(l) over lengths ≥ min.
    long_lines: usize,
    longest: usize,
    entropy: f64,
}

fn line_stats(hist: &Histogram, min_len: usize) -> LineStats {
    let points = hist.iter().map(|(l, c)| l * c).sum();
    let long = || hist.range(min_len..);
    let long_points = long().map(|(l, c)| l * c).sum();
    let long_lines: usize = long().map(|(_, c)| c).sum();
    let entropy = if long_lines == 0 {
        0.0
    } else {
        -long()
            .map(|(_, &c)| {
                let p = c as f64 / long_lines as f64;
                p * p.ln()
            })
            .sum::<f64>()
    };
    LineStats {
        points,
        long_points,
        long_lines,
        longest: hist.keys().next_back().copied().unwrap_or(0),
        entropy: entropy.max(0.0),
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// RR, DET, ⟨L⟩, L_max, ENTR from diagonal lines and LAM, TT from vertical lines.
pub fn rqa_measures(br: &BinaryRecurrence, l_min: usize, v_min: usize) -> Result<RqaFeatures> {
    let k = br.k();
    if k < 2 {
        return Err(Error::InvalidParams(format!("RQA needs K ≥ 2, got {k}")));
    }
    if l_min == 0 || v_min == 0 {
        return Err(Error::InvalidParams("minimum line lengths must be ≥ 1".into()));
    }
    let diag = line_stats(&diagonal_histogram(br), l_min);
    if diag.points == 0 {
        return Ok(RqaFeatures {
            rr: 0.0,
            det: 0.0,
            l_mean: 0.0,
            l_max: 0,
            lam: 0.0,
            tt: 0.0,
            entr: 0.0,
            no_recurrences: true,
        });
    }
    let vert = line_stats(&vertical_histogram(br), v_min);
    Ok(RqaFeatures {
        rr: diag.points as f64 / (k * (k - 1)) as f64,
        det: ratio(diag.long_points, diag.points),
        l_mean: ratio(diag.long_points, diag.long_lines),
        l_max: diag.longest,
        lam: ratio(vert.long_points, vert.points),
        tt: ratio(vert.long_points, vert.long_lines),
        entr: diag.entropy,
        no_recurrences: false,
    })
}

fn is_exactly_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
}

/// Corner-aligned bilinear resampling to `size × size`.
///
/// Output sample `i` maps to input coordinate `i·(K-1)/(size-1)`. Symmetric
/// inputs give exactly symmetric outputs.
pub fn resize_bilinear(m: &DMatrix<f64>, size: usize) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if rows < 2 || cols < 2 || size < 2 {
        return Err(Error::InvalidParams(format!(
            "bilinear resize needs a matrix of at least 2×2 and size ≥ 2, got {rows}×{cols} → {size}"
        )));
    }
    let grid = |len: usize| -> Vec<(usize, f64)> {
        (0..size)
            .map(|i| {
                let src = i as f64 * (len - 1) as f64 / (size - 1) as f64;
                let base = (src.floor() as usize).min(len - 2);
                (base, src - base as f64)
            })
            .collect()
    };
    let (gr, gc) = (grid(rows), grid(cols));
    let sample = |i: usize, j: usize| -> f64 {
        let ((r, fr), (c, fc)) = (gr[i], gc[j]);
        let lerp = |a: f64, b: f64, t: f64| (a + t * (b - a)).clamp(a.min(b), a.max(b));
        let top = lerp(m[(r, c)], m[(r, c + 1)], fc);
        let bottom = lerp(m[(r + 1, c)], m[(r + 1, c + 1)], fc);
        lerp(top, bottom, fr)
    };
    let mut out = DMatrix::zeros(size, size);
    if is_exactly_symmetric(m) {
        for i in 0..size {
            for j in i..size {
                let v = sample(i, j);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
    } else {
        for i in 0..size {
            for j in 0..size {
                out[(i, j)] = sample(i, j);
            }
        }
    }
    Ok(out)
}

/// Min-max normalized 8-bit pixels, row 0 first. A constant matrix maps to 0.
pub fn gray_pixels(m: &DMatrix<f64>) -> Vec<u8> {
    let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| {
            if range > 0.0 {
                (255.0 * (m[(i, j)] - lo) / range).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Writes a binary PGM (P5). Row 0 is the top of the image.
pub fn render_grayscale(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    if m.is_empty() {
        return Err(Error::InvalidParams("cannot render an empty matrix".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n255\n", m.ncols(), m.nrows()).map_err(|e| Error::io(path, e))?;
    w.write_all(&gray_pixels(m)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Threshold rule and minimum line lengths for [`series_rqa`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RqaParams {
    pub rule: ThresholdRule,
    pub l_min: usize,
    pub v_min: usize,
}

impl Default for RqaParams {
    fn default() -> Self {
        Self {
            rule: ThresholdRule::TargetRate(0.1),
            l_min: 2,
            v_min: 2,
        }
    }
}

/// Everything derived from one embedded series.
#[derive(Debug, Clone)]
pub struct SeriesRecurrence {
    pub matrix: RecurrenceMatrix,
    pub binary: BinaryRecurrence,
    pub features: RqaFeatures,
}

/// Embeds `values`, optionally keeps only the first `force_k` states, and
/// quantifies the thresholded recurrence plot.
pub fn series_rqa(
    values: &[f64],
    embedding: crate::embedding::EmbeddingParams,
    force_k: Option<usize>,
    params: RqaParams,
) -> Result<SeriesRecurrence> {
    let mut states = crate::embedding::embed_series(values, embedding)?;
    if let Some(k) = force_k {
        if k < 2 || k > states.k() {
            return Err(Error::InvalidParams(format!(
                "cannot pin K = {k}: embedding (m = {}, tau = {}) yields {} states",
                embedding.m,
                embedding.tau,
                states.k()
            )));
        }
        states.truncate(k);
    }
    let matrix = recurrence_matrix(&states);
    let binary = threshold(&matrix, params.rule)?;
    let features = rqa_measures(&binary, params.l_min, params.v_min)?;
    Ok(SeriesRecurrence { matrix, binary, features })
}
