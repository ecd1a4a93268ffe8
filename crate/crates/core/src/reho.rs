//! Regional homogeneity: Kendall's coefficient of concordance over voxel
//! neighborhoods, and selection of a representative series per region.

use std::path::Path;

use rayon::prelude::*;

use crate::data::{NetworkId, RoiTimeSeries, VoxelBlock};
use crate::error::{Error, Result};

/// Mid-ranks (1-based); tied values share the average of their positions.
pub fn rank_transform(series: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.sort_by(|&a, &b| series[a].total_cmp(&series[b]));
    let mut ranks = vec![0.0; series.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && series[order[end]] == series[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean rank
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Σ over tie groups of (g³ - g) for one rank row.
fn tie_term(ranks: &[f64]) -> f64 {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let g = g.len() as f64;
            g * g * g - g
        })
        .sum()
}

/// Kendall's W for `m` rank rows of common length `n`, with tie correction.
pub fn kcc<R: AsRef<[f64]>>(rank_rows: &[R]) -> Result<f64> {
    let m = rank_rows.len();
    if m < 2 {
        return Err(Error::DegenerateInput(format!("need at least 2 rankers, have {m}")));
    }
    let n = rank_rows[0].as_ref().len();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("need at least 2 items, have {n}")));
    }
    if let Some(bad) = rank_rows.iter().find(|r| r.as_ref().len() != n) {
        return Err(Error::LengthMismatch {
            context: "kcc rank row".into(),
            expected: n,
            found: bad.as_ref().len(),
        });
    }
    let mut totals = vec![0.0; n];
    for row in rank_rows {
        for (t, r) in totals.iter_mut().zip(row.as_ref()) {
            *t += r;
        }
    }
    let mean_total = totals.iter().sum::<f64>() / n as f64;
    let s: f64 = totals.iter().map(|r| (r - mean_total).powi(2)).sum();
    let ties: f64 = rank_rows.iter().map(|r| tie_term(r.as_ref())).sum();
    let (mf, nf) = (m as f64, n as f64);
    let denom = mf * mf * (nf * nf * nf - nf) - mf * ties;
    if denom <= 0.0 {
        return Err(Error::DegenerateInput("every ranking is fully tied".into()));
    }
    Ok((12.0 * s / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RehoOptions {
    /// Rank the 26 neighbors only, leaving the center voxel out of its own cluster.
    pub neighbors_only: bool,
}

/// Per-voxel concordance values of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RehoMap {
    pub dims: (usize, usize, usize),
    /// W per voxel, 0 where undefined.
    pub w_values: Vec<f64>,
    pub defined: Vec<bool>,
    pub region_id: usize,
}

impl RehoMap {
    pub fn defined_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.w_values
            .iter()
            .zip(&self.defined)
            .filter(|(_, d)| **d)
            .map(|(w, _)| *w)
    }

    /// Writes `x,y,z,w,defined` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        wtr.write_record(["x", "y", "z", "w", "defined"])
            .map_err(|e| Error::csv(path, e))?;
        let (nx, ny, _) = self.dims;
        for (i, (w, d)) in self.w_values.iter().zip(&self.defined).enumerate() {
            let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
            wtr.write_record([
                x.to_string(),
                y.to_string(),
                z.to_string(),
                w.to_string(),
                u8::from(*d).to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

/// In-bounds members of the 3×3×3 cube around `(x, y, z)`.
fn neighborhood(dims: (usize, usize, usize), (x, y, z): (usize, usize, usize), include_center: bool) -> Vec<usize> {
    let mut out = Vec::with_capacity(27);
    let range = |c: usize, n: usize| c.saturating_sub(1)..=(c + 1).min(n - 1);
    for zz in range(z, dims.2) {
        for yy in range(y, dims.1) {
            for xx in range(x, dims.0) {
                if !include_center && (xx, yy, zz) == (x, y, z) {
                    continue;
                }
                out.push(xx + dims.0 * (yy + dims.1 * zz));
            }
        }
    }
    out
}

/// Concordance of every voxel with its (boundary-truncated) 26-neighborhood.
///
/// Voxels whose cluster has fewer than two members, or whose rankings are all
/// fully tied, are marked undefined.
pub fn reho_map(block: &VoxelBlock, opts: RehoOptions) -> RehoMap {
    let ranks: Vec<Vec<f64>> = block.all_series().par_iter().map(|s| rank_transform(s)).collect();
    let (w_values, defined): (Vec<f64>, Vec<bool>) = (0..block.voxel_count())
        .into_par_iter()
        .map(|v| {
            let cluster = neighborhood(block.dims(), block.coords(v), !opts.neighbors_only);
            let rows: Vec<&[f64]> = cluster.iter().map(|&c| ranks[c].as_slice()).collect();
            match kcc(&rows) {
                Ok(w) => (w, true),
                Err(_) => (0.0, false),
            }
        })
        .unzip();
    RehoMap {
        dims: block.dims(),
        w_values,
        defined,
        region_id: block.region_id(),
    }
}

/// Averages the voxels whose W reaches the region's mean W.
pub fn select_representative(block: &VoxelBlock, map: &RehoMap, network: NetworkId, label: &str) -> Result<RoiTimeSeries> {
    let defined: Vec<f64> = map.defined_values().collect();
    if defined.is_empty() {
        return Err(Error::NoDefinedReho);
    }
    let threshold = defined.iter().sum::<f64>() / defined.len() as f64;
    let max_w = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // the mean of the defined values can round above their max when all are equal
    let threshold = threshold.min(max_w);
    let candidates: Vec<usize> = (0..block.voxel_count())
        .filter(|&v| map.defined[v] && map.w_values[v] >= threshold)
        .collect();
    let n_t = block.n_timepoints();
    let mut values = vec![0.0; n_t];
    for &v in &candidates {
        for (acc, x) in values.iter_mut().zip(block.series(v)) {
            *acc += x;
        }
    }
    let count = candidates.len() as f64;
    values.iter_mut().for_each(|v| *v /= count);
    Ok(RoiTimeSeries::new(block.region_id(), label, network, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_strict_order() {
        assert_eq!(rank_transform(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn ranks_ties_share_mid_rank() {
        assert_eq!(rank_transform(&[5.0, 5.0, 1.0]), vec![2.5, 2.5, 1.0]);
    }

    #[test]
    fn identical_rankings_are_perfectly_concordant() {
        let row = rank_transform(&(0..40).map(|t| (t as f64 * 0.37).sin()).collect::<Vec<_>>());
        let rows = vec![row; 27];
        assert_eq!(kcc(&rows).unwrap(), 1.0);
    }

    #[test]
    fn hand_evaluated_three_rankers() {
        // R = (5, 6, 7), mean 6, S = 2; denominator 9·(27-3) = 216
        let rows = [vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]];
        let w = kcc(&rows).unwrap();
        assert!((w - 24.0 / 216.0).abs() < 1e-15);
    }

    #[test]
    fn fully_tied_rows_are_degenerate() {
        let rows = [vec![1.5, 1.5], vec![1.5, 1.5]];
        assert!(matches!(kcc(&rows), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn single_voxel_is_undefined() {
        let block = VoxelBlock::new((1, 1, 1), vec![vec![1.0, 2.0, 3.0]], 0).unwrap();
        let map = reho_map(&block, RehoOptions::default());
        assert!(!map.defined[0]);
        assert!(matches!(
            select_representative(&block, &map, NetworkId::DefaultMode, "r"),
            Err(Error::NoDefinedReho)
        ));
    }

    #[test]
    fn corner_cluster_is_truncated() {
        assert_eq!(neighborhood((3, 3, 3), (0, 0, 0), true).len(), 8);
        assert_eq!(neighborhood((3, 3, 3), (1, 1, 1), true).len(), 27);
        assert_eq!(neighborhood((3, 3, 3), (1, 1, 1), false).len(), 26);
    }

    #[test]
    fn threshold_picks_high_w_voxel() {
        let block = VoxelBlock::new((2, 1, 1), vec![vec![1.0, 2.0], vec![5.0, 3.0]], 4).unwrap();
        let map = RehoMap {
            dims: (2, 1, 1),
            w_values: vec![0.9, 0.1],
            defined: vec![true, true],
            region_id: 4,
        };
        let rep = select_representative(&block, &map, NetworkId::Occipital, "occ").unwrap();
        assert_eq!(rep.values, vec![1.0, 2.0]);
    }
}
