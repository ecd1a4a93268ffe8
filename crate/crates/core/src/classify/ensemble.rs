//! Bootstrap-aggregated trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::tree::{DecisionTree, TreeParams};
use crate::data::Label;
use crate::error::{Error, Result};

pub const DEFAULT_TREES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnsembleParams {
    pub trees: usize,
    pub tree: TreeParams,
    pub seed: u64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self {
            trees: DEFAULT_TREES,
            tree: TreeParams::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggedEnsemble {
    trees: Vec<DecisionTree>,
    pub seed: u64,
}

/// `trees` resamples of `0..n` with replacement, drawn up front.
pub fn bootstrap_indices(n: usize, trees: usize, seed: u64, stream: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..trees)
        .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
        .collect()
}

impl BaggedEnsemble {
    pub fn fit(x: &[Vec<f64>], y: &[Label], params: EnsembleParams) -> Result<Self> {
        Self::fit_stream(x, y, params, 0)
    }

    /// As [`fit`](Self::fit), drawing the resamples from RNG stream `stream`.
    pub fn fit_stream(x: &[Vec<f64>], y: &[Label], params: EnsembleParams, stream: u64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyData);
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                context: "features vs labels".into(),
                expected: x.len(),
                found: y.len(),
            });
        }
        if params.trees == 0 {
            return Err(Error::InvalidParams("ensemble needs at least one tree".into()));
        }
        let samples = bootstrap_indices(x.len(), params.trees, params.seed, stream);
        let trees = samples
            .par_iter()
            .map(|idx| DecisionTree::fit(x, y, idx, params.tree))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            trees,
            seed: params.seed,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// `(class0 votes, class1 votes)`.
    pub fn votes(&self, sample: &[f64]) -> (usize, usize) {
        let ones = self.trees.iter().filter(|t| t.predict(sample) == Label::Class1).count();
        (self.trees.len() - ones, ones)
    }

    /// Majority vote; an even split goes to class 0.
    pub fn predict(&self, sample: &[f64]) -> Label {
        vote(self.votes(sample))
    }
}

pub fn vote((zeros, ones): (usize, usize)) -> Label {
    if ones > zeros {
        Label::Class1
    } else {
        Label::Class0
    }
}
