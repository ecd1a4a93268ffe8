//! CART classification trees with Gini impurity.

use serde::Serialize;

use crate::data::Label;
use crate::error::{Error, Result};

/// Gains closer than this are treated as equal, so the tie rule decides.
const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeParams {
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        /// Fraction of class-1 samples reaching the leaf.
        p1: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// `1 - p0² - p1²`.
pub fn gini(n0: usize, n1: usize) -> f64 {
    let n = (n0 + n1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (n0 as f64 / n, n1 as f64 / n);
    1.0 - p0 * p0 - p1 * p1
}

/// Point strictly between `a < b` that is ≥ `a` and < `b` in floating point.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    if m >= b {
        a
    } else {
        m.max(a)
    }
}

fn class_counts(y: &[Label], idx: &[usize]) -> (usize, usize) {
    let n1 = idx.iter().filter(|&&i| y[i] == Label::Class1).count();
    (idx.len() - n1, n1)
}

/// Best Gini split of the samples `idx` (duplicates allowed). Candidates are
/// midpoints between consecutive distinct values leaving at least `min_leaf`
/// samples on each side. Ties go to the lowest feature, then the smallest
/// threshold. Zero-gain splits are valid candidates.
#[allow(clippy::needless_range_loop)]
pub fn best_split(x: &[Vec<f64>], y: &[Label], idx: &[usize], min_leaf: usize) -> Option<Split> {
    let d = x.get(*idx.first()?)?.len();
    let (n0, n1) = class_counts(y, idx);
    let n = idx.len();
    let parent = gini(n0, n1);
    let min_leaf = min_leaf.max(1);
    let mut best: Option<Split> = None;
    let mut order = idx.to_vec();
    for f in 0..d {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let (mut l0, mut l1) = (0, 0);
        for pos in 0..n - 1 {
            match y[order[pos]] {
                Label::Class0 => l0 += 1,
                Label::Class1 => l1 += 1,
            }
            let (a, b) = (x[order[pos]][f], x[order[pos + 1]][f]);
            let left = pos + 1;
            if a == b || left < min_leaf || n - left < min_leaf {
                continue;
            }
            let (r0, r1) = (n0 - l0, n1 - l1);
            let gain = parent
                - (left as f64 / n as f64) * gini(l0, l1)
                - ((n - left) as f64 / n as f64) * gini(r0, r1);
            if best.is_none_or(|s| gain > s.gain + GAIN_TIE) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(a, b),
                    gain,
                });
            }
        }
    }
    best
}

impl DecisionTree {
    /// Grows a tree on the samples `idx` of `(x, y)`; indices may repeat.
    pub fn fit(x: &[Vec<f64>], y: &[Label], idx: &[usize], params: TreeParams) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut tree = DecisionTree { nodes: Vec::new() };
        tree.grow(x, y, idx.to_vec(), 0, params);
        Ok(tree)
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[Label], idx: Vec<usize>, depth: usize, params: TreeParams) -> usize {
        let id = self.nodes.len();
        let (n0, n1) = class_counts(y, &idx);
        self.nodes.push(Node::Leaf {
            p1: n1 as f64 / idx.len() as f64,
        });
        let stop = n0 == 0
            || n1 == 0
            || params.max_depth.is_some_and(|m| depth >= m)
            || idx.len() < 2 * params.min_leaf.max(1);
        if stop {
            return id;
        }
        let Some(split) = best_split(x, y, &idx, params.min_leaf) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
        let left = self.grow(x, y, l, depth + 1, params);
        let right = self.grow(x, y, r, depth + 1, params);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Class-1 fraction of the leaf `sample` falls into.
    pub fn predict_proba(&self, sample: &[f64]) -> f64 {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf { p1 } => return p1,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if sample[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Class 1 only on a strict class-1 majority in the leaf.
    pub fn predict(&self, sample: &[f64]) -> Label {
        if self.predict_proba(sample) > 0.5 {
            Label::Class1
        } else {
            Label::Class0
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Class0 as C0, Class1 as C1};

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn separable_pair() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![C0, C1];
        let t = DecisionTree::fit(&x, &y, &all(2), TreeParams::default()).unwrap();
        assert_eq!(best_split(&x, &y, &all(2), 1).unwrap().threshold, 0.5);
        assert_eq!((t.predict(&[0.0]), t.predict(&[1.0])), (C0, C1));
    }

    #[test]
    fn identical_features_make_a_majority_leaf() {
        let x = vec![vec![2.0, 2.0]; 5];
        let y = vec![C1, C1, C1, C0, C0];
        let t = DecisionTree::fit(&x, &y, &all(5), TreeParams::default()).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.predict(&[2.0, 2.0]), C1);
    }

    #[test]
    fn balanced_leaf_predicts_class0() {
        let x = vec![vec![1.0]; 2];
        let t = DecisionTree::fit(&x, &[C0, C1], &all(2), TreeParams::default()).unwrap();
        assert_eq!(t.predict(&[1.0]), C0);
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![C0, C0, C1, C1];
        let t = DecisionTree::fit(&x, &y, &all(4), TreeParams::default()).unwrap();
        assert_eq!(t.depth(), 2);
        assert!(x.iter().zip(&y).all(|(s, &l)| t.predict(s) == l));
    }

    #[test]
    fn max_depth_and_min_leaf_limit_growth() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let y: Vec<Label> = (0..8).map(|i| if i % 2 == 0 { C0 } else { C1 }).collect();
        let shallow = TreeParams {
            max_depth: Some(1),
            min_leaf: 1,
        };
        assert_eq!(DecisionTree::fit(&x, &y, &all(8), shallow).unwrap().depth(), 1);
        let coarse = TreeParams {
            max_depth: None,
            min_leaf: 3,
        };
        let t = DecisionTree::fit(&x, &y, &all(8), coarse).unwrap();
        assert!(t.leaf_count() <= 2);
    }

    #[test]
    fn empty_sample_set_is_rejected() {
        assert!(matches!(
            DecisionTree::fit(&[vec![0.0]], &[C0], &[], TreeParams::default()),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn midpoint_stays_below_upper_value() {
        let a = 1.0_f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }
}
