//! Stratified k-fold cross-validation and confusion-based metrics.

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ensemble::{BaggedEnsemble, EnsembleParams};
use crate::data::Label;
use crate::error::{Error, Result};

/// Counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Self {
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Class1, Label::Class1) => c.tp += 1,
                (Label::Class0, Label::Class1) => c.fp += 1,
                (Label::Class1, Label::Class0) => c.fn_ += 1,
                (Label::Class0, Label::Class0) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Nothing was predicted positive, so precision was set to 0.
    pub precision_undefined: bool,
    /// There were no positives, so recall was set to 0.
    pub recall_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(c: Confusion) -> Result<Metrics> {
    if c.total() == 0 {
        return Err(Error::EmptyData);
    }
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        precision,
        recall,
        f1,
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision_undefined,
        recall_undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_size: usize,
    pub confusion: Confusion,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Metrics from the confusion counts summed over folds.
    Pooled,
    /// Unweighted mean of the per-fold metrics.
    PerFoldMean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub aggregation: Aggregation,
    pub confusion: Confusion,
    pub per_fold: Vec<FoldResult>,
    pub folds: usize,
    pub trees: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub const CSV_HEADER: [&'static str; 4] = ["Precision", "Recall", "F1 Score", "Accuracy"];

    pub fn csv_row(&self) -> [String; 4] {
        [self.precision, self.recall, self.f1, self.accuracy].map(|v| format!("{v:.4}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvParams {
    pub folds: usize,
    pub ensemble: EnsembleParams,
    pub aggregation: Aggregation,
}

impl Default for CvParams {
    fn default() -> Self {
        Self {
            folds: 10,
            ensemble: EnsembleParams::default(),
            aggregation: Aggregation::Pooled,
        }
    }
}

/// Fold number per sample. Each class is shuffled on its own and dealt
/// round-robin, continuing the deal across classes so fold sizes differ by
/// at most one.
pub fn stratified_folds(y: &[Label], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut assignment = vec![0; y.len()];
    let mut dealt = 0;
    for class in [Label::Class0, Label::Class1] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.len() < folds {
            return Err(Error::TooFewSamples {
                class: class.as_u8(),
                count: members.len(),
                needed: folds,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = dealt % folds;
            dealt += 1;
        }
    }
    Ok(assignment)
}

pub fn cross_validate(x: &[Vec<f64>], y: &[Label], params: CvParams) -> Result<MetricsReport> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            context: "features vs labels".into(),
            expected: x.len(),
            found: y.len(),
        });
    }
    let assignment = stratified_folds(y, params.folds, params.ensemble.seed)?;
    let mut per_fold = Vec::with_capacity(params.folds);
    let mut pooled = Confusion::default();
    for fold in 0..params.folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&i| assignment[i] != fold);
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<Label> = train.iter().map(|&i| y[i]).collect();
        let model = BaggedEnsemble::fit_stream(&tx, &ty, params.ensemble, fold as u64 + 1)?;
        let truth: Vec<Label> = test.iter().map(|&i| y[i]).collect();
        let predicted: Vec<Label> = test.iter().map(|&i| model.predict(&x[i])).collect();
        let confusion = Confusion::from_predictions(&truth, &predicted);
        pooled.add(confusion);
        per_fold.push(FoldResult {
            fold,
            test_size: test.len(),
            confusion,
            metrics: metrics(confusion)?,
        });
    }
    let summary = match params.aggregation {
        Aggregation::Pooled => metrics(pooled)?,
        Aggregation::PerFoldMean => {
            let k = per_fold.len() as f64;
            let avg = |f: fn(&Metrics) -> f64| per_fold.iter().map(|r| f(&r.metrics)).sum::<f64>() / k;
            Metrics {
                precision: avg(|m| m.precision),
                recall: avg(|m| m.recall),
                f1: avg(|m| m.f1),
                accuracy: avg(|m| m.accuracy),
                precision_undefined: false,
                recall_undefined: false,
            }
        }
    };
    Ok(MetricsReport {
        precision: summary.precision,
        recall: summary.recall,
        f1: summary.f1,
        accuracy: summary.accuracy,
        aggregation: params.aggregation,
        confusion: pooled,
        per_fold,
        folds: params.folds,
        trees: params.ensemble.trees,
        seed: params.ensemble.seed,
    })
}
