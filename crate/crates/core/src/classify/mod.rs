//! Bagged decision-tree classification of per-subject feature vectors.

mod ensemble;
mod tree;
mod validation;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ensemble::{BaggedEnsemble, DEFAULT_TREES, EnsembleParams, bootstrap_indices, vote};
pub use tree::{DecisionTree, Split, TreeParams, best_split, gini};
pub use validation::{
    Aggregation, Confusion, CvParams, FoldResult, Metrics, MetricsReport, cross_validate, metrics, stratified_folds,
};

use crate::data::{Label, NetworkId};
use crate::error::{Error, Result};

/// Which extractor produced a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Eigenvalues,
    LeadingEigenvector,
    Rqa,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Eigenvalues, FeatureKind::LeadingEigenvector, FeatureKind::Rqa];

    /// Short name used on the command line and in file names.
    pub fn short_name(self) -> &'static str {
        match self {
            FeatureKind::Eigenvalues => "eigval",
            FeatureKind::LeadingEigenvector => "eigvec",
            FeatureKind::Rqa => "rqa",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "eigval" | "eigenvalues" => Ok(FeatureKind::Eigenvalues),
            "eigvec" | "leading_eigenvector" => Ok(FeatureKind::LeadingEigenvector),
            "rqa" => Ok(FeatureKind::Rqa),
            other => Err(Error::InvalidParams(format!("unknown feature kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject: String,
    pub label: Label,
    pub values: Vec<f64>,
}

/// One feature vector per subject for a single network and extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub kind: FeatureKind,
    pub network: NetworkId,
    rows: Vec<FeatureRow>,
}

impl FeatureTable {
    /// Rejects ragged or non-finite rows.
    pub fn new(kind: FeatureKind, network: NetworkId, rows: Vec<FeatureRow>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let d = first.values.len();
            for r in &rows {
                if r.values.len() != d {
                    return Err(Error::LengthMismatch {
                        context: format!("feature row of subject {}", r.subject),
                        expected: d,
                        found: r.values.len(),
                    });
                }
                if r.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::DegenerateInput(format!(
                        "non-finite {kind} feature for subject {}",
                        r.subject
                    )));
                }
            }
        }
        Ok(Self { kind, network, rows })
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }

    pub fn x(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn y(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Columns `subject,label,network,feature_kind,f1..fd`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header: Vec<String> = ["subject", "label", "network", "feature_kind"].map(String::from).to_vec();
        header.extend((1..=self.dim()).map(|i| format!("f{i}")));
        wtr.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for r in &self.rows {
            let mut rec = vec![
                r.subject.clone(),
                r.label.to_string(),
                self.network.to_string(),
                self.kind.to_string(),
            ];
            rec.extend(r.values.iter().map(|&v| crate::data::format_sample(v)));
            wtr.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`write_csv`](Self::write_csv). All rows must
    /// share one network and feature kind.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let bad = |reason: String| Error::Malformed {
            path: path.to_path_buf(),
            reason,
        };
        let mut kind_net: Option<(FeatureKind, NetworkId)> = None;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            if rec.len() < 4 {
                return Err(bad(format!("row has {} fields, need at least 4", rec.len())));
            }
            let kn = (rec[3].parse::<FeatureKind>()?, rec[2].parse::<NetworkId>()?);
            match kind_net {
                None => kind_net = Some(kn),
                Some(prev) if prev != kn => return Err(bad("mixed networks or feature kinds".into())),
                Some(_) => {}
            }
            let values = rec
                .iter()
                .skip(4)
                .map(|f| f.parse::<f64>().map_err(|_| bad(format!("cannot parse {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                subject: rec[0].to_string(),
                label: rec[1].parse()?,
                values,
            });
        }
        let (kind, network) = kind_net.ok_or_else(|| bad("no feature rows".into()))?;
        Self::new(kind, network, rows)
    }
}
