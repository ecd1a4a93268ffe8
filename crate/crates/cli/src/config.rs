use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use brainscale::classify::{Aggregation, CvParams, EnsembleParams, FeatureKind};
use brainscale::data::NetworkId;
use brainscale::embedding::TauMode;
use brainscale::recurrence::{RqaParams, ThresholdRule};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Settings for `run`, read from a flat `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data: PathBuf,
    /// Defaults to `<data>/manifest.csv`.
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub networks: Vec<NetworkId>,
    pub features: Vec<FeatureKind>,
    /// Directory of voxel blocks `<subject>/<network>/roiNN.csv`; ROIs
    /// without a block keep their extracted series.
    pub reho_dir: Option<PathBuf>,
    pub neighbors_only: bool,
    pub tau: TauMode,
    pub d_max: usize,
    pub epsilon: f64,
    pub rr: f64,
    pub l_min: usize,
    pub v_min: usize,
    pub force_k: Option<usize>,
    /// Subjects per class whose recurrence plots are rendered.
    pub render_subjects: usize,
    pub rp_size: usize,
    pub shrinkage: f64,
    pub edge_threshold: f64,
    pub top_k: usize,
    pub signed: bool,
    pub folds: usize,
    pub trees: usize,
    pub seed: u64,
    pub per_fold_mean: bool,
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            manifest: None,
            out: PathBuf::from("run"),
            networks: NetworkId::ALL.to_vec(),
            features: FeatureKind::ALL.to_vec(),
            reho_dir: None,
            neighbors_only: false,
            tau: TauMode::Auto,
            d_max: 20,
            epsilon: 0.05,
            rr: 0.1,
            l_min: 2,
            v_min: 2,
            force_k: None,
            render_subjects: 1,
            rp_size: 224,
            shrinkage: 0.1,
            edge_threshold: 0.2,
            top_k: 10,
            signed: false,
            folds: 10,
            trees: 400,
            seed: 42,
            per_fold_mean: false,
            jobs: None,
        }
    }
}

pub const KEYS: [&str; 25] = [
    "data",
    "manifest",
    "out",
    "networks",
    "features",
    "reho_dir",
    "neighbors_only",
    "tau",
    "d_max",
    "epsilon",
    "rr",
    "l_min",
    "v_min",
    "force_k",
    "render_subjects",
    "rp_size",
    "shrinkage",
    "edge_threshold",
    "top_k",
    "signed",
    "folds",
    "trees",
    "seed",
    "per_fold_mean",
    "jobs",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn optional(value: &str) -> Option<&str> {
    match value {
        "" | "none" | "auto" => None,
        v => Some(v),
    }
}

fn parse_list<T>(key: &str, value: &str, all: &[T]) -> CliResult<Vec<T>>
where
    T: std::str::FromStr + Copy + Ord,
{
    if value == "all" {
        return Ok(all.to_vec());
    }
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.push(parse::<T>(key, item)?);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn tau_text(tau: TauMode) -> String {
    match tau {
        TauMode::Auto => "auto".into(),
        TauMode::Fixed(t) => t.to_string(),
    }
}

fn opt_text<T: ToString>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), ToString::to_string)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key.trim() {
            "data" => self.data = PathBuf::from(value),
            "manifest" => self.manifest = optional(value).map(PathBuf::from),
            "out" => self.out = PathBuf::from(value),
            "networks" => self.networks = parse_list(key, value, &NetworkId::ALL)?,
            "features" => self.features = parse_list(key, value, &FeatureKind::ALL)?,
            "reho_dir" => self.reho_dir = optional(value).map(PathBuf::from),
            "neighbors_only" => self.neighbors_only = parse_bool(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "d_max" => self.d_max = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "rr" => self.rr = parse(key, value)?,
            "l_min" => self.l_min = parse(key, value)?,
            "v_min" => self.v_min = parse(key, value)?,
            "force_k" => self.force_k = optional(value).map(|v| parse(key, v)).transpose()?,
            "render_subjects" => self.render_subjects = parse(key, value)?,
            "rp_size" => self.rp_size = parse(key, value)?,
            "shrinkage" => self.shrinkage = parse(key, value)?,
            "edge_threshold" => self.edge_threshold = parse(key, value)?,
            "top_k" => self.top_k = parse(key, value)?,
            "signed" => self.signed = parse_bool(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "trees" => self.trees = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "per_fold_mean" => self.per_fold_mean = parse_bool(key, value)?,
            "jobs" => self.jobs = optional(value).map(|v| parse(key, v)).transpose()?,
            other => return Err(CliError::Config(format!("unknown key {other:?}; known keys: {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment. A key may appear once.
    pub fn apply_text(&mut self, text: &str, source: &str) -> CliResult<()> {
        let mut seen = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{source}:{}: expected key=value", no + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::Config(format!("{source}:{}: duplicate key {key:?}", no + 1)));
            }
            seen.push(key);
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("{source}:{}: {}", no + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.data.join("manifest.csv"))
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.networks.is_empty() {
            return fail("networks: at least one network is required".into());
        }
        if self.features.is_empty() {
            return fail("features: at least one feature family is required".into());
        }
        if self.d_max < 3 {
            return fail(format!("d_max {} must be at least 3", self.d_max));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.rr > 0.0 && self.rr < 1.0) {
            return fail(format!("rr {} must lie in (0, 1)", self.rr));
        }
        if self.l_min == 0 || self.v_min == 0 {
            return fail("l_min and v_min must be at least 1".into());
        }
        if self.force_k.is_some_and(|k| k < 2) {
            return fail("force_k must be at least 2".into());
        }
        if self.rp_size < 2 {
            return fail(format!("rp_size {} must be at least 2", self.rp_size));
        }
        if !(0.0..1.0).contains(&self.shrinkage) {
            return fail(format!("shrinkage {} must lie in [0, 1)", self.shrinkage));
        }
        if !(0.0..1.0).contains(&self.edge_threshold) {
            return fail(format!("edge_threshold {} must lie in [0, 1)", self.edge_threshold));
        }
        let smallest = self.networks.iter().map(|n| n.roi_count()).min().unwrap_or(0);
        if self.top_k == 0 || self.top_k > smallest {
            return fail(format!("top_k {} must lie in 1..={smallest} for the selected networks", self.top_k));
        }
        if self.folds < 2 {
            return fail(format!("folds {} must be at least 2", self.folds));
        }
        if self.trees == 0 {
            return fail("trees must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return fail("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Lines for every setting that changes computed values. Paths, network
    /// and feature selection, and worker count are left out so a run
    /// directory can be extended with more networks or moved data.
    pub fn analysis_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        line("reho_dir", opt_text(&self.reho_dir.as_ref().map(|p| p.display().to_string()), "none"));
        line("neighbors_only", self.neighbors_only.to_string());
        line("tau", tau_text(self.tau));
        line("d_max", self.d_max.to_string());
        line("epsilon", self.epsilon.to_string());
        line("rr", self.rr.to_string());
        line("l_min", self.l_min.to_string());
        line("v_min", self.v_min.to_string());
        line("force_k", opt_text(&self.force_k, "none"));
        line("render_subjects", self.render_subjects.to_string());
        line("rp_size", self.rp_size.to_string());
        line("shrinkage", self.shrinkage.to_string());
        line("edge_threshold", self.edge_threshold.to_string());
        line("top_k", self.top_k.to_string());
        line("signed", self.signed.to_string());
        line("folds", self.folds.to_string());
        line("trees", self.trees.to_string());
        line("seed", self.seed.to_string());
        line("per_fold_mean", self.per_fold_mean.to_string());
        s
    }

    /// Every key, in the file format read by [`PipelineConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "data={}", self.data.display());
        let _ = writeln!(s, "manifest={}", opt_text(&self.manifest.as_ref().map(|p| p.display().to_string()), "none"));
        let _ = writeln!(s, "out={}", self.out.display());
        let _ = writeln!(s, "networks={}", join(&self.networks));
        let _ = writeln!(s, "features={}", join(&self.features));
        s.push_str(&self.analysis_text());
        let _ = writeln!(s, "jobs={}", opt_text(&self.jobs, "auto"));
        s
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.analysis_text().as_bytes())
    }

    pub fn rqa_params(&self) -> RqaParams {
        RqaParams {
            rule: ThresholdRule::TargetRate(self.rr),
            l_min: self.l_min,
            v_min: self.v_min,
        }
    }

    pub fn cv_params(&self) -> CvParams {
        CvParams {
            folds: self.folds,
            ensemble: EnsembleParams {
                trees: self.trees,
                seed: self.seed,
                ..Default::default()
            },
            aggregation: if self.per_fold_mean {
                Aggregation::PerFoldMean
            } else {
                Aggregation::Pooled
            },
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
