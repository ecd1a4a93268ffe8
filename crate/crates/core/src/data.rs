//! Cohort domain types and the on-disk dataset layout.
//!
//! A dataset lives under a root directory:
//!
//! ```text
//! root/
//!   manifest.csv              subject_id,label,path
//!   <path>/default_mode.csv   one column per ROI (header = ROI label),
//!   <path>/occipital.csv      one row per timepoint
//!   ...
//! ```
//!
//! Subject paths in the manifest are resolved relative to the root.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total number of ROIs across all six networks.
pub const TOTAL_ROIS: usize = 160;

/// One of the six functional networks of the 160-ROI atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkId {
    DefaultMode,
    Frontoparietal,
    CinguloOpercular,
    Sensorimotor,
    Occipital,
    Cerebellum,
}

impl NetworkId {
    pub const ALL: [NetworkId; 6] = [
        NetworkId::DefaultMode,
        NetworkId::Frontoparietal,
        NetworkId::CinguloOpercular,
        NetworkId::Sensorimotor,
        NetworkId::Occipital,
        NetworkId::Cerebellum,
    ];

    pub fn roi_count(self) -> usize {
        match self {
            NetworkId::DefaultMode => 34,
            NetworkId::Frontoparietal => 21,
            NetworkId::CinguloOpercular => 32,
            NetworkId::Sensorimotor => 33,
            NetworkId::Occipital => 22,
            NetworkId::Cerebellum => 18,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetworkId::DefaultMode => "default_mode",
            NetworkId::Frontoparietal => "frontoparietal",
            NetworkId::CinguloOpercular => "cingulo_opercular",
            NetworkId::Sensorimotor => "sensorimotor",
            NetworkId::Occipital => "occipital",
            NetworkId::Cerebellum => "cerebellum",
        }
    }

    /// File name of this network's ROI table inside a subject directory.
    pub fn file_name(self) -> String {
        format!("{}.csv", self.name())
    }
}

impl fmt::Display for NetworkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NetworkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NetworkId::ALL
            .into_iter()
            .find(|n| n.name() == s.trim())
            .ok_or_else(|| Error::UnknownNetwork(s.to_string()))
    }
}

/// Binary diagnosis label. `Class0` is the healthy-control group by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Class0,
    Class1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Class0 => 0,
            Label::Class1 => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Class0),
            1 => Some(Label::Class1),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "class0" | "hc" => Ok(Label::Class0),
            "1" | "class1" | "mci" => Ok(Label::Class1),
            _ => Err(Error::InvalidLabel(s.to_string())),
        }
    }
}

/// Representative signal of one ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTimeSeries {
    /// Index within the network, zero-based.
    pub roi_id: usize,
    pub roi_label: String,
    pub network: NetworkId,
    pub values: Vec<f64>,
}

impl RoiTimeSeries {
    pub fn new(roi_id: usize, roi_label: impl Into<String>, network: NetworkId, values: Vec<f64>) -> Self {
        Self {
            roi_id,
            roi_label: roi_label.into(),
            network,
            values,
        }
    }

    /// Anonymous series, handy for single-signal analysis.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self::new(0, "series", NetworkId::DefaultMode, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }
}

/// Voxel time series of one region on a regular X×Y×Z grid.
///
/// Voxels are stored with x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelBlock {
    dims: (usize, usize, usize),
    series: Vec<Vec<f64>>,
    region_id: usize,
}

impl VoxelBlock {
    pub fn new(dims: (usize, usize, usize), series: Vec<Vec<f64>>, region_id: usize) -> Result<Self> {
        let count = dims.0 * dims.1 * dims.2;
        if count == 0 {
            return Err(Error::InvalidParams(format!("voxel block dims {dims:?} are empty")));
        }
        if series.len() != count {
            return Err(Error::LengthMismatch {
                context: "voxel count".into(),
                expected: count,
                found: series.len(),
            });
        }
        let n = series[0].len();
        if let Some(bad) = series.iter().find(|s| s.len() != n) {
            return Err(Error::LengthMismatch {
                context: "voxel series length".into(),
                expected: n,
                found: bad.len(),
            });
        }
        Ok(Self { dims, series, region_id })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn region_id(&self) -> usize {
        self.region_id
    }

    pub fn n_timepoints(&self) -> usize {
        self.series[0].len()
    }

    pub fn voxel_count(&self) -> usize {
        self.series.len()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let (nx, ny, _) = self.dims;
        (index % nx, (index / nx) % ny, index / (nx * ny))
    }

    pub fn series(&self, index: usize) -> &[f64] {
        &self.series[index]
    }

    pub fn all_series(&self) -> &[Vec<f64>] {
        &self.series
    }

    /// Reads `x,y,z,v1..vN` rows. A header row is optional; the grid extent is
    /// taken from the largest coordinate seen and every grid cell must be present.
    pub fn read_csv(path: &Path, region_id: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let mut cells: Vec<((usize, usize, usize), Vec<f64>)> = Vec::new();
        for (row_idx, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            if rec.len() < 4 {
                return Err(malformed(path, format!("row {row_idx} has fewer than 4 columns")));
            }
            let coord = |i: usize| rec[i].parse::<usize>();
            let (x, y, z) = match (coord(0), coord(1), coord(2)) {
                (Ok(x), Ok(y), Ok(z)) => (x, y, z),
                _ if row_idx == 0 => continue,
                _ => return Err(malformed(path, format!("row {row_idx}: bad voxel coordinates"))),
            };
            let values = rec
                .iter()
                .skip(3)
                .map(|v| parse_finite(v).ok_or_else(|| malformed(path, format!("row {row_idx}: bad sample {v:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            cells.push(((x, y, z), values));
        }
        if cells.is_empty() {
            return Err(malformed(path, "no voxel rows".into()));
        }
        let dims = cells.iter().fold((0, 0, 0), |d, ((x, y, z), _)| {
            (d.0.max(x + 1), d.1.max(y + 1), d.2.max(z + 1))
        });
        let count = dims.0 * dims.1 * dims.2;
        let mut series: Vec<Option<Vec<f64>>> = vec![None; count];
        for ((x, y, z), values) in cells {
            let idx = x + dims.0 * (y + dims.1 * z);
            if series[idx].replace(values).is_some() {
                return Err(malformed(path, format!("duplicate voxel ({x},{y},{z})")));
            }
        }
        let series = series
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| {
                    let (x, y, z) = (i % dims.0, (i / dims.0) % dims.1, i / (dims.0 * dims.1));
                    malformed(path, format!("missing voxel ({x},{y},{z})"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        VoxelBlock::new(dims, series, region_id)
    }
}

/// One subject with all six networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub subject_id: String,
    pub label: Label,
    pub networks: BTreeMap<NetworkId, Vec<RoiTimeSeries>>,
}

impl Subject {
    pub fn network(&self, id: NetworkId) -> Option<&[RoiTimeSeries]> {
        self.networks.get(&id).map(Vec::as_slice)
    }

    /// N×n matrix whose columns are the ROI series of `id`.
    pub fn series_matrix(&self, id: NetworkId) -> Option<DMatrix<f64>> {
        let rois = self.network(id)?;
        let n_t = rois.first().map_or(0, RoiTimeSeries::len);
        Some(DMatrix::from_fn(n_t, rois.len(), |t, r| rois[r].values[t]))
    }

    fn validate(&self, n_timepoints: usize) -> Result<()> {
        for id in NetworkId::ALL {
            let rois = self.networks.get(&id).ok_or_else(|| Error::MissingNetworkFile {
                subject: self.subject_id.clone(),
                path: PathBuf::from(id.file_name()),
            })?;
            if rois.len() != id.roi_count() {
                return Err(Error::RoiCountMismatch {
                    subject: self.subject_id.clone(),
                    network: id.name().into(),
                    expected: id.roi_count(),
                    found: rois.len(),
                });
            }
            for (r, roi) in rois.iter().enumerate() {
                if roi.len() != n_timepoints {
                    return Err(Error::LengthMismatch {
                        context: format!("subject {} network {} roi {r}", self.subject_id, id),
                        expected: n_timepoints,
                        found: roi.len(),
                    });
                }
                if let Some(t) = roi.values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteSample {
                        subject: self.subject_id.clone(),
                        network: id.name().into(),
                        roi: r,
                        timepoint: t,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Validated cohort. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    subjects: Vec<Subject>,
    n_timepoints: usize,
}

impl CohortDataset {
    /// Checks every subject carries all six networks with the atlas ROI counts,
    /// a common series length N ≥ 2, and finite samples.
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        let n_timepoints = subjects
            .first()
            .and_then(|s| s.networks.values().next())
            .and_then(|rois| rois.first())
            .map_or(0, RoiTimeSeries::len);
        if !subjects.is_empty() && n_timepoints < 2 {
            return Err(Error::SeriesTooShort { needed: 2, len: n_timepoints });
        }
        for s in &subjects {
            s.validate(n_timepoints)?;
        }
        Ok(Self { subjects, n_timepoints })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn n_timepoints(&self) -> usize {
        self.n_timepoints
    }

    pub fn labels(&self) -> Vec<Label> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.subjects {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }
}

fn malformed(path: &Path, reason: String) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        reason,
    }
}

fn parse_finite(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Decimal rendering with 17 significant digits, enough for an exact f64 round trip.
pub fn format_sample(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    subject_id: String,
    label: String,
    path: String,
}

/// Loads the manifest and every subject's six network tables.
pub fn load_cohort(root: &Path, manifest: &Path) -> Result<CohortDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(manifest)
        .map_err(|e| Error::csv(manifest, e))?;
    let mut subjects = Vec::new();
    for row in rdr.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Error::csv(manifest, e))?;
        let label: Label = row.label.parse()?;
        let dir = root.join(&row.path);
        let mut networks = BTreeMap::new();
        for id in NetworkId::ALL {
            let file = dir.join(id.file_name());
            if !file.is_file() {
                return Err(Error::MissingNetworkFile {
                    subject: row.subject_id.clone(),
                    path: file,
                });
            }
            networks.insert(id, read_network_csv(&file, &row.subject_id, id)?);
        }
        subjects.push(Subject {
            subject_id: row.subject_id,
            label,
            networks,
        });
    }
    CohortDataset::new(subjects)
}

/// Reads one `<network>.csv`: header row of ROI labels, one row per timepoint.
pub fn read_network_csv(path: &Path, subject: &str, network: NetworkId) -> Result<Vec<RoiTimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.len() != network.roi_count() {
        return Err(Error::RoiCountMismatch {
            subject: subject.to_string(),
            network: network.name().into(),
            expected: network.roi_count(),
            found: headers.len(),
        });
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (t, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        for (r, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| malformed(path, format!("timepoint {t}, column {r}: cannot parse {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteSample {
                    subject: subject.to_string(),
                    network: network.name().into(),
                    roi: r,
                    timepoint: t,
                });
            }
            columns[r].push(v);
        }
    }
    Ok(headers
        .iter()
        .zip(columns)
        .enumerate()
        .map(|(r, (label, values))| RoiTimeSeries::new(r, label, network, values))
        .collect())
}

/// Writes one network table in the layout [`read_network_csv`] expects.
pub fn write_network_csv(path: &Path, rois: &[RoiTimeSeries]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    wtr.write_record(rois.iter().map(|r| r.roi_label.as_str()))
        .map_err(|e| Error::csv(path, e))?;
    let n_t = rois.first().map_or(0, RoiTimeSeries::len);
    for t in 0..n_t {
        wtr.write_record(rois.iter().map(|r| format_sample(r.values[t])))
            .map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Writes `root/manifest.csv` and `root/subjects/<id>/<network>.csv`.
///
/// Returns the manifest path.
pub fn write_cohort(ds: &CohortDataset, root: &Path) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let manifest = root.join("manifest.csv");
    let mut wtr = csv::Writer::from_path(&manifest).map_err(|e| Error::csv(&manifest, e))?;
    wtr.write_record(["subject_id", "label", "path"])
        .map_err(|e| Error::csv(&manifest, e))?;
    for s in ds.subjects() {
        let rel = format!("subjects/{}", s.subject_id);
        let dir = root.join(&rel);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (id, rois) in &s.networks {
            write_network_csv(&dir.join(id.file_name()), rois)?;
        }
        wtr.write_record([s.subject_id.as_str(), &s.label.to_string(), &rel])
            .map_err(|e| Error::csv(&manifest, e))?;
    }
    wtr.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstantSeries {
    pub subject_id: String,
    pub network: NetworkId,
    pub roi_id: usize,
    pub roi_label: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub n_subjects: usize,
    pub n_timepoints: usize,
    /// Series length per subject, in manifest order.
    pub timepoints_per_subject: Vec<(String, usize)>,
    pub class_counts: BTreeMap<String, usize>,
    pub constant_series: Vec<ConstantSeries>,
    pub warnings: Vec<String>,
}

/// Summarizes a loaded cohort. Never fails; problems become warnings.
pub fn validate_dataset(ds: &CohortDataset) -> ValidationReport {
    let mut class_counts: BTreeMap<String, usize> =
        [("class0".to_string(), 0), ("class1".to_string(), 0)].into();
    for (label, count) in ds.class_counts() {
        class_counts.insert(format!("class{}", label.as_u8()), count);
    }
    let mut constant_series = Vec::new();
    let mut timepoints_per_subject = Vec::new();
    for s in ds.subjects() {
        timepoints_per_subject.push((s.subject_id.clone(), ds.n_timepoints()));
        for (id, rois) in &s.networks {
            for roi in rois.iter().filter(|r| r.is_constant()) {
                constant_series.push(ConstantSeries {
                    subject_id: s.subject_id.clone(),
                    network: *id,
                    roi_id: roi.roi_id,
                    roi_label: roi.roi_label.clone(),
                });
            }
        }
    }
    let mut warnings = Vec::new();
    if ds.subjects().is_empty() {
        warnings.push("dataset has no subjects".to_string());
    }
    for (class, count) in &class_counts {
        if *count < 2 {
            warnings.push(format!("{class} has {count} subjects; classification needs at least 2 per class"));
        }
    }
    if !constant_series.is_empty() {
        warnings.push(format!("{} constant ROI series flagged", constant_series.len()));
    }
    ValidationReport {
        n_subjects: ds.subjects().len(),
        n_timepoints: ds.n_timepoints(),
        timepoints_per_subject,
        class_counts,
        constant_series,
        warnings,
    }
}
