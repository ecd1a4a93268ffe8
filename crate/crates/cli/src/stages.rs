//! Per-network computations shared by the subcommands and `run`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use brainscale::classify::{FeatureKind, FeatureRow, FeatureTable};
use brainscale::connectivity::{
    build_graph, degree_and_rank, eigen_features, top_roi_frequency, BrainGraph, DegreeRanking, EigenFeatures, FrequencyTable,
};
use brainscale::data::{CohortDataset, Label, NetworkId, Subject};
use brainscale::embedding::{choose_embedding, TauMode};
use brainscale::recurrence::{render_grayscale, resize_bilinear, series_rqa, RqaFeatures, RqaParams};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))
}

pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut wtr = csv_writer(path)?;
    wtr.write_record(header).map_err(|e| CliError::csv(path, e))?;
    for row in rows {
        wtr.write_record(row).map_err(|e| CliError::csv(path, e))?;
    }
    wtr.flush().map_err(|e| CliError::io(path, e))
}

/// Embedding and RQA settings applied to every ROI.
#[derive(Debug, Clone, Copy)]
pub struct RecurrenceSettings {
    pub tau: TauMode,
    pub d_max: usize,
    pub epsilon: f64,
    pub force_k: Option<usize>,
    pub rqa: RqaParams,
}

/// Where and how large to render recurrence plots.
#[derive(Debug, Clone)]
pub struct RenderSettings {
    pub dir: PathBuf,
    pub size: usize,
    pub subjects: BTreeSet<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoiRecurrence {
    pub subject: String,
    pub label: Label,
    /// 1-based position within the network.
    pub roi: usize,
    pub m: usize,
    pub tau: usize,
    pub d_max_used: usize,
    pub saturation_found: bool,
    pub k: usize,
    pub features: RqaFeatures,
}

pub fn plot_path(dir: &Path, subject: &str, network: NetworkId, roi: usize) -> PathBuf {
    dir.join(subject).join(network.name()).join(format!("roi{roi:02}.pgm"))
}

pub fn render_plot(matrix: &DMatrix<f64>, size: usize, path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let resized = resize_bilinear(matrix, size)?;
    render_grayscale(&resized, path)?;
    Ok(())
}

fn subject_recurrence(
    subject: &Subject,
    network: NetworkId,
    settings: RecurrenceSettings,
    render: Option<&RenderSettings>,
) -> CliResult<Vec<RoiRecurrence>> {
    let rois = subject.network(network).ok_or_else(|| {
        brainscale::Error::MissingNetworkFile {
            subject: subject.subject_id.clone(),
            path: network.file_name().into(),
        }
    })?;
    let render = render.filter(|r| r.subjects.contains(&subject.subject_id));
    rois.par_iter()
        .enumerate()
        .map(|(i, roi)| {
            let context = || format!("subject {}, network {network}, roi {}", subject.subject_id, i + 1);
            let choice = choose_embedding(&roi.values, settings.tau, settings.d_max, settings.epsilon)
                .map_err(|e| e.context(context()))?;
            let result = series_rqa(&roi.values, choice.params, settings.force_k, settings.rqa)
                .map_err(|e| e.context(context()))?;
            if let Some(r) = render {
                render_plot(result.matrix.as_matrix(), r.size, &plot_path(&r.dir, &subject.subject_id, network, i + 1))?;
            }
            Ok(RoiRecurrence {
                subject: subject.subject_id.clone(),
                label: subject.label,
                roi: i + 1,
                m: choice.params.m,
                tau: choice.params.tau,
                d_max_used: choice.d_max_used,
                saturation_found: choice.saturation_found,
                k: result.matrix.k(),
                features: result.features,
            })
        })
        .collect()
}

/// Per-ROI embedding and RQA for every subject, in subject then ROI order.
pub fn network_recurrence(
    subjects: &[&Subject],
    network: NetworkId,
    settings: RecurrenceSettings,
    render: Option<&RenderSettings>,
) -> CliResult<Vec<RoiRecurrence>> {
    let per_subject: Vec<Vec<RoiRecurrence>> = subjects
        .par_iter()
        .map(|s| subject_recurrence(s, network, settings, render))
        .collect::<CliResult<_>>()?;
    Ok(per_subject.into_iter().flatten().collect())
}

pub const RQA_HEADER: [&str; 10] = ["subject", "network", "roi", "rr", "det", "lmean", "lmax", "lam", "tt", "entr"];
pub const EMBEDDING_HEADER: [&str; 7] = ["subject", "network", "roi", "tau", "m", "d_max_used", "saturation_found"];

pub fn rqa_record(network: NetworkId, r: &RoiRecurrence) -> Vec<String> {
    let mut row = vec![r.subject.clone(), network.name().to_string(), r.roi.to_string()];
    row.extend(r.features.to_vec().iter().map(f64::to_string));
    row
}

pub fn embedding_record(network: NetworkId, r: &RoiRecurrence) -> Vec<String> {
    vec![
        r.subject.clone(),
        network.name().to_string(),
        r.roi.to_string(),
        r.tau.to_string(),
        r.m.to_string(),
        r.d_max_used.to_string(),
        r.saturation_found.to_string(),
    ]
}

/// One row per subject: the seven measures of each ROI, ROI by ROI.
pub fn rqa_feature_table(network: NetworkId, rows: &[RoiRecurrence]) -> CliResult<FeatureTable> {
    let mut out: Vec<FeatureRow> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(last) if last.subject == r.subject => last.values.extend(r.features.to_vec()),
            _ => out.push(FeatureRow {
                subject: r.subject.clone(),
                label: r.label,
                values: r.features.to_vec(),
            }),
        }
    }
    Ok(FeatureTable::new(FeatureKind::Rqa, network, out)?)
}

/// Graph settings shared by `graph` and `run`.
#[derive(Debug, Clone, Copy)]
pub struct GraphSettings {
    pub shrinkage: f64,
    pub edge_threshold: f64,
    pub signed: bool,
    pub top_k: usize,
}

pub struct SubjectGraph {
    pub subject: String,
    pub label: Label,
    pub graph: BrainGraph,
    pub eigen: EigenFeatures,
    pub ranking: DegreeRanking,
}

pub struct NetworkGraphs {
    pub network: NetworkId,
    pub subjects: Vec<SubjectGraph>,
    pub frequency: FrequencyTable,
}

pub fn network_graphs(subjects: &[&Subject], network: NetworkId, settings: GraphSettings) -> CliResult<NetworkGraphs> {
    let graphs: Vec<SubjectGraph> = subjects
        .par_iter()
        .map(|s| {
            let graph = build_graph(s, network, settings.shrinkage)?;
            let context = || format!("subject {}, network {network}", s.subject_id);
            let eigen = eigen_features(&graph).map_err(|e| e.context(context()))?;
            let ranking = degree_and_rank(&graph, settings.edge_threshold, settings.signed).map_err(|e| e.context(context()))?;
            Ok(SubjectGraph {
                subject: s.subject_id.clone(),
                label: s.label,
                graph,
                eigen,
                ranking,
            })
        })
        .collect::<CliResult<_>>()?;
    let rankings: Vec<DegreeRanking> = graphs.iter().map(|g| g.ranking.clone()).collect();
    let labels: Vec<Label> = graphs.iter().map(|g| g.label).collect();
    let roi_labels = graphs.first().map(|g| g.graph.roi_labels.clone()).unwrap_or_default();
    let frequency = top_roi_frequency(&rankings, &labels, settings.top_k, &roi_labels)?;
    Ok(NetworkGraphs {
        network,
        subjects: graphs,
        frequency,
    })
}

impl NetworkGraphs {
    pub fn feature_table(&self, kind: FeatureKind) -> CliResult<FeatureTable> {
        let rows = self
            .subjects
            .iter()
            .map(|g| FeatureRow {
                subject: g.subject.clone(),
                label: g.label,
                values: match kind {
                    FeatureKind::Eigenvalues => g.eigen.eigenvalues.clone(),
                    _ => g.eigen.leading_vector.clone(),
                },
            })
            .collect();
        Ok(FeatureTable::new(kind, self.network, rows)?)
    }

    /// Writes adjacency matrices, degrees, the frequency table and both
    /// spectral feature tables under `dir`.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let net = self.network.name();
        for g in &self.subjects {
            let path = dir.join("adjacency").join(&g.subject).join(format!("{net}.csv"));
            create_dir(path.parent().expect("nested path"))?;
            g.graph.write_csv(&path)?;
        }
        let mut header = vec!["subject".to_string(), "label".to_string()];
        header.extend(self.subjects.first().map(|g| g.graph.roi_labels.clone()).unwrap_or_default());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_rows(
            &dir.join(format!("degrees_{net}.csv")),
            &header,
            self.subjects.iter().map(|g| {
                let mut row = vec![g.subject.clone(), g.label.to_string()];
                row.extend(g.ranking.degrees.iter().map(usize::to_string));
                row
            }),
        )?;
        self.frequency.write_csv(&dir.join(format!("frequency_{net}.csv")))?;
        let features = dir.join("features");
        create_dir(&features)?;
        for kind in [FeatureKind::Eigenvalues, FeatureKind::LeadingEigenvector] {
            self.feature_table(kind)?.write_csv(&feature_path(&features, kind, self.network))?;
        }
        Ok(())
    }
}

pub fn feature_path(dir: &Path, kind: FeatureKind, network: NetworkId) -> PathBuf {
    dir.join(format!("{}_{}.csv", kind.short_name(), network.name()))
}

/// Subjects to render: the first `per_class` of each class in dataset order.
pub fn render_selection(ds: &CohortDataset, per_class: usize) -> BTreeSet<String> {
    let mut picked = BTreeSet::new();
    for class in [Label::Class0, Label::Class1] {
        picked.extend(
            ds.subjects()
                .iter()
                .filter(|s| s.label == class)
                .take(per_class)
                .map(|s| s.subject_id.clone()),
        );
    }
    picked
}
