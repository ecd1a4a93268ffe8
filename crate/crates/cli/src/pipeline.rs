//! The `run` subcommand: load, optional ReHo, recurrence, graph, classify.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.txt              resolved configuration
//! manifest.json           config hash, dataset hash, seed, versions, completed stages
//! timestamps.json         wall-clock times, one entry per invocation
//! reho/                   per-ROI ReHo maps
//! recurrence/             rqa_<net>.csv, embedding_<net>.csv, features/, plots/
//! graph/                  adjacency/, degrees_<net>.csv, frequency_<net>.csv, features/
//! classify/               <kind>/<net>.json, metrics.json, metrics.csv
//! ```
//!
//! Each finished unit of work leaves `<stage>/.done_<key>` (the network, or
//! the feature family and network for `classify`); later invocations with
//! the same configuration and data reuse those outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use brainscale::classify::{cross_validate, FeatureKind, FeatureTable, MetricsReport};
use brainscale::data::{load_cohort, CohortDataset, NetworkId, Subject, VoxelBlock};
use brainscale::reho::{reho_map, select_representative, RehoOptions};
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::stages::{
    create_dir, embedding_record, feature_path, network_graphs, network_recurrence, render_selection, rqa_feature_table,
    rqa_record, write_rows, GraphSettings, RecurrenceSettings, RenderSettings, EMBEDDING_HEADER, RQA_HEADER,
};

pub const METRICS_HEADER: [&str; 6] = ["feature_kind", "network", "Precision", "Recall", "F1 Score", "Accuracy"];

/// One line of the combined metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub feature_kind: String,
    pub network: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    config_hash: String,
    dataset_hash: String,
    seed: u64,
    versions: BTreeMap<String, String>,
    subjects: usize,
    n_timepoints: usize,
    completed: Vec<String>,
}

#[derive(Debug, Serialize)]
struct StageTime {
    stage: String,
    reused: bool,
    started: f64,
    finished: f64,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub config_hash: String,
    pub computed: Vec<String>,
    pub reused: Vec<String>,
    pub metrics: Vec<MetricsRow>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

/// Digest of labels, ROI labels and the exact bits of every sample.
pub fn dataset_hash(ds: &CohortDataset) -> String {
    let mut bytes = Vec::new();
    for s in ds.subjects() {
        bytes.extend_from_slice(s.subject_id.as_bytes());
        bytes.push(0);
        bytes.push(s.label.as_u8());
        for (id, rois) in &s.networks {
            bytes.extend_from_slice(id.name().as_bytes());
            for r in rois {
                bytes.extend_from_slice(r.roi_label.as_bytes());
                bytes.push(0);
                for v in &r.values {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    sha256_hex(&bytes)
}

struct Run {
    dir: PathBuf,
    hash: String,
    times: Vec<StageTime>,
    computed: Vec<String>,
    reused: Vec<String>,
}

impl Run {
    fn marker(&self, stage: &str, key: &str) -> PathBuf {
        self.dir.join(stage).join(format!(".done_{key}"))
    }

    fn is_done(&self, stage: &str, key: &str) -> bool {
        fs::read_to_string(self.marker(stage, key)).is_ok_and(|h| h.trim() == self.hash)
    }

    /// Runs `work` unless the marker for (`stage`, `key`) is present.
    fn stage(&mut self, stage: &str, key: &str, work: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
        let name = format!("{stage}/{key}");
        let started = now();
        let reused = self.is_done(stage, key);
        if reused {
            log::info!("{name}: reusing earlier output");
            self.reused.push(name.clone());
        } else {
            log::info!("{name}: computing");
            let dir = self.dir.join(stage);
            create_dir(&dir)?;
            work(&dir)?;
            write_text(&self.marker(stage, key), &self.hash)?;
            self.computed.push(name.clone());
        }
        self.times.push(StageTime {
            stage: name,
            reused,
            started,
            finished: now(),
        });
        Ok(())
    }
}

/// Replaces ROI series with the ReHo-selected voxel wherever a voxel block exists.
fn apply_reho(ds: &CohortDataset, cfg: &PipelineConfig, blocks: &Path, out: &Path) -> CliResult<(CohortDataset, usize)> {
    let mut subjects: Vec<Subject> = ds.subjects().to_vec();
    let mut replaced = 0;
    for s in &mut subjects {
        for &network in &cfg.networks {
            let Some(rois) = s.networks.get_mut(&network) else { continue };
            for (i, roi) in rois.iter_mut().enumerate() {
                let name = format!("roi{:02}", i + 1);
                let path = blocks.join(&s.subject_id).join(network.name()).join(format!("{name}.csv"));
                if !path.is_file() {
                    continue;
                }
                let context = format!("subject {}, network {network}, roi {}", s.subject_id, i + 1);
                let block = VoxelBlock::read_csv(&path, i).map_err(|e| e.context(context.clone()))?;
                let map = reho_map(
                    &block,
                    RehoOptions {
                        neighbors_only: cfg.neighbors_only,
                    },
                );
                let rep = select_representative(&block, &map, network, &roi.roi_label).map_err(|e| e.context(context.clone()))?;
                if rep.values.len() != roi.values.len() {
                    return Err(brainscale::Error::LengthMismatch {
                        context,
                        expected: roi.values.len(),
                        found: rep.values.len(),
                    }
                    .into());
                }
                let map_dir = out.join(&s.subject_id).join(network.name());
                create_dir(&map_dir)?;
                map.write_csv(&map_dir.join(format!("{name}_map.csv")))?;
                roi.values = rep.values;
                replaced += 1;
            }
        }
    }
    Ok((CohortDataset::new(subjects)?, replaced))
}

fn check_existing(dir: &Path, config_hash: &str, dataset_hash: &str) -> CliResult<Vec<String>> {
    let path = dir.join("manifest.json");
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let old: RunManifest = read_json(&path)?;
    if old.config_hash != config_hash {
        return Err(CliError::RunMismatch {
            dir: dir.to_path_buf(),
            what: "configuration",
            found: old.config_hash,
            expected: config_hash.to_string(),
        });
    }
    if old.dataset_hash != dataset_hash {
        return Err(CliError::RunMismatch {
            dir: dir.to_path_buf(),
            what: "dataset",
            found: old.dataset_hash,
            expected: dataset_hash.to_string(),
        });
    }
    Ok(old.completed)
}

fn metrics_path(dir: &Path, kind: FeatureKind, network: NetworkId) -> PathBuf {
    dir.join("classify").join(kind.short_name()).join(format!("{}.json", network.name()))
}

fn features_file(dir: &Path, kind: FeatureKind, network: NetworkId) -> PathBuf {
    let stage = if kind == FeatureKind::Rqa { "recurrence" } else { "graph" };
    feature_path(&dir.join(stage).join("features"), kind, network)
}

pub fn metrics_row(kind: FeatureKind, network: NetworkId, r: &MetricsReport) -> MetricsRow {
    MetricsRow {
        feature_kind: kind.short_name().to_string(),
        network: network.name().to_string(),
        precision: r.precision,
        recall: r.recall,
        f1: r.f1,
        accuracy: r.accuracy,
    }
}

pub fn metrics_record(row: &MetricsRow) -> Vec<String> {
    vec![
        row.feature_kind.clone(),
        row.network.clone(),
        format!("{:.4}", row.precision),
        format!("{:.4}", row.recall),
        format!("{:.4}", row.f1),
        format!("{:.4}", row.accuracy),
    ]
}

/// Rebuilds the combined metrics from every per-network file on disk.
fn collect_metrics(dir: &Path) -> CliResult<Vec<MetricsRow>> {
    #[derive(Deserialize)]
    struct Stored {
        precision: f64,
        recall: f64,
        f1: f64,
        accuracy: f64,
    }
    let mut rows = Vec::new();
    for kind in FeatureKind::ALL {
        for network in NetworkId::ALL {
            let path = metrics_path(dir, kind, network);
            if path.is_file() {
                let s: Stored = read_json(&path)?;
                rows.push(MetricsRow {
                    feature_kind: kind.short_name().to_string(),
                    network: network.name().to_string(),
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                    accuracy: s.accuracy,
                });
            }
        }
    }
    Ok(rows)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> CliResult<RunSummary> {
    cfg.validate()?;
    let started = now();
    let dataset = load_cohort(&cfg.data, &cfg.manifest_path())?;
    let data_hash = dataset_hash(&dataset);
    let config_hash = cfg.config_hash();
    create_dir(&cfg.out)?;
    let mut completed = check_existing(&cfg.out, &config_hash, &data_hash)?;
    write_text(&cfg.out.join("config.txt"), &cfg.to_text())?;

    let mut run = Run {
        dir: cfg.out.clone(),
        hash: config_hash.clone(),
        times: Vec::new(),
        computed: Vec::new(),
        reused: Vec::new(),
    };

    let dataset = match &cfg.reho_dir {
        Some(blocks) => {
            let t = now();
            let (ds, replaced) = apply_reho(&dataset, cfg, blocks, &run.dir.join("reho"))?;
            log::info!("reho: {replaced} ROI series replaced by their representative voxel");
            run.times.push(StageTime {
                stage: "reho".into(),
                reused: false,
                started: t,
                finished: now(),
            });
            ds
        }
        None => dataset,
    };
    let subjects: Vec<&Subject> = dataset.subjects().iter().collect();

    if cfg.features.contains(&FeatureKind::Rqa) {
        let settings = RecurrenceSettings {
            tau: cfg.tau,
            d_max: cfg.d_max,
            epsilon: cfg.epsilon,
            force_k: cfg.force_k,
            rqa: cfg.rqa_params(),
        };
        let render = RenderSettings {
            dir: run.dir.join("recurrence").join("plots"),
            size: cfg.rp_size,
            subjects: render_selection(&dataset, cfg.render_subjects),
        };
        for &network in &cfg.networks {
            run.stage("recurrence", network.name(), |dir| {
                let rows = network_recurrence(&subjects, network, settings, Some(&render))?;
                let net = network.name();
                write_rows(&dir.join(format!("rqa_{net}.csv")), &RQA_HEADER, rows.iter().map(|r| rqa_record(network, r)))?;
                write_rows(
                    &dir.join(format!("embedding_{net}.csv")),
                    &EMBEDDING_HEADER,
                    rows.iter().map(|r| embedding_record(network, r)),
                )?;
                let features = dir.join("features");
                create_dir(&features)?;
                rqa_feature_table(network, &rows)?.write_csv(&feature_path(&features, FeatureKind::Rqa, network))?;
                Ok(())
            })?;
        }
    }

    if cfg.features.iter().any(|k| *k != FeatureKind::Rqa) {
        let settings = GraphSettings {
            shrinkage: cfg.shrinkage,
            edge_threshold: cfg.edge_threshold,
            signed: cfg.signed,
            top_k: cfg.top_k,
        };
        for &network in &cfg.networks {
            run.stage("graph", network.name(), |dir| network_graphs(&subjects, network, settings)?.write(dir))?;
        }
    }

    let cv = cfg.cv_params();
    for &network in &cfg.networks {
        for &kind in &cfg.features {
            let root = run.dir.clone();
            let key = format!("{}_{}", kind.short_name(), network.name());
            run.stage("classify", &key, |_| {
                let table = FeatureTable::read_csv(&features_file(&root, kind, network))?;
                let report = cross_validate(&table.x(), &table.y(), cv)
                    .map_err(|e| e.context(format!("network {network}, features {kind}")))?;
                let path = metrics_path(&root, kind, network);
                create_dir(path.parent().expect("nested path"))?;
                write_json(&path, &report)
            })?;
        }
    }

    let metrics = collect_metrics(&run.dir)?;
    let classify_dir = run.dir.join("classify");
    write_json(
        &classify_dir.join("metrics.json"),
        &MetricsFile {
            config_hash: config_hash.clone(),
            rows: metrics.clone(),
        },
    )?;
    write_rows(&classify_dir.join("metrics.csv"), &METRICS_HEADER, metrics.iter().map(metrics_record))?;

    completed.extend(run.computed.iter().cloned());
    completed.sort();
    completed.dedup();
    let manifest = RunManifest {
        config_hash: config_hash.clone(),
        dataset_hash: data_hash,
        seed: cfg.seed,
        versions: BTreeMap::from([
            ("brainscale".to_string(), brainscale::VERSION.to_string()),
            ("brainscale-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]),
        subjects: dataset.subjects().len(),
        n_timepoints: dataset.n_timepoints(),
        completed,
    };
    write_json(&run.dir.join("manifest.json"), &manifest)?;
    append_timestamps(&run.dir.join("timestamps.json"), started, &run.times)?;

    Ok(RunSummary {
        run_dir: run.dir,
        config_hash,
        computed: run.computed,
        reused: run.reused,
        metrics,
    })
}

fn append_timestamps(path: &Path, started: f64, stages: &[StageTime]) -> CliResult<()> {
    let mut runs: Vec<serde_json::Value> = if path.is_file() { read_json(path)? } else { Vec::new() };
    runs.push(serde_json::json!({
        "started": started,
        "finished": now(),
        "stages": stages,
    }));
    write_json(path, &runs)
}
