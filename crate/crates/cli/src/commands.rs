use std::io::Write as _;
use std::path::{Path, PathBuf};

use brainscale::classify::{cross_validate, Aggregation, CvParams, EnsembleParams, FeatureKind, FeatureTable, MetricsReport};
use brainscale::data::{load_cohort, validate_dataset, write_network_csv, CohortDataset, NetworkId, Subject, VoxelBlock};
use brainscale::embedding::choose_embedding;
use brainscale::recurrence::{series_rqa, RqaParams, ThresholdRule};
use brainscale::reho::{reho_map, select_representative, RehoOptions};
use brainscale::synth::{gen_two_class_cohort, TwoClassSpec};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{metrics_record, metrics_row, run_pipeline, METRICS_HEADER};
use crate::stages::{
    create_dir, embedding_record, feature_path, network_graphs, network_recurrence, render_plot, rqa_feature_table, rqa_record,
    write_rows, GraphSettings, RecurrenceSettings, EMBEDDING_HEADER, RQA_HEADER,
};
use crate::{
    ClassifyArgs, EmbedArgs, GraphArgs, RehoArgs, ReportArgs, RpRenderArgs, RqaArgs, RqaOptions, RunArgs, SeriesArgs, SynthArgs,
    SynthKind, ValidateArgs,
};

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json("<stdout>", e))?;
    text.push('\n');
    emit(&text)
}

fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| CliError::io("<stdout>", e))
}

fn networks(filter: Option<NetworkId>) -> Vec<NetworkId> {
    filter.map_or_else(|| NetworkId::ALL.to_vec(), |n| vec![n])
}

fn pick_subjects<'a>(ds: &'a CohortDataset, subject: Option<&str>) -> CliResult<Vec<&'a Subject>> {
    let picked: Vec<&Subject> = ds
        .subjects()
        .iter()
        .filter(|s| subject.is_none_or(|id| s.subject_id == id))
        .collect();
    if picked.is_empty() {
        return Err(CliError::Usage(format!("no subject {:?} in the dataset", subject.unwrap_or(""))));
    }
    Ok(picked)
}

fn recurrence_settings(o: &RqaOptions) -> RecurrenceSettings {
    RecurrenceSettings {
        tau: o.embedding.tau,
        d_max: o.embedding.dmax,
        epsilon: o.embedding.epsilon,
        force_k: o.force_k,
        rqa: RqaParams {
            rule: ThresholdRule::TargetRate(o.rr),
            l_min: o.lmin,
            v_min: o.vmin,
        },
    }
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let SynthKind::TwoClassCohort = args.kind;
    let n = args.network.roi_count();
    if args.n.is_some_and(|v| v != n) {
        return Err(CliError::Usage(format!(
            "--n {} does not match the {} ROIs of {}",
            args.n.unwrap_or(0),
            n,
            args.network
        )));
    }
    let defaults = TwoClassSpec::default();
    let hub = match args.hub {
        Some(0) => return Err(CliError::Usage("--hub is 1-based".into())),
        h => h.map(|h| h - 1),
    };
    let spec = TwoClassSpec {
        separation: args.sep,
        subjects_per_class: args.subjects,
        n_timepoints: args.n_timepoints,
        network: args.network,
        hub,
        leaves: args.leaves.unwrap_or(defaults.leaves),
        hub_weight: args.hub_weight.unwrap_or(defaults.hub_weight),
        seed: args.seed,
    };
    let cohort = gen_two_class_cohort(&spec)?;
    let manifest = brainscale::data::write_cohort(&cohort.dataset, &args.out)?;
    let hub_label = cohort.dataset.subjects()[0].network(args.network).map(|r| r[cohort.hub].roi_label.clone());
    print_json(&serde_json::json!({
        "manifest": manifest,
        "subjects": cohort.dataset.subjects().len(),
        "n_timepoints": cohort.dataset.n_timepoints(),
        "network": args.network.name(),
        "hub_roi": cohort.hub + 1,
        "hub_label": hub_label,
        "diagonal_loading": cohort.diagonal_loading,
        "seed": args.seed,
    }))
}

pub fn validate(args: &ValidateArgs) -> CliResult<()> {
    let ds = load_cohort(&args.data.data, &args.data.manifest_path())?;
    print_json(&validate_dataset(&ds))
}

pub fn reho(args: &RehoArgs) -> CliResult<()> {
    let block = VoxelBlock::read_csv(&args.block, args.region_id)?;
    let map = reho_map(
        &block,
        RehoOptions {
            neighbors_only: args.neighbors_only,
        },
    );
    if let Some(path) = &args.map {
        map.write_csv(path)?;
    }
    let rep = select_representative(&block, &map, args.network, &args.label)?;
    if let Some(path) = &args.out {
        write_network_csv(path, std::slice::from_ref(&rep))?;
    }
    let defined: Vec<f64> = map.defined_values().collect();
    print_json(&serde_json::json!({
        "region_id": args.region_id,
        "dims": map.dims,
        "voxels": block.voxel_count(),
        "defined": defined.len(),
        "mean_w": defined.iter().sum::<f64>() / defined.len() as f64,
        "max_w": defined.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "n_timepoints": rep.values.len(),
    }))
}

/// A selected series and the name its outputs carry.
struct NamedSeries {
    name: String,
    values: Vec<f64>,
}

fn read_plain_series(path: &Path, column: Option<&str>) -> CliResult<Vec<NamedSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    let headers: Vec<String> = rdr.headers().map_err(|e| CliError::csv(path, e))?.iter().map(str::to_string).collect();
    let wanted: Vec<usize> = match column {
        None => (0..headers.len()).collect(),
        Some(c) => {
            let idx = match c.parse::<usize>() {
                Ok(i) if (1..=headers.len()).contains(&i) => Some(i - 1),
                _ => headers.iter().position(|h| h == c),
            };
            vec![idx.ok_or_else(|| CliError::Usage(format!("{} has no column {c:?}", path.display())))?]
        }
    };
    let mut columns = vec![Vec::new(); wanted.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        for (out, &c) in columns.iter_mut().zip(&wanted) {
            let v = rec
                .get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| brainscale::Error::Malformed {
                    path: path.to_path_buf(),
                    reason: format!("row {}: column {} is not a finite number", row + 1, c + 1),
                })?;
            out.push(v);
        }
    }
    Ok(wanted
        .into_iter()
        .zip(columns)
        .map(|(c, values)| NamedSeries {
            name: headers[c].chars().map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' }).collect(),
            values,
        })
        .collect())
}

fn select_series(args: &SeriesArgs) -> CliResult<Vec<NamedSeries>> {
    if let Some(path) = &args.series {
        return read_plain_series(path, args.column.as_deref());
    }
    let data = args.data.as_ref().expect("clap requires --series or --data");
    let manifest = args.manifest.clone().unwrap_or_else(|| data.join("manifest.csv"));
    let ds = load_cohort(data, &manifest)?;
    let mut out = Vec::new();
    for s in pick_subjects(&ds, args.subject.as_deref())? {
        for network in networks(args.network) {
            let rois = s.network(network).unwrap_or_default();
            if args.roi.is_some_and(|r| r == 0 || r > rois.len()) {
                return Err(CliError::Usage(format!("--roi must lie in 1..={} for {network}", rois.len())));
            }
            for (i, roi) in rois.iter().enumerate().filter(|(i, _)| args.roi.is_none_or(|r| r == i + 1)) {
                out.push(NamedSeries {
                    name: format!("{}_{}_roi{:02}", s.subject_id, network.name(), i + 1),
                    values: roi.values.clone(),
                });
            }
        }
    }
    Ok(out)
}

pub fn embed(args: &EmbedArgs) -> CliResult<()> {
    let mut selected = select_series(&args.series)?;
    if selected.len() != 1 {
        return Err(CliError::Usage(format!(
            "embed needs exactly one series, the selection has {}; use --column, or --subject, --network and --roi",
            selected.len()
        )));
    }
    let series = selected.remove(0);
    let e = &args.embedding;
    let choice = choose_embedding(&series.values, e.tau, e.dmax, e.epsilon)?;
    let rows = (0..choice.curve.e1.len()).map(|i| vec![(i + 1).to_string(), choice.curve.e1[i].to_string(), choice.curve.e2[i].to_string()]);
    match &args.out {
        Some(path) => {
            write_rows(path, &["d", "e1", "e2"], rows)?;
            print_json(&serde_json::json!({
                "series": series.name,
                "tau": choice.params.tau,
                "delay_rule": choice.delay_rule,
                "m": choice.params.m,
                "saturation_found": choice.saturation_found,
                "d_max_used": choice.d_max_used,
            }))
        }
        None => {
            let mut wtr = csv::Writer::from_writer(std::io::stdout().lock());
            let fail = |e| CliError::csv("<stdout>", e);
            wtr.write_record(["d", "e1", "e2"]).map_err(fail)?;
            for row in rows {
                wtr.write_record(row).map_err(fail)?;
            }
            wtr.flush().map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

pub fn rqa(args: &RqaArgs) -> CliResult<()> {
    let ds = load_cohort(&args.data.data, &args.data.manifest_path())?;
    let subjects = pick_subjects(&ds, args.subject.as_deref())?;
    let settings = recurrence_settings(&args.rqa);
    let mut rqa_rows = Vec::new();
    let mut embedding_rows = Vec::new();
    for network in networks(args.network) {
        let rows = network_recurrence(&subjects, network, settings, None)?;
        rqa_rows.extend(rows.iter().map(|r| rqa_record(network, r)));
        embedding_rows.extend(rows.iter().map(|r| embedding_record(network, r)));
        if let Some(dir) = &args.features_out {
            create_dir(dir)?;
            rqa_feature_table(network, &rows)?.write_csv(&feature_path(dir, FeatureKind::Rqa, network))?;
        }
    }
    if let Some(path) = &args.embedding_out {
        write_rows(path, &EMBEDDING_HEADER, embedding_rows)?;
    }
    match &args.out {
        Some(path) => write_rows(path, &RQA_HEADER, rqa_rows),
        None => {
            let mut wtr = csv::Writer::from_writer(std::io::stdout().lock());
            let fail = |e| CliError::csv("<stdout>", e);
            wtr.write_record(RQA_HEADER).map_err(fail)?;
            for row in rqa_rows {
                wtr.write_record(row).map_err(fail)?;
            }
            wtr.flush().map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

pub fn rp_render(args: &RpRenderArgs) -> CliResult<()> {
    use rayon::prelude::*;

    let selected = select_series(&args.series)?;
    if selected.is_empty() {
        return Err(CliError::Usage("the selection contains no series".into()));
    }
    create_dir(&args.out)?;
    let settings = recurrence_settings(&args.rqa);
    let written: Vec<PathBuf> = selected
        .par_iter()
        .map(|s| {
            let choice = choose_embedding(&s.values, settings.tau, settings.d_max, settings.epsilon)
                .map_err(|e| e.context(s.name.clone()))?;
            let result = series_rqa(&s.values, choice.params, settings.force_k, settings.rqa).map_err(|e| e.context(s.name.clone()))?;
            let path = args.out.join(format!("{}.pgm", s.name));
            if args.binary {
                let k = result.binary.k();
                // recurrent pairs dark, as in the usual plot convention
                let m = DMatrix::from_fn(k, k, |i, j| if result.binary.get(i, j) { 0.0 } else { 1.0 });
                render_plot(&m, args.size, &path)?;
            } else {
                render_plot(result.matrix.as_matrix(), args.size, &path)?;
            }
            Ok(path)
        })
        .collect::<CliResult<_>>()?;
    print_json(&serde_json::json!({ "size": args.size, "written": written }))
}

pub fn graph(args: &GraphArgs) -> CliResult<()> {
    let ds = load_cohort(&args.data.data, &args.data.manifest_path())?;
    let subjects: Vec<&Subject> = ds.subjects().iter().collect();
    let settings = GraphSettings {
        shrinkage: args.shrinkage,
        edge_threshold: args.edge_threshold,
        signed: args.signed,
        top_k: args.topk,
    };
    create_dir(&args.out)?;
    let mut summary = Vec::new();
    for network in networks(args.network) {
        let graphs = network_graphs(&subjects, network, settings)?;
        graphs.write(&args.out)?;
        let constant: usize = graphs.subjects.iter().map(|g| g.graph.constant_rois.len()).sum();
        summary.push(serde_json::json!({
            "network": network.name(),
            "subjects": graphs.subjects.len(),
            "rois": network.roi_count(),
            "constant_rois": constant,
        }));
    }
    print_json(&serde_json::json!({ "out": args.out, "networks": summary }))
}

pub fn classify(args: &ClassifyArgs) -> CliResult<()> {
    let table = match (&args.table, &args.data) {
        (Some(path), _) => {
            let t = FeatureTable::read_csv(path)?;
            if t.kind != args.features || t.network != args.network {
                return Err(CliError::Usage(format!(
                    "{} holds {} features for {}, not {} for {}",
                    path.display(),
                    t.kind,
                    t.network,
                    args.features,
                    args.network
                )));
            }
            t
        }
        (None, Some(data)) => {
            let manifest = args.manifest.clone().unwrap_or_else(|| data.join("manifest.csv"));
            let ds = load_cohort(data, &manifest)?;
            features_with_defaults(&ds, args.features, args.network)?
        }
        (None, None) => unreachable!("clap requires --table or --data"),
    };
    let params = CvParams {
        folds: args.folds,
        ensemble: EnsembleParams {
            trees: args.trees,
            seed: args.seed,
            ..Default::default()
        },
        aggregation: if args.per_fold_mean {
            Aggregation::PerFoldMean
        } else {
            Aggregation::Pooled
        },
    };
    let report = cross_validate(&table.x(), &table.y(), params)?;
    if let Some(dir) = &args.out {
        write_metrics(dir, args.features, args.network, &report)?;
    }
    print_json(&report)
}

fn features_with_defaults(ds: &CohortDataset, kind: FeatureKind, network: NetworkId) -> CliResult<FeatureTable> {
    let subjects: Vec<&Subject> = ds.subjects().iter().collect();
    let cfg = PipelineConfig::default();
    match kind {
        FeatureKind::Rqa => {
            let settings = RecurrenceSettings {
                tau: cfg.tau,
                d_max: cfg.d_max,
                epsilon: cfg.epsilon,
                force_k: cfg.force_k,
                rqa: cfg.rqa_params(),
            };
            rqa_feature_table(network, &network_recurrence(&subjects, network, settings, None)?)
        }
        _ => {
            let settings = GraphSettings {
                shrinkage: cfg.shrinkage,
                edge_threshold: cfg.edge_threshold,
                signed: cfg.signed,
                top_k: cfg.top_k.min(network.roi_count()),
            };
            network_graphs(&subjects, network, settings)?.feature_table(kind)
        }
    }
}

fn write_metrics(dir: &Path, kind: FeatureKind, network: NetworkId, report: &MetricsReport) -> CliResult<()> {
    create_dir(dir)?;
    let path = dir.join("metrics.json");
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::json(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    write_rows(&dir.join("metrics.csv"), &METRICS_HEADER, [metrics_record(&metrics_row(kind, network, report))])
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
pub fn run_config(args: &RunArgs, jobs: Option<usize>) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    for kv in &args.only {
        match kv.split_once('=') {
            Some(("network" | "networks", v)) => cfg.set("networks", v)?,
            Some(("feature" | "features", v)) => cfg.set("features", v)?,
            _ => return Err(CliError::Usage(format!("--only expects network=<name> or features=<list>, got {kv:?}"))),
        }
    }
    if let Some(data) = &args.data {
        cfg.data = data.clone();
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(f) = &args.features {
        cfg.set("features", f)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trees) = args.trees {
        cfg.trees = trees;
    }
    if let Some(folds) = args.folds {
        cfg.folds = folds;
    }
    if jobs.is_some() {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cfg: &PipelineConfig) -> CliResult<()> {
    print_json(&run_pipeline(cfg)?)
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    emit(&crate::report::report(&args.run, args.format, args.table)?)
}
