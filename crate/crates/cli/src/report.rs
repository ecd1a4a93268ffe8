use std::fmt::Write as _;
use std::path::Path;

use brainscale::classify::FeatureKind;
use brainscale::data::NetworkId;

use crate::error::{CliError, CliResult};
use crate::pipeline::{metrics_record, read_json, MetricsFile, MetricsRow, METRICS_HEADER};

/// Frequency rows listed per class in the text report.
const TEXT_TOP_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportTable {
    Metrics,
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
struct FrequencyLine {
    class: String,
    roi: String,
    label: String,
    fraction: String,
}

fn load_metrics(run: &Path) -> CliResult<Vec<MetricsRow>> {
    let path = run.join("classify").join("metrics.json");
    if !path.is_file() {
        return Err(CliError::IncompleteRun {
            dir: run.to_path_buf(),
            missing: "classify/metrics.json".into(),
        });
    }
    Ok(read_json::<MetricsFile>(&path)?.rows)
}

fn load_frequency(run: &Path) -> CliResult<Vec<(NetworkId, Vec<FrequencyLine>)>> {
    let mut out = Vec::new();
    for network in NetworkId::ALL {
        let path = run.join("graph").join(format!("frequency_{}.csv", network.name()));
        if !path.is_file() {
            continue;
        }
        let mut rdr = csv::Reader::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::csv(&path, e))?;
            let field = |i: usize| rec.get(i).unwrap_or("").to_string();
            lines.push(FrequencyLine {
                class: field(0),
                roi: field(1),
                label: field(2),
                fraction: field(3),
            });
        }
        out.push((network, lines));
    }
    Ok(out)
}

fn family_title(kind: &str) -> String {
    match kind.parse::<FeatureKind>() {
        Ok(FeatureKind::Eigenvalues) => "Eigenvalue features".into(),
        Ok(FeatureKind::LeadingEigenvector) => "Leading-eigenvector features".into(),
        Ok(FeatureKind::Rqa) => "Recurrence quantification features".into(),
        Err(_) => kind.to_string(),
    }
}

fn network_title(name: &str) -> String {
    let spaced = name.replace('_', " ");
    let mut chars = spaced.chars();
    chars
        .next()
        .map_or_else(String::new, |c| c.to_uppercase().chain(chars).collect())
}

fn text_report(metrics: &[MetricsRow], frequency: &[(NetworkId, Vec<FrequencyLine>)]) -> String {
    let mut s = String::new();
    let mut kinds: Vec<&str> = Vec::new();
    for r in metrics {
        if !kinds.contains(&r.feature_kind.as_str()) {
            kinds.push(&r.feature_kind);
        }
    }
    for kind in kinds {
        let _ = writeln!(s, "{}", family_title(kind));
        let _ = writeln!(s, "{:<20} {:>9} {:>7} {:>9} {:>9}", "Network", "Precision", "Recall", "F1 Score", "Accuracy");
        for r in metrics.iter().filter(|r| r.feature_kind == kind) {
            let _ = writeln!(
                s,
                "{:<20} {:>9.2} {:>7.2} {:>9.2} {:>8.2}%",
                network_title(&r.network),
                r.precision,
                r.recall,
                r.f1,
                100.0 * r.accuracy
            );
        }
        s.push('\n');
    }
    for (network, lines) in frequency {
        let _ = writeln!(s, "Top-ROI frequency, {}", network_title(network.name()));
        let _ = writeln!(s, "{:>7}  {:>7}  {:<24} {:>17}", "Class", "ROI no.", "Dosenbach ROI", "Fraction of subj.");
        for class in ["0", "1"] {
            for l in lines.iter().filter(|l| l.class == class).take(TEXT_TOP_ROWS) {
                let fraction: f64 = l.fraction.parse().unwrap_or(f64::NAN);
                let _ = writeln!(s, "{:>7}  {:>7}  {:<24} {:>17.2}", l.class, l.roi, l.label, fraction);
            }
        }
        s.push('\n');
    }
    s
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let fail = |e| CliError::csv("<report>", e);
    wtr.write_record(header).map_err(fail)?;
    for row in rows {
        wtr.write_record(row).map_err(fail)?;
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::io("<report>", e.into_error()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Summary of a finished run directory.
pub fn report(run: &Path, format: ReportFormat, table: ReportTable) -> CliResult<String> {
    let metrics = load_metrics(run)?;
    let frequency = load_frequency(run)?;
    match (format, table) {
        (ReportFormat::Text, _) => Ok(text_report(&metrics, &frequency)),
        (ReportFormat::Csv, ReportTable::Metrics) => to_csv(&METRICS_HEADER, metrics.iter().map(metrics_record)),
        (ReportFormat::Csv, ReportTable::Frequency) => to_csv(
            &["network", "class", "ROI no.", "Dosenbach ROI", "Fraction of subj."],
            frequency.iter().flat_map(|(network, lines)| {
                lines
                    .iter()
                    .map(|l| vec![network.name().to_string(), l.class.clone(), l.roi.clone(), l.label.clone(), l.fraction.clone()])
            }),
        ),
    }
}
