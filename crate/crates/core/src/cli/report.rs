//! Markdown summary and plot-data series from an analysis directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::analyze::{AnalysisSummary, METRICS_FILE, SUMMARY_FILE};
use super::CliError;
use crate::metrics::{self, MetricsRow, ReliabilityMode, Thresholds};
use crate::surrogate::Metric;

pub const REPORT_FILE: &str = "report.md";
pub const INTERCEPT_SERIES_FILE: &str = "plot_intercepts.csv";

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn plot_file(metric: Metric, classifier: &str) -> String {
    format!("plot_{metric}_{}.csv", file_safe(classifier))
}

fn names(rows: &[&MetricsRow]) -> String {
    if rows.is_empty() {
        return "none".into();
    }
    rows.iter()
        .map(|r| format!("{} ({})", r.augmentation.index(), r.augmentation.name()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Indices of the `n` most (or least) sensitive rows; ties to the lower id.
fn ranked_by_sensitivity(rows: &[MetricsRow], n: usize, most: bool) -> Vec<&MetricsRow> {
    let mut order: Vec<&MetricsRow> = rows.iter().collect();
    order.sort_by(|a, b| {
        let c = a.sensitivity.total_cmp(&b.sensitivity);
        let c = if most { c.reverse() } else { c };
        c.then(a.augmentation.cmp(&b.augmentation))
    });
    order.truncate(n);
    order
}

/// Report text. The classification lists depend only on `rows` (as read
/// from the metrics CSV) and `thresholds`.
pub fn render(rows: &[MetricsRow], summary: &AnalysisSummary, thresholds: &Thresholds) -> String {
    let labelled = metrics::classify(rows, thresholds);
    let by_mode = |mode| {
        metrics::classify(rows, &Thresholds { mode, ..*thresholds })
            .into_iter()
            .filter(|r| r.reliable)
            .collect::<Vec<_>>()
    };
    let reliable_table = by_mode(ReliabilityMode::Table);
    let reliable_equation = by_mode(ReliabilityMode::Equation);
    let sensitive: Vec<&MetricsRow> = labelled.iter().filter(|r| r.sensitive).collect();
    let insensitive: Vec<&MetricsRow> = labelled.iter().filter(|r| !r.sensitive).collect();
    let n = thresholds.top_n;

    let mut s = String::new();
    let _ = writeln!(s, "# Augmentation sensitivity report\n");
    let _ = writeln!(s, "- metric: {}", summary.metric);
    let _ = writeln!(s, "- classifiers: {}", summary.classifiers.join(", "));
    let hp: Vec<&str> = summary.hyperparams.iter().map(|h| h.label.as_str()).collect();
    let _ = writeln!(s, "- hyper-parameter settings: {}", hp.join(", "));
    let _ = writeln!(s, "- sensitivity threshold: {}", thresholds.sensitivity);
    let _ = writeln!(s, "- reliable: top {n} positive reliability values");
    let _ = writeln!(s, "- reliability mode used for the `reliable` column: {}\n", thresholds.mode);

    let _ = writeln!(s, "## Metrics\n");
    let _ = writeln!(
        s,
        "| id | augmentation | sensitivity | consistency | influence | reliability (table) | reliability (equation) | sensitive | reliable |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
    for r in &labelled {
        let _ = writeln!(
            s,
            "| {} | {} | {:.6} | {:.6} | {:.6} | {:.6} | {:.6} | {} | {} |",
            r.augmentation.index(),
            r.augmentation.name(),
            r.sensitivity,
            r.consistency,
            r.influence,
            r.reliability_table,
            r.reliability_equation,
            if r.sensitive { "yes" } else { "no" },
            if r.reliable { "yes" } else { "no" },
        );
    }

    let _ = writeln!(s, "\n## Sensitivity\n");
    let _ = writeln!(
        s,
        "- sensitive (sensitivity >= {}): {}",
        thresholds.sensitivity,
        names(&sensitive)
    );
    let _ = writeln!(
        s,
        "- insensitive (sensitivity < {}): {}",
        thresholds.sensitivity,
        names(&insensitive)
    );
    let _ = writeln!(s, "- {n} most sensitive: {}", names(&ranked_by_sensitivity(rows, n, true)));
    let _ = writeln!(s, "- {n} least sensitive: {}", names(&ranked_by_sensitivity(rows, n, false)));

    let _ = writeln!(s, "\n## Reliability\n");
    let _ = writeln!(
        s,
        "- table mode (sensitivity x influence): {}",
        names(&reliable_table.iter().collect::<Vec<_>>())
    );
    let _ = writeln!(
        s,
        "- equation mode (consistency x influence): {}",
        names(&reliable_equation.iter().collect::<Vec<_>>())
    );
    let _ = writeln!(
        s,
        "\nThe two modes rank augmentations differently: table mode rewards high \
         sensitivity, equation mode rewards low sensitivity. Both columns are in `{METRICS_FILE}`."
    );
    if let Some(r) = labelled.iter().find(|r| r.consistency.is_infinite()) {
        let _ = writeln!(
            s,
            "\nAugmentation {} has zero sensitivity; its consistency is infinite.",
            r.augmentation.index()
        );
    }

    if !summary.baselines.is_empty() {
        let _ = writeln!(s, "\n## Un-augmented baselines\n");
        let _ = writeln!(s, "| classifier | hyper-params | test accuracy | test loss x100 |");
        let _ = writeln!(s, "|---|---|---|---|");
        let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.2}"));
        for b in &summary.baselines {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} |",
                b.classifier,
                b.hyper_params,
                fmt(b.test_accuracy),
                fmt(b.test_loss_x100)
            );
        }
    }

    if !summary.warnings.is_empty() {
        let _ = writeln!(s, "\n## Warnings\n");
        for w in &summary.warnings {
            let _ = writeln!(s, "- {w}");
        }
    }
    s
}

/// One row per augmentation, one column per hyper-parameter setting.
fn plot_series(summary: &AnalysisSummary, metric: Metric, k: usize) -> Result<Vec<u8>, csv::Error> {
    let tensor = summary.tensor(metric);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["aug_id".to_string(), "aug_name".to_string()];
    header.extend(summary.hyperparams.iter().map(|h| h.label.clone()));
    w.write_record(&header)?;
    for id in crate::augment::AugmentationId::ALL {
        let mut row = vec![id.index().to_string(), id.name().to_string()];
        row.extend((0..tensor.num_hyperparams()).map(|l| tensor.get(k, l, id.index()).to_string()));
        w.write_record(&row)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

fn intercept_series(summary: &AnalysisSummary) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["classifier", "hyper_params", "accuracy", "loss"])?;
    for c in &summary.classifiers {
        for h in &summary.hyperparams {
            let find = |m| {
                summary
                    .intercepts
                    .iter()
                    .find(|i| i.metric == m && &i.classifier == c && i.hyper_params == h.descriptor)
                    .map_or(String::new(), |i| i.intercept.to_string())
            };
            w.write_record([c.clone(), h.label.clone(), find(Metric::Accuracy), find(Metric::Loss)])?;
        }
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

pub fn load_inputs(dir: &Path) -> Result<(Vec<MetricsRow>, AnalysisSummary), CliError> {
    let runtime = |p: &Path, e: String| CliError::Runtime(format!("{}: {e}", p.display()));
    let metrics_path = dir.join(METRICS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    let text = fs::read(&metrics_path).map_err(|e| runtime(&metrics_path, e.to_string()))?;
    let rows = metrics::read_csv(text.as_slice()).map_err(|e| runtime(&metrics_path, e.to_string()))?;
    let text = fs::read(&summary_path).map_err(|e| runtime(&summary_path, e.to_string()))?;
    let summary = serde_json::from_slice(&text).map_err(|e| runtime(&summary_path, e.to_string()))?;
    Ok((rows, summary))
}

/// Writes the report and plot files into `dir`; returns the report path.
pub fn write_report(dir: &Path, thresholds: &Thresholds) -> Result<PathBuf, CliError> {
    let (rows, summary) = load_inputs(dir)?;
    let runtime = |p: &Path, e: String| CliError::Runtime(format!("{}: {e}", p.display()));
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| runtime(&p, e.to_string()))
    };
    for m in [Metric::Accuracy, Metric::Loss] {
        for (k, c) in summary.classifiers.iter().enumerate() {
            let bytes = plot_series(&summary, m, k).map_err(|e| runtime(dir, e.to_string()))?;
            write(&plot_file(m, c), &bytes)?;
        }
    }
    let bytes = intercept_series(&summary).map_err(|e| runtime(dir, e.to_string()))?;
    write(INTERCEPT_SERIES_FILE, &bytes)?;
    write(REPORT_FILE, render(&rows, &summary, thresholds).as_bytes())?;
    Ok(dir.join(REPORT_FILE))
}
