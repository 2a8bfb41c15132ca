//! Result-table rendering for completed runs.
//!
//! One run renders as the six-metric internal/external table; several runs
//! render as a comparison table (accuracy, COVID-19 recall, No Finding
//! recall per split, percent cells with explicit CI deltas). Output is
//! byte-identical across invocations of the same inputs.

use paxray_core::data::ClassLabel;
use paxray_core::error::Error;
use paxray_core::metrics::{
    format_percent_pm, format_thousandth, CVSummary, MetricName, MetricSummary,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn load_summary(run: &Path) -> Result<CVSummary, Error> {
    let path = run.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Input {
        path: path.clone(),
        reason: format!("missing run summary: {e}"),
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{} is not a valid summary: {e}", path.display())))
}

fn render_split(name: &str, table: &BTreeMap<MetricName, MetricSummary>, out: &mut String) {
    out.push_str(&format!("{name}\n"));
    out.push_str(&format!(
        "{:<24} {:>9} {:>9} {:>9}\n",
        "measure", "lhs95", "value", "rhs95"
    ));
    for metric in MetricName::ALL {
        if let Some(s) = table.get(&metric) {
            out.push_str(&format!(
                "{:<24} {:>9} {:>9} {:>9}\n",
                metric.display_name(),
                format_thousandth(s.ci_low),
                format_thousandth(s.mean),
                format_thousandth(s.ci_high),
            ));
        }
    }
}

fn render_single(run_name: &str, summary: &CVSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!("run: {run_name}\n"));
    render_split("Internal / Training Set", &summary.internal, &mut out);
    out.push('\n');
    render_split("External / Testing Set", &summary.external, &mut out);
    out
}

fn comparison_cell(table: &BTreeMap<MetricName, MetricSummary>, metric: MetricName) -> String {
    match table.get(&metric) {
        Some(s) => format_percent_pm(s.mean, s.ci_low, s.ci_high),
        None => "-".to_string(),
    }
}

fn render_comparison(runs: &[(String, CVSummary)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>22} {:>22} {:>22}   {:>22} {:>22} {:>22}\n",
        "net",
        "int accuracy",
        "int #1 recall",
        "int #2 recall",
        "ext accuracy",
        "ext #1 recall",
        "ext #2 recall",
    ));
    for (name, summary) in runs {
        // #1 recall: COVID-19 sensitivity; #2 recall: No Finding sensitivity.
        out.push_str(&format!(
            "{:<16} {:>22} {:>22} {:>22}   {:>22} {:>22} {:>22}\n",
            name,
            comparison_cell(&summary.internal, MetricName::Accuracy),
            comparison_cell(&summary.internal, MetricName::RecallCovid19),
            comparison_cell(&summary.internal, MetricName::RecallNoFinding),
            comparison_cell(&summary.external, MetricName::Accuracy),
            comparison_cell(&summary.external, MetricName::RecallCovid19),
            comparison_cell(&summary.external, MetricName::RecallNoFinding),
        ));
    }
    out
}

/// Per-metric plot-ready rows across runs, splits, and folds.
fn plot_csv(runs: &[(String, CVSummary)]) -> String {
    let mut out = String::from("run,split,metric,mean,lhs95,rhs95\n");
    for (name, summary) in runs {
        for (split, table) in [("internal", &summary.internal), ("external", &summary.external)]
        {
            for metric in MetricName::ALL {
                if let Some(s) = table.get(&metric) {
                    out.push_str(&format!(
                        "{name},{split},{},{},{},{}\n",
                        metric.key(),
                        s.mean,
                        s.ci_low,
                        s.ci_high
                    ));
                }
            }
        }
    }
    out
}

fn recall_sanity(summary: &CVSummary) -> Option<String> {
    // The comparison table highlights COVID-19 recall; warn when a class is
    // missing from any fold so a dash in the table is explainable.
    for fe in &summary.folds {
        for label in ClassLabel::ALL {
            if !fe.test.recall.contains_key(&label) {
                return Some(format!(
                    "fold {} external split has no '{}' items",
                    fe.fold,
                    label.dir_name()
                ));
            }
        }
    }
    None
}

pub fn cmd_report(runs: &[PathBuf], plot_csv_path: Option<&Path>) -> Result<(), Error> {
    if runs.is_empty() {
        return Err(Error::Config("report needs at least one run directory".into()));
    }
    let mut loaded = Vec::new();
    for run in runs {
        let name = run
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("run")
            .to_string();
        let summary = load_summary(run)?;
        if let Some(warning) = recall_sanity(&summary) {
            eprintln!("note: {warning}");
        }
        loaded.push((name, summary));
    }
    if loaded.len() == 1 {
        print!("{}", render_single(&loaded[0].0, &loaded[0].1));
    } else {
        print!("{}", render_comparison(&loaded));
    }
    if let Some(path) = plot_csv_path {
        std::fs::write(path, plot_csv(&loaded))?;
        eprintln!("plot data written to {}", path.display());
    }
    Ok(())
}
