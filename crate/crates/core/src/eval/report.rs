//! Report emission: a stable CSV table, a full JSON report per evaluation,
//! and optional FP/FN chart data. Files are written atomically.

use std::path::{Path, PathBuf};

use super::{atomic_write, EvalError, MetricsReport, Significance};
use crate::metrics::welch_t_test;

pub const CSV_HEADER: [&str; 8] =
    ["strategy", "dataset", "k", "acc_mean", "f1_mean", "acc_std", "f1_std", "p_value"];

/// Attaches a Welch t-test p-value over per-run Macro-F1 lists against the
/// named baseline report.
pub fn attach_significance(
    report: &mut MetricsReport,
    baseline: &MetricsReport,
) -> Result<(), EvalError> {
    let a: Vec<f64> = report.runs.iter().map(|r| r.macro_f1).collect();
    let b: Vec<f64> = baseline.runs.iter().map(|r| r.macro_f1).collect();
    let p_value = welch_t_test(&a, &b)?;
    report.significance = Some(Significance {
        baseline: baseline.strategy.to_string(),
        p_value,
        inputs: "per-run macro_f1".to_string(),
    });
    Ok(())
}

fn report_stem(report: &MetricsReport) -> String {
    format!("report_{}_{}_k{}", report.strategy, report.dataset, report.k)
}

/// Emits `report.csv` (one row per report), one JSON file per report, and,
/// when asked, `error_rates.csv` chart data. Returns the written paths.
pub fn write_report(
    reports: &[MetricsReport],
    out_dir: &Path,
    chart_data: bool,
) -> Result<Vec<PathBuf>, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::InvalidConfig("no reports to write".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let mut csv_writer = csv::Writer::from_writer(Vec::new());
    csv_writer
        .write_record(CSV_HEADER)
        .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
    for report in reports {
        let p_value = report
            .significance
            .as_ref()
            .map(|s| s.p_value.to_string())
            .unwrap_or_default();
        csv_writer
            .write_record([
                report.strategy.to_string(),
                report.dataset.clone(),
                report.k.to_string(),
                report.acc_mean.to_string(),
                report.f1_mean.to_string(),
                report.acc_std.to_string(),
                report.f1_std.to_string(),
                p_value,
            ])
            .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
    }
    let csv_bytes =
        csv_writer.into_inner().map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
    let csv_path = out_dir.join("report.csv");
    atomic_write(&csv_path, &csv_bytes)?;
    written.push(csv_path);

    for report in reports {
        let path = out_dir.join(format!("{}.json", report_stem(report)));
        let json = serde_json::to_string_pretty(report)?;
        atomic_write(&path, json.as_bytes())?;
        written.push(path);
    }

    if chart_data {
        let mut chart = csv::Writer::from_writer(Vec::new());
        chart
            .write_record(["strategy", "dataset", "k", "fp_rate", "fn_rate"])
            .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        for report in reports {
            chart
                .write_record([
                    report.strategy.to_string(),
                    report.dataset.clone(),
                    report.k.to_string(),
                    report.fp_rate_mean.map(|v| v.to_string()).unwrap_or_default(),
                    report.fn_rate_mean.map(|v| v.to_string()).unwrap_or_default(),
                ])
                .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        }
        let bytes = chart.into_inner().map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        let path = out_dir.join("error_rates.csv");
        atomic_write(&path, &bytes)?;
        written.push(path);
    }

    Ok(written)
}

/// Reads a JSON report back.
pub fn load_report(path: &Path) -> Result<MetricsReport, EvalError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::fixture::FixtureBackend;
    use crate::cues::CuePool;
    use crate::data::synthetic_dataset;
    use crate::eval::{evaluate, EvalConfig};
    use crate::prompts::PromptSet;
    use crate::types::StrategyKind;

    fn sample_report(strategy: StrategyKind) -> MetricsReport {
        let dataset = synthetic_dataset("rep", 10, 2, 5, 3);
        let prompts = PromptSet::bundled();
        let pool = CuePool::standard();
        let backend = FixtureBackend::synthetic("fixture-model", 8);
        let config = EvalConfig { strategy, ..Default::default() };
        evaluate(&dataset, &backend, &prompts, &pool, &config, None).unwrap()
    }

    #[test]
    fn one_report_two_files_one_data_row() {
        let out = tempfile::tempdir().unwrap();
        let report = sample_report(StrategyKind::Io);
        let written = write_report(std::slice::from_ref(&report), out.path(), false).unwrap();
        assert_eq!(written.len(), 2);
        let csv_text = std::fs::read_to_string(out.path().join("report.csv")).unwrap();
        assert_eq!(csv_text.lines().count(), 2); // header + 1 data row
    }

    #[test]
    fn csv_round_trips_against_json() {
        let out = tempfile::tempdir().unwrap();
        let report = sample_report(StrategyKind::Boc);
        write_report(std::slice::from_ref(&report), out.path(), false).unwrap();
        let loaded = load_report(&out.path().join("report_boc_rep_k0.json")).unwrap();
        assert_eq!(loaded, report);

        let mut reader =
            csv::Reader::from_path(out.path().join("report.csv")).unwrap();
        let row = reader.records().next().unwrap().unwrap();
        assert_eq!(row.get(0).unwrap(), "boc");
        assert_eq!(row.get(3).unwrap().parse::<f64>().unwrap(), report.acc_mean);
        assert_eq!(row.get(4).unwrap().parse::<f64>().unwrap(), report.f1_mean);
        assert_eq!(row.get(6).unwrap().parse::<f64>().unwrap(), report.f1_std);
    }

    #[test]
    fn significance_column_filled_when_attached() {
        let out = tempfile::tempdir().unwrap();
        let baseline = sample_report(StrategyKind::Io);
        let mut report = sample_report(StrategyKind::Coc);
        attach_significance(&mut report, &baseline).unwrap();
        let sig = report.significance.clone().unwrap();
        assert_eq!(sig.baseline, "io");
        assert_eq!(sig.inputs, "per-run macro_f1");
        assert!((0.0..=1.0).contains(&sig.p_value));

        write_report(&[baseline, report], out.path(), true).unwrap();
        let csv_text = std::fs::read_to_string(out.path().join("report.csv")).unwrap();
        assert_eq!(csv_text.lines().count(), 3);
        assert!(out.path().join("error_rates.csv").exists());
    }

    #[test]
    fn fingerprint_changes_when_prompts_change() {
        let dataset = synthetic_dataset("fp", 8, 2, 4, 1);
        let pool = CuePool::standard();
        let config = EvalConfig { strategy: StrategyKind::Io, ..Default::default() };

        let a = {
            let backend = FixtureBackend::synthetic("fixture-model", 8);
            let prompts = PromptSet::bundled();
            evaluate(&dataset, &backend, &prompts, &pool, &config, None).unwrap()
        };
        let b = {
            let backend = FixtureBackend::synthetic("fixture-model", 8);
            let mut prompts_json: serde_json::Value =
                serde_json::from_str(include_str!("../../resources/prompts.json")).unwrap();
            prompts_json["templates"]["io"] =
                serde_json::json!("Changed wording. Return the label only.\n{demos}[{text}]");
            let prompts = PromptSet::from_json(&prompts_json.to_string()).unwrap();
            evaluate(&dataset, &backend, &prompts, &pool, &config, None).unwrap()
        };
        assert_ne!(a.config_fingerprint, b.config_fingerprint);
        assert_ne!(a.prompt_fingerprint, b.prompt_fingerprint);
    }
}
