use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::eventlog::LogStats;
use crate::forest::{BatchHyperparameters, Family, IncHyperparameters};
use crate::hyperopt::{write_trials_csv, SearchSpace, Trial};
use crate::metrics::{format_hms, relative_gain, Strategy, TimeBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ChosenHyperparameters {
    Batch(BatchHyperparameters),
    Incremental(IncHyperparameters),
}

impl ChosenHyperparameters {
    pub fn family(&self) -> Family {
        match self {
            ChosenHyperparameters::Batch(_) => Family::Batch,
            ChosenHyperparameters::Incremental(_) => Family::Incremental,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub model: String,
    pub description: String,
    pub auc: f64,
    /// Macro F1 at threshold 0.5.
    pub f1: f64,
    pub accuracy: f64,
    /// `null` where the prefix-length group is single-class.
    pub auc_by_prefix_len: BTreeMap<usize, Option<f64>>,
    pub time: TimeBreakdown,
    pub total_seconds: f64,
    pub hyperparameters: ChosenHyperparameters,
    pub schema_fingerprint: String,
    pub schema_width: usize,
    pub n_train_instances: usize,
    pub n_test_instances: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trials: Vec<Trial>,
    /// S3 only: AUC of M0_inc before the update.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_auc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitSizes {
    pub tr0: usize,
    pub tr1: usize,
    pub te: usize,
    pub fit0: Option<usize>,
    pub val0: Option<usize>,
}

/// Share of positive traces per slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositiveRates {
    pub tr0: f64,
    pub tr1: f64,
    pub te: f64,
}

/// (Mi − M0) / M0 on AUC and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub model: String,
    pub auc: f64,
    pub auc_gain: f64,
    pub f1_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub log_stats: LogStats,
    /// FastCase cut-off in hours; absent for LTL labels.
    pub threshold_hours: Option<f64>,
    pub positive_rates: PositiveRates,
    pub sizes: SplitSizes,
    pub strategies: Vec<StrategyResult>,
    pub m0_batch_auc: Option<f64>,
    pub m0_inc_auc: Option<f64>,
    pub gains: Vec<GainRow>,
}

impl ExperimentReport {
    pub fn new(
        config: ExperimentConfig,
        log_stats: LogStats,
        threshold_hours: Option<f64>,
        positive_rates: PositiveRates,
        sizes: SplitSizes,
    ) -> Self {
        ExperimentReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            log_stats,
            threshold_hours,
            positive_rates,
            sizes,
            strategies: Vec::new(),
            m0_batch_auc: None,
            m0_inc_auc: None,
            gains: Vec::new(),
        }
    }

    pub fn get(&self, s: Strategy) -> Option<&StrategyResult> {
        self.strategies.iter().find(|r| r.strategy == s)
    }
}

/// One row per strategy with M0 as the baseline; the M0 row is all zeros.
pub fn gain_rows(results: &[StrategyResult]) -> Vec<GainRow> {
    let Some(m0) = results.iter().find(|r| r.strategy == Strategy::S0) else {
        return Vec::new();
    };
    results
        .iter()
        .map(|r| GainRow {
            model: r.model.clone(),
            auc: r.auc,
            auc_gain: relative_gain(r.auc, m0.auc),
            f1_gain: relative_gain(r.f1, m0.f1),
        })
        .collect()
}

/// Cuts `x` to `decimals` places towards zero. A tiny guard keeps values that
/// are exact in decimal (0.59 stored as 0.58999…) from losing a digit.
pub fn format_gain(x: f64, decimals: u32) -> String {
    let scale = 10f64.powi(decimals as i32);
    let t = (x * scale + x.signum() * 1e-9).trunc() / scale;
    let t = if t == 0.0 { 0.0 } else { t };
    format!("{t:.prec$}", prec = decimals as usize)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn csv_bytes(f: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<(), csv::Error>) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        f(&mut w).expect("writing CSV to memory");
        w.flush().expect("flushing CSV to memory");
    }
    buf
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn report_csv(report: &ExperimentReport) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record([
            "strategy",
            "auc",
            "f1",
            "accuracy",
            "m0_build_s",
            "retrain_s",
            "hyperopt_s",
            "update_s",
            "total_s",
            "model",
            "description",
            "family",
            "total_hms",
            "schema_fingerprint",
            "schema_width",
            "n_train_instances",
            "n_test_instances",
            "baseline_auc",
        ])?;
        for r in &report.strategies {
            w.write_record([
                r.strategy.to_string(),
                r.auc.to_string(),
                r.f1.to_string(),
                r.accuracy.to_string(),
                r.time.m0_build.to_string(),
                r.time.retrain.to_string(),
                r.time.hyperopt.to_string(),
                r.time.incremental_update.to_string(),
                r.total_seconds.to_string(),
                r.model.clone(),
                r.description.clone(),
                r.hyperparameters.family().to_string(),
                format_hms(r.total_seconds),
                r.schema_fingerprint.clone(),
                r.schema_width.to_string(),
                r.n_train_instances.to_string(),
                r.n_test_instances.to_string(),
                opt(r.baseline_auc),
            ])?;
        }
        Ok(())
    })
}

pub fn gains_csv(report: &ExperimentReport) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(["model", "auc", "auc_gain", "f1_gain"])?;
        for g in &report.gains {
            w.write_record([
                g.model.clone(),
                g.auc.to_string(),
                g.auc_gain.to_string(),
                g.f1_gain.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Long format: `prefix_len, model, auc`; single-class groups are left empty.
pub fn auc_by_prefix_csv(report: &ExperimentReport) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(["prefix_len", "model", "auc"])?;
        for r in &report.strategies {
            for (len, a) in &r.auc_by_prefix_len {
                w.write_record([len.to_string(), r.model.clone(), opt(*a)])?;
            }
        }
        Ok(())
    })
}

fn trials_space(report: &ExperimentReport, s: Strategy) -> &SearchSpace {
    match s {
        Strategy::S3 => &report.config.hyperopt.incremental_space,
        _ => &report.config.hyperopt.batch_space,
    }
}

/// Writes `report.json`, `report.csv`, `gains.csv`, `auc_by_prefix.csv` and
/// one `trials_<S>.csv` per tuned strategy into `dir` (created if needed).
pub fn write_report_dir(report: &ExperimentReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json = serde_json::to_vec_pretty(report).expect("report serializes");
    write_file(&dir.join("report.json"), &json)?;
    write_file(&dir.join("report.csv"), &report_csv(report))?;
    write_file(&dir.join("gains.csv"), &gains_csv(report))?;
    write_file(&dir.join("auc_by_prefix.csv"), &auc_by_prefix_csv(report))?;
    for r in report.strategies.iter().filter(|r| !r.trials.is_empty()) {
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, trials_space(report, r.strategy), &r.trials)
            .expect("writing CSV to memory");
        write_file(&dir.join(format!("trials_{}.csv", r.strategy)), &buf)?;
    }
    Ok(())
}

pub(super) fn write_partial(report: &ExperimentReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json = serde_json::to_vec_pretty(report).expect("report serializes");
    write_file(&dir.join("report.partial.json"), &json)
}

/// Plain-text accuracy, gain and time tables.
pub fn render_text(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "log: {}", report.log_stats);
    let sz = &report.sizes;
    let _ = writeln!(s, "split: TR0={} TR1={} TE={}", sz.tr0, sz.tr1, sz.te);
    if let Some(h) = report.threshold_hours {
        let _ = writeln!(s, "fast-case threshold: {h:.2} h");
    }
    let p = &report.positive_rates;
    let _ = writeln!(
        s,
        "positive rate: TR0={:.3} TR1={:.3} TE={:.3}",
        p.tr0, p.tr1, p.te
    );

    let _ = writeln!(s, "\nAccuracy");
    let _ = writeln!(s, "{:<6}{:>8}{:>8}{:>10}", "model", "AUC", "F1", "accuracy");
    for r in &report.strategies {
        let _ = writeln!(
            s,
            "{:<6}{:>8.3}{:>8.3}{:>10.3}",
            r.model, r.auc, r.f1, r.accuracy
        );
    }
    if let (Some(b), Some(i)) = (report.m0_batch_auc, report.m0_inc_auc) {
        let _ = writeln!(s, "M0 (batch) AUC {b:.3}; M0_inc AUC {i:.3}");
    }

    if !report.gains.is_empty() {
        let _ = writeln!(s, "\nGain vs M0, AUC");
        let _ = writeln!(s, "{:<6}{:>8}{:>10}", "model", "gain", "(exact)");
        for g in report.gains.iter().skip(1) {
            let _ = writeln!(
                s,
                "{:<6}{:>8}{:>10.3}",
                g.model,
                format_gain(g.auc_gain, 2),
                g.auc_gain
            );
        }
    }

    let _ = writeln!(s, "\nTime (hh:mm:ss)");
    let _ = writeln!(
        s,
        "{:<6}{:>10}{:>10}{:>10}{:>10}{:>10}",
        "model", "M0 build", "hyperopt", "retrain", "update", "total"
    );
    for r in &report.strategies {
        let t = &r.time;
        let _ = writeln!(
            s,
            "{:<6}{:>10}{:>10}{:>10}{:>10}{:>10}",
            r.model,
            format_hms(t.m0_build),
            format_hms(t.hyperopt),
            format_hms(t.retrain),
            format_hms(t.incremental_update),
            format_hms(r.total_seconds)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(strategy: Strategy, auc: f64) -> StrategyResult {
        StrategyResult {
            strategy,
            model: strategy.model_name().into(),
            description: strategy.description().into(),
            auc,
            f1: auc,
            accuracy: auc,
            auc_by_prefix_len: BTreeMap::from([(1, Some(auc)), (2, None)]),
            time: TimeBreakdown::do_nothing(1.0),
            total_seconds: 1.0,
            hyperparameters: ChosenHyperparameters::Batch(BatchHyperparameters::default()),
            schema_fingerprint: "00".into(),
            schema_width: 3,
            n_train_instances: 1,
            n_test_instances: 1,
            trials: Vec::new(),
            baseline_auc: None,
        }
    }

    #[test]
    fn m0_gain_is_zero() {
        let rows = gain_rows(&[fake(Strategy::S0, 0.7), fake(Strategy::S1, 0.77)]);
        assert_eq!(rows[0].auc_gain, 0.0);
        assert!((rows[1].auc_gain - 0.1).abs() < 1e-12);
    }

    #[test]
    fn gain_truncation() {
        assert_eq!(format_gain(0.5987, 2), "0.59");
        assert_eq!(format_gain(0.59, 2), "0.59");
        assert_eq!(format_gain(-0.0149, 2), "-0.01");
        assert_eq!(format_gain(-0.001, 2), "0.00");
    }

    #[test]
    fn hyperparameters_tagged_by_family() {
        let j = serde_json::to_value(ChosenHyperparameters::Incremental(
            IncHyperparameters::default(),
        ))
        .unwrap();
        assert_eq!(j["family"], "incremental");
        assert_eq!(j["n_trees"], 20);
    }

    #[test]
    fn prefix_csv_leaves_single_class_empty() {
        let mut r = ExperimentReport::new(
            ExperimentConfig::default(),
            LogStats {
                n_cases: 1,
                n_events: 1,
                n_activities: 1,
                mean_cycle_time: 0.0,
            },
            None,
            PositiveRates {
                tr0: 0.0,
                tr1: 0.0,
                te: 0.0,
            },
            SplitSizes::default(),
        );
        r.strategies.push(fake(Strategy::S0, 0.5));
        let text = String::from_utf8(auc_by_prefix_csv(&r)).unwrap();
        assert_eq!(text, "prefix_len,model,auc\n1,M0,0.5\n2,M0,\n");
    }
}
