//! Temporal splitting, validation sampling, the four update strategies and
//! the experiment driver.

use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driftgen::{DriftError, GeneratorConfig};
use crate::encoding::EncodingError;
use crate::eventlog::{parse_csv, parse_xes, CsvMapping, EventLog, LogError, Trace};
use crate::forest::ForestError;
use crate::hyperopt::{HyperoptError, SearchSpace, TpeConfig};
use crate::metrics::{MetricsError, Strategy};
use crate::outcome::{LabelSpec, OutcomeError};

mod report;
mod strategies;

pub use report::{
    auc_by_prefix_csv, format_gain, gain_rows, gains_csv, render_text, report_csv,
    write_report_dir, ChosenHyperparameters, ExperimentReport, GainRow, PositiveRates, SplitSizes,
    StrategyResult,
};
pub use strategies::{
    run_all, run_on_log, run_s0, run_s1, run_s2, run_s3, S0Artifacts, S3Artifacts,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{what} has {n} traces; {need}")]
    TooSmall {
        what: &'static str,
        n: usize,
        need: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Outcome(#[from] OutcomeError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Hyperopt(#[from] HyperoptError),
    #[error("{context}: {source}")]
    Metrics {
        context: String,
        source: MetricsError,
    },
    #[error("strategy {strategy} failed: {source}")]
    Aborted {
        strategy: Strategy,
        source: Box<HarnessError>,
        partial: Box<ExperimentReport>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub tr0: f64,
    pub tr1: f64,
    pub te: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitSetting {
    /// 10 / 70 / 20.
    #[default]
    A,
    /// 40 / 40 / 20.
    B,
    Custom(Fractions),
}

impl SplitSetting {
    pub fn fractions(&self) -> Fractions {
        match *self {
            SplitSetting::A => Fractions {
                tr0: 0.10,
                tr1: 0.70,
                te: 0.20,
            },
            SplitSetting::B => Fractions {
                tr0: 0.40,
                tr1: 0.40,
                te: 0.20,
            },
            SplitSetting::Custom(f) => f,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let f = self.fractions();
        let parts = [f.tr0, f.tr1, f.te];
        if parts.iter().any(|p| !(*p > 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(HarnessError::Config(format!(
                "split fractions must be positive and sum to 1 (got {} / {} / {})",
                f.tr0, f.tr1, f.te
            )));
        }
        Ok(())
    }
}

/// Traces in start-time order, cut into three consecutive blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub tr0: Vec<Trace>,
    pub tr1: Vec<Trace>,
    pub te: Vec<Trace>,
}

fn floor_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 1e-9).floor() as usize
}

pub fn split(traces: &[Trace], setting: &SplitSetting) -> Result<Split, HarnessError> {
    setting.validate()?;
    let n = traces.len();
    if n < 10 {
        return Err(HarnessError::TooSmall {
            what: "log",
            n,
            need: "at least 10 are needed to split".into(),
        });
    }
    let f = setting.fractions();
    let n0 = floor_count(f.tr0, n);
    let n1 = floor_count(f.tr1, n);
    if n0 == 0 || n1 == 0 || n0 + n1 >= n {
        return Err(HarnessError::TooSmall {
            what: "log",
            n,
            need: format!(
                "fractions {}/{}/{} leave an empty slice",
                f.tr0, f.tr1, f.te
            ),
        });
    }
    let mut ordered = traces.to_vec();
    ordered.sort_by_key(Trace::start_time);
    let te = ordered.split_off(n0 + n1);
    let tr1 = ordered.split_off(n0);
    Ok(Split {
        tr0: ordered,
        tr1,
        te,
    })
}

/// Uniform sample without replacement of `round(fraction · n)` validation
/// traces. Both halves keep the input order.
pub fn sample_validation(
    train: &[Trace],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<Trace>, Vec<Trace>), HarnessError> {
    let n = train.len();
    if n < 5 {
        return Err(HarnessError::TooSmall {
            what: "training set",
            n,
            need: "at least 5 are needed to carve out a validation set".into(),
        });
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HarnessError::Config(format!(
            "validation_fraction {fraction} not in (0,1)"
        )));
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    for i in index::sample(&mut rng, n, k) {
        chosen[i] = true;
    }
    let (mut fit, mut val) = (Vec::with_capacity(n - k), Vec::with_capacity(k));
    for (t, c) in train.iter().zip(chosen) {
        if c {
            val.push(t.clone());
        } else {
            fit.push(t.clone());
        }
    }
    Ok((fit, val))
}

/// Deterministic per-purpose seeds derived from the experiment seed.
pub fn sub_seed(seed: u64, purpose: u64) -> u64 {
    // SplitMix64 finaliser.
    let mut z = seed.wrapping_add(purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperoptSettings {
    /// Trials per optimisation run.
    pub budget: usize,
    pub tpe: TpeConfig,
    pub batch_space: SearchSpace,
    pub incremental_space: SearchSpace,
}

impl Default for HyperoptSettings {
    fn default() -> Self {
        HyperoptSettings {
            budget: 50,
            tpe: TpeConfig::default(),
            batch_space: SearchSpace::default_batch(),
            incremental_space: SearchSpace::default_incremental(),
        }
    }
}

const BATCH_PARAMS: [&str; 4] = [
    "n_trees",
    "max_depth",
    "min_samples_leaf",
    "max_features_fraction",
];
const INC_PARAMS: [&str; 5] = [
    "n_trees",
    "grace_period",
    "split_confidence",
    "tie_threshold",
    "max_features_fraction",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Event log file (`.xes`, or `.csv` with `csv_mapping`). Ignored when
    /// `generator` is set.
    pub log: Option<PathBuf>,
    pub csv_mapping: Option<PathBuf>,
    /// Generate the log instead of reading it.
    pub generator: Option<GeneratorConfig>,
    pub labeler: LabelSpec,
    pub split: SplitSetting,
    pub max_prefix_len: usize,
    /// Adds a seconds-since-start slot per event index.
    pub elapsed_time: bool,
    pub validation_fraction: f64,
    pub seed: u64,
    pub hyperopt: HyperoptSettings,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            log: None,
            csv_mapping: None,
            generator: None,
            labeler: LabelSpec::FastCase,
            split: SplitSetting::A,
            max_prefix_len: 20,
            elapsed_time: false,
            validation_fraction: 0.20,
            seed: 42,
            hyperopt: HyperoptSettings::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.log.is_none() && self.generator.is_none() {
            return bad("set either `log` or `generator`".into());
        }
        self.split.validate()?;
        if self.max_prefix_len == 0 {
            return bad("max_prefix_len must be >= 1".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction {} not in (0,1)",
                self.validation_fraction
            ));
        }
        if self.hyperopt.budget == 0 {
            return bad("hyperopt.budget must be >= 1".into());
        }
        self.hyperopt.tpe.validate()?;
        for (space, known, what) in [
            (&self.hyperopt.batch_space, &BATCH_PARAMS[..], "batch_space"),
            (
                &self.hyperopt.incremental_space,
                &INC_PARAMS[..],
                "incremental_space",
            ),
        ] {
            space.validate()?;
            if let Some(p) = space
                .params
                .iter()
                .find(|p| !known.contains(&p.name.as_str()))
            {
                return bad(format!(
                    "hyperopt.{what}: unknown parameter {:?} (expected one of {known:?})",
                    p.name
                ));
            }
        }
        if let Some(g) = &self.generator {
            g.validate()?;
        }
        Ok(())
    }

    /// Reads or generates the event log this config points at.
    pub fn load_log(&self) -> Result<EventLog, HarnessError> {
        if let Some(g) = &self.generator {
            return Ok(crate::driftgen::generate(g)?);
        }
        let path = self
            .log
            .as_ref()
            .ok_or_else(|| HarnessError::Config("set either `log` or `generator`".into()))?;
        load_log_file(path, self.csv_mapping.as_deref())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, HarnessError> {
    std::fs::read(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// XES by default; CSV when the extension is `.csv` (needs a column mapping).
pub fn load_log_file(path: &Path, csv_mapping: Option<&Path>) -> Result<EventLog, HarnessError> {
    let bytes = read(path)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mapping_path = csv_mapping.ok_or_else(|| {
            HarnessError::Config(format!(
                "{} is CSV; a column mapping file is required",
                path.display()
            ))
        })?;
        let text = String::from_utf8_lossy(&read(mapping_path)?).into_owned();
        let mapping = CsvMapping::from_json(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", mapping_path.display())))?;
        Ok(parse_csv(&bytes, &mapping)?)
    } else {
        Ok(parse_xes(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::Event;

    fn traces(n: usize) -> Vec<Trace> {
        // Reverse order so that split has to sort.
        (0..n)
            .rev()
            .map(|i| {
                Trace::new(
                    format!("c{i}"),
                    vec![Event::new("a", i as i64 * 1000)],
                    Default::default(),
                )
            })
            .collect()
    }

    #[test]
    fn split_sizes_a_and_b() {
        let t = traces(2000);
        let a = split(&t, &SplitSetting::A).unwrap();
        assert_eq!((a.tr0.len(), a.tr1.len(), a.te.len()), (200, 1400, 400));
        let b = split(&t, &SplitSetting::B).unwrap();
        assert_eq!((b.tr0.len(), b.tr1.len(), b.te.len()), (800, 800, 400));
    }

    #[test]
    fn split_is_temporal() {
        let s = split(&traces(37), &SplitSetting::A).unwrap();
        let max0 = s.tr0.iter().map(Trace::start_time).max().unwrap();
        let min1 = s.tr1.iter().map(Trace::start_time).min().unwrap();
        let max1 = s.tr1.iter().map(Trace::start_time).max().unwrap();
        let min_te = s.te.iter().map(Trace::start_time).min().unwrap();
        assert!(max0 <= min1 && max1 <= min_te);
        assert_eq!(s.tr0.len() + s.tr1.len() + s.te.len(), 37);
        // floor(3.7) = 3, floor(25.9) = 25, remainder 9.
        assert_eq!((s.tr0.len(), s.tr1.len(), s.te.len()), (3, 25, 9));
    }

    #[test]
    fn split_errors() {
        assert!(split(&traces(9), &SplitSetting::A).is_err());
        let bad = SplitSetting::Custom(Fractions {
            tr0: 0.5,
            tr1: 0.5,
            te: 0.1,
        });
        assert!(split(&traces(100), &bad).is_err());
    }

    #[test]
    fn validation_sizes() {
        let (fit, val) = sample_validation(&traces(200), 0.2, 1).unwrap();
        assert_eq!((fit.len(), val.len()), (160, 40));
        let (_, val) = sample_validation(&traces(1600), 0.2, 1).unwrap();
        assert_eq!(val.len(), 320);
        assert!(sample_validation(&traces(4), 0.2, 1).is_err());
    }

    #[test]
    fn validation_partitions_and_is_seeded() {
        let t = traces(50);
        let (fit, val) = sample_validation(&t, 0.2, 9).unwrap();
        let mut ids: Vec<&str> = fit.iter().chain(&val).map(|t| t.case_id.as_str()).collect();
        ids.sort_unstable();
        let mut all: Vec<&str> = t.iter().map(|t| t.case_id.as_str()).collect();
        all.sort_unstable();
        assert_eq!(ids, all);
        assert_eq!(sample_validation(&t, 0.2, 9).unwrap().1, val);
        assert_ne!(sample_validation(&t, 0.2, 10).unwrap().1, val);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = ExperimentConfig {
            generator: Some(GeneratorConfig::default()),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_json(r#"{"generator": {}, "bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"max_prefix_len": 5}"#).is_err());
        let split_b = ExperimentConfig::from_json(r#"{"generator": {}, "split": "b"}"#).unwrap();
        assert_eq!(split_b.split, SplitSetting::B);
        let custom = ExperimentConfig::from_json(
            r#"{"log": "x.xes", "split": {"custom": {"tr0": 0.3, "tr1": 0.5, "te": 0.2}}}"#,
        )
        .unwrap();
        assert_eq!(custom.split.fractions().tr0, 0.3);
        let bad_space = r#"{"generator": {}, "hyperopt": {"batch_space": {"params": [
            {"name": "depth", "kind": "int", "lo": 1, "hi": 3}]}}}"#;
        assert!(ExperimentConfig::from_json(bad_space).is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(42, 1), sub_seed(42, 2));
        assert_eq!(sub_seed(42, 1), sub_seed(42, 1));
    }
}
