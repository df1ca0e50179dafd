//! Tree-structured Parzen Estimator search maximizing an objective in [0,1].
//!
//! Parameters are modelled independently. Integer parameters are searched
//! over `[lo - 0.5, hi + 0.5]` and rounded, so each integer gets an equal share
//! of the continuous range. Log-scale parameters are searched in log space.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::forest::{BatchHyperparameters, IncHyperparameters};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HyperoptError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("max_iterations must be >= 1")]
    NoIterations,
    #[error("invalid TPE setting: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Int,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub scale: Scale,
}

impl Param {
    pub fn int(name: &str, lo: i64, hi: i64, scale: Scale) -> Self {
        Param {
            name: name.into(),
            kind: ParamKind::Int,
            lo: lo as f64,
            hi: hi as f64,
            scale,
        }
    }

    pub fn real(name: &str, lo: f64, hi: f64, scale: Scale) -> Self {
        Param {
            name: name.into(),
            kind: ParamKind::Real,
            lo,
            hi,
            scale,
        }
    }

    fn validate(&self) -> Result<(), HyperoptError> {
        let err = |m: &str| Err(HyperoptError::Space(format!("{}: {m}", self.name)));
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return err("bounds must be finite");
        }
        if self.lo >= self.hi {
            return err("lo must be < hi");
        }
        if self.scale == Scale::Log && self.lo <= 0.0 {
            return err("log scale needs lo > 0");
        }
        if self.kind == ParamKind::Int && (self.lo.fract() != 0.0 || self.hi.fract() != 0.0) {
            return err("int bounds must be integers");
        }
        Ok(())
    }

    /// Search interval in internal (possibly log) coordinates.
    fn internal_bounds(&self) -> (f64, f64) {
        let (lo, hi) = match self.kind {
            ParamKind::Int => (self.lo - 0.5, self.hi + 0.5),
            ParamKind::Real => (self.lo, self.hi),
        };
        (self.encode(lo), self.encode(hi))
    }

    fn encode(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log => v.ln(),
        }
    }

    fn decode(&self, u: f64) -> f64 {
        let v = match self.scale {
            Scale::Linear => u,
            Scale::Log => u.exp(),
        };
        match self.kind {
            ParamKind::Int => v.round().clamp(self.lo, self.hi),
            ParamKind::Real => v.clamp(self.lo, self.hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<Param>,
}

impl SearchSpace {
    pub fn new(params: Vec<Param>) -> Result<Self, HyperoptError> {
        let s = SearchSpace { params };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HyperoptError> {
        if self.params.is_empty() {
            return Err(HyperoptError::Space("no parameters".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.params {
            p.validate()?;
            if !seen.insert(&p.name) {
                return Err(HyperoptError::Space(format!(
                    "duplicate parameter {}",
                    p.name
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, params: &Params) -> bool {
        self.params.iter().all(|p| {
            params.get(&p.name).is_some_and(|&v| {
                v >= p.lo && v <= p.hi && (p.kind == ParamKind::Real || v.fract() == 0.0)
            })
        })
    }

    pub fn default_batch() -> Self {
        SearchSpace {
            params: vec![
                Param::int("n_trees", 10, 500, Scale::Log),
                Param::int("max_depth", 2, 30, Scale::Linear),
                Param::int("min_samples_leaf", 1, 50, Scale::Log),
                Param::real("max_features_fraction", 0.05, 1.0, Scale::Linear),
            ],
        }
    }

    pub fn default_incremental() -> Self {
        SearchSpace {
            params: vec![
                Param::int("n_trees", 5, 100, Scale::Log),
                Param::int("grace_period", 50, 1000, Scale::Log),
                Param::real("split_confidence", 1e-7, 1e-2, Scale::Log),
                Param::real("tie_threshold", 0.01, 0.2, Scale::Linear),
                Param::real("max_features_fraction", 0.05, 1.0, Scale::Linear),
            ],
        }
    }
}

pub type Params = BTreeMap<String, f64>;

fn get_or(params: &Params, name: &str, default: f64) -> f64 {
    params.get(name).copied().unwrap_or(default)
}

/// Parameters absent from `params` keep their defaults.
pub fn batch_from_params(params: &Params) -> BatchHyperparameters {
    let d = BatchHyperparameters::default();
    BatchHyperparameters {
        n_trees: get_or(params, "n_trees", d.n_trees as f64) as usize,
        max_depth: get_or(params, "max_depth", d.max_depth as f64) as usize,
        min_samples_leaf: get_or(params, "min_samples_leaf", d.min_samples_leaf as f64) as usize,
        max_features_fraction: get_or(params, "max_features_fraction", d.max_features_fraction),
    }
}

pub fn incremental_from_params(params: &Params) -> IncHyperparameters {
    let d = IncHyperparameters::default();
    IncHyperparameters {
        n_trees: get_or(params, "n_trees", d.n_trees as f64) as usize,
        grace_period: get_or(params, "grace_period", d.grace_period as f64) as usize,
        split_confidence: get_or(params, "split_confidence", d.split_confidence),
        tie_threshold: get_or(params, "tie_threshold", d.tie_threshold),
        max_features_fraction: get_or(params, "max_features_fraction", d.max_features_fraction),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub iteration: usize,
    pub params: Params,
    pub objective: f64,
    pub seconds: f64,
    /// Set when the objective failed; `objective` is then 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_candidates: usize,
    pub n_startup: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            gamma: 0.25,
            n_candidates: 24,
            n_startup: 20,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<(), HyperoptError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(HyperoptError::Config(format!(
                "gamma {} not in (0,1)",
                self.gamma
            )));
        }
        if self.n_candidates == 0 {
            return Err(HyperoptError::Config("n_candidates must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mixture of Gaussians truncated to `[lo, hi]`, one per observation.
struct Parzen {
    components: Vec<(Normal, f64)>,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn new(points: &[f64], lo: f64, hi: f64) -> Self {
        let range = hi - lo;
        let bw = (range / points.len() as f64).max(0.01 * range);
        let components = points
            .iter()
            .map(|&m| {
                let n = Normal::new(m, bw).expect("bandwidth is positive");
                let mass = (n.cdf(hi) - n.cdf(lo)).max(1e-300);
                (n, mass)
            })
            .collect();
        Parzen { components, lo, hi }
    }

    fn density(&self, x: f64) -> f64 {
        let s: f64 = self
            .components
            .iter()
            .map(|(n, mass)| n.pdf(x) / mass)
            .sum();
        s / self.components.len() as f64
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let (n, _) = &self.components[rng.random_range(0..self.components.len())];
        let mean = n.inverse_cdf(0.5);
        let (a, b) = (n.cdf(self.lo), n.cdf(self.hi));
        let u = a + (b - a) * rng.random::<f64>();
        let x = n.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
        if x.is_finite() {
            x.clamp(self.lo, self.hi)
        } else {
            mean.clamp(self.lo, self.hi)
        }
    }
}

/// Next parameters to try given `history`.
pub fn suggest(
    history: &[Trial],
    space: &SearchSpace,
    cfg: &TpeConfig,
    rng: &mut ChaCha8Rng,
) -> Params {
    if history.len() < cfg.n_startup.max(2) {
        return space
            .params
            .iter()
            .map(|p| {
                let (lo, hi) = p.internal_bounds();
                (p.name.clone(), p.decode(rng.random_range(lo..hi)))
            })
            .collect();
    }
    let mut order: Vec<&Trial> = history.iter().collect();
    order.sort_by(|a, b| b.objective.total_cmp(&a.objective));
    let n_good = ((cfg.gamma * order.len() as f64).ceil() as usize).clamp(1, order.len() - 1);
    let (good, bad) = order.split_at(n_good);
    space
        .params
        .iter()
        .map(|p| {
            let (lo, hi) = p.internal_bounds();
            let values = |set: &[&Trial]| -> Vec<f64> {
                set.iter()
                    .filter_map(|t| t.params.get(&p.name))
                    .map(|&v| p.encode(v).clamp(lo, hi))
                    .collect()
            };
            let (g, b) = (values(good), values(bad));
            if g.is_empty() || b.is_empty() {
                return (p.name.clone(), p.decode(rng.random_range(lo..hi)));
            }
            let (lg, lb) = (Parzen::new(&g, lo, hi), Parzen::new(&b, lo, hi));
            let mut best = (f64::NEG_INFINITY, lo);
            for _ in 0..cfg.n_candidates {
                let x = lg.sample(rng);
                let score = lg.density(x).ln() - lb.density(x).max(1e-300).ln();
                if score > best.0 {
                    best = (score, x);
                }
            }
            (p.name.clone(), p.decode(best.1))
        })
        .collect()
}

/// Runs `max_iterations` suggest/evaluate rounds and returns the best
/// parameters (earliest on ties) with the full trial log.
pub fn optimize<F, E>(
    mut objective: F,
    space: &SearchSpace,
    cfg: &TpeConfig,
    max_iterations: usize,
    seed: u64,
) -> Result<(Params, Vec<Trial>), HyperoptError>
where
    F: FnMut(&Params) -> Result<f64, E>,
    E: Display,
{
    space.validate()?;
    cfg.validate()?;
    if max_iterations == 0 {
        return Err(HyperoptError::NoIterations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(max_iterations);
    for iteration in 0..max_iterations {
        let params = suggest(&trials, space, cfg, &mut rng);
        let start = Instant::now();
        let result = objective(&params);
        let seconds = start.elapsed().as_secs_f64();
        let (objective, error) = match result {
            Ok(v) if (0.0..=1.0).contains(&v) => (v, None),
            Ok(v) => (0.0, Some(format!("objective {v} outside [0,1]"))),
            Err(e) => (0.0, Some(e.to_string())),
        };
        if let Some(e) = &error {
            log::warn!("trial {iteration} failed: {e}");
        }
        trials.push(Trial {
            iteration,
            params,
            objective,
            seconds,
            error,
        });
    }
    let best = trials.iter().fold(
        &trials[0],
        |b, t| if t.objective > b.objective { t } else { b },
    );
    Ok((best.params.clone(), trials))
}

/// CSV with columns `iteration, <params in space order>, objective, seconds`.
pub fn write_trials_csv<W: Write>(
    out: W,
    space: &SearchSpace,
    trials: &[Trial],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string()];
    header.extend(space.params.iter().map(|p| p.name.clone()));
    header.extend(["objective".to_string(), "seconds".to_string()]);
    w.write_record(&header)?;
    for t in trials {
        let mut row = vec![t.iteration.to_string()];
        row.extend(space.params.iter().map(|p| {
            t.params
                .get(&p.name)
                .map_or_else(String::new, |v| format!("{v}"))
        }));
        row.push(format!("{}", t.objective));
        row.push(format!("{}", t.seconds));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> SearchSpace {
        SearchSpace::new(vec![Param::real("x", 0.0, 1.0, Scale::Linear)]).unwrap()
    }

    #[test]
    fn space_validation() {
        assert!(SearchSpace::new(vec![Param::real("x", 1.0, 1.0, Scale::Linear)]).is_err());
        assert!(SearchSpace::new(vec![Param::real("x", 0.0, 1.0, Scale::Log)]).is_err());
        assert!(SearchSpace::new(vec![Param::real("x", 0.5, 1.0, Scale::Linear); 2]).is_err());
        assert!(SearchSpace::default_batch().validate().is_ok());
        assert!(SearchSpace::default_incremental().validate().is_ok());
    }

    #[test]
    fn empty_history_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = SearchSpace::default_incremental();
        for _ in 0..200 {
            let p = suggest(&[], &space, &TpeConfig::default(), &mut rng);
            assert!(space.contains(&p), "{p:?}");
        }
    }

    #[test]
    fn int_params_are_integers_in_bounds() {
        let space = SearchSpace::new(vec![Param::int("k", 1, 10, Scale::Linear)]).unwrap();
        let cfg = TpeConfig {
            n_startup: 5,
            ..Default::default()
        };
        let (_, trials) = optimize(
            |p: &Params| Ok::<_, String>(p["k"] / 10.0),
            &space,
            &cfg,
            60,
            3,
        )
        .unwrap();
        for t in &trials {
            let k = t.params["k"];
            assert!(k.fract() == 0.0 && (1.0..=10.0).contains(&k));
        }
        let seen: std::collections::BTreeSet<i64> =
            trials.iter().map(|t| t.params["k"] as i64).collect();
        assert!(seen.contains(&1) && seen.contains(&10));
    }

    #[test]
    fn monotone_history_pulls_suggestions_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let history: Vec<Trial> = (0..30)
            .map(|i| {
                let x: f64 = rng.random();
                Trial {
                    iteration: i,
                    params: [("x".to_string(), x)].into(),
                    objective: x,
                    seconds: 0.0,
                    error: None,
                }
            })
            .collect();
        let mut xs: Vec<f64> = history.iter().map(|t| t.objective).collect();
        xs.sort_by(|a, b| b.total_cmp(a));
        let cutoff = xs[(0.25f64 * 30.0).ceil() as usize - 1];
        let cfg = TpeConfig::default();
        let hits = (0..200)
            .filter(|_| suggest(&history, &unit(), &cfg, &mut rng)["x"] >= cutoff)
            .count();
        assert!(hits >= 160, "{hits}/200");
    }

    #[test]
    fn constant_objective() {
        let (best, trials) = optimize(
            |_: &Params| Ok::<_, String>(0.7),
            &unit(),
            &TpeConfig::default(),
            5,
            0,
        )
        .unwrap();
        assert_eq!(trials.len(), 5);
        assert_eq!(trials[0].params, best);
        assert!(trials.iter().all(|t| t.objective == 0.7));
    }

    #[test]
    fn failures_are_recorded_and_loop_continues() {
        let mut calls = 0;
        let (_, trials) = optimize(
            |_: &Params| {
                calls += 1;
                if calls % 2 == 0 {
                    Err("boom")
                } else {
                    Ok(0.4)
                }
            },
            &unit(),
            &TpeConfig::default(),
            6,
            0,
        )
        .unwrap();
        assert_eq!(trials.len(), 6);
        assert_eq!(trials[1].objective, 0.0);
        assert_eq!(trials[1].error.as_deref(), Some("boom"));
        assert!(trials[0].error.is_none());
    }

    #[test]
    fn deterministic_and_prefix_monotone() {
        let f = |p: &Params| Ok::<_, String>(1.0 - (p["x"] - 0.3).abs());
        let cfg = TpeConfig::default();
        let (_, a) = optimize(f, &unit(), &cfg, 40, 9).unwrap();
        let (_, b) = optimize(f, &unit(), &cfg, 40, 9).unwrap();
        let params = |t: &[Trial]| t.iter().map(|t| t.params.clone()).collect::<Vec<_>>();
        assert_eq!(params(&a), params(&b));
        let mut best = 0.0f64;
        for n in 1..=40 {
            let (_, t) = optimize(f, &unit(), &cfg, n, 9).unwrap();
            let m = t.iter().map(|t| t.objective).fold(0.0, f64::max);
            assert!(m >= best);
            best = m;
        }
    }

    #[test]
    fn startup_only_is_uniform() {
        let cfg = TpeConfig {
            n_startup: 5000,
            ..Default::default()
        };
        let (_, trials) =
            optimize(|p: &Params| Ok::<_, String>(p["x"]), &unit(), &cfg, 5000, 1).unwrap();
        let mut bins = [0usize; 10];
        for t in &trials {
            bins[((t.params["x"] * 10.0) as usize).min(9)] += 1;
        }
        // χ² with 9 degrees of freedom; 27.88 is the 0.999 quantile.
        let chi2: f64 = bins
            .iter()
            .map(|&c| (c as f64 - 500.0).powi(2) / 500.0)
            .sum();
        assert!(chi2 < 27.88, "{chi2} {bins:?}");
    }

    #[test]
    fn trials_csv_layout() {
        let (_, trials) = optimize(
            |_: &Params| Ok::<_, String>(0.5),
            &unit(),
            &TpeConfig::default(),
            2,
            0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &unit(), &trials).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,x,objective,seconds\n0,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn param_conversion_defaults() {
        let p: Params = [("n_trees".to_string(), 7.0)].into();
        let b = batch_from_params(&p);
        assert_eq!(b.n_trees, 7);
        assert_eq!(b.max_depth, BatchHyperparameters::default().max_depth);
        let i = incremental_from_params(&p);
        assert_eq!(i.n_trees, 7);
    }
}
