//! Synthetic loan-application log with one abrupt concept drift.
//!
//! Cases arrive by a Poisson process and run a block-structured process
//! model. The first `⌊drift_at_fraction · n⌋` cases (by start time) run the base
//! model, the rest a drifted copy made by [`apply_drift`]: re-sequentialise a
//! pair of activities into a parallel block, insert a new activity, make one
//! activity optional and slow two activities down.
//!
//! Each event is stamped with its completion time. An activity's duration is
//! drawn log-normally and counted from the completion of its predecessor;
//! parallel branches all start when the block starts and the block ends with
//! its slowest branch.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::eventlog::{parse_timestamp, Event, EventLog, LogError, Millis, Trace};

const HOUR_MS: f64 = 3_600_000.0;

#[derive(Debug, thiserror::Error)]
pub enum DriftError {
    #[error("activity {0:?} not found in the model")]
    UnknownActivity(String),
    #[error("activity {0:?} already exists in the model")]
    DuplicateActivity(String),
    #[error("{0}")]
    InvalidPoint(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Activity(String),
    Sequence(Vec<Block>),
    /// Branch probabilities sum to 1. An empty sequence is a skip.
    Xor(Vec<(f64, Block)>),
    Parallel(Vec<Block>),
    Optional(f64, Box<Block>),
}

fn act(name: &str) -> Block {
    Block::Activity(name.to_string())
}

fn seq(blocks: Vec<Block>) -> Block {
    Block::Sequence(blocks)
}

impl Block {
    fn collect_activities<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Block::Activity(a) => out.push(a),
            Block::Sequence(bs) | Block::Parallel(bs) => {
                bs.iter().for_each(|b| b.collect_activities(out))
            }
            Block::Xor(bs) => bs.iter().for_each(|(_, b)| b.collect_activities(out)),
            Block::Optional(_, b) => b.collect_activities(out),
        }
    }

    fn alphabet(&self) -> BTreeSet<&str> {
        let mut v = Vec::new();
        self.collect_activities(&mut v);
        v.into_iter().collect()
    }

    fn validate(&self) -> Result<(), DriftError> {
        match self {
            Block::Activity(a) if a.is_empty() => {
                Err(DriftError::Parameter("empty activity name".into()))
            }
            Block::Activity(_) => Ok(()),
            Block::Sequence(bs) => bs.iter().try_for_each(Block::validate),
            Block::Parallel(bs) => {
                let mut seen = BTreeSet::new();
                for b in bs {
                    b.validate()?;
                    for a in b.alphabet() {
                        if !seen.insert(a) {
                            return Err(DriftError::Parameter(format!(
                                "parallel branches share activity {a:?}"
                            )));
                        }
                    }
                }
                Ok(())
            }
            Block::Xor(bs) => {
                let total: f64 = bs.iter().map(|(p, _)| p).sum();
                if bs.is_empty()
                    || bs.iter().any(|(p, _)| !(*p > 0.0))
                    || (total - 1.0).abs() > 1e-9
                {
                    return Err(DriftError::Parameter(
                        "xor branch probabilities must be positive and sum to 1".into(),
                    ));
                }
                bs.iter().try_for_each(|(_, b)| b.validate())
            }
            Block::Optional(p, b) => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(DriftError::Parameter(format!(
                        "optional probability {p} not in (0,1)"
                    )));
                }
                b.validate()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DurationSpec {
    /// Recorded at the moment the activity becomes enabled.
    Instant,
    LogNormal {
        median_hours: f64,
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub root: Block,
    pub durations: BTreeMap<String, DurationSpec>,
    pub mean_interarrival_hours: f64,
}

impl ProcessModel {
    pub fn alphabet(&self) -> BTreeSet<String> {
        self.root.alphabet().into_iter().map(String::from).collect()
    }

    pub fn validate(&self) -> Result<(), DriftError> {
        self.root.validate()?;
        for a in self.root.alphabet() {
            match self.durations.get(a) {
                None => return Err(DriftError::Parameter(format!("no duration for {a:?}"))),
                Some(DurationSpec::LogNormal {
                    median_hours,
                    sigma,
                }) if !(*median_hours > 0.0
                    && *sigma > 0.0
                    && median_hours.is_finite()
                    && sigma.is_finite()) =>
                {
                    return Err(DriftError::Parameter(format!(
                        "duration of {a:?} needs positive median and sigma"
                    )))
                }
                _ => {}
            }
        }
        if !(self.mean_interarrival_hours > 0.0) {
            return Err(DriftError::Parameter(
                "mean_interarrival_hours must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// True iff `activities` is a complete run of the control flow.
    pub fn conforms(&self, activities: &[&str]) -> bool {
        replay(&self.root, activities, 0).contains(&activities.len())
    }

    fn simulate(&self, start: f64, rng: &mut ChaCha8Rng) -> Result<Vec<(String, f64)>, DriftError> {
        let mut out = Vec::new();
        self.run(&self.root, start, rng, &mut out)?;
        Ok(out)
    }

    fn run(
        &self,
        block: &Block,
        start: f64,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<(String, f64)>,
    ) -> Result<f64, DriftError> {
        Ok(match block {
            Block::Activity(a) => {
                let d = match self.durations.get(a) {
                    Some(DurationSpec::Instant) => 0.0,
                    Some(DurationSpec::LogNormal {
                        median_hours,
                        sigma,
                    }) => LogNormal::new(median_hours.ln(), *sigma)
                        .map_err(|e| DriftError::Parameter(e.to_string()))?
                        .sample(rng),
                    None => return Err(DriftError::UnknownActivity(a.clone())),
                };
                out.push((a.clone(), start + d));
                start + d
            }
            Block::Sequence(bs) => {
                let mut t = start;
                for b in bs {
                    t = self.run(b, t, rng, out)?;
                }
                t
            }
            Block::Xor(bs) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &bs[bs.len() - 1].1;
                for (p, b) in bs {
                    acc += p;
                    if u < acc {
                        chosen = b;
                        break;
                    }
                }
                self.run(chosen, start, rng, out)?
            }
            Block::Parallel(bs) => {
                let mut end = start;
                for b in bs {
                    end = end.max(self.run(b, start, rng, out)?);
                }
                end
            }
            Block::Optional(p, b) => {
                if rng.random::<f64>() < *p {
                    self.run(b, start, rng, out)?
                } else {
                    start
                }
            }
        })
    }
}

/// Positions where a run of `block` starting at `pos` may end.
fn replay(block: &Block, seq: &[&str], pos: usize) -> BTreeSet<usize> {
    match block {
        Block::Activity(a) => {
            if seq.get(pos) == Some(&a.as_str()) {
                BTreeSet::from([pos + 1])
            } else {
                BTreeSet::new()
            }
        }
        Block::Sequence(bs) => bs.iter().fold(BTreeSet::from([pos]), |ends, b| {
            ends.into_iter().flat_map(|p| replay(b, seq, p)).collect()
        }),
        Block::Xor(bs) => bs.iter().flat_map(|(_, b)| replay(b, seq, pos)).collect(),
        Block::Optional(_, b) => {
            let mut ends = replay(b, seq, pos);
            ends.insert(pos);
            ends
        }
        Block::Parallel(bs) => {
            // Branch alphabets are disjoint: project the window onto each branch.
            let alphabets: Vec<BTreeSet<&str>> = bs.iter().map(Block::alphabet).collect();
            let mut ends = BTreeSet::new();
            let mut end = pos;
            loop {
                let window = &seq[pos..end];
                let ok = bs.iter().zip(&alphabets).all(|(b, alpha)| {
                    let proj: Vec<&str> = window
                        .iter()
                        .copied()
                        .filter(|a| alpha.contains(a))
                        .collect();
                    replay(b, &proj, 0).contains(&proj.len())
                });
                if ok {
                    ends.insert(end);
                }
                if end == seq.len() || !alphabets.iter().any(|a| a.contains(seq[end])) {
                    break;
                }
                end += 1;
            }
            ends
        }
    }
}

fn lognormal(median_hours: f64, sigma: f64) -> DurationSpec {
    DurationSpec::LogNormal {
        median_hours,
        sigma,
    }
}

/// The fixed 18-activity loan-assessment model.
pub fn base_model() -> ProcessModel {
    let root = seq(vec![
        act("Submit application"),
        act("Check completeness"),
        Block::Xor(vec![
            (
                0.3,
                seq(vec![
                    act("Request missing info"),
                    act("Receive missing info"),
                ]),
            ),
            (0.7, seq(vec![])),
        ]),
        act("Register application"),
        Block::Parallel(vec![
            act("Credit history check"),
            act("Income verification"),
        ]),
        act("Assess eligibility"),
        Block::Xor(vec![
            (
                0.55,
                seq(vec![
                    act("Prepare offer"),
                    act("Send offer"),
                    act("Receive signed offer"),
                ]),
            ),
            (
                0.45,
                seq(vec![act("Reject application"), act("Notify rejection")]),
            ),
        ]),
        act("Verify documents"),
        act("Final approval"),
        act("Archive case"),
        act("Close case"),
        act("Update records"),
    ]);
    let s = 0.1;
    let durations = [
        ("Submit application", DurationSpec::Instant),
        ("Check completeness", lognormal(3.0, s)),
        ("Request missing info", lognormal(1.0, s)),
        ("Receive missing info", lognormal(4.0, s)),
        ("Register application", lognormal(3.0, s)),
        ("Credit history check", lognormal(14.0, s)),
        ("Income verification", lognormal(12.0, s)),
        ("Assess eligibility", lognormal(6.0, s)),
        ("Prepare offer", lognormal(10.0, s)),
        ("Send offer", lognormal(2.0, s)),
        ("Receive signed offer", lognormal(95.0, s)),
        ("Reject application", lognormal(40.0, s)),
        ("Notify rejection", lognormal(15.0, s)),
        ("Verify documents", lognormal(50.0, s)),
        ("Final approval", lognormal(50.0, s)),
        ("Archive case", lognormal(1.0, s)),
        ("Close case", lognormal(1.0, s)),
        ("Update records", lognormal(2.0, s)),
    ]
    .into_iter()
    .map(|(a, d)| (a.to_string(), d))
    .collect();
    ProcessModel {
        root,
        durations,
        mean_interarrival_hours: 4.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    pub activity: String,
    pub after: String,
    pub duration: DurationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optionalization {
    pub activity: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowDown {
    pub activities: Vec<String>,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DriftSpec {
    /// Two activities, adjacent in a sequence, that become a parallel block.
    pub resequentialize: Option<(String, String)>,
    pub insert: Option<Insertion>,
    pub optionalize: Option<Optionalization>,
    pub slow_down: Option<SlowDown>,
}

impl DriftSpec {
    pub fn identity() -> Self {
        DriftSpec::default()
    }

    pub fn default_rio() -> Self {
        DriftSpec {
            resequentialize: Some(("Verify documents".into(), "Final approval".into())),
            insert: Some(Insertion {
                activity: "Anti-fraud check".into(),
                after: "Register application".into(),
                duration: lognormal(4.0, 0.1),
            }),
            optionalize: Some(Optionalization {
                activity: "Archive case".into(),
                probability: 0.6,
            }),
            slow_down: Some(SlowDown {
                activities: vec!["Reject application".into(), "Notify rejection".into()],
                multiplier: 3.0,
            }),
        }
    }
}

fn resequentialize(block: &mut Block, a: &str, b: &str) -> bool {
    match block {
        Block::Sequence(bs) => {
            let pos = bs.windows(2).position(|w| {
                matches!((&w[0], &w[1]), (Block::Activity(x), Block::Activity(y)) if x == a && y == b)
            });
            if let Some(i) = pos {
                let pair: Vec<Block> = bs.drain(i..i + 2).collect();
                bs.insert(i, Block::Parallel(pair));
                return true;
            }
            bs.iter_mut().any(|c| resequentialize(c, a, b))
        }
        Block::Parallel(bs) => bs.iter_mut().any(|c| resequentialize(c, a, b)),
        Block::Xor(bs) => bs.iter_mut().any(|(_, c)| resequentialize(c, a, b)),
        Block::Optional(_, c) => resequentialize(c, a, b),
        Block::Activity(_) => false,
    }
}

fn insert_after(block: &mut Block, after: &str, new: &str) -> bool {
    match block {
        Block::Sequence(bs) => {
            if let Some(i) = bs
                .iter()
                .position(|c| matches!(c, Block::Activity(x) if x == after))
            {
                bs.insert(i + 1, act(new));
                return true;
            }
            bs.iter_mut().any(|c| insert_after(c, after, new))
        }
        Block::Parallel(bs) => bs.iter_mut().any(|c| insert_after(c, after, new)),
        Block::Xor(bs) => bs.iter_mut().any(|(_, c)| insert_after(c, after, new)),
        Block::Optional(_, c) => insert_after(c, after, new),
        Block::Activity(_) => false,
    }
}

fn optionalize(block: &mut Block, target: &str, p: f64) -> bool {
    match block {
        Block::Activity(x) if x == target => {
            let inner = std::mem::replace(block, Block::Sequence(vec![]));
            *block = Block::Optional(p, Box::new(inner));
            true
        }
        Block::Activity(_) => false,
        Block::Sequence(bs) | Block::Parallel(bs) => {
            bs.iter_mut().any(|c| optionalize(c, target, p))
        }
        Block::Xor(bs) => bs.iter_mut().any(|(_, c)| optionalize(c, target, p)),
        Block::Optional(_, c) => optionalize(c, target, p),
    }
}

pub fn apply_drift(model: &ProcessModel, spec: &DriftSpec) -> Result<ProcessModel, DriftError> {
    let mut m = model.clone();
    let known = model.alphabet();
    let require = |a: &str| {
        if known.contains(a) {
            Ok(())
        } else {
            Err(DriftError::UnknownActivity(a.to_string()))
        }
    };
    if let Some((a, b)) = &spec.resequentialize {
        require(a)?;
        require(b)?;
        if !resequentialize(&mut m.root, a, b) {
            return Err(DriftError::InvalidPoint(format!(
                "{a:?} and {b:?} are not adjacent in a sequence"
            )));
        }
    }
    if let Some(ins) = &spec.insert {
        require(&ins.after)?;
        if known.contains(ins.activity.as_str()) {
            return Err(DriftError::DuplicateActivity(ins.activity.clone()));
        }
        if !insert_after(&mut m.root, &ins.after, &ins.activity) {
            return Err(DriftError::InvalidPoint(format!(
                "{:?} is not a step of a sequence",
                ins.after
            )));
        }
        m.durations.insert(ins.activity.clone(), ins.duration);
    }
    if let Some(o) = &spec.optionalize {
        require(&o.activity)?;
        if !(o.probability > 0.0 && o.probability < 1.0) {
            return Err(DriftError::Parameter(format!(
                "optional probability {} not in (0,1)",
                o.probability
            )));
        }
        optionalize(&mut m.root, &o.activity, o.probability);
    }
    if let Some(s) = &spec.slow_down {
        if !(s.multiplier > 1.0 && s.multiplier.is_finite()) {
            return Err(DriftError::Parameter(
                "slow-down multiplier must be > 1".into(),
            ));
        }
        for a in &s.activities {
            require(a)?;
            match m.durations.get_mut(a) {
                Some(DurationSpec::LogNormal { median_hours, .. }) => *median_hours *= s.multiplier,
                _ => {
                    return Err(DriftError::Parameter(format!(
                        "{a:?} has no log-normal duration to slow down"
                    )))
                }
            }
        }
    }
    m.validate()?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_cases: usize,
    pub drift_at_fraction: f64,
    pub seed: u64,
    /// Arrival time of the first case, RFC 3339.
    pub start: String,
    pub model: ProcessModel,
    pub drift: DriftSpec,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_cases: 2000,
            drift_at_fraction: 0.56,
            seed: 42,
            start: "2020-01-01T00:00:00Z".into(),
            model: base_model(),
            drift: DriftSpec::default_rio(),
        }
    }
}

impl GeneratorConfig {
    pub fn drift_index(&self) -> usize {
        (self.drift_at_fraction * self.n_cases as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<(), DriftError> {
        if self.n_cases == 0 {
            return Err(DriftError::Parameter("n_cases must be >= 1".into()));
        }
        if !(self.drift_at_fraction > 0.0 && self.drift_at_fraction < 1.0) {
            return Err(DriftError::Parameter(format!(
                "drift_at_fraction {} not in (0,1)",
                self.drift_at_fraction
            )));
        }
        self.model.validate()
    }
}

/// The generated log plus which cases ran the drifted model.
#[derive(Debug, Clone)]
pub struct GeneratedLog {
    pub log: EventLog,
    pub base: ProcessModel,
    pub drifted: ProcessModel,
    pub drift_index: usize,
}

pub fn generate(cfg: &GeneratorConfig) -> Result<EventLog, DriftError> {
    generate_detailed(cfg).map(|g| g.log)
}

pub fn generate_detailed(cfg: &GeneratorConfig) -> Result<GeneratedLog, DriftError> {
    cfg.validate()?;
    let drifted = apply_drift(&cfg.model, &cfg.drift)?;
    let origin: Millis = parse_timestamp(&cfg.start)
        .ok_or_else(|| DriftError::Parameter(format!("bad start timestamp {:?}", cfg.start)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arrivals = Exp::new(1.0 / cfg.model.mean_interarrival_hours)
        .map_err(|e| DriftError::Parameter(e.to_string()))?;
    let drift_index = cfg.drift_index();
    let digits = cfg.n_cases.to_string().len();
    let mut clock = 0.0f64;
    let mut traces = Vec::with_capacity(cfg.n_cases);
    for i in 0..cfg.n_cases {
        if i > 0 {
            clock += arrivals.sample(&mut rng);
        }
        let model = if i < drift_index {
            &cfg.model
        } else {
            &drifted
        };
        let events = model
            .simulate(clock, &mut rng)?
            .into_iter()
            .map(|(a, h)| Event::new(a, origin + (h * HOUR_MS).round() as Millis))
            .collect();
        traces.push(Trace::new(
            format!("case_{:0digits$}", i + 1),
            events,
            Default::default(),
        ));
    }
    Ok(GeneratedLog {
        log: EventLog::new(traces)?,
        base: cfg.model.clone(),
        drifted,
        drift_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::mean_cycle_time_ms;
    use crate::outcome::OutcomeLabeler;

    fn small(n: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_cases: n,
            seed,
            ..Default::default()
        }
    }

    fn acts(t: &Trace) -> Vec<&str> {
        t.activities().collect()
    }

    #[test]
    fn base_alphabet_has_18_activities() {
        assert_eq!(base_model().alphabet().len(), 18);
        base_model().validate().unwrap();
    }

    #[test]
    fn default_drift_adds_one_activity() {
        let d = apply_drift(&base_model(), &DriftSpec::default_rio()).unwrap();
        let mut expected = base_model().alphabet();
        expected.insert("Anti-fraud check".into());
        assert_eq!(d.alphabet(), expected);
    }

    #[test]
    fn identity_drift_is_noop() {
        assert_eq!(
            apply_drift(&base_model(), &DriftSpec::identity()).unwrap(),
            base_model()
        );
    }

    #[test]
    fn drift_errors() {
        let bad = DriftSpec {
            optionalize: Some(Optionalization {
                activity: "Nope".into(),
                probability: 0.5,
            }),
            ..Default::default()
        };
        assert!(matches!(
            apply_drift(&base_model(), &bad),
            Err(DriftError::UnknownActivity(a)) if a == "Nope"
        ));
        let not_adjacent = DriftSpec {
            resequentialize: Some(("Submit application".into(), "Close case".into())),
            ..Default::default()
        };
        assert!(matches!(
            apply_drift(&base_model(), &not_adjacent),
            Err(DriftError::InvalidPoint(_))
        ));
        let slow = DriftSpec {
            slow_down: Some(SlowDown {
                activities: vec!["Close case".into()],
                multiplier: 1.0,
            }),
            ..Default::default()
        };
        assert!(apply_drift(&base_model(), &slow).is_err());
    }

    #[test]
    fn defaults_shape() {
        let log = generate(&GeneratorConfig::default()).unwrap();
        assert_eq!(log.len(), 2000);
        assert_eq!(log.alphabet().len(), 19);
        assert!(log
            .traces()
            .iter()
            .all(|t| t.events[0].activity == "Submit application"));
    }

    #[test]
    fn drift_boundary_and_conformance() {
        let cfg = small(400, 3);
        let g = generate_detailed(&cfg).unwrap();
        let k = cfg.drift_index();
        assert_eq!(k, 224);
        let traces = g.log.traces();
        for (i, t) in traces.iter().enumerate() {
            let a = acts(t);
            let inserted = a.contains(&"Anti-fraud check");
            assert_eq!(inserted, i >= k, "case {i}");
            if i < k {
                assert!(g.base.conforms(&a), "{a:?}");
            } else {
                assert!(g.drifted.conforms(&a), "{a:?}");
            }
        }
        for w in traces.windows(2) {
            assert!(w[0].start_time() <= w[1].start_time());
        }
    }

    #[test]
    fn replay_rejects_wrong_runs() {
        let m = base_model();
        let ok = [
            "Submit application",
            "Check completeness",
            "Register application",
            "Income verification",
            "Credit history check",
            "Assess eligibility",
            "Reject application",
            "Notify rejection",
            "Verify documents",
            "Final approval",
            "Archive case",
            "Close case",
            "Update records",
        ];
        assert!(m.conforms(&ok));
        let mut missing = ok.to_vec();
        missing.remove(4);
        assert!(!m.conforms(&missing));
        let mut swapped = ok.to_vec();
        swapped.swap(8, 9);
        assert!(!m.conforms(&swapped));
        let d = apply_drift(&m, &DriftSpec::default_rio()).unwrap();
        assert!(!d.conforms(&swapped));
        let mut drifted = swapped.clone();
        drifted.insert(3, "Anti-fraud check");
        assert!(d.conforms(&drifted));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(50, 1)).unwrap();
        let b = generate(&small(50, 1)).unwrap();
        let c = generate(&small(50, 2)).unwrap();
        assert_eq!(a.traces(), b.traces());
        assert_ne!(a.traces(), c.traces());
    }

    #[test]
    fn slow_down_raises_mean_cycle_time() {
        let base = GeneratorConfig {
            n_cases: 10_000,
            drift: DriftSpec {
                slow_down: None,
                ..DriftSpec::default_rio()
            },
            drift_at_fraction: 0.5,
            ..Default::default()
        };
        let slow = GeneratorConfig {
            drift: DriftSpec::default_rio(),
            ..base.clone()
        };
        let phase_means = |cfg: &GeneratorConfig| {
            let g = generate_detailed(cfg).unwrap();
            let (b, d) = g.log.traces().split_at(g.drift_index);
            (mean_cycle_time_ms(b), mean_cycle_time_ms(d))
        };
        let (b0, d0) = phase_means(&base);
        let (b1, d1) = phase_means(&slow);
        assert_eq!(b0, b1);
        assert!(d1 > d0);
        assert!(d1 > b1, "drifted {d1} vs base {b1}");
    }

    #[test]
    fn fast_case_rate_is_balanced() {
        let log = generate(&GeneratorConfig::default()).unwrap();
        let l = OutcomeLabeler::fast_case(log.traces()).unwrap();
        let pos = log.traces().iter().filter(|t| l.label(t)).count();
        let rate = pos as f64 / log.len() as f64;
        assert!((0.3..=0.7).contains(&rate), "{rate}");
    }
}
