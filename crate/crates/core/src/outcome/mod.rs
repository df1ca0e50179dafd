//! Outcome labels for completed traces: LTLf formulas or the duration-based
//! "fast case" property.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::eventlog::{mean_cycle_time_ms, Trace};

mod eval;
mod formula;

pub use eval::{evaluate, CompiledFormula};
pub use formula::{parse_formula, Formula};

#[derive(Debug, thiserror::Error)]
pub enum OutcomeError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("empty formula")]
    EmptyFormula,
    #[error("cannot label an empty log")]
    EmptyLog,
    #[error("fast-case labeling needs a non-empty reference log")]
    EmptyReference,
    #[error("labels csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("labels csv: {0}")]
    BadLabel(String),
}

/// Case id → outcome, ordered by case id.
pub type Labels = BTreeMap<String, bool>;

/// How outcomes are defined, before any reference statistics are frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelSpec {
    Ltl { formula: String },
    FastCase,
}

/// A labeling rule with every data-dependent quantity fixed.
#[derive(Debug, Clone)]
pub enum OutcomeLabeler {
    Ltl {
        formula: Formula,
        compiled: CompiledFormula,
    },
    /// Positive iff cycle time is strictly below `threshold_ms`.
    FastCase { threshold_ms: f64 },
}

impl OutcomeLabeler {
    pub fn ltl(formula: Formula) -> Self {
        let compiled = CompiledFormula::new(&formula);
        OutcomeLabeler::Ltl { formula, compiled }
    }

    /// Fast-case labeler whose threshold is the mean cycle time of `reference`.
    pub fn fast_case(reference: &[Trace]) -> Result<Self, OutcomeError> {
        if reference.is_empty() {
            return Err(OutcomeError::EmptyReference);
        }
        Ok(OutcomeLabeler::FastCase {
            threshold_ms: mean_cycle_time_ms(reference),
        })
    }

    pub fn freeze(spec: &LabelSpec, reference: &[Trace]) -> Result<Self, OutcomeError> {
        match spec {
            LabelSpec::Ltl { formula } => Ok(Self::ltl(parse_formula(formula)?)),
            LabelSpec::FastCase => Self::fast_case(reference),
        }
    }

    pub fn threshold_ms(&self) -> Option<f64> {
        match self {
            OutcomeLabeler::FastCase { threshold_ms } => Some(*threshold_ms),
            OutcomeLabeler::Ltl { .. } => None,
        }
    }

    pub fn label(&self, trace: &Trace) -> bool {
        match self {
            OutcomeLabeler::Ltl { compiled, .. } => {
                let acts: Vec<&str> = trace.activities().collect();
                compiled.evaluate(&acts)
            }
            OutcomeLabeler::FastCase { threshold_ms } => {
                (trace.cycle_time() as f64) < *threshold_ms
            }
        }
    }

    pub fn label_all(&self, traces: &[Trace]) -> Result<Labels, OutcomeError> {
        if traces.is_empty() {
            return Err(OutcomeError::EmptyLog);
        }
        let values = crate::par::map(traces, |t| self.label(t));
        Ok(traces
            .iter()
            .zip(values)
            .map(|(t, v)| (t.case_id.clone(), v))
            .collect())
    }
}

/// Labels every trace of `traces`. For [`LabelSpec::FastCase`], the threshold
/// comes from `reference`.
pub fn label_log(
    traces: &[Trace],
    spec: &LabelSpec,
    reference: &[Trace],
) -> Result<Labels, OutcomeError> {
    OutcomeLabeler::freeze(spec, reference)?.label_all(traces)
}

/// Writes `case_id,label` rows with a header.
pub fn write_labels_csv<W: Write>(labels: &Labels, out: W) -> Result<(), OutcomeError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case_id", "label"])?;
    for (id, v) in labels {
        w.write_record([id.as_str(), if *v { "true" } else { "false" }])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_labels_csv<R: Read>(input: R) -> Result<Labels, OutcomeError> {
    let mut r = csv::Reader::from_reader(input);
    let mut labels = Labels::new();
    for rec in r.records() {
        let rec = rec?;
        let (Some(id), Some(v)) = (rec.get(0), rec.get(1)) else {
            return Err(OutcomeError::BadLabel(format!("short record {rec:?}")));
        };
        let v = match v.trim() {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(OutcomeError::BadLabel(format!("`{other}` for case `{id}`"))),
        };
        labels.insert(id.to_string(), v);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{Attributes, Event};

    fn trace(id: &str, acts: &[&str], cycle_s: i64) -> Trace {
        let n = acts.len() as i64;
        let events = acts
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let t = if n > 1 {
                    cycle_s * 1000 * i as i64 / (n - 1)
                } else {
                    0
                };
                Event::new(*a, t)
            })
            .collect();
        Trace::new(id, events, Attributes::new())
    }

    #[test]
    fn fast_case_uses_strict_inequality() {
        let reference = [trace("r1", &["a", "b"], 10), trace("r2", &["a", "b"], 30)];
        let labeler = OutcomeLabeler::fast_case(&reference).unwrap();
        assert_eq!(labeler.threshold_ms(), Some(20_000.0));
        let log = [
            trace("x", &["a", "b"], 10),
            trace("y", &["a", "b"], 20),
            trace("z", &["a", "b"], 30),
        ];
        let labels = labeler.label_all(&log).unwrap();
        assert_eq!(
            labels.values().copied().collect::<Vec<_>>(),
            [true, false, false]
        );
    }

    #[test]
    fn ltl_labels_every_trace() {
        let log = [trace("1", &["a", "b"], 1), trace("2", &["c", "a"], 1)];
        let spec = LabelSpec::Ltl {
            formula: "F(a)".into(),
        };
        let labels = label_log(&log, &spec, &[]).unwrap();
        assert!(labels.values().all(|&v| v));
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(matches!(
            OutcomeLabeler::fast_case(&[]),
            Err(OutcomeError::EmptyReference)
        ));
        let l = OutcomeLabeler::ltl(Formula::True);
        assert!(matches!(l.label_all(&[]), Err(OutcomeError::EmptyLog)));
    }

    #[test]
    fn labels_csv_round_trip() {
        let mut labels = Labels::new();
        labels.insert("c,1".into(), true);
        labels.insert("c2".into(), false);
        let mut buf = Vec::new();
        write_labels_csv(&labels, &mut buf).unwrap();
        assert_eq!(read_labels_csv(buf.as_slice()).unwrap(), labels);
    }

    #[test]
    fn spec_json_shape() {
        let s: LabelSpec = serde_json::from_str(r#"{"kind":"fast_case"}"#).unwrap();
        assert_eq!(s, LabelSpec::FastCase);
        let s: LabelSpec = serde_json::from_str(r#"{"kind":"ltl","formula":"F(a)"}"#).unwrap();
        assert!(matches!(s, LabelSpec::Ltl { .. }));
    }
}
