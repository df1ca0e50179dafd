//! In-memory event log model with XES and CSV readers.
//!
//! Timestamps are stored as UTC milliseconds since the Unix epoch. Traces keep
//! their events sorted by timestamp; equal timestamps keep input order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

mod tabular;
mod xes;

pub use tabular::{parse_csv, ColumnMapping, ColumnRole, CsvMapping};
pub use xes::{format_timestamp, parse_timestamp, parse_xes, parse_xes_with_warnings, write_xes};

/// Milliseconds since the Unix epoch, UTC.
pub type Millis = i64;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("{context}: missing mandatory key `{key}`")]
    MissingKey { context: String, key: &'static str },
    #[error("attribute `{name}` has mixed value kinds ({first} and {second})")]
    MixedKinds {
        name: String,
        first: ValueKind,
        second: ValueKind,
    },
    #[error("{context}: unparseable timestamp `{value}`")]
    BadTimestamp { context: String, value: String },
    #[error("duplicate case id `{0}`")]
    DuplicateCase(String),
    #[error("trace `{0}` has no events")]
    EmptyTrace(String),
    #[error("event in trace `{0}` has an empty activity label")]
    EmptyActivity(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("missing mapped column `{0}`")]
    MissingColumn(String),
    #[error("empty input")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    String,
    Integer,
    Real,
    Boolean,
    Timestamp,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::String => "string",
            ValueKind::Integer => "integer",
            ValueKind::Real => "real",
            ValueKind::Boolean => "boolean",
            ValueKind::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttributeValue {
    String(String),
    Integer(i64),
    Real(f64),
    Boolean(bool),
    Timestamp(Millis),
}

impl AttributeValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            AttributeValue::String(_) => ValueKind::String,
            AttributeValue::Integer(_) => ValueKind::Integer,
            AttributeValue::Real(_) => ValueKind::Real,
            AttributeValue::Boolean(_) => ValueKind::Boolean,
            AttributeValue::Timestamp(_) => ValueKind::Timestamp,
        }
    }
}

pub type Attributes = BTreeMap<String, AttributeValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub activity: String,
    pub timestamp: Millis,
    pub payload: Attributes,
}

impl Event {
    pub fn new(activity: impl Into<String>, timestamp: Millis) -> Self {
        Event {
            activity: activity.into(),
            timestamp,
            payload: Attributes::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: AttributeValue) -> Self {
        self.payload.insert(key.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
    pub attributes: Attributes,
}

impl Trace {
    /// Builds a trace, sorting events stably by timestamp.
    pub fn new(case_id: impl Into<String>, mut events: Vec<Event>, attributes: Attributes) -> Self {
        events.sort_by_key(|e| e.timestamp);
        Trace {
            case_id: case_id.into(),
            events,
            attributes,
        }
    }

    pub fn start_time(&self) -> Millis {
        self.events.first().map_or(0, |e| e.timestamp)
    }

    pub fn end_time(&self) -> Millis {
        self.events.last().map_or(0, |e| e.timestamp)
    }

    pub fn cycle_time(&self) -> Millis {
        self.end_time() - self.start_time()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }
}

/// Value kinds of every attribute name, split by level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub case: BTreeMap<String, ValueKind>,
    pub event: BTreeMap<String, ValueKind>,
}

impl AttributeSchema {
    fn observe(
        map: &mut BTreeMap<String, ValueKind>,
        name: &str,
        kind: ValueKind,
    ) -> Result<(), LogError> {
        match map.get(name) {
            Some(&k) if k != kind => Err(LogError::MixedKinds {
                name: name.to_string(),
                first: k,
                second: kind,
            }),
            Some(_) => Ok(()),
            None => {
                map.insert(name.to_string(), kind);
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    traces: Vec<Trace>,
    alphabet: Vec<String>,
    schema: AttributeSchema,
}

impl EventLog {
    /// Validates the traces and derives the alphabet and attribute schema.
    pub fn new(traces: Vec<Trace>) -> Result<Self, LogError> {
        let mut seen = HashSet::with_capacity(traces.len());
        let mut alphabet = BTreeSet::new();
        let mut schema = AttributeSchema::default();
        for trace in &traces {
            if !seen.insert(trace.case_id.as_str()) {
                return Err(LogError::DuplicateCase(trace.case_id.clone()));
            }
            if trace.events.is_empty() {
                return Err(LogError::EmptyTrace(trace.case_id.clone()));
            }
            debug_assert!(trace
                .events
                .windows(2)
                .all(|w| w[0].timestamp <= w[1].timestamp));
            for (name, value) in &trace.attributes {
                AttributeSchema::observe(&mut schema.case, name, value.kind())?;
            }
            for event in &trace.events {
                if event.activity.is_empty() {
                    return Err(LogError::EmptyActivity(trace.case_id.clone()));
                }
                alphabet.insert(event.activity.clone());
                for (name, value) in &event.payload {
                    AttributeSchema::observe(&mut schema.event, name, value.kind())?;
                }
            }
        }
        Ok(EventLog {
            traces,
            alphabet: alphabet.into_iter().collect(),
            schema,
        })
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    /// Activity labels, lexicographically ordered.
    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn attribute_schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn stats(&self) -> LogStats {
        stats(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub n_cases: usize,
    pub n_events: usize,
    pub n_activities: usize,
    /// Mean cycle time in seconds.
    pub mean_cycle_time: f64,
}

impl fmt::Display for LogStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cases={} events={} activities={} mean_cycle_time_s={:.3}",
            self.n_cases, self.n_events, self.n_activities, self.mean_cycle_time
        )
    }
}

pub fn stats(log: &EventLog) -> LogStats {
    LogStats {
        n_cases: log.len(),
        n_events: log.n_events(),
        n_activities: log.alphabet.len(),
        mean_cycle_time: mean_cycle_time_ms(log.traces()) / 1000.0,
    }
}

/// Mean cycle time in milliseconds; 0 for an empty slice.
pub fn mean_cycle_time_ms(traces: &[Trace]) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    let total: f64 = traces.iter().map(|t| t.cycle_time() as f64).sum();
    total / traces.len() as f64
}
