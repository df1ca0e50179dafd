use std::collections::HashMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{AttributeValue, Attributes, Event, EventLog, LogError, Millis, Trace, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Case,
    Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub name: String,
    pub role: ColumnRole,
    pub kind: ValueKind,
}

/// JSON descriptor telling [`parse_csv`] how to read a flat event table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMapping {
    pub case_id_col: String,
    pub activity_col: String,
    pub timestamp_col: String,
    /// chrono `strftime` format; `%z` is honoured when present, otherwise UTC.
    pub timestamp_format: String,
    #[serde(default)]
    pub columns: Vec<ColumnMapping>,
}

impl CsvMapping {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn parse_with_format(raw: &str, format: &str) -> Option<Millis> {
    let s = raw.trim();
    if let Ok(dt) = DateTime::parse_from_str(s, format) {
        return Some(dt.timestamp_millis());
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, format) {
        return Some(dt.and_utc().timestamp_millis());
    }
    NaiveDate::parse_from_str(s, format)
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis())
}

fn parse_cell(raw: &str, kind: ValueKind, format: &str) -> Option<AttributeValue> {
    let s = raw.trim();
    match kind {
        ValueKind::String => Some(AttributeValue::String(raw.to_string())),
        ValueKind::Integer => s.parse().ok().map(AttributeValue::Integer),
        ValueKind::Real => s.parse().ok().map(AttributeValue::Real),
        ValueKind::Boolean => match s.to_ascii_lowercase().as_str() {
            "true" | "1" => Some(AttributeValue::Boolean(true)),
            "false" | "0" => Some(AttributeValue::Boolean(false)),
            _ => None,
        },
        ValueKind::Timestamp => parse_with_format(s, format).map(AttributeValue::Timestamp),
    }
}

struct Group {
    attributes: Attributes,
    events: Vec<Event>,
}

/// Reads a CSV event table. Rows are grouped by case id; traces are returned
/// ordered by start time (ties keep first-appearance order). Empty cells in
/// attribute columns are treated as missing values.
pub fn parse_csv(bytes: &[u8], mapping: &CsvMapping) -> Result<EventLog, LogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(LogError::Empty);
    }
    let index_of = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_string()))
    };
    let case_col = index_of(&mapping.case_id_col)?;
    let act_col = index_of(&mapping.activity_col)?;
    let ts_col = index_of(&mapping.timestamp_col)?;
    let columns: Vec<(usize, &ColumnMapping)> = mapping
        .columns
        .iter()
        .map(|c| index_of(&c.name).map(|i| (i, c)))
        .collect::<Result<_, _>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record?;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let case_id = cell(case_col).to_string();
        if case_id.is_empty() {
            return Err(LogError::Row {
                row,
                message: "empty case id".into(),
            });
        }
        let activity = cell(act_col).to_string();
        if activity.is_empty() {
            return Err(LogError::Row {
                row,
                message: "empty activity".into(),
            });
        }
        let timestamp =
            parse_with_format(cell(ts_col), &mapping.timestamp_format).ok_or_else(|| {
                LogError::Row {
                    row,
                    message: format!(
                        "unparseable timestamp `{}` (format `{}`)",
                        cell(ts_col),
                        mapping.timestamp_format
                    ),
                }
            })?;
        let group = groups.entry(case_id.clone()).or_insert_with(|| {
            order.push(case_id.clone());
            Group {
                attributes: Attributes::new(),
                events: Vec::new(),
            }
        });
        let mut payload = Attributes::new();
        for &(c, col) in &columns {
            let raw = cell(c);
            if raw.trim().is_empty() {
                continue;
            }
            let value = parse_cell(raw, col.kind, &mapping.timestamp_format).ok_or_else(|| {
                LogError::Row {
                    row,
                    message: format!(
                        "column `{}`: cannot parse `{raw}` as {}",
                        col.name, col.kind
                    ),
                }
            })?;
            match col.role {
                ColumnRole::Case => {
                    group.attributes.entry(col.name.clone()).or_insert(value);
                }
                ColumnRole::Event => {
                    payload.insert(col.name.clone(), value);
                }
            }
        }
        group.events.push(Event {
            activity,
            timestamp,
            payload,
        });
    }
    if order.is_empty() {
        return Err(LogError::Empty);
    }
    let mut traces: Vec<Trace> = order
        .into_iter()
        .map(|id| {
            let g = groups.remove(&id).expect("grouped case");
            Trace::new(id, g.events, g.attributes)
        })
        .collect();
    traces.sort_by_key(Trace::start_time);
    EventLog::new(traces)
}
