//! Complex index encoding of execution prefixes.
//!
//! Row layout for a schema with prefix cap `L`:
//!
//! ```text
//! [case features] [index 1: activity one-hot | elapsed? | event attrs] ... [index L: ...]
//! ```
//!
//! Categorical blocks are one-hot over `observed vocabulary ++ [PAD, OTHER]`.
//! Positions past the end of a prefix are PAD (numeric slots 0.0); categories
//! not seen when the schema was fitted are OTHER.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eventlog::{AttributeValue, Attributes, Trace, ValueKind};
use crate::forest::Matrix;
use crate::outcome::Labels;
use crate::par;

pub const PAD: &str = "<PAD>";
pub const OTHER: &str = "<OTHER>";

#[derive(Debug, thiserror::Error)]
pub enum EncodingError {
    #[error("cannot fit a schema on an empty trace set")]
    EmptyInput,
    #[error("max_prefix_len must be at least 1")]
    ZeroPrefixCap,
    #[error("no label for case `{0}`")]
    MissingLabel(String),
    #[error("attribute `{0}` has mixed value kinds")]
    MixedKinds(String),
    #[error("encoded width {got} differs from schema width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset csv: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodingOptions {
    /// Adds one slot per index with the event's seconds since trace start.
    pub elapsed_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: ValueKind,
    /// Observed categories (string attributes only), sorted. PAD and OTHER
    /// are implicit and follow these.
    pub vocabulary: Vec<String>,
}

impl FeatureSpec {
    fn is_categorical(&self) -> bool {
        self.kind == ValueKind::String
    }

    fn width(&self) -> usize {
        if self.is_categorical() {
            self.vocabulary.len() + 2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSchema {
    pub max_prefix_len: usize,
    pub elapsed_time: bool,
    pub case_features: Vec<FeatureSpec>,
    pub event_features: Vec<FeatureSpec>,
    /// Observed activities, sorted; PAD and OTHER follow.
    pub activity_vocabulary: Vec<String>,
}

fn collect_features<'a>(
    attribute_sets: impl Iterator<Item = &'a Attributes>,
) -> Result<Vec<FeatureSpec>, EncodingError> {
    let mut kinds: BTreeMap<&str, ValueKind> = BTreeMap::new();
    let mut vocab: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for attrs in attribute_sets {
        for (name, value) in attrs {
            let kind = value.kind();
            if *kinds.entry(name).or_insert(kind) != kind {
                return Err(EncodingError::MixedKinds(name.clone()));
            }
            if let AttributeValue::String(s) = value {
                vocab.entry(name).or_default().insert(s);
            }
        }
    }
    Ok(kinds
        .into_iter()
        .map(|(name, kind)| FeatureSpec {
            name: name.to_string(),
            kind,
            vocabulary: vocab
                .remove(name)
                .map(|v| v.into_iter().map(str::to_string).collect())
                .unwrap_or_default(),
        })
        .collect())
}

/// Fits a schema from control flow and payload only.
pub fn fit_schema(
    traces: &[Trace],
    max_prefix_len: usize,
) -> Result<EncodingSchema, EncodingError> {
    fit_schema_with(traces, max_prefix_len, EncodingOptions::default())
}

pub fn fit_schema_with(
    traces: &[Trace],
    max_prefix_len: usize,
    options: EncodingOptions,
) -> Result<EncodingSchema, EncodingError> {
    if traces.is_empty() {
        return Err(EncodingError::EmptyInput);
    }
    if max_prefix_len == 0 {
        return Err(EncodingError::ZeroPrefixCap);
    }
    let activities: BTreeSet<&str> = traces.iter().flat_map(Trace::activities).collect();
    Ok(EncodingSchema {
        max_prefix_len,
        elapsed_time: options.elapsed_time,
        case_features: collect_features(traces.iter().map(|t| &t.attributes))?,
        event_features: collect_features(
            traces
                .iter()
                .flat_map(|t| t.events.iter().map(|e| &e.payload)),
        )?,
        activity_vocabulary: activities.into_iter().map(str::to_string).collect(),
    })
}

impl EncodingSchema {
    pub fn activity_width(&self) -> usize {
        self.activity_vocabulary.len() + 2
    }

    fn case_width(&self) -> usize {
        self.case_features.iter().map(FeatureSpec::width).sum()
    }

    fn index_width(&self) -> usize {
        self.activity_width()
            + usize::from(self.elapsed_time)
            + self
                .event_features
                .iter()
                .map(FeatureSpec::width)
                .sum::<usize>()
    }

    /// Total row width W.
    pub fn width(&self) -> usize {
        self.case_width() + self.max_prefix_len * self.index_width()
    }

    /// Column names in layout order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        let push_feature = |names: &mut Vec<String>, prefix: &str, f: &FeatureSpec| {
            if f.is_categorical() {
                for c in f.vocabulary.iter().map(String::as_str).chain([PAD, OTHER]) {
                    names.push(format!("{prefix}{}={c}", f.name));
                }
            } else {
                names.push(format!("{prefix}{}", f.name));
            }
        };
        for f in &self.case_features {
            push_feature(&mut names, "case:", f);
        }
        for i in 1..=self.max_prefix_len {
            for a in self
                .activity_vocabulary
                .iter()
                .map(String::as_str)
                .chain([PAD, OTHER])
            {
                names.push(format!("e{i}:activity={a}"));
            }
            if self.elapsed_time {
                names.push(format!("e{i}:elapsed_s"));
            }
            for f in &self.event_features {
                push_feature(&mut names, &format!("e{i}:"), f);
            }
        }
        names
    }

    /// Short stable digest of the schema, for reports.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn activity_slot(&self, activity: &str) -> usize {
        self.activity_vocabulary
            .binary_search_by(|a| a.as_str().cmp(activity))
            .unwrap_or(self.activity_vocabulary.len() + 1)
    }
}

/// The first `len` events of a trace.
#[derive(Debug, Clone, Copy)]
pub struct Prefix<'a> {
    pub trace: &'a Trace,
    pub len: usize,
}

/// One prefix per length 1..=min(|trace|, cap).
pub fn extract_prefixes(trace: &Trace, max_prefix_len: usize) -> Vec<Prefix<'_>> {
    (1..=trace.len().min(max_prefix_len))
        .map(|len| Prefix { trace, len })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedInstance {
    pub features: Vec<f64>,
    pub label: bool,
    pub case_id: String,
    pub prefix_len: usize,
}

fn one_hot(out: &mut Vec<f64>, width: usize, hot: usize) {
    let start = out.len();
    out.resize(start + width, 0.0);
    out[start + hot] = 1.0;
}

fn push_value(out: &mut Vec<f64>, spec: &FeatureSpec, value: Option<&AttributeValue>, origin: i64) {
    if spec.is_categorical() {
        let pad = spec.vocabulary.len();
        let slot = match value {
            Some(AttributeValue::String(s)) => spec
                .vocabulary
                .binary_search_by(|v| v.as_str().cmp(s))
                .unwrap_or(pad + 1),
            Some(_) => pad + 1,
            None => pad,
        };
        one_hot(out, spec.width(), slot);
        return;
    }
    out.push(match value {
        Some(AttributeValue::Integer(i)) => *i as f64,
        Some(AttributeValue::Real(x)) => *x,
        Some(AttributeValue::Boolean(b)) => f64::from(u8::from(*b)),
        Some(AttributeValue::Timestamp(ms)) => (ms - origin) as f64 / 1000.0,
        Some(AttributeValue::String(_)) | None => 0.0,
    });
}

/// Encodes one prefix against a fitted schema.
pub fn encode_prefix(
    prefix: Prefix<'_>,
    schema: &EncodingSchema,
    label: bool,
) -> Result<EncodedInstance, EncodingError> {
    let trace = prefix.trace;
    let origin = trace.start_time();
    let width = schema.width();
    let mut x = Vec::with_capacity(width);
    for spec in &schema.case_features {
        push_value(&mut x, spec, trace.attributes.get(&spec.name), origin);
    }
    let pad = schema.activity_vocabulary.len();
    let len = prefix.len.min(schema.max_prefix_len);
    for i in 0..schema.max_prefix_len {
        let event = trace.events.get(i).filter(|_| i < len);
        let slot = event.map_or(pad, |e| schema.activity_slot(&e.activity));
        one_hot(&mut x, schema.activity_width(), slot);
        if schema.elapsed_time {
            x.push(event.map_or(0.0, |e| (e.timestamp - origin) as f64 / 1000.0));
        }
        for spec in &schema.event_features {
            push_value(
                &mut x,
                spec,
                event.and_then(|e| e.payload.get(&spec.name)),
                origin,
            );
        }
    }
    if x.len() != width {
        return Err(EncodingError::WidthMismatch {
            expected: width,
            got: x.len(),
        });
    }
    Ok(EncodedInstance {
        features: x,
        label,
        case_id: trace.case_id.clone(),
        prefix_len: len,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub schema: Arc<EncodingSchema>,
    pub instances: Vec<EncodedInstance>,
}

/// Encodes every prefix of every trace, traces in start-time order (stable),
/// then ascending prefix length.
pub fn encode_set(
    traces: &[Trace],
    schema: &Arc<EncodingSchema>,
    labels: &Labels,
) -> Result<EncodedDataset, EncodingError> {
    let mut ordered: Vec<&Trace> = traces.iter().collect();
    ordered.sort_by_key(|t| t.start_time());
    let per_trace = par::map(
        &ordered,
        |t| -> Result<Vec<EncodedInstance>, EncodingError> {
            let label = *labels
                .get(&t.case_id)
                .ok_or_else(|| EncodingError::MissingLabel(t.case_id.clone()))?;
            extract_prefixes(t, schema.max_prefix_len)
                .into_iter()
                .map(|p| encode_prefix(p, schema, label))
                .collect()
        },
    );
    let mut instances = Vec::new();
    for chunk in per_trace {
        instances.extend(chunk?);
    }
    Ok(EncodedDataset {
        schema: Arc::clone(schema),
        instances,
    })
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.instances.iter().map(|i| i.label).collect()
    }

    pub fn prefix_lens(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.prefix_len).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        let width = self.width();
        let mut data = Vec::with_capacity(self.len() * width);
        for inst in &self.instances {
            data.extend_from_slice(&inst.features);
        }
        Matrix::new(width, data, self.labels()).expect("encoded rows share the schema width")
    }

    /// Writes `case_id,prefix_len,label,<layout columns>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EncodingError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["case_id".to_string(), "prefix_len".into(), "label".into()];
        header.extend(self.schema.feature_names());
        w.write_record(&header)?;
        for inst in &self.instances {
            let mut rec = vec![
                inst.case_id.clone(),
                inst.prefix_len.to_string(),
                u8::from(inst.label).to_string(),
            ];
            rec.extend(inst.features.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Reads a CSV written by [`EncodedDataset::write_csv`] back into a matrix.
pub fn read_encoded_csv<R: Read>(input: R) -> Result<Matrix, EncodingError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < 4 || &header[2] != "label" {
        return Err(EncodingError::Format(
            "expected columns case_id,prefix_len,label,<features...>".into(),
        ));
    }
    let width = header.len() - 3;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| EncodingError::Format(format!("row {}: bad {what}", i + 2));
        labels.push(match &rec[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("label")),
        });
        for cell in rec.iter().skip(3) {
            data.push(cell.parse::<f64>().map_err(|_| bad("feature value"))?);
        }
    }
    Matrix::new(width, data, labels).map_err(|e| EncodingError::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::Event;

    fn trace(id: &str, acts: &[&str]) -> Trace {
        Trace::new(
            id,
            acts.iter()
                .enumerate()
                .map(|(i, a)| Event::new(*a, i as i64 * 1000))
                .collect(),
            Attributes::new(),
        )
    }

    #[test]
    fn vocabulary_and_width() {
        let ts = [trace("1", &["B", "A"]), trace("2", &["A"])];
        let s = fit_schema(&ts, 3).unwrap();
        assert_eq!(s.activity_vocabulary, ["A", "B"]);
        assert_eq!(s.activity_width(), 4);
        assert_eq!(s.width(), 12);
        assert_eq!(s.feature_names().len(), 12);
        assert_eq!(s.feature_names()[2], "e1:activity=<PAD>");
    }

    #[test]
    fn pad_and_other_slots() {
        let s = fit_schema(&[trace("1", &["A", "B"])], 2).unwrap();
        let t = trace("x", &["A"]);
        let e = encode_prefix(Prefix { trace: &t, len: 1 }, &s, true).unwrap();
        assert_eq!(e.features, [1., 0., 0., 0., 0., 0., 1., 0.]);

        let t = trace("y", &["C", "A"]);
        let e = encode_prefix(Prefix { trace: &t, len: 2 }, &s, false).unwrap();
        assert_eq!(e.features, [0., 0., 0., 1., 1., 0., 0., 0.]);
    }

    #[test]
    fn numeric_payload_and_padding() {
        let mk = |v: i64| {
            Trace::new(
                "n",
                vec![
                    Event::new("A", 0).with("n", AttributeValue::Integer(3)),
                    Event::new("A", 1000).with("n", AttributeValue::Integer(v)),
                ],
                Attributes::new(),
            )
        };
        let t = mk(7);
        let s = fit_schema(std::slice::from_ref(&t), 3).unwrap();
        // per index: A, PAD, OTHER, n
        let e = encode_prefix(Prefix { trace: &t, len: 2 }, &s, true).unwrap();
        assert_eq!(e.features[3], 3.0);
        assert_eq!(e.features[7], 7.0);
        assert_eq!(e.features[11], 0.0);
        assert_eq!(e.features[9], 1.0, "index 3 is PAD");
    }

    #[test]
    fn elapsed_time_slot() {
        let t = trace("1", &["A", "B", "C"]);
        let s = fit_schema_with(
            std::slice::from_ref(&t),
            2,
            EncodingOptions { elapsed_time: true },
        )
        .unwrap();
        assert_eq!(s.width(), 2 * (5 + 1));
        let e = encode_prefix(Prefix { trace: &t, len: 2 }, &s, true).unwrap();
        assert_eq!(e.features[5], 0.0);
        assert_eq!(e.features[11], 1.0);
    }

    #[test]
    fn case_attributes_come_first() {
        let mut attrs = Attributes::new();
        attrs.insert("kind".into(), AttributeValue::String("gold".into()));
        attrs.insert("amount".into(), AttributeValue::Real(2.5));
        attrs.insert("vip".into(), AttributeValue::Boolean(true));
        let t = Trace::new("c", vec![Event::new("A", 0)], attrs);
        let s = fit_schema(std::slice::from_ref(&t), 1).unwrap();
        // amount | kind=gold, PAD, OTHER | vip | A, PAD, OTHER
        assert_eq!(s.width(), 1 + 3 + 1 + 3);
        let e = encode_prefix(Prefix { trace: &t, len: 1 }, &s, true).unwrap();
        assert_eq!(e.features, [2.5, 1., 0., 0., 1., 1., 0., 0.]);
    }

    #[test]
    fn prefix_extraction() {
        let t5 = trace("5", &["a"; 5]);
        let lens: Vec<_> = extract_prefixes(&t5, 3).iter().map(|p| p.len).collect();
        assert_eq!(lens, [1, 2, 3]);
        assert_eq!(extract_prefixes(&trace("2", &["a", "b"]), 3).len(), 2);
        assert_eq!(extract_prefixes(&trace("1", &["a"]), 3).len(), 1);
    }

    #[test]
    fn encode_set_counts_and_determinism() {
        let ts = [trace("a", &["A", "B"]), trace("b", &["A", "B", "A"])];
        let labels: Labels = [("a".into(), true), ("b".into(), false)].into();
        let s = Arc::new(fit_schema(&ts, 5).unwrap());
        let d1 = encode_set(&ts, &s, &labels).unwrap();
        assert_eq!(d1.len(), 5);
        assert_eq!(d1, encode_set(&ts, &s, &labels).unwrap());

        let missing: Labels = [("a".into(), true)].into();
        assert!(matches!(
            encode_set(&ts, &s, &missing),
            Err(EncodingError::MissingLabel(id)) if id == "b"
        ));
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_schema(&[], 3), Err(EncodingError::EmptyInput)));
        assert!(matches!(
            fit_schema(&[trace("1", &["a"])], 0),
            Err(EncodingError::ZeroPrefixCap)
        ));
    }

    #[test]
    fn csv_round_trip_to_matrix() {
        let ts = [trace("a", &["A", "B"])];
        let labels: Labels = [("a".into(), true)].into();
        let s = Arc::new(fit_schema_with(&ts, 2, EncodingOptions { elapsed_time: true }).unwrap());
        let d = encode_set(&ts, &s, &labels).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let m = read_encoded_csv(buf.as_slice()).unwrap();
        assert_eq!(m, d.to_matrix());
    }

    #[test]
    fn fingerprint_tracks_vocabulary() {
        let a = fit_schema(&[trace("1", &["A"])], 2).unwrap();
        let b = fit_schema(&[trace("1", &["B"])], 2).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
