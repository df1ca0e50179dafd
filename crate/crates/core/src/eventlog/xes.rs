use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;
use std::fmt::Write as _;

use super::{AttributeValue, Attributes, Event, EventLog, LogError, Millis, Trace};

const CONCEPT_NAME: &str = "concept:name";
const TIMESTAMP: &str = "time:timestamp";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Log,
    Trace,
    Event,
    /// Anything whose children we ignore (attribute bodies, globals, classifiers).
    Other,
}

#[derive(Default)]
struct PendingTrace {
    case_id: Option<String>,
    attributes: Attributes,
    events: Vec<Event>,
}

#[derive(Default)]
struct PendingEvent {
    activity: Option<String>,
    timestamp: Option<Millis>,
    payload: Attributes,
}

/// Parses an XES document. Unparseable optional attributes are dropped.
pub fn parse_xes(bytes: &[u8]) -> Result<EventLog, LogError> {
    parse_xes_with_warnings(bytes).map(|(log, _)| log)
}

/// Like [`parse_xes`], also returning how many optional attributes were dropped.
pub fn parse_xes_with_warnings(bytes: &[u8]) -> Result<(EventLog, usize), LogError> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);

    let mut buf = Vec::new();
    let mut stack: Vec<Scope> = Vec::new();
    let mut traces = Vec::new();
    let mut trace: Option<PendingTrace> = None;
    let mut event: Option<PendingEvent> = None;
    let mut warnings = 0usize;
    let mut saw_log = false;

    loop {
        let ev = reader
            .read_event_into(&mut buf)
            .map_err(|e| LogError::Xml(format!("at byte {}: {e}", reader.buffer_position())))?;
        match ev {
            XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                let is_empty = matches!(ev, XmlEvent::Empty(_));
                let parent = stack.last().copied();
                let scope = match (parent, e.local_name().as_ref()) {
                    (None, b"log") => {
                        saw_log = true;
                        Scope::Log
                    }
                    (None, other) => {
                        return Err(LogError::Xml(format!(
                            "expected <log> root, found <{}>",
                            String::from_utf8_lossy(other)
                        )))
                    }
                    (Some(Scope::Log), b"trace") => {
                        trace = Some(PendingTrace::default());
                        Scope::Trace
                    }
                    (Some(Scope::Trace), b"event") => {
                        event = Some(PendingEvent::default());
                        Scope::Event
                    }
                    (Some(Scope::Trace), name) => {
                        let t = trace.as_mut().expect("trace scope");
                        match read_attribute(name, e)? {
                            Parsed::Value(key, AttributeValue::String(s))
                                if key == CONCEPT_NAME =>
                            {
                                t.case_id = Some(s)
                            }
                            Parsed::Value(key, value) => {
                                t.attributes.insert(key, value);
                            }
                            Parsed::Dropped => warnings += 1,
                            Parsed::Ignored => {}
                        }
                        Scope::Other
                    }
                    (Some(Scope::Event), name) => {
                        let ev = event.as_mut().expect("event scope");
                        match read_attribute(name, e)? {
                            Parsed::Value(key, AttributeValue::String(s))
                                if key == CONCEPT_NAME =>
                            {
                                ev.activity = Some(s)
                            }
                            Parsed::Value(key, AttributeValue::Timestamp(ms))
                                if key == TIMESTAMP =>
                            {
                                ev.timestamp = Some(ms)
                            }
                            Parsed::Value(key, value) => {
                                ev.payload.insert(key, value);
                            }
                            Parsed::Dropped => {
                                if attr_key(e)?.as_deref() == Some(TIMESTAMP) {
                                    let value = attr_value(e)?.unwrap_or_default();
                                    return Err(LogError::BadTimestamp {
                                        context: format!("trace #{}", traces.len() + 1),
                                        value,
                                    });
                                }
                                warnings += 1
                            }
                            Parsed::Ignored => {}
                        }
                        Scope::Other
                    }
                    _ => Scope::Other,
                };
                if is_empty {
                    close(scope, &mut trace, &mut event, &mut traces)?;
                } else {
                    stack.push(scope);
                }
            }
            XmlEvent::End(_) => {
                let scope = stack
                    .pop()
                    .ok_or_else(|| LogError::Xml("unbalanced closing tag".into()))?;
                close(scope, &mut trace, &mut event, &mut traces)?;
            }
            XmlEvent::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(LogError::Xml("unexpected end of document".into()));
    }
    if !saw_log {
        return Err(LogError::Xml("no <log> element".into()));
    }
    if warnings > 0 {
        log::warn!("dropped {warnings} unparseable optional attribute(s)");
    }
    Ok((EventLog::new(traces)?, warnings))
}

fn close(
    scope: Scope,
    trace: &mut Option<PendingTrace>,
    event: &mut Option<PendingEvent>,
    traces: &mut Vec<Trace>,
) -> Result<(), LogError> {
    match scope {
        Scope::Event => {
            let ev = event.take().expect("open event");
            let t = trace.as_mut().expect("event inside trace");
            let context = || match &t.case_id {
                Some(id) => format!("event #{} of trace `{id}`", t.events.len() + 1),
                None => format!(
                    "event #{} of trace #{}",
                    t.events.len() + 1,
                    traces.len() + 1
                ),
            };
            let activity = ev.activity.ok_or_else(|| LogError::MissingKey {
                context: context(),
                key: CONCEPT_NAME,
            })?;
            let timestamp = ev.timestamp.ok_or_else(|| LogError::MissingKey {
                context: context(),
                key: TIMESTAMP,
            })?;
            t.events.push(Event {
                activity,
                timestamp,
                payload: ev.payload,
            });
        }
        Scope::Trace => {
            let t = trace.take().expect("open trace");
            let case_id = t.case_id.ok_or_else(|| LogError::MissingKey {
                context: format!("trace #{}", traces.len() + 1),
                key: CONCEPT_NAME,
            })?;
            traces.push(Trace::new(case_id, t.events, t.attributes));
        }
        Scope::Log | Scope::Other => {}
    }
    Ok(())
}

enum Parsed {
    Value(String, AttributeValue),
    /// Known attribute element whose value could not be parsed.
    Dropped,
    /// Element that is not a scalar attribute (list, container, id, ...).
    Ignored,
}

fn attr_key(e: &BytesStart<'_>) -> Result<Option<String>, LogError> {
    find_attr(e, b"key")
}

fn attr_value(e: &BytesStart<'_>) -> Result<Option<String>, LogError> {
    find_attr(e, b"value")
}

fn find_attr(e: &BytesStart<'_>, name: &[u8]) -> Result<Option<String>, LogError> {
    for attr in e.attributes() {
        let attr = attr.map_err(|err| LogError::Xml(err.to_string()))?;
        if attr.key.as_ref() == name {
            let v = attr
                .unescape_value()
                .map_err(|err| LogError::Xml(err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn read_attribute(element: &[u8], e: &BytesStart<'_>) -> Result<Parsed, LogError> {
    if !matches!(
        element,
        b"string" | b"date" | b"int" | b"float" | b"boolean"
    ) {
        return Ok(Parsed::Ignored);
    }
    let (Some(key), Some(raw)) = (attr_key(e)?, attr_value(e)?) else {
        return Ok(Parsed::Dropped);
    };
    let value = match element {
        b"string" => Some(AttributeValue::String(raw)),
        b"date" => parse_timestamp(&raw).map(AttributeValue::Timestamp),
        b"int" => raw.trim().parse().ok().map(AttributeValue::Integer),
        b"float" => raw.trim().parse().ok().map(AttributeValue::Real),
        b"boolean" => match raw.trim().to_ascii_lowercase().as_str() {
            "true" => Some(AttributeValue::Boolean(true)),
            "false" => Some(AttributeValue::Boolean(false)),
            _ => None,
        },
        _ => unreachable!(),
    };
    Ok(value.map_or(Parsed::Dropped, |v| Parsed::Value(key, v)))
}

/// Parses an ISO-8601 timestamp to UTC milliseconds. A missing zone means UTC.
pub fn parse_timestamp(raw: &str) -> Option<Millis> {
    let s = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    if let Ok(dt) = DateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f%z") {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    None
}

pub fn format_timestamp(ms: Millis) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .expect("timestamp in chrono range")
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn escape(s: &str) -> std::borrow::Cow<'_, str> {
    quick_xml::escape::escape(s)
}

fn write_attr(out: &mut String, indent: &str, key: &str, value: &AttributeValue) {
    let (tag, text) = match value {
        AttributeValue::String(s) => ("string", escape(s).into_owned()),
        AttributeValue::Integer(i) => ("int", i.to_string()),
        AttributeValue::Real(x) => ("float", format!("{x:?}")),
        AttributeValue::Boolean(b) => ("boolean", b.to_string()),
        AttributeValue::Timestamp(ms) => ("date", format_timestamp(*ms)),
    };
    let _ = writeln!(
        out,
        "{indent}<{tag} key=\"{}\" value=\"{text}\"/>",
        escape(key)
    );
}

/// Serializes a log as XES. Output is deterministic for a given log.
pub fn write_xes(log: &EventLog) -> Vec<u8> {
    let mut out = String::with_capacity(256 + log.n_events() * 160);
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(
        "<log xes.version=\"1.0\" xes.features=\"nested-attributes\" xmlns=\"http://www.xes-standard.org/\">\n",
    );
    out.push_str(
        "  <extension name=\"Concept\" prefix=\"concept\" uri=\"http://www.xes-standard.org/concept.xesext\"/>\n",
    );
    out.push_str(
        "  <extension name=\"Time\" prefix=\"time\" uri=\"http://www.xes-standard.org/time.xesext\"/>\n",
    );
    for trace in log.traces() {
        out.push_str("  <trace>\n");
        write_attr(
            &mut out,
            "    ",
            CONCEPT_NAME,
            &AttributeValue::String(trace.case_id.clone()),
        );
        for (k, v) in &trace.attributes {
            write_attr(&mut out, "    ", k, v);
        }
        for event in &trace.events {
            out.push_str("    <event>\n");
            write_attr(
                &mut out,
                "      ",
                CONCEPT_NAME,
                &AttributeValue::String(event.activity.clone()),
            );
            write_attr(
                &mut out,
                "      ",
                TIMESTAMP,
                &AttributeValue::Timestamp(event.timestamp),
            );
            for (k, v) in &event.payload {
                write_attr(&mut out, "      ", k, v);
            }
            out.push_str("    </event>\n");
        }
        out.push_str("  </trace>\n");
    }
    out.push_str("</log>\n");
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_TRACES: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<log xes.version="1.0">
  <global scope="event"><string key="concept:name" value="__INVALID__"/></global>
  <classifier name="Activity" keys="concept:name"/>
  <string key="concept:name" value="log name"/>
  <trace>
    <string key="concept:name" value="c1"/>
    <int key="AMOUNT" value="100"/>
    <event>
      <string key="concept:name" value="B"/>
      <date key="time:timestamp" value="2020-01-01T00:00:02.000+01:00"/>
      <string key="lifecycle:transition" value="start"/>
    </event>
    <event>
      <string key="concept:name" value="A"/>
      <date key="time:timestamp" value="2019-12-31T23:00:01.000Z"/>
      <list key="things"><values><string key="x" value="y"/></values></list>
    </event>
  </trace>
  <trace>
    <string key="concept:name" value="c2"/>
    <event><string key="concept:name" value="A"/><date key="time:timestamp" value="2020-01-02T00:00:00Z"/></event>
    <event><string key="concept:name" value="C"/><date key="time:timestamp" value="2020-01-02T00:00:01Z"/><int key="n" value="oops"/></event>
    <event><string key="concept:name" value="D &amp; E"/><date key="time:timestamp" value="2020-01-02T00:00:02"/></event>
  </trace>
</log>"#;

    #[test]
    fn parses_counts_order_and_payload() {
        let (log, warnings) = parse_xes_with_warnings(TWO_TRACES.as_bytes()).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.n_events(), 5);
        assert_eq!(warnings, 1);
        let t1 = &log.traces()[0];
        assert_eq!(t1.activities().collect::<Vec<_>>(), ["A", "B"]);
        assert_eq!(t1.attributes["AMOUNT"], AttributeValue::Integer(100));
        assert_eq!(
            t1.events[1].payload["lifecycle:transition"],
            AttributeValue::String("start".into())
        );
        assert_eq!(t1.cycle_time(), 1000);
        assert_eq!(log.alphabet(), ["A", "B", "C", "D & E"]);
    }

    #[test]
    fn missing_timestamp_is_an_error() {
        let xml = r#"<log><trace><string key="concept:name" value="c"/>
            <event><string key="concept:name" value="a"/></event></trace></log>"#;
        assert!(matches!(
            parse_xes(xml.as_bytes()),
            Err(LogError::MissingKey { key: TIMESTAMP, .. })
        ));
    }

    #[test]
    fn bad_timestamp_is_an_error() {
        let xml = r#"<log><trace><string key="concept:name" value="c"/>
            <event><string key="concept:name" value="a"/><date key="time:timestamp" value="yesterday"/></event></trace></log>"#;
        assert!(matches!(
            parse_xes(xml.as_bytes()),
            Err(LogError::BadTimestamp { .. })
        ));
    }

    #[test]
    fn malformed_xml_is_an_error() {
        assert!(matches!(
            parse_xes(b"<log><trace></log>"),
            Err(LogError::Xml(_))
        ));
    }

    #[test]
    fn mixed_kinds_rejected() {
        let xml = r#"<log>
            <trace><string key="concept:name" value="1"/><int key="k" value="1"/>
              <event><string key="concept:name" value="a"/><date key="time:timestamp" value="2020-01-01T00:00:00Z"/></event></trace>
            <trace><string key="concept:name" value="2"/><float key="k" value="1.5"/>
              <event><string key="concept:name" value="a"/><date key="time:timestamp" value="2020-01-01T00:00:00Z"/></event></trace>
        </log>"#;
        assert!(matches!(
            parse_xes(xml.as_bytes()),
            Err(LogError::MixedKinds { .. })
        ));
    }

    #[test]
    fn round_trip_all_kinds() {
        let e = Event::new("act <1>", 1_600_000_000_123)
            .with("s", AttributeValue::String("q\"uote".into()))
            .with("i", AttributeValue::Integer(-7))
            .with("r", AttributeValue::Real(0.1))
            .with("b", AttributeValue::Boolean(true))
            .with("t", AttributeValue::Timestamp(1_600_000_000_999));
        let mut case = Attributes::new();
        case.insert("AMOUNT".into(), AttributeValue::Real(1e300));
        let log = EventLog::new(vec![
            Trace::new("c&1", vec![e], case),
            Trace::new("bare", vec![Event::new("x", 0)], Attributes::new()),
        ])
        .unwrap();
        let bytes = write_xes(&log);
        let back = parse_xes(&bytes).unwrap();
        assert_eq!(back, log);
        assert_eq!(write_xes(&back), bytes);
    }
}
