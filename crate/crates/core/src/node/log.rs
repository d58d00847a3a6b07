use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    ParamsReady,
    PubkeyPublished,
    PubkeyReceived,
    KeyExchangeComplete,
    KeyConfirmOk,
    KeyMismatchDetected,
    PubkeyInvalid,
    AuthOk,
    AuthFail,
    SessionAborted,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::ParamsReady,
        EventKind::PubkeyPublished,
        EventKind::PubkeyReceived,
        EventKind::KeyExchangeComplete,
        EventKind::KeyConfirmOk,
        EventKind::KeyMismatchDetected,
        EventKind::PubkeyInvalid,
        EventKind::AuthOk,
        EventKind::AuthFail,
        EventKind::SessionAborted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ParamsReady => "PARAMS_READY",
            EventKind::PubkeyPublished => "PUBKEY_PUBLISHED",
            EventKind::PubkeyReceived => "PUBKEY_RECEIVED",
            EventKind::KeyExchangeComplete => "KEY_EXCHANGE_COMPLETE",
            EventKind::KeyConfirmOk => "KEY_CONFIRM_OK",
            EventKind::KeyMismatchDetected => "KEY_MISMATCH_DETECTED",
            EventKind::PubkeyInvalid => "PUBKEY_INVALID",
            EventKind::AuthOk => "AUTH_OK",
            EventKind::AuthFail => "AUTH_FAIL",
            EventKind::SessionAborted => "SESSION_ABORTED",
        }
    }

    /// Events that mean tampering (or a wrong key) was noticed.
    pub fn is_detection(self) -> bool {
        matches!(self, EventKind::KeyMismatchDetected | EventKind::PubkeyInvalid | EventKind::AuthFail)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown log event {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEvent {
    /// ISO-8601 UTC, millisecond precision.
    pub timestamp: String,
    pub node_id: String,
    pub event: EventKind,
    pub detail: String,
}

impl LogEvent {
    /// `<timestamp> <node_id> <EVENT> <detail>`
    pub fn to_line(&self) -> String {
        if self.detail.is_empty() {
            format!("{} {} {}", self.timestamp, self.node_id, self.event)
        } else {
            format!("{} {} {} {}", self.timestamp, self.node_id, self.event, self.detail)
        }
    }

    pub fn parse_line(line: &str) -> Result<Self, Error> {
        let mut parts = line.splitn(4, ' ');
        let (Some(timestamp), Some(node_id), Some(event)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parameter(format!("malformed log line {line:?}")));
        };
        Ok(LogEvent {
            timestamp: timestamp.to_owned(),
            node_id: node_id.to_owned(),
            event: event.parse()?,
            detail: parts.next().unwrap_or("").to_owned(),
        })
    }
}

/// Append-only per-node event list with non-decreasing timestamps.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    node_id: String,
    events: Vec<LogEvent>,
    last: Option<DateTime<Utc>>,
}

impl EventLog {
    pub fn new(node_id: &str) -> Self {
        EventLog { node_id: node_id.to_owned(), events: Vec::new(), last: None }
    }

    pub fn record(&mut self, event: EventKind, detail: impl Into<String>) {
        let mut now = Utc::now();
        if let Some(last) = self.last {
            now = now.max(last);
        }
        self.last = Some(now);
        self.events.push(LogEvent {
            timestamp: now.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string(),
            node_id: self.node_id.clone(),
            event,
            detail: detail.into(),
        });
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.event == kind).count()
    }

    pub fn contains(&self, kind: EventKind) -> bool {
        self.count(kind) > 0
    }

    /// One line per event, in order, then flush.
    pub fn emit(&self, sink: &mut dyn Write) -> io::Result<()> {
        for e in &self.events {
            writeln!(sink, "{}", e.to_line())?;
        }
        sink.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format_round_trips() {
        let mut log = EventLog::new("drone0");
        log.record(EventKind::PubkeyInvalid, "degenerate public value from drone1");
        let line = log.events()[0].to_line();
        let mut fields = line.split(' ');
        let ts = fields.next().unwrap();
        assert_eq!(ts.len(), "2024-01-01T00:00:00.000Z".len());
        assert!(ts.ends_with('Z'));
        assert_eq!(fields.next(), Some("drone0"));
        assert_eq!(fields.next(), Some("PUBKEY_INVALID"));
        assert_eq!(LogEvent::parse_line(&line).unwrap(), log.events()[0]);
    }

    #[test]
    fn empty_log_emits_nothing() {
        let mut out = Vec::new();
        EventLog::new("drone0").emit(&mut out).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn timestamps_never_go_backwards() {
        let mut log = EventLog::new("drone1");
        for _ in 0..50 {
            log.record(EventKind::AuthOk, "x");
        }
        let ts: Vec<_> = log.events().iter().map(|e| e.timestamp.clone()).collect();
        let mut sorted = ts.clone();
        sorted.sort();
        assert_eq!(ts, sorted);
    }
}
