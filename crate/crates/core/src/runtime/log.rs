//! Event log records.
//!
//! One JSON object per line with the fixed field order
//! `tick, event_kind, node, agent, msg_id, detail`. The `detail` field is a
//! space-separated list of `key=value` pairs whose values never contain
//! whitespace, so reports can be recomputed from the log alone.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::identity::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    RunStarted,
    RunFinished,
    NodeRegistered,
    ProductRegistered,
    AgentSpawned,
    AgentTerminated,
    PartitionStarted,
    PartitionHealed,
    PeidUpdated,
    PeidRejected,
    MessageSent,
    MessageDelivered,
    MessageDropped,
    MessageBlocked,
    Unhandled,
    MemoryUpdated,
    PhaseChanged,
    EolDecided,
    KnowledgeEmitted,
    KnowledgeStored,
    KnowledgeRejected,
    DesignTriggerIssued,
    DesignTriggerSuppressed,
    DesignStarted,
    GenerationPhase,
    GenerationLaunched,
    MigrationStarted,
    MigrationRefused,
    MigrationHeld,
    MigrationArrived,
}

impl Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: Tick,
    pub event_kind: EventKind,
    pub node: Option<String>,
    pub agent: Option<String>,
    pub msg_id: Option<u64>,
    pub detail: String,
}

impl LogRecord {
    pub fn detail_map(&self) -> BTreeMap<&str, &str> {
        parse_detail(&self.detail)
    }

    pub fn detail_value(&self, key: &str) -> Option<&str> {
        self.detail_map().get(key).copied()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }

    pub fn write_jsonl<'a, W: Write>(records: impl IntoIterator<Item = &'a LogRecord>, mut out: W) -> io::Result<()> {
        for r in records {
            out.write_all(r.to_json_line().as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a JSON-lines log; errors carry the 1-based line number.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<LogRecord>, (usize, String)> {
        let mut out = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| (i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| (i + 1, e.to_string()))?);
        }
        Ok(out)
    }
}

/// Builder for `key=value` detail strings.
#[derive(Debug, Default, Clone)]
pub struct Detail(String);

impl Detail {
    pub fn new() -> Self {
        Self::default()
    }

    /// Whitespace inside a value is replaced with `_`.
    pub fn kv(mut self, key: &str, value: impl Display) -> Self {
        if !self.0.is_empty() {
            self.0.push(' ');
        }
        self.0.push_str(key);
        self.0.push('=');
        for c in value.to_string().chars() {
            self.0.push(if c.is_whitespace() { '_' } else { c });
        }
        self
    }

    pub fn build(self) -> String {
        self.0
    }
}

pub fn parse_detail(detail: &str) -> BTreeMap<&str, &str> {
    detail
        .split_whitespace()
        .filter_map(|pair| pair.split_once('='))
        .collect()
}
