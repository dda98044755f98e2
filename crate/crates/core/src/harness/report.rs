//! Run reports, computed from the event log alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::Tick;
use crate::runtime::{EventKind, LogRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Launch {
    pub family: String,
    pub generation: u32,
    /// When the design trigger for this generation was issued.
    pub trigger_tick: Option<Tick>,
    pub design_started: Option<Tick>,
    pub launch_tick: Tick,
    /// Ticks from design start to launch.
    pub design_lead_time: Option<Tick>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeCounts {
    pub total: u64,
    pub by_mode: BTreeMap<String, u64>,
    pub by_source: BTreeMap<String, u64>,
    pub by_activity: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub total_ticks: Tick,
    /// Tick at which the first next-generation product launched.
    pub launch_time: Option<Tick>,
    pub launches: Vec<Launch>,
    pub first_knowledge_tick: Option<Tick>,
    pub first_trigger_tick: Option<Tick>,
    /// Ticks from the first emitted knowledge record to the first design trigger.
    pub loop_closure_latency: Option<Tick>,
    pub knowledge: KnowledgeCounts,
    pub eol_decisions: BTreeMap<String, u64>,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub dropped_messages: u64,
    pub blocked_messages: u64,
    pub unhandled: u64,
    pub migrations: u64,
    pub migrations_refused: u64,
}

fn bump(map: &mut BTreeMap<String, u64>, key: Option<&str>) {
    *map.entry(key.unwrap_or("?").to_owned()).or_default() += 1;
}

impl RunReport {
    pub fn from_log(log: &[LogRecord]) -> Self {
        let mut report = RunReport::default();
        let mut triggers: BTreeMap<(String, u32), Tick> = BTreeMap::new();
        let mut started: BTreeMap<(String, u32), Tick> = BTreeMap::new();

        for r in log {
            let d = r.detail_map();
            let family_gen = || {
                let family = d.get("family").copied().unwrap_or_default().to_owned();
                let generation = d.get("generation").and_then(|g| g.parse().ok()).unwrap_or(0);
                (family, generation)
            };
            match r.event_kind {
                EventKind::RunStarted => {
                    report.scenario = d.get("scenario").copied().unwrap_or_default().to_owned();
                    report.seed = d.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
                }
                EventKind::RunFinished => {
                    report.total_ticks = d.get("ticks").and_then(|s| s.parse().ok()).unwrap_or(r.tick);
                }
                EventKind::KnowledgeEmitted => {
                    report.first_knowledge_tick.get_or_insert(r.tick);
                    report.knowledge.total += 1;
                    bump(&mut report.knowledge.by_mode, d.get("mode").copied());
                    bump(&mut report.knowledge.by_source, d.get("source").copied());
                    bump(&mut report.knowledge.by_activity, d.get("activity").copied());
                }
                EventKind::EolDecided => bump(&mut report.eol_decisions, d.get("decision").copied()),
                EventKind::DesignTriggerIssued => {
                    report.first_trigger_tick.get_or_insert(r.tick);
                    triggers.entry(family_gen()).or_insert(r.tick);
                }
                EventKind::DesignStarted => {
                    started.entry(family_gen()).or_insert(r.tick);
                }
                EventKind::GenerationLaunched => {
                    let key = family_gen();
                    let design_started = started.get(&key).copied();
                    report.launches.push(Launch {
                        trigger_tick: triggers.get(&key).copied(),
                        design_started,
                        launch_tick: r.tick,
                        design_lead_time: design_started.map(|s| r.tick - s),
                        family: key.0,
                        generation: key.1,
                    });
                }
                EventKind::MessageSent => report.messages_sent += 1,
                EventKind::MessageDelivered => report.messages_delivered += 1,
                EventKind::MessageDropped => report.dropped_messages += 1,
                EventKind::MessageBlocked => report.blocked_messages += 1,
                EventKind::Unhandled => report.unhandled += 1,
                EventKind::MigrationArrived => report.migrations += 1,
                EventKind::MigrationRefused => report.migrations_refused += 1,
                _ => {}
            }
        }
        report.launch_time = report.launches.iter().map(|l| l.launch_tick).min();
        report.loop_closure_latency = match (report.first_knowledge_tick, report.first_trigger_tick) {
            (Some(k), Some(t)) => t.checked_sub(k),
            _ => None,
        };
        report
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports always serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<Tick>| v.map_or_else(|| "-".to_owned(), |t| t.to_string());
        let mut rows: Vec<(String, String)> = vec![
            ("scenario".into(), self.scenario.clone()),
            ("seed".into(), self.seed.to_string()),
            ("total_ticks".into(), self.total_ticks.to_string()),
            ("launch_time".into(), opt(self.launch_time)),
            ("first_knowledge_tick".into(), opt(self.first_knowledge_tick)),
            ("first_trigger_tick".into(), opt(self.first_trigger_tick)),
            ("loop_closure_latency".into(), opt(self.loop_closure_latency)),
            ("knowledge.total".into(), self.knowledge.total.to_string()),
        ];
        for (prefix, map) in [
            ("knowledge.mode", &self.knowledge.by_mode),
            ("knowledge.source", &self.knowledge.by_source),
            ("knowledge.activity", &self.knowledge.by_activity),
            ("eol", &self.eol_decisions),
        ] {
            rows.extend(map.iter().map(|(k, v)| (format!("{prefix}.{k}"), v.to_string())));
        }
        for l in &self.launches {
            rows.push((
                format!("launch.{}.g{}", l.family, l.generation),
                format!(
                    "trigger={} design={} launch={} lead={}",
                    opt(l.trigger_tick),
                    opt(l.design_started),
                    l.launch_tick,
                    opt(l.design_lead_time)
                ),
            ));
        }
        for (k, v) in [
            ("messages_sent", self.messages_sent),
            ("messages_delivered", self.messages_delivered),
            ("dropped_messages", self.dropped_messages),
            ("blocked_messages", self.blocked_messages),
            ("unhandled", self.unhandled),
            ("migrations", self.migrations),
            ("migrations_refused", self.migrations_refused),
        ] {
            rows.push((k.into(), v.to_string()));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("run {0:?} has no launch_time")]
pub struct IncomparableRuns(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub feedback: String,
    pub baseline: String,
    pub feedback_launch_time: Tick,
    pub baseline_launch_time: Tick,
    /// Baseline launch time minus feedback launch time.
    pub delta: i64,
    pub improvement: bool,
}

pub fn compare(feedback: &RunReport, baseline: &RunReport) -> Result<ComparisonSummary, IncomparableRuns> {
    let f = feedback
        .launch_time
        .ok_or_else(|| IncomparableRuns(feedback.scenario.clone()))?;
    let b = baseline
        .launch_time
        .ok_or_else(|| IncomparableRuns(baseline.scenario.clone()))?;
    let delta = b as i64 - f as i64;
    Ok(ComparisonSummary {
        feedback: feedback.scenario.clone(),
        baseline: baseline.scenario.clone(),
        feedback_launch_time: f,
        baseline_launch_time: b,
        delta,
        improvement: delta > 0,
    })
}
