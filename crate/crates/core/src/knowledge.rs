//! Knowledge repository fed from the extended end-of-life phase.
//!
//! Records are classified on two axes: mode (tacit or explicit) and source
//! (the product itself or the collective of external actors). The innovation
//! activity a record belongs to constrains which modes are admissible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{ProductId, SensorEvent, SensorKind, Tick};

/// How many ranked issue keys an insight keeps.
pub const TOP_ISSUES: usize = 10;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("customer feedback text is empty")]
    EmptyFeedback,
    #[error("mode {mode} is not admissible for activity {activity}")]
    ModeNotAdmissible { activity: Activity, mode: KnowledgeMode },
    #[error("generation must be at least 1")]
    ZeroGeneration,
    #[error("record {0} already stored")]
    DuplicateRecord(u64),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KnowledgeMode {
    Tacit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KnowledgeSource {
    SelfSource,
    Collective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Activity {
    UserInsight,
    MarketInvestigation,
    IdeaConceptGeneration,
    ProductRequirements,
    EngineeringDesign,
    MarketingLaunch,
    Sales,
    Customer,
    IntelligentProduct,
}

impl Activity {
    pub const ALL: [Activity; 9] = [
        Activity::UserInsight,
        Activity::MarketInvestigation,
        Activity::IdeaConceptGeneration,
        Activity::ProductRequirements,
        Activity::EngineeringDesign,
        Activity::MarketingLaunch,
        Activity::Sales,
        Activity::Customer,
        Activity::IntelligentProduct,
    ];
}

macro_rules! display_as_debug {
    ($($ty:ty),*) => {
        $(impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Debug::fmt(self, f)
            }
        })*
    };
}

display_as_debug!(KnowledgeMode, KnowledgeSource, Activity);

/// Admissible knowledge modes per innovation activity.
pub fn classify_activity(activity: Activity) -> &'static [KnowledgeMode] {
    use KnowledgeMode::*;
    match activity {
        Activity::UserInsight => &[Tacit, Explicit],
        Activity::MarketInvestigation => &[Explicit],
        Activity::IdeaConceptGeneration => &[Tacit, Explicit],
        Activity::ProductRequirements => &[Explicit],
        Activity::EngineeringDesign => &[Explicit],
        Activity::MarketingLaunch => &[Tacit, Explicit],
        Activity::Sales => &[Tacit, Explicit],
        Activity::Customer => &[Tacit, Explicit],
        Activity::IntelligentProduct => &[Tacit],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct KnowledgeRecord {
    record_id: u64,
    product_id: ProductId,
    generation: u32,
    activity: Activity,
    mode: KnowledgeMode,
    source: KnowledgeSource,
    payload: String,
    created_at: Tick,
}

#[derive(Deserialize)]
struct RawRecord {
    record_id: u64,
    product_id: ProductId,
    generation: u32,
    activity: Activity,
    mode: KnowledgeMode,
    source: KnowledgeSource,
    payload: String,
    created_at: Tick,
}

impl TryFrom<RawRecord> for KnowledgeRecord {
    type Error = KnowledgeError;

    fn try_from(r: RawRecord) -> Result<Self, Self::Error> {
        KnowledgeRecord::new(
            r.record_id,
            r.product_id,
            r.generation,
            r.activity,
            r.mode,
            r.source,
            r.payload,
            r.created_at,
        )
    }
}

impl KnowledgeRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        record_id: u64,
        product_id: ProductId,
        generation: u32,
        activity: Activity,
        mode: KnowledgeMode,
        source: KnowledgeSource,
        payload: impl Into<String>,
        created_at: Tick,
    ) -> Result<Self, KnowledgeError> {
        if generation == 0 {
            return Err(KnowledgeError::ZeroGeneration);
        }
        if !classify_activity(activity).contains(&mode) {
            return Err(KnowledgeError::ModeNotAdmissible { activity, mode });
        }
        Ok(Self {
            record_id,
            product_id,
            generation,
            activity,
            mode,
            source,
            payload: payload.into(),
            created_at,
        })
    }

    /// Feedback returned by a customer: explicit, from the collective.
    pub fn customer_feedback(
        record_id: u64,
        product_id: ProductId,
        generation: u32,
        text: &str,
        created_at: Tick,
    ) -> Result<Self, KnowledgeError> {
        if text.trim().is_empty() {
            return Err(KnowledgeError::EmptyFeedback);
        }
        Self::new(
            record_id,
            product_id,
            generation,
            Activity::Customer,
            KnowledgeMode::Explicit,
            KnowledgeSource::Collective,
            text,
            created_at,
        )
    }

    /// One tacit, self-sourced record per summary category, ids counting
    /// up from `first_id`.
    pub fn from_tacit_summary(
        first_id: u64,
        summary: &TacitSummary,
        product_id: &ProductId,
        generation: u32,
        created_at: Tick,
    ) -> Result<Vec<Self>, KnowledgeError> {
        summary
            .categories()
            .enumerate()
            .map(|(i, (_, text))| {
                Self::new(
                    first_id + i as u64,
                    product_id.clone(),
                    generation,
                    Activity::IntelligentProduct,
                    KnowledgeMode::Tacit,
                    KnowledgeSource::SelfSource,
                    text,
                    created_at,
                )
            })
            .collect()
    }

    pub fn record_id(&self) -> u64 {
        self.record_id
    }

    pub fn product_id(&self) -> &ProductId {
        &self.product_id
    }

    pub fn family(&self) -> &str {
        self.product_id.family()
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn activity(&self) -> Activity {
        self.activity
    }

    pub fn mode(&self) -> KnowledgeMode {
        self.mode
    }

    pub fn source(&self) -> KnowledgeSource {
        self.source
    }

    pub fn payload(&self) -> &str {
        &self.payload
    }

    pub fn created_at(&self) -> Tick {
        self.created_at
    }
}

/// Automatically collected product data grouped by category (use,
/// environment, failure).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacitSummary {
    categories: BTreeMap<SensorKind, String>,
}

impl TacitSummary {
    pub fn with(mut self, kind: SensorKind, text: impl Into<String>) -> Self {
        self.categories.insert(kind, text.into());
        self
    }

    /// Summarizes readings as `sensor×count` per category, sensors sorted
    /// by name.
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a SensorEvent>) -> Self {
        let mut counts: BTreeMap<SensorKind, BTreeMap<&str, usize>> = BTreeMap::new();
        for e in events {
            *counts.entry(e.kind).or_default().entry(&e.sensor).or_default() += 1;
        }
        let categories = counts
            .into_iter()
            .map(|(kind, sensors)| {
                let text = sensors
                    .into_iter()
                    .map(|(name, n)| format!("{name}×{n}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                (kind, text)
            })
            .collect();
        Self { categories }
    }

    pub fn categories(&self) -> impl Iterator<Item = (SensorKind, &str)> {
        self.categories.iter().map(|(k, v)| (*k, v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

/// Lowercased alphabetic words of a payload, deduplicated.
pub fn issue_keys(payload: &str) -> BTreeSet<String> {
    payload
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignInsight {
    pub family: String,
    pub generation: u32,
    pub record_count: usize,
    pub tacit_count: usize,
    pub explicit_count: usize,
    pub top_issues: Vec<String>,
}

/// Request to start designing the next product generation of a family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignTrigger {
    pub family: String,
    pub generation: u32,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeRepository {
    records: Vec<KnowledgeRecord>,
    ids: BTreeSet<u64>,
    issued: BTreeSet<(String, u32)>,
}

impl KnowledgeRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[KnowledgeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, record_id: u64) -> bool {
        self.ids.contains(&record_id)
    }

    pub fn count_mode(&self, mode: KnowledgeMode) -> usize {
        self.records.iter().filter(|r| r.mode == mode).count()
    }

    fn next_id(&self) -> u64 {
        self.ids.last().map_or(1, |max| max + 1)
    }

    /// Stores a record under its existing id.
    pub fn insert(&mut self, record: KnowledgeRecord) -> Result<(), KnowledgeError> {
        if !self.ids.insert(record.record_id) {
            return Err(KnowledgeError::DuplicateRecord(record.record_id));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn ingest_explicit(
        &mut self,
        product_id: &ProductId,
        generation: u32,
        feedback_text: &str,
        tick: Tick,
    ) -> Result<KnowledgeRecord, KnowledgeError> {
        let record =
            KnowledgeRecord::customer_feedback(self.next_id(), product_id.clone(), generation, feedback_text, tick)?;
        self.insert(record.clone())?;
        Ok(record)
    }

    pub fn ingest_tacit(
        &mut self,
        summary: &TacitSummary,
        product_id: &ProductId,
        generation: u32,
        tick: Tick,
    ) -> Result<Vec<KnowledgeRecord>, KnowledgeError> {
        let records = KnowledgeRecord::from_tacit_summary(self.next_id(), summary, product_id, generation, tick)?;
        for r in &records {
            self.insert(r.clone())?;
        }
        Ok(records)
    }

    /// Counts and ranked issue keys for one family generation. Issues rank
    /// by the number of records mentioning them, ties lexicographic.
    pub fn aggregate(&self, family: &str, generation: u32) -> DesignInsight {
        let mut insight = DesignInsight {
            family: family.to_owned(),
            generation,
            record_count: 0,
            tacit_count: 0,
            explicit_count: 0,
            top_issues: Vec::new(),
        };
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for r in self
            .records
            .iter()
            .filter(|r| r.family() == family && r.generation == generation)
        {
            insight.record_count += 1;
            match r.mode {
                KnowledgeMode::Tacit => insight.tacit_count += 1,
                KnowledgeMode::Explicit => insight.explicit_count += 1,
            }
            for key in issue_keys(&r.payload) {
                *freq.entry(key).or_default() += 1;
            }
        }
        let mut ranked: Vec<_> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        insight.top_issues = ranked.into_iter().take(TOP_ISSUES).map(|(k, _)| k).collect();
        insight
    }

    /// Issues a trigger for the next generation the first time the insight
    /// reaches `threshold` records; later calls for the same generation
    /// return `None`.
    pub fn check_loop_closure(&mut self, insight: &DesignInsight, threshold: NonZeroUsize) -> Option<DesignTrigger> {
        if insight.record_count < threshold.get() {
            return None;
        }
        if !self.issued.insert((insight.family.clone(), insight.generation)) {
            return None;
        }
        Some(DesignTrigger {
            family: insight.family.clone(),
            generation: insight.generation + 1,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), KnowledgeError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, KnowledgeError> {
        let mut repo = Self::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|source| KnowledgeError::Parse { line: i + 1, source })?;
            repo.insert(record)?;
        }
        Ok(repo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid() -> ProductId {
        ProductId::parse("p1@urn:acme").unwrap()
    }

    #[test]
    fn table_examples() {
        assert_eq!(
            classify_activity(Activity::MarketInvestigation),
            &[KnowledgeMode::Explicit]
        );
        assert_eq!(classify_activity(Activity::IntelligentProduct), &[KnowledgeMode::Tacit]);
        let union: BTreeSet<_> = Activity::ALL
            .iter()
            .flat_map(|a| classify_activity(*a).iter().copied())
            .collect();
        assert_eq!(union, [KnowledgeMode::Tacit, KnowledgeMode::Explicit].into());
    }

    #[test]
    fn explicit_ingest() {
        let mut repo = KnowledgeRepository::new();
        let r = repo.ingest_explicit(&pid(), 1, "battery swells", 40).unwrap();
        assert_eq!(r.mode(), KnowledgeMode::Explicit);
        assert_eq!(r.source(), KnowledgeSource::Collective);
        assert_eq!(r.activity(), Activity::Customer);
        assert_eq!(r.created_at(), 40);
        assert!(matches!(
            repo.ingest_explicit(&pid(), 1, "", 41),
            Err(KnowledgeError::EmptyFeedback)
        ));
        assert_eq!(repo.len(), 1);
    }

    #[test]
    fn explicit_counter_oracle() {
        let mut repo = KnowledgeRepository::new();
        let mut n = 0usize;
        for i in 0..37 {
            repo.ingest_explicit(&pid(), 1, &format!("note {i}"), i).unwrap();
            n += 1;
        }
        assert_eq!(repo.count_mode(KnowledgeMode::Explicit), n);
    }

    #[test]
    fn tacit_ingest() {
        let mut repo = KnowledgeRepository::new();
        let one = TacitSummary::default().with(SensorKind::Failure, "overheat×3");
        let recs = repo.ingest_tacit(&one, &pid(), 1, 7).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].mode(), KnowledgeMode::Tacit);
        assert_eq!(recs[0].source(), KnowledgeSource::SelfSource);

        assert!(repo
            .ingest_tacit(&TacitSummary::default(), &pid(), 1, 8)
            .unwrap()
            .is_empty());

        let all = TacitSummary::default()
            .with(SensorKind::Use, "cycles×10")
            .with(SensorKind::Environment, "humidity×2")
            .with(SensorKind::Failure, "overheat×1");
        let recs = repo.ingest_tacit(&all, &pid(), 1, 9).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.mode() == KnowledgeMode::Tacit));
        let ids: BTreeSet<_> = repo.records().iter().map(|r| r.record_id()).collect();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn summary_from_events_groups_by_kind() {
        let ev = |sensor: &str, kind| SensorEvent {
            sensor: sensor.into(),
            kind,
            value: 1.0,
            unit: "u".into(),
            sim_time: 0,
        };
        let events = [
            ev("overheat", SensorKind::Failure),
            ev("overheat", SensorKind::Failure),
            ev("cycles", SensorKind::Use),
            ev("overheat", SensorKind::Failure),
        ];
        let s = TacitSummary::from_events(&events);
        let cats: Vec<_> = s.categories().collect();
        assert_eq!(
            cats,
            vec![(SensorKind::Use, "cycles×1"), (SensorKind::Failure, "overheat×3")]
        );
    }

    #[test]
    fn record_rejects_inadmissible_mode() {
        let err = KnowledgeRecord::new(
            1,
            pid(),
            1,
            Activity::IntelligentProduct,
            KnowledgeMode::Explicit,
            KnowledgeSource::SelfSource,
            "x",
            0,
        )
        .unwrap_err();
        assert!(matches!(err, KnowledgeError::ModeNotAdmissible { .. }));
    }

    #[test]
    fn aggregate_counts_and_ranks() {
        let mut repo = KnowledgeRepository::new();
        assert_eq!(repo.aggregate("urn:acme", 1).record_count, 0);
        assert!(repo.aggregate("urn:acme", 1).top_issues.is_empty());
        for text in ["Display too dim", "display flickers", "battery swells"] {
            repo.ingest_explicit(&pid(), 1, text, 1).unwrap();
        }
        let s = TacitSummary::default()
            .with(SensorKind::Failure, "overheat×2")
            .with(SensorKind::Use, "display×4");
        repo.ingest_tacit(&s, &pid(), 1, 2).unwrap();
        repo.ingest_explicit(&pid(), 2, "other generation", 3).unwrap();

        let insight = repo.aggregate("urn:acme", 1);
        assert_eq!(insight.record_count, 5);
        assert_eq!(insight.tacit_count, 2);
        assert_eq!(insight.explicit_count, 3);
        assert_eq!(insight.top_issues[0], "display");
        assert_eq!(&insight.top_issues[1..4], ["battery", "dim", "flickers"]);
    }

    #[test]
    fn loop_closure_is_idempotent() {
        let k = NonZeroUsize::new(3).unwrap();
        let mut repo = KnowledgeRepository::new();
        for i in 0..2 {
            repo.ingest_explicit(&pid(), 1, "x", i).unwrap();
        }
        let below = repo.aggregate("urn:acme", 1);
        assert!(repo.check_loop_closure(&below, k).is_none());
        repo.ingest_explicit(&pid(), 1, "x", 3).unwrap();
        let at = repo.aggregate("urn:acme", 1);
        let mut triggers = 0;
        for _ in 0..2 {
            if let Some(t) = repo.check_loop_closure(&at, k) {
                assert_eq!(t.generation, 2);
                triggers += 1;
            }
        }
        assert_eq!(triggers, 1);
    }

    #[test]
    fn jsonl_persistence() {
        let mut repo = KnowledgeRepository::new();
        repo.ingest_explicit(&pid(), 1, "battery swells", 4).unwrap();
        let mut buf = Vec::new();
        repo.write_jsonl(&mut buf).unwrap();
        let back = KnowledgeRepository::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back.records(), repo.records());

        let bad = b"{\"record_id\":1}\n";
        assert!(matches!(
            KnowledgeRepository::read_jsonl(&bad[..]),
            Err(KnowledgeError::Parse { line: 1, .. })
        ));
    }
}
