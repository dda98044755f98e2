//! Product identity and the embedded information device (PEID).
//!
//! A [`ProductId`] joins a physical product with its information
//! counterpart using the `serial@uri` form: the serial names the instance,
//! the URI names the information source that can be queried and updated
//! for it. The rendered string is the canonical representation everywhere
//! else in the crate (event logs, scenario files, repositories).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time. Ticks are integers so that runs replay exactly.
pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("malformed serial {0:?}: must be non-empty without '@' or whitespace")]
    MalformedSerial(String),
    #[error("malformed uri {0:?}: must be an absolute uri without '@' or whitespace")]
    MalformedUri(String),
    #[error("malformed product id {0:?}: expected exactly one '@' between non-empty halves")]
    Malformed(String),
    #[error("sensor event at tick {event} is earlier than log tail at tick {tail}")]
    NonMonotonicTime { tail: Tick, event: Tick },
    #[error("a PEID must carry the UniqueId capability")]
    MissingUniqueId,
}

/// `serial@uri` product identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProductId {
    serial: String,
    uri: String,
}

impl ProductId {
    /// Builds an identity from its two halves.
    ///
    /// The URI must be absolute (RFC 3986 scheme followed by `:` and a
    /// non-empty remainder). Neither half may contain `@` or whitespace so
    /// that the rendered form splits back unambiguously.
    pub fn mint(serial: &str, uri: &str) -> Result<Self, IdentityError> {
        if serial.is_empty() || serial.contains('@') || serial.chars().any(char::is_whitespace) {
            return Err(IdentityError::MalformedSerial(serial.to_owned()));
        }
        if !is_absolute_uri(uri) {
            return Err(IdentityError::MalformedUri(uri.to_owned()));
        }
        Ok(Self {
            serial: serial.to_owned(),
            uri: uri.to_owned(),
        })
    }

    pub fn parse(rendered: &str) -> Result<Self, IdentityError> {
        let mut halves = rendered.split('@');
        let (Some(serial), Some(uri), None) = (halves.next(), halves.next(), halves.next()) else {
            return Err(IdentityError::Malformed(rendered.to_owned()));
        };
        if serial.is_empty() || uri.is_empty() {
            return Err(IdentityError::Malformed(rendered.to_owned()));
        }
        Self::mint(serial, uri)
    }

    pub fn serial(&self) -> &str {
        &self.serial
    }

    pub fn uri(&self) -> &str {
        &self.uri
    }

    /// The product family is the information source shared by every
    /// instance of a product line.
    pub fn family(&self) -> &str {
        &self.uri
    }
}

fn is_absolute_uri(uri: &str) -> bool {
    if uri.contains('@') || uri.chars().any(char::is_whitespace) {
        return false;
    }
    let Some((scheme, rest)) = uri.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    let starts_alpha = chars.next().is_some_and(|c| c.is_ascii_alphabetic());
    starts_alpha && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) && !rest.is_empty()
}

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.serial, self.uri)
    }
}

impl FromStr for ProductId {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for ProductId {
    type Error = IdentityError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<ProductId> for String {
    fn from(id: ProductId) -> Self {
        id.to_string()
    }
}

/// The five properties an intelligent product may possess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PeidCapability {
    UniqueId,
    Communication,
    SelfStorage,
    FeatureLanguage,
    DecisionMaking,
}

impl PeidCapability {
    pub const ALL: [PeidCapability; 5] = [
        PeidCapability::UniqueId,
        PeidCapability::Communication,
        PeidCapability::SelfStorage,
        PeidCapability::FeatureLanguage,
        PeidCapability::DecisionMaking,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntelligenceLevel {
    NotIntelligent,
    Level1,
    /// Decision oriented.
    Level2,
}

impl fmt::Display for IntelligenceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Level 1 needs identity, communication and self storage; level 2 needs
/// all five properties.
pub fn classify_intelligence(capabilities: &BTreeSet<PeidCapability>) -> IntelligenceLevel {
    use PeidCapability::*;
    if PeidCapability::ALL.iter().all(|c| capabilities.contains(c)) {
        IntelligenceLevel::Level2
    } else if [UniqueId, Communication, SelfStorage]
        .iter()
        .all(|c| capabilities.contains(c))
    {
        IntelligenceLevel::Level1
    } else {
        IntelligenceLevel::NotIntelligent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntelligenceChannel {
    ThroughNetwork,
    AtObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntelligenceGranularity {
    Item,
    Container,
}

/// Where a product's intelligence lives. Descriptive only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntelligenceLocation {
    pub channel: IntelligenceChannel,
    pub granularity: IntelligenceGranularity,
}

impl Default for IntelligenceLocation {
    fn default() -> Self {
        Self {
            channel: IntelligenceChannel::AtObject,
            granularity: IntelligenceGranularity::Item,
        }
    }
}

/// What a reading describes; drives the tacit knowledge summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    Use,
    Environment,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorEvent {
    pub sensor: String,
    pub kind: SensorKind,
    pub value: f64,
    pub unit: String,
    pub sim_time: Tick,
}

/// Product embedded information device: identity, capabilities, a
/// self-descriptive memory and an append-only sensor log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peid {
    product_id: ProductId,
    capabilities: BTreeSet<PeidCapability>,
    memory: BTreeMap<String, String>,
    event_log: Vec<SensorEvent>,
    location: IntelligenceLocation,
}

impl Peid {
    pub fn new(product_id: ProductId, capabilities: BTreeSet<PeidCapability>) -> Result<Self, IdentityError> {
        if !capabilities.contains(&PeidCapability::UniqueId) {
            return Err(IdentityError::MissingUniqueId);
        }
        Ok(Self {
            product_id,
            capabilities,
            memory: BTreeMap::new(),
            event_log: Vec::new(),
            location: IntelligenceLocation::default(),
        })
    }

    pub fn with_location(mut self, location: IntelligenceLocation) -> Self {
        self.location = location;
        self
    }

    pub fn with_memory(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.memory.insert(key.into(), value.into());
        self
    }

    pub fn product_id(&self) -> &ProductId {
        &self.product_id
    }

    pub fn capabilities(&self) -> &BTreeSet<PeidCapability> {
        &self.capabilities
    }

    pub fn memory(&self) -> &BTreeMap<String, String> {
        &self.memory
    }

    pub fn event_log(&self) -> &[SensorEvent] {
        &self.event_log
    }

    pub fn location(&self) -> IntelligenceLocation {
        self.location
    }

    pub fn intelligence(&self) -> IntelligenceLevel {
        classify_intelligence(&self.capabilities)
    }

    /// Appends a reading. Readings must arrive in non-decreasing time
    /// order; the log is never rewritten.
    pub fn record_event(mut self, event: SensorEvent) -> Result<Self, IdentityError> {
        if let Some(tail) = self.event_log.last() {
            if event.sim_time < tail.sim_time {
                return Err(IdentityError::NonMonotonicTime {
                    tail: tail.sim_time,
                    event: event.sim_time,
                });
            }
        }
        self.event_log.push(event);
        Ok(self)
    }
}
