//! Per-product phase machine and end-of-life disposition.
//!
//! The end-of-life phase is widened to include use: delivery to the
//! customer already enters EOL, so customer involvement and automatic
//! in-use data collection are part of the closing of the loop.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LifecycleError {
    #[error("illegal transition: {event} in phase {phase}")]
    IllegalTransition {
        phase: LifecyclePhase,
        event: LifecycleEvent,
    },
    #[error("unknown lifecycle phase {0:?}")]
    UnknownPhase(String),
    #[error("component {component:?} condition {condition} outside [0, 1]")]
    ConditionOutOfRange { component: String, condition: f64 },
    #[error("policy thresholds must satisfy 0 <= reclaim <= component <= reuse <= 1")]
    InvalidPolicy,
    #[error("no component conditions supplied")]
    EmptyConditions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LifecyclePhase {
    #[serde(rename = "BOL_Design")]
    BolDesign,
    #[serde(rename = "BOL_Manufacture")]
    BolManufacture,
    #[serde(rename = "MOL_Distribution")]
    MolDistribution,
    #[serde(rename = "EOL_Use")]
    EolUse,
    #[serde(rename = "EOL_Service")]
    EolService,
    #[serde(rename = "EOL_Recovery")]
    EolRecovery,
    #[serde(rename = "EOL_Disposed")]
    EolDisposed,
}

impl LifecyclePhase {
    pub const ALL: [LifecyclePhase; 7] = [
        LifecyclePhase::BolDesign,
        LifecyclePhase::BolManufacture,
        LifecyclePhase::MolDistribution,
        LifecyclePhase::EolUse,
        LifecyclePhase::EolService,
        LifecyclePhase::EolRecovery,
        LifecyclePhase::EolDisposed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LifecyclePhase::BolDesign => "BOL_Design",
            LifecyclePhase::BolManufacture => "BOL_Manufacture",
            LifecyclePhase::MolDistribution => "MOL_Distribution",
            LifecyclePhase::EolUse => "EOL_Use",
            LifecyclePhase::EolService => "EOL_Service",
            LifecyclePhase::EolRecovery => "EOL_Recovery",
            LifecyclePhase::EolDisposed => "EOL_Disposed",
        }
    }

    /// Reporting order. Service, recovery and disposal share the last
    /// rank because service loops back to use.
    pub fn rank(self) -> u8 {
        match self {
            LifecyclePhase::BolDesign => 0,
            LifecyclePhase::BolManufacture => 1,
            LifecyclePhase::MolDistribution => 2,
            LifecyclePhase::EolUse => 3,
            LifecyclePhase::EolService | LifecyclePhase::EolRecovery | LifecyclePhase::EolDisposed => 4,
        }
    }
}

impl fmt::Display for LifecyclePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LifecyclePhase {
    type Err = LifecycleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| LifecycleError::UnknownPhase(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LifecycleEvent {
    DesignComplete,
    Manufactured,
    Shipped,
    Delivered,
    FaultReported,
    Repaired,
    RetirementRequested,
    DispositionExecuted,
}

impl LifecycleEvent {
    pub const ALL: [LifecycleEvent; 8] = [
        LifecycleEvent::DesignComplete,
        LifecycleEvent::Manufactured,
        LifecycleEvent::Shipped,
        LifecycleEvent::Delivered,
        LifecycleEvent::FaultReported,
        LifecycleEvent::Repaired,
        LifecycleEvent::RetirementRequested,
        LifecycleEvent::DispositionExecuted,
    ];
}

impl fmt::Display for LifecycleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn initial_state() -> LifecyclePhase {
    LifecyclePhase::BolDesign
}

pub fn advance(phase: LifecyclePhase, event: LifecycleEvent) -> Result<LifecyclePhase, LifecycleError> {
    use LifecycleEvent as E;
    use LifecyclePhase as P;
    let next = match (phase, event) {
        (P::BolDesign, E::DesignComplete) => P::BolManufacture,
        (P::BolManufacture, E::Manufactured) => P::MolDistribution,
        (P::MolDistribution, E::Delivered) => P::EolUse,
        (P::EolUse, E::FaultReported) => P::EolService,
        (P::EolService, E::Repaired) => P::EolUse,
        (P::EolUse, E::RetirementRequested) => P::EolRecovery,
        (P::EolRecovery, E::DispositionExecuted) => P::EolDisposed,
        _ => return Err(LifecycleError::IllegalTransition { phase, event }),
    };
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCondition")]
pub struct ComponentCondition {
    component: String,
    condition: f64,
    hazardous: bool,
}

#[derive(Deserialize)]
struct RawCondition {
    component: String,
    condition: f64,
    hazardous: bool,
}

impl TryFrom<RawCondition> for ComponentCondition {
    type Error = LifecycleError;

    fn try_from(raw: RawCondition) -> Result<Self, Self::Error> {
        Self::new(raw.component, raw.condition, raw.hazardous)
    }
}

impl ComponentCondition {
    pub fn new(component: impl Into<String>, condition: f64, hazardous: bool) -> Result<Self, LifecycleError> {
        let component = component.into();
        if !(0.0..=1.0).contains(&condition) {
            return Err(LifecycleError::ConditionOutOfRange { component, condition });
        }
        Ok(Self {
            component,
            condition,
            hazardous,
        })
    }

    pub fn component(&self) -> &str {
        &self.component
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn hazardous(&self) -> bool {
        self.hazardous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EolDecision {
    ReuseRefurbish,
    ReuseComponentsDisassembly,
    ReclaimNoDisassembly,
    ReclaimWithDisassembly,
    DisposeNoIncineration,
    DisposeIncineration,
}

impl EolDecision {
    pub const ALL: [EolDecision; 6] = [
        EolDecision::ReuseRefurbish,
        EolDecision::ReuseComponentsDisassembly,
        EolDecision::ReclaimNoDisassembly,
        EolDecision::ReclaimWithDisassembly,
        EolDecision::DisposeNoIncineration,
        EolDecision::DisposeIncineration,
    ];

    /// Preference rank; higher keeps more value in the product. The two
    /// reclamation outcomes share a rank, as do the two disposals.
    pub fn rank(self) -> u8 {
        match self {
            EolDecision::ReuseRefurbish => 3,
            EolDecision::ReuseComponentsDisassembly => 2,
            EolDecision::ReclaimNoDisassembly | EolDecision::ReclaimWithDisassembly => 1,
            EolDecision::DisposeNoIncineration | EolDecision::DisposeIncineration => 0,
        }
    }
}

impl fmt::Display for EolDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for EolDecision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.to_string() == s)
            .ok_or_else(|| format!("unknown EOL decision {s:?}"))
    }
}

/// Component spread (distance from the mean) above which reclamation
/// separates components first.
pub const DISASSEMBLY_SPREAD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy")]
pub struct EolPolicy {
    reuse_threshold: f64,
    component_threshold: f64,
    reclaim_threshold: f64,
}

#[derive(Deserialize)]
struct RawPolicy {
    reuse_threshold: f64,
    component_threshold: f64,
    reclaim_threshold: f64,
}

impl TryFrom<RawPolicy> for EolPolicy {
    type Error = LifecycleError;

    fn try_from(raw: RawPolicy) -> Result<Self, Self::Error> {
        Self::new(raw.reuse_threshold, raw.component_threshold, raw.reclaim_threshold)
    }
}

impl EolPolicy {
    pub fn new(reuse: f64, component: f64, reclaim: f64) -> Result<Self, LifecycleError> {
        if !(0.0 <= reclaim && reclaim <= component && component <= reuse && reuse <= 1.0) {
            return Err(LifecycleError::InvalidPolicy);
        }
        Ok(Self {
            reuse_threshold: reuse,
            component_threshold: component,
            reclaim_threshold: reclaim,
        })
    }

    pub fn reuse_threshold(&self) -> f64 {
        self.reuse_threshold
    }

    pub fn component_threshold(&self) -> f64 {
        self.component_threshold
    }

    pub fn reclaim_threshold(&self) -> f64 {
        self.reclaim_threshold
    }
}

impl Default for EolPolicy {
    fn default() -> Self {
        Self {
            reuse_threshold: 0.8,
            component_threshold: 0.6,
            reclaim_threshold: 0.3,
        }
    }
}

/// Picks one of the six end-of-life scenarios from component conditions.
///
/// Ladder, first hit wins: mean condition good enough to refurbish the
/// whole product; otherwise the best component is worth reusing;
/// otherwise the mean still justifies material reclamation (with
/// disassembly when some reclaimable component sits far from the mean);
/// otherwise dispose, incinerating when anything is hazardous.
pub fn decide_eol(conditions: &[ComponentCondition], policy: &EolPolicy) -> Result<EolDecision, LifecycleError> {
    if conditions.is_empty() {
        return Err(LifecycleError::EmptyConditions);
    }
    let mean = conditions.iter().map(|c| c.condition).sum::<f64>() / conditions.len() as f64;
    let best = conditions.iter().map(|c| c.condition).fold(f64::NEG_INFINITY, f64::max);

    let decision = if mean >= policy.reuse_threshold {
        EolDecision::ReuseRefurbish
    } else if best >= policy.component_threshold {
        EolDecision::ReuseComponentsDisassembly
    } else if mean >= policy.reclaim_threshold {
        let dispersed = conditions
            .iter()
            .any(|c| c.condition >= policy.reclaim_threshold && (c.condition - mean).abs() > DISASSEMBLY_SPREAD);
        if dispersed {
            EolDecision::ReclaimWithDisassembly
        } else {
            EolDecision::ReclaimNoDisassembly
        }
    } else if conditions.iter().any(|c| c.hazardous) {
        EolDecision::DisposeIncineration
    } else {
        EolDecision::DisposeNoIncineration
    };
    Ok(decision)
}
