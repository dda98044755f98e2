//! First-match routing from message keys to agents.
//!
//! A table is an ordered list of rules; each rule pairs a key pattern
//! (exact, or a prefix ending in `*`) with recipient selectors. The first
//! rule whose pattern matches decides the recipients. Tables must end with
//! the catch-all `*` so every key matches something, even if that rule
//! names nobody.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentId, AgentRole};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("invalid key pattern {0:?}: '*' may only appear once, at the end")]
    InvalidPattern(String),
    #[error("routing table must end with the catch-all '*' rule")]
    MissingCatchAll,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KeyPattern {
    Exact(String),
    Prefix(String),
}

impl KeyPattern {
    pub fn parse(pattern: &str) -> Result<Self, RoutingError> {
        match pattern.strip_suffix('*') {
            Some(prefix) if !prefix.contains('*') => Ok(KeyPattern::Prefix(prefix.to_owned())),
            None if !pattern.contains('*') => Ok(KeyPattern::Exact(pattern.to_owned())),
            _ => Err(RoutingError::InvalidPattern(pattern.to_owned())),
        }
    }

    pub fn matches(&self, key: &str) -> bool {
        match self {
            KeyPattern::Exact(exact) => key == exact,
            KeyPattern::Prefix(prefix) => key.starts_with(prefix.as_str()),
        }
    }

    pub fn is_catch_all(&self) -> bool {
        matches!(self, KeyPattern::Prefix(p) if p.is_empty())
    }
}

impl fmt::Display for KeyPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyPattern::Exact(s) => f.write_str(s),
            KeyPattern::Prefix(s) => write!(f, "{s}*"),
        }
    }
}

impl TryFrom<String> for KeyPattern {
    type Error = RoutingError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<KeyPattern> for String {
    fn from(p: KeyPattern) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Role(AgentRole),
    Agent(AgentId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingRule {
    pub pattern: KeyPattern,
    pub recipients: Vec<Selector>,
}

impl RoutingRule {
    pub fn new(pattern: &str, recipients: Vec<Selector>) -> Result<Self, RoutingError> {
        Ok(Self {
            pattern: KeyPattern::parse(pattern)?,
            recipients,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RoutingRule>", into = "Vec<RoutingRule>")]
pub struct RoutingTable {
    rules: Vec<RoutingRule>,
}

impl RoutingTable {
    pub fn new(rules: Vec<RoutingRule>) -> Result<Self, RoutingError> {
        match rules.last() {
            Some(last) if last.pattern.is_catch_all() => Ok(Self { rules }),
            _ => Err(RoutingError::MissingCatchAll),
        }
    }

    /// A table that routes nothing anywhere.
    pub fn drop_all() -> Self {
        Self {
            rules: vec![RoutingRule {
                pattern: KeyPattern::Prefix(String::new()),
                recipients: Vec::new(),
            }],
        }
    }

    pub fn rules(&self) -> &[RoutingRule] {
        &self.rules
    }

    /// Index of the first rule matching `key`.
    pub fn first_match(&self, key: &str) -> usize {
        self.rules
            .iter()
            .position(|r| r.pattern.matches(key))
            .expect("routing table ends with a catch-all")
    }

    /// Expands the first matching rule against `directory`, ascending by
    /// agent id. Selectors naming absent agents or roles contribute nothing.
    pub fn route(&self, key: &str, directory: &BTreeMap<AgentId, AgentRole>) -> Vec<AgentId> {
        let rule = &self.rules[self.first_match(key)];
        let mut out = BTreeSet::new();
        for selector in &rule.recipients {
            match selector {
                Selector::Role(role) => {
                    out.extend(directory.iter().filter(|(_, r)| *r == role).map(|(id, _)| *id));
                }
                Selector::Agent(id) => {
                    if directory.contains_key(id) {
                        out.insert(*id);
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

impl TryFrom<Vec<RoutingRule>> for RoutingTable {
    type Error = RoutingError;

    fn try_from(rules: Vec<RoutingRule>) -> Result<Self, Self::Error> {
        Self::new(rules)
    }
}

impl From<RoutingTable> for Vec<RoutingRule> {
    fn from(table: RoutingTable) -> Self {
        table.rules
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rules: &[(&str, Vec<Selector>)]) -> RoutingTable {
        RoutingTable::new(
            rules
                .iter()
                .map(|(p, r)| RoutingRule::new(p, r.clone()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn prefix_rule_selects_role() {
        let t = table(&[
            ("sensor.*", vec![Selector::Role(AgentRole::AgentProduct)]),
            ("*", vec![]),
        ]);
        let dir: BTreeMap<_, _> = [
            (AgentId(4), AgentRole::AgentProduct),
            (AgentId(2), AgentRole::AgentCustomer),
        ]
        .into();
        assert_eq!(t.route("sensor.temp", &dir), vec![AgentId(4)]);
        assert!(t.route("unknown.x", &dir).is_empty());
    }

    #[test]
    fn recipients_are_deduplicated_and_sorted() {
        let t = table(&[(
            "*",
            vec![
                Selector::Agent(AgentId(9)),
                Selector::Role(AgentRole::AgentImpact),
                Selector::Agent(AgentId(1)),
                Selector::Agent(AgentId(77)),
            ],
        )]);
        let dir: BTreeMap<_, _> = [
            (AgentId(9), AgentRole::AgentImpact),
            (AgentId(1), AgentRole::AgentImpact),
            (AgentId(3), AgentRole::AgentImpact),
        ]
        .into();
        assert_eq!(t.route("x", &dir), vec![AgentId(1), AgentId(3), AgentId(9)]);
    }

    #[test]
    fn patterns_and_catch_all_are_validated() {
        assert_eq!(
            KeyPattern::parse("a*b").unwrap_err(),
            RoutingError::InvalidPattern("a*b".into())
        );
        assert_eq!(
            KeyPattern::parse("a**").unwrap_err(),
            RoutingError::InvalidPattern("a**".into())
        );
        assert_eq!(
            RoutingTable::new(vec![RoutingRule::new("a.*", vec![]).unwrap()]).unwrap_err(),
            RoutingError::MissingCatchAll
        );
        assert_eq!(RoutingTable::new(vec![]).unwrap_err(), RoutingError::MissingCatchAll);
        let json = r#"[{"pattern":"a.b","recipients":[{"role":"AgentImpact"},{"agent":3}]}]"#;
        assert!(serde_json::from_str::<RoutingTable>(json).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let t = table(&[
            ("feedback.customer", vec![Selector::Agent(AgentId(2))]),
            ("*", vec![Selector::Role(AgentRole::AgentKnowledge)]),
        ]);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(
            json,
            r#"[{"pattern":"feedback.customer","recipients":[{"agent":2}]},{"pattern":"*","recipients":[{"role":"AgentKnowledge"}]}]"#
        );
        assert_eq!(serde_json::from_str::<RoutingTable>(&json).unwrap(), t);
    }
}
