//! Attributes, threshold access-policy trees and the ordered privilege
//! structure that maps an attribute set onto an access level.
//!
//! Level 1 is the most privileged. A structure with `k` levels guards a
//! record split into `k` segments; a requester is classified at the first
//! level whose policy their attributes satisfy.

mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use parse::parse_policy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("invalid attribute {0:?}: must be non-empty and free of whitespace and `(),`")]
    InvalidAttribute(String),
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("threshold {threshold} out of range for {children} children at {path}")]
    ThresholdOutOfRange {
        threshold: usize,
        children: usize,
        path: String,
    },
    #[error("gate with no children at {path}")]
    EmptyGate { path: String },
    #[error("privilege structure must have at least one level")]
    NoLevels,
}

/// A canonical attribute token.
///
/// Canonical form is trimmed and lowercased; canonicalizing twice is a no-op.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attribute(String);

impl Attribute {
    pub fn new(raw: &str) -> Result<Self, PolicyError> {
        let canon = raw.trim().to_lowercase();
        if canon.is_empty()
            || canon
                .chars()
                .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ','))
        {
            return Err(PolicyError::InvalidAttribute(raw.to_string()));
        }
        Ok(Attribute(canon))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Attribute {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::new(s)
    }
}

impl Serialize for Attribute {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Attribute::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Canonicalizes a list of raw attribute strings into a set.
pub fn attribute_set<I, S>(raw: I) -> Result<BTreeSet<Attribute>, PolicyError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    raw.into_iter().map(|s| Attribute::new(s.as_ref())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyNode {
    Leaf(Attribute),
    /// Satisfied when at least `threshold` children are satisfied.
    Gate {
        threshold: usize,
        children: Vec<PolicyNode>,
    },
}

impl PolicyNode {
    pub fn leaf(attr: Attribute) -> Self {
        PolicyNode::Leaf(attr)
    }

    pub fn and(children: Vec<PolicyNode>) -> Self {
        PolicyNode::Gate {
            threshold: children.len(),
            children,
        }
    }

    pub fn or(children: Vec<PolicyNode>) -> Self {
        PolicyNode::Gate {
            threshold: 1,
            children,
        }
    }

    pub fn threshold(threshold: usize, children: Vec<PolicyNode>) -> Self {
        PolicyNode::Gate {
            threshold,
            children,
        }
    }

    fn satisfied_by(&self, attrs: &BTreeSet<Attribute>) -> bool {
        match self {
            PolicyNode::Leaf(a) => attrs.contains(a),
            PolicyNode::Gate {
                threshold,
                children,
            } => {
                let mut hits = 0;
                for child in children {
                    if child.satisfied_by(attrs) {
                        hits += 1;
                        if hits >= *threshold {
                            return true;
                        }
                    }
                }
                // t = 0 is invalid; never report it as satisfied
                false
            }
        }
    }

    fn validate(&self, path: &str) -> Result<(), PolicyError> {
        match self {
            PolicyNode::Leaf(_) => Ok(()),
            PolicyNode::Gate {
                threshold,
                children,
            } => {
                if children.is_empty() {
                    return Err(PolicyError::EmptyGate {
                        path: path.to_string(),
                    });
                }
                if *threshold < 1 || *threshold > children.len() {
                    return Err(PolicyError::ThresholdOutOfRange {
                        threshold: *threshold,
                        children: children.len(),
                        path: path.to_string(),
                    });
                }
                for (i, child) in children.iter().enumerate() {
                    child.validate(&format!("{path}.children[{i}]"))?;
                }
                Ok(())
            }
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Attribute>) {
        match self {
            PolicyNode::Leaf(a) => out.push(a),
            PolicyNode::Gate { children, .. } => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }
}

impl fmt::Display for PolicyNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyNode::Leaf(a) => write!(f, "{a}"),
            PolicyNode::Gate {
                threshold,
                children,
            } => {
                let n = children.len();
                if *threshold == n {
                    f.write_str("AND(")?;
                } else if *threshold == 1 {
                    f.write_str("OR(")?;
                } else {
                    write!(f, "THRESH({threshold}, ")?;
                }
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A threshold-gate policy tree.
///
/// Serializes as its DSL text, e.g. `AND(doctor, OR(cardiology, surgery))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessPolicy {
    root: PolicyNode,
}

impl AccessPolicy {
    /// Wraps a tree after checking gate invariants.
    pub fn new(root: PolicyNode) -> Result<Self, PolicyError> {
        root.validate("root")?;
        Ok(AccessPolicy { root })
    }

    /// Wraps a tree without validation; [`validate_structure`] will catch it.
    pub fn new_unchecked(root: PolicyNode) -> Self {
        AccessPolicy { root }
    }

    pub fn root(&self) -> &PolicyNode {
        &self.root
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        self.root.validate("root")
    }

    /// Leaves in depth-first, left-to-right order (duplicates kept).
    pub fn leaves(&self) -> Vec<&Attribute> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    pub fn attributes(&self) -> BTreeSet<Attribute> {
        self.leaves().into_iter().cloned().collect()
    }
}

impl fmt::Display for AccessPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl std::str::FromStr for AccessPolicy {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_policy(s)
    }
}

impl Serialize for AccessPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccessPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        parse_policy(&raw).map_err(serde::de::Error::custom)
    }
}

/// True iff the attribute set satisfies the policy tree.
pub fn satisfy(policy: &AccessPolicy, attrs: &BTreeSet<Attribute>) -> bool {
    policy.root.satisfied_by(attrs)
}

/// Ordered policies `T_1..T_k`; index 1 is the most privileged level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrivilegeStructure {
    levels: Vec<AccessPolicy>,
}

impl PrivilegeStructure {
    pub fn new(levels: Vec<AccessPolicy>) -> Result<Self, PolicyError> {
        let s = PrivilegeStructure { levels };
        validate_structure(&s)?;
        Ok(s)
    }

    pub fn new_unchecked(levels: Vec<AccessPolicy>) -> Self {
        PrivilegeStructure { levels }
    }

    /// Parses one DSL string per level.
    pub fn parse<I, S>(levels: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let levels = levels
            .into_iter()
            .map(|s| parse_policy(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(levels)
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[AccessPolicy] {
        &self.levels
    }

    /// Policy guarding level `level` (1-based).
    pub fn level(&self, level: usize) -> Option<&AccessPolicy> {
        level.checked_sub(1).and_then(|i| self.levels.get(i))
    }

    /// Total number of leaves across all levels.
    pub fn total_attributes(&self) -> usize {
        self.levels.iter().map(AccessPolicy::leaf_count).sum()
    }

    pub fn classify(&self, attrs: &BTreeSet<Attribute>) -> Option<usize> {
        classify(self, attrs)
    }
}

/// Smallest 1-based level whose policy is satisfied, if any.
pub fn classify(structure: &PrivilegeStructure, attrs: &BTreeSet<Attribute>) -> Option<usize> {
    structure
        .levels
        .iter()
        .position(|policy| satisfy(policy, attrs))
        .map(|i| i + 1)
}

pub fn validate_structure(structure: &PrivilegeStructure) -> Result<(), PolicyError> {
    if structure.levels.is_empty() {
        return Err(PolicyError::NoLevels);
    }
    for (i, policy) in structure.levels.iter().enumerate() {
        policy.root.validate(&format!("levels[{}]", i + 1))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(xs: &[&str]) -> BTreeSet<Attribute> {
        attribute_set(xs.iter().copied()).unwrap()
    }

    fn leaf(a: &str) -> PolicyNode {
        PolicyNode::leaf(Attribute::new(a).unwrap())
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let a = Attribute::new("  Cardiology ").unwrap();
        assert_eq!(a.as_str(), "cardiology");
        assert_eq!(Attribute::new(a.as_str()).unwrap(), a);
        assert!(Attribute::new("").is_err());
        assert!(Attribute::new("two words").is_err());
        assert!(Attribute::new("a,b").is_err());
    }

    #[test]
    fn leaf_membership() {
        let p = parse_policy("a").unwrap();
        assert!(satisfy(&p, &attrs(&["a"])));
        assert!(!satisfy(&p, &attrs(&[])));
    }

    #[test]
    fn threshold_two_of_three() {
        let p = parse_policy("THRESH(2, a, b, c)").unwrap();
        assert!(satisfy(&p, &attrs(&["a", "c"])));
        assert!(!satisfy(&p, &attrs(&["b"])));
    }

    #[test]
    fn classify_breaks_on_first_match() {
        let s = PrivilegeStructure::parse(["a", "b", "OR(a, c)"]).unwrap();
        assert_eq!(s.classify(&attrs(&["a"])), Some(1));
        assert_eq!(s.classify(&attrs(&["c"])), Some(3));
        assert_eq!(s.classify(&attrs(&["z"])), None);
    }

    #[test]
    fn validate_catches_bad_gates() {
        let one = PrivilegeStructure::new_unchecked(vec![parse_policy("x").unwrap()]);
        assert!(validate_structure(&one).is_ok());

        let zero = PrivilegeStructure::new_unchecked(vec![AccessPolicy::new_unchecked(
            PolicyNode::threshold(0, vec![leaf("a")]),
        )]);
        assert!(matches!(
            validate_structure(&zero),
            Err(PolicyError::ThresholdOutOfRange { threshold: 0, .. })
        ));

        let over = PrivilegeStructure::new_unchecked(vec![
            parse_policy("a").unwrap(),
            AccessPolicy::new_unchecked(PolicyNode::and(vec![
                leaf("a"),
                PolicyNode::threshold(3, vec![leaf("b"), leaf("c")]),
            ])),
        ]);
        match validate_structure(&over) {
            Err(PolicyError::ThresholdOutOfRange { path, .. }) => {
                assert_eq!(path, "levels[2].children[1]")
            }
            other => panic!("unexpected {other:?}"),
        }

        let empty = PrivilegeStructure::new_unchecked(vec![AccessPolicy::new_unchecked(
            PolicyNode::or(vec![]),
        )]);
        assert!(matches!(
            validate_structure(&empty),
            Err(PolicyError::EmptyGate { .. })
        ));
        assert_eq!(
            validate_structure(&PrivilegeStructure::new_unchecked(vec![])),
            Err(PolicyError::NoLevels)
        );
    }

    #[test]
    fn display_round_trips_through_parser() {
        for src in [
            "a",
            "AND(a, b)",
            "OR(a, AND(b, c))",
            "THRESH(2, a, b, OR(c, d))",
        ] {
            let p = parse_policy(src).unwrap();
            assert_eq!(p.to_string(), src);
            assert_eq!(parse_policy(&p.to_string()).unwrap(), p);
        }
    }

    #[test]
    fn serde_uses_dsl_text() {
        let s = PrivilegeStructure::parse(["AND(a, b)", "c"]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"["AND(a, b)","c"]"#);
        let back: PrivilegeStructure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
