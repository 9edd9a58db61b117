//! Redaction policies: ordered rules binding path selectors to access trees.
//!
//! Policy files are JSON:
//!
//! ```json
//! {
//!   "rules": [{"paths": ["**.version"], "access": "role:auditor OR org:federal"}],
//!   "default": "public",
//!   "verifier_or": "role:verifier",
//!   "producer": "acme",
//!   "enforce_expiry": false
//! }
//! ```
//!
//! `default` is `public` or `deny`; unmatched nodes under `deny` are readable
//! only by `user:<producer>`. `verifier_or` is OR-ed onto every access tree.

mod access;
mod expr;
mod selector;

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::month::Month;
use crate::sbom::{NodeId, SbomTree};

pub use access::{is_valid_attribute, satisfies, AccessTree, AttributeSet};
pub use selector::{PathSelector, Segment};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("policy syntax error: {0}")]
    Syntax(String),
    #[error("threshold gate with no children")]
    EmptyGate,
    #[error("threshold {k} out of range for a gate with {n} children")]
    BadThreshold { k: u32, n: usize },
    #[error("invalid attribute {0:?}, expected namespace:value")]
    BadAttribute(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Visibility {
    Public,
    DenyAll,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub paths: Vec<PathSelector>,
    pub access: AccessTree,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedactionPolicy {
    pub rules: Vec<Rule>,
    pub default_visibility: Visibility,
    pub verifier_or: Option<AccessTree>,
    pub producer: Option<String>,
    pub enforce_expiry: bool,
}

/// What a node resolves to under a policy.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resolution {
    Public,
    Access(AccessTree),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    paths: Vec<String>,
    access: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    #[serde(default)]
    rules: Vec<RawRule>,
    #[serde(default = "default_visibility")]
    default: String,
    #[serde(default)]
    verifier_or: Option<String>,
    #[serde(default)]
    producer: Option<String>,
    #[serde(default)]
    enforce_expiry: bool,
}

fn default_visibility() -> String {
    "public".into()
}

impl RedactionPolicy {
    /// A policy leaving every node public.
    pub fn public() -> Self {
        RedactionPolicy {
            rules: Vec::new(),
            default_visibility: Visibility::Public,
            verifier_or: None,
            producer: None,
            enforce_expiry: false,
        }
    }

    /// A single rule applying `access` to every node.
    pub fn everything(access: AccessTree) -> Self {
        RedactionPolicy {
            rules: vec![Rule { paths: vec![PathSelector::parse("**").expect("valid")], access }],
            ..RedactionPolicy::public()
        }
    }

    pub fn with_rule(mut self, paths: &[&str], access: &str) -> Result<Self, PolicyError> {
        let paths = paths.iter().map(|p| PathSelector::parse(p)).collect::<Result<_, _>>()?;
        self.rules.push(Rule { paths, access: AccessTree::parse(access)? });
        Ok(self)
    }

    /// The access tree that unmatched nodes receive under `deny`.
    fn deny_tree(&self) -> Result<AccessTree, PolicyError> {
        let producer = self
            .producer
            .as_deref()
            .ok_or_else(|| PolicyError::Syntax("default \"deny\" requires a producer id".into()))?;
        AccessTree::leaf(format!("user:{producer}"))
    }

    /// The rule (or default) access for a node path, before the verifier and
    /// expiry decorations.
    pub fn rule_for<S: AsRef<str>>(&self, path: &[S]) -> Result<Resolution, PolicyError> {
        for rule in &self.rules {
            if rule.paths.iter().any(|p| p.matches(path)) {
                return Ok(Resolution::Access(rule.access.clone()));
            }
        }
        match self.default_visibility {
            Visibility::Public => Ok(Resolution::Public),
            Visibility::DenyAll => Ok(Resolution::Access(self.deny_tree()?)),
        }
    }

    /// Applies `verifier_or` and, when enforced, the expiry conjunction.
    pub fn decorate(&self, access: AccessTree, window: Option<Month>) -> Result<AccessTree, PolicyError> {
        let mut out = access;
        if let Some(v) = &self.verifier_or {
            out = AccessTree::or(vec![out, v.clone()])?;
        }
        if self.enforce_expiry {
            let window = window.ok_or_else(|| {
                PolicyError::Syntax("enforce_expiry requires a redaction time window".into())
            })?;
            out = AccessTree::and(vec![out, AccessTree::leaf(window.attribute())?])?;
        }
        Ok(out)
    }
}

/// Parses and validates a policy document.
pub fn parse_policy(document: &[u8]) -> Result<RedactionPolicy, PolicyError> {
    let raw: RawPolicy =
        serde_json::from_slice(document).map_err(|e| PolicyError::Syntax(e.to_string()))?;
    let mut rules = Vec::with_capacity(raw.rules.len());
    for r in raw.rules {
        if r.paths.is_empty() {
            return Err(PolicyError::Syntax("rule without paths".into()));
        }
        let paths = r.paths.iter().map(|p| PathSelector::parse(p)).collect::<Result<_, _>>()?;
        rules.push(Rule { paths, access: AccessTree::parse(&r.access)? });
    }
    let default_visibility = match raw.default.to_ascii_lowercase().as_str() {
        "public" => Visibility::Public,
        "deny" | "denyall" | "deny_all" => Visibility::DenyAll,
        other => return Err(PolicyError::Syntax(format!("unknown default {other:?}"))),
    };
    let verifier_or = raw.verifier_or.as_deref().map(AccessTree::parse).transpose()?;
    let policy = RedactionPolicy {
        rules,
        default_visibility,
        verifier_or,
        producer: raw.producer,
        enforce_expiry: raw.enforce_expiry,
    };
    if policy.default_visibility == Visibility::DenyAll {
        policy.deny_tree()?;
    }
    Ok(policy)
}

/// Assigns every node of the tree its access tree (with `verifier_or`
/// applied) or `Public`. First matching rule wins.
pub fn resolve_policy(
    policy: &RedactionPolicy,
    tree: &SbomTree,
) -> Result<BTreeMap<NodeId, Resolution>, PolicyError> {
    resolve_policy_at(policy, tree, None)
}

/// As [`resolve_policy`], additionally conjoining `expiry:<window>` when the
/// policy enforces expiry.
pub fn resolve_policy_at(
    policy: &RedactionPolicy,
    tree: &SbomTree,
    window: Option<Month>,
) -> Result<BTreeMap<NodeId, Resolution>, PolicyError> {
    let mut out = BTreeMap::new();
    let mut err = None;
    tree.walk(|v| {
        if err.is_some() {
            return;
        }
        let r = policy.rule_for(v.path).and_then(|r| match r {
            Resolution::Public => Ok(Resolution::Public),
            Resolution::Access(a) => policy.decorate(a, window).map(Resolution::Access),
        });
        match r {
            Ok(r) => {
                out.insert(v.id.clone(), r);
            }
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::purl::Purl;
    use crate::sbom::{Node, SbomNode, SourceFormat};

    fn two_packages() -> SbomTree {
        let pkg = |n: &str, v: &str| {
            Node::complex("package", vec![Node::field("name", n), Node::field("version", v)])
        };
        SbomTree::new(
            SbomNode::new(
                Purl::parse("pkg:generic/app@1").unwrap(),
                SourceFormat::Native.doc_meta(),
                vec![Node::field("name", "app"), pkg("a", "1.0"), pkg("b", "2.0")],
            ),
            SourceFormat::Native,
        )
    }

    const FIG4: &str = r#"{"rules":[{"paths":["**.version"],"access":"(role:scanner AND cert:fedramp) OR role:auditor OR org:federal"}],"default":"public"}"#;

    #[test]
    fn parses_fig4_style_policy() {
        let p = parse_policy(FIG4.as_bytes()).unwrap();
        assert_eq!(p.rules.len(), 1);
        match &p.rules[0].access {
            AccessTree::Gate { k: 1, children } => {
                assert_eq!(children.len(), 3);
                assert!(matches!(&children[0], AccessTree::Gate { k: 2, children } if children.len() == 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_rule_hits_exactly_the_version_fields() {
        let p = parse_policy(FIG4.as_bytes()).unwrap();
        let t = two_packages();
        let res = resolve_policy(&p, &t).unwrap();
        assert_eq!(res.len(), t.node_count());
        let redacted: Vec<String> = res
            .iter()
            .filter(|(_, r)| matches!(r, Resolution::Access(_)))
            .map(|(id, _)| id.to_string())
            .collect();
        // hand enumeration: root r, name r/0, package r/1 {name r/1/0, version r/1/1}, package r/2 {...}
        assert_eq!(redacted, vec!["r/1/1", "r/2/1"]);
    }

    #[test]
    fn empty_policy_is_all_public() {
        let p = parse_policy(br#"{"rules":[],"default":"public"}"#).unwrap();
        let res = resolve_policy(&p, &two_packages()).unwrap();
        assert!(res.values().all(|r| *r == Resolution::Public));
    }

    #[test]
    fn first_matching_rule_wins() {
        let p = RedactionPolicy::public()
            .with_rule(&["**.version"], "a:first")
            .unwrap()
            .with_rule(&["**.package.*"], "b:second")
            .unwrap();
        let res = resolve_policy(&p, &two_packages()).unwrap();
        assert_eq!(res[&NodeId(vec![1, 1])], Resolution::Access(AccessTree::parse("a:first").unwrap()));
        assert_eq!(res[&NodeId(vec![1, 0])], Resolution::Access(AccessTree::parse("b:second").unwrap()));
    }

    #[test]
    fn deny_default_and_verifier() {
        let p = parse_policy(
            br#"{"rules":[],"default":"deny","producer":"acme","verifier_or":"role:verifier"}"#,
        )
        .unwrap();
        let res = resolve_policy(&p, &two_packages()).unwrap();
        let expected = AccessTree::parse("user:acme OR role:verifier").unwrap();
        assert!(res.values().all(|r| *r == Resolution::Access(expected.clone())));
        assert!(parse_policy(br#"{"default":"deny"}"#).is_err());
    }

    #[test]
    fn expiry_is_conjoined_when_enforced() {
        let p = parse_policy(br#"{"rules":[{"paths":["**"],"access":"a:x"}],"enforce_expiry":true}"#).unwrap();
        let t = two_packages();
        assert!(resolve_policy(&p, &t).is_err());
        let res = resolve_policy_at(&p, &t, Some("2025-06".parse().unwrap())).unwrap();
        let expected = AccessTree::parse("a:x AND expiry:2025-06").unwrap();
        assert_eq!(res[&NodeId::root()], Resolution::Access(expected));
    }

    #[test]
    fn syntax_errors_surface() {
        assert!(matches!(parse_policy(b"{"), Err(PolicyError::Syntax(_))));
        assert!(matches!(parse_policy(br#"{"rules":[{"paths":["**"],"access":"3of(a:x)"}]}"#), Err(PolicyError::BadThreshold { .. })));
        assert!(matches!(parse_policy(br#"{"rules":[{"paths":["**"],"access":"()"}]}"#), Err(PolicyError::EmptyGate)));
        assert!(matches!(parse_policy(br#"{"rules":[],"default":"maybe"}"#), Err(PolicyError::Syntax(_))));
        assert!(matches!(parse_policy(br#"{"rulez":[]}"#), Err(PolicyError::Syntax(_))));
    }

    #[test]
    fn two_of_three_truth_table_by_enumeration() {
        let t = AccessTree::parse("2of(a:x,b:y,c:z)").unwrap();
        let universe = ["a:x", "b:y", "c:z"];
        for mask in 0u32..8 {
            let attrs = AttributeSet::from_iter(
                universe.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, a)| *a),
            )
            .unwrap();
            assert_eq!(satisfies(&t, &attrs, None), mask.count_ones() >= 2, "mask {mask:03b}");
        }
    }

    #[test]
    fn auditor_satisfies_fig4_tree() {
        let p = parse_policy(FIG4.as_bytes()).unwrap();
        let attrs = AttributeSet::from_iter(["role:auditor"]).unwrap();
        assert!(satisfies(&p.rules[0].access, &attrs, None));
        let scanner_only = AttributeSet::from_iter(["role:scanner"]).unwrap();
        assert!(!satisfies(&p.rules[0].access, &scanner_only, None));
    }
}
