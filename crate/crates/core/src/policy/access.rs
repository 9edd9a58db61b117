//! Access trees: threshold gates over attribute leaves.

use std::collections::BTreeSet;
use std::fmt;

use crate::encoding::{put_lp, put_u32, sha256, DecodeError, Hash256, Reader};
use crate::month::{Month, EXPIRY_PREFIX};

use super::PolicyError;

/// A decryption predicate. AND is an n-of-n gate, OR a 1-of-n gate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessTree {
    Gate { k: u32, children: Vec<AccessTree> },
    Leaf(String),
}

/// Checks the namespaced attribute form `ns:value`.
pub fn is_valid_attribute(attr: &str) -> bool {
    let Some((ns, value)) = attr.split_once(':') else {
        return false;
    };
    !ns.is_empty()
        && !value.is_empty()
        && ns
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'.' | b'-'))
        && value
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'@' | b'-'))
}

const TAG_LEAF: u8 = 0x00;
const TAG_GATE: u8 = 0x01;

impl AccessTree {
    pub fn leaf(attr: impl Into<String>) -> Result<Self, PolicyError> {
        let attr = attr.into();
        if !is_valid_attribute(&attr) {
            return Err(PolicyError::BadAttribute(attr));
        }
        Ok(AccessTree::Leaf(attr))
    }

    pub fn gate(k: u32, children: Vec<AccessTree>) -> Result<Self, PolicyError> {
        if children.is_empty() {
            return Err(PolicyError::EmptyGate);
        }
        if k == 0 || k as usize > children.len() {
            return Err(PolicyError::BadThreshold { k, n: children.len() });
        }
        Ok(AccessTree::Gate { k, children })
    }

    pub fn and(children: Vec<AccessTree>) -> Result<Self, PolicyError> {
        let n = u32::try_from(children.len()).map_err(|_| PolicyError::EmptyGate)?;
        AccessTree::gate(n, children)
    }

    pub fn or(children: Vec<AccessTree>) -> Result<Self, PolicyError> {
        AccessTree::gate(1, children)
    }

    /// Re-checks every invariant; trees built through the constructors or
    /// the parser always pass.
    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            AccessTree::Leaf(a) if !is_valid_attribute(a) => Err(PolicyError::BadAttribute(a.clone())),
            AccessTree::Leaf(_) => Ok(()),
            AccessTree::Gate { children, .. } if children.is_empty() => Err(PolicyError::EmptyGate),
            AccessTree::Gate { k, children } if *k == 0 || *k as usize > children.len() => {
                Err(PolicyError::BadThreshold { k: *k, n: children.len() })
            }
            AccessTree::Gate { children, .. } => children.iter().try_for_each(AccessTree::validate),
        }
    }

    /// Threshold evaluation with exact attribute matching. An `expiry:W` leaf
    /// additionally requires `W >= now` when a current window is given.
    pub fn satisfied_by(&self, attrs: &AttributeSet, now: Option<Month>) -> bool {
        match self {
            AccessTree::Leaf(a) => {
                if !attrs.contains(a) {
                    return false;
                }
                match (now, Month::from_attribute(a)) {
                    (Some(now), Some(window)) => window >= now,
                    _ => true,
                }
            }
            AccessTree::Gate { k, children } => {
                let mut hits = 0u32;
                for c in children {
                    if c.satisfied_by(attrs, now) {
                        hits += 1;
                        if hits >= *k {
                            return true;
                        }
                    }
                }
                false
            }
        }
    }

    /// Canonical byte encoding: leaf `0x00 || lp(attr)`, gate
    /// `0x01 || u32 k || u32 n || children`.
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode_into(&mut buf);
        buf
    }

    fn encode_into(&self, buf: &mut Vec<u8>) {
        match self {
            AccessTree::Leaf(a) => {
                buf.push(TAG_LEAF);
                put_lp(buf, a.as_bytes());
            }
            AccessTree::Gate { k, children } => {
                buf.push(TAG_GATE);
                put_u32(buf, *k);
                put_u32(buf, u32::try_from(children.len()).expect("too many children"));
                for c in children {
                    c.encode_into(buf);
                }
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let t = Self::decode_from(&mut r, 0)?;
        r.finish()?;
        Ok(t)
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>, depth: usize) -> Result<Self, DecodeError> {
        if depth > 64 {
            return Err(DecodeError::Invalid("access tree depth"));
        }
        let t = match r.u8()? {
            TAG_LEAF => AccessTree::Leaf(r.lp_str()?),
            TAG_GATE => {
                let k = r.u32()?;
                let n = r.u32()? as usize;
                let mut children = Vec::with_capacity(n.min(r.remaining()));
                for _ in 0..n {
                    children.push(Self::decode_from(r, depth + 1)?);
                }
                AccessTree::Gate { k, children }
            }
            _ => return Err(DecodeError::Invalid("access tree tag")),
        };
        t.validate().map_err(|_| DecodeError::Invalid("access tree"))?;
        Ok(t)
    }

    /// SHA-256 of the canonical encoding.
    pub fn policy_id(&self) -> Hash256 {
        sha256(&self.encode())
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn go<'a>(t: &'a AccessTree, out: &mut Vec<&'a str>) {
            match t {
                AccessTree::Leaf(a) => out.push(a),
                AccessTree::Gate { children, .. } => children.iter().for_each(|c| go(c, out)),
            }
        }
        go(self, &mut out);
        out
    }

    /// Parses an infix expression such as
    /// `(role:scanner AND cert:fedramp) OR role:auditor` or `2of(a:x, b:y, c:z)`.
    pub fn parse(expr: &str) -> Result<Self, PolicyError> {
        super::expr::parse(expr)
    }
}

impl fmt::Display for AccessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessTree::Leaf(a) => f.write_str(a),
            AccessTree::Gate { k, children } => {
                let n = children.len() as u32;
                if n == 1 && *k == 1 {
                    return write!(f, "1of({})", children[0]);
                }
                let join = |sep: &str| children.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(sep);
                if *k == 1 {
                    write!(f, "({})", join(" OR "))
                } else if *k == n {
                    write!(f, "({})", join(" AND "))
                } else {
                    write!(f, "{k}of({})", join(", "))
                }
            }
        }
    }
}

/// A consumer's attribute set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct AttributeSet(BTreeSet<String>);

impl AttributeSet {
    pub fn new() -> Self {
        AttributeSet(BTreeSet::new())
    }

    pub fn from_iter<I, S>(attrs: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = AttributeSet::new();
        for a in attrs {
            set.insert(a)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, attr: impl Into<String>) -> Result<bool, PolicyError> {
        let attr = attr.into();
        if !is_valid_attribute(&attr) {
            return Err(PolicyError::BadAttribute(attr));
        }
        Ok(self.0.insert(attr))
    }

    pub fn contains(&self, attr: &str) -> bool {
        self.0.contains(attr)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset(&self, other: &AttributeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &AttributeSet) -> AttributeSet {
        AttributeSet(self.0.union(&other.0).cloned().collect())
    }

    /// The window of the set's `expiry:` attribute, if it has exactly one.
    pub fn expiry(&self) -> Option<Month> {
        let mut windows = self.0.iter().filter_map(|a| Month::from_attribute(a));
        let first = windows.next()?;
        windows.next().is_none().then_some(first)
    }

    /// Replaces every `expiry:` attribute with the given window.
    pub fn with_expiry(&self, window: Month) -> AttributeSet {
        let mut out: BTreeSet<String> =
            self.0.iter().filter(|a| !a.starts_with(EXPIRY_PREFIX)).cloned().collect();
        out.insert(window.attribute());
        AttributeSet(out)
    }
}

impl<'a> IntoIterator for &'a AttributeSet {
    type Item = &'a String;
    type IntoIter = std::collections::btree_set::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Evaluates an access tree against a consumer's attributes.
pub fn satisfies(access: &AccessTree, attrs: &AttributeSet, now: Option<Month>) -> bool {
    access.satisfied_by(attrs, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn attrs(list: &[&str]) -> AttributeSet {
        AttributeSet::from_iter(list.iter().copied()).unwrap()
    }

    #[test]
    fn attribute_grammar() {
        for ok in ["user:foo", "namespace:bar.com", "expiry:2025-06", "role:Auditor@x", "a_b.c-d:1"] {
            assert!(is_valid_attribute(ok), "{ok}");
        }
        for bad in ["user", ":x", "x:", "User:x", "a:b c", "a:b:c", "a:b/c"] {
            assert!(!is_valid_attribute(bad), "{bad}");
        }
    }

    #[test]
    fn constructors_enforce_threshold_range() {
        let l = || AccessTree::leaf("a:x").unwrap();
        assert!(matches!(AccessTree::gate(0, vec![l()]), Err(PolicyError::BadThreshold { .. })));
        assert!(matches!(AccessTree::gate(2, vec![l()]), Err(PolicyError::BadThreshold { .. })));
        assert!(matches!(AccessTree::gate(1, vec![]), Err(PolicyError::EmptyGate)));
        assert!(AccessTree::gate(1, vec![l()]).is_ok());
    }

    #[test]
    fn empty_attribute_set_satisfies_nothing() {
        let t = AccessTree::parse("a:x OR 1of(b:y)").unwrap();
        assert!(!satisfies(&t, &AttributeSet::new(), None));
    }

    #[test]
    fn expiry_leaves_respect_current_window() {
        let t = AccessTree::parse("user:foo AND expiry:2025-06").unwrap();
        let a = attrs(&["user:foo", "expiry:2025-06"]);
        assert!(satisfies(&t, &a, None));
        assert!(satisfies(&t, &a, Some("2025-06".parse().unwrap())));
        assert!(satisfies(&t, &a, Some("2025-05".parse().unwrap())));
        assert!(!satisfies(&t, &a, Some("2025-07".parse().unwrap())));
        let other = attrs(&["user:foo", "expiry:2025-07"]);
        assert!(!satisfies(&t, &other, None));
    }

    #[test]
    fn canonical_encoding_round_trips_and_distinguishes() {
        let a = AccessTree::parse("(a:x AND b:y) OR c:z").unwrap();
        let b = AccessTree::parse("a:x AND (b:y OR c:z)").unwrap();
        assert_eq!(AccessTree::decode(&a.encode()).unwrap(), a);
        assert_ne!(a.policy_id(), b.policy_id());
        assert!(AccessTree::decode(&[1, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn expiry_helpers() {
        let a = attrs(&["user:foo", "expiry:2025-06"]);
        assert_eq!(a.expiry(), Some("2025-06".parse().unwrap()));
        let b = a.with_expiry("2025-07".parse().unwrap());
        assert!(b.contains("expiry:2025-07") && !b.contains("expiry:2025-06"));
        assert_eq!(b.len(), 2);
    }

    // truth tables over <= 4 leaves
    const UNIVERSE: [&str; 4] = ["a:w", "b:x", "c:y", "d:z"];

    fn subset(mask: u32) -> AttributeSet {
        attrs(&UNIVERSE.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, a)| *a).collect::<Vec<_>>())
    }

    #[test]
    fn gate_algebra_matches_boolean_connectives() {
        for n in 1..=4usize {
            let leaves: Vec<AccessTree> = UNIVERSE[..n].iter().map(|a| AccessTree::leaf(*a).unwrap()).collect();
            let or = AccessTree::gate(1, leaves.clone()).unwrap();
            let and = AccessTree::gate(n as u32, leaves).unwrap();
            for mask in 0..16u32 {
                let s = subset(mask);
                let any = UNIVERSE[..n].iter().any(|a| s.contains(a));
                let all = UNIVERSE[..n].iter().all(|a| s.contains(a));
                assert_eq!(satisfies(&or, &s, None), any);
                assert_eq!(satisfies(&and, &s, None), all);
            }
        }
    }

    fn tree_strategy() -> impl Strategy<Value = AccessTree> {
        let leaf = prop::sample::select(UNIVERSE.to_vec()).prop_map(|a| AccessTree::Leaf(a.to_owned()));
        leaf.prop_recursive(3, 16, 4, |inner| {
            prop::collection::vec(inner, 1..4).prop_flat_map(|children| {
                let n = children.len() as u32;
                (1..=n).prop_map(move |k| AccessTree::Gate { k, children: children.clone() })
            })
        })
    }

    proptest! {
        #[test]
        fn monotone_in_attributes(t in tree_strategy(), small in 0u32..16, extra in 0u32..16) {
            let a = subset(small);
            let b = subset(small | extra);
            if satisfies(&t, &a, None) {
                prop_assert!(satisfies(&t, &b, None));
            }
        }

        #[test]
        fn display_reparses_to_same_predicate(t in tree_strategy()) {
            let reparsed = AccessTree::parse(&t.to_string()).unwrap();
            for mask in 0..16 {
                prop_assert_eq!(satisfies(&t, &subset(mask), None), satisfies(&reparsed, &subset(mask), None));
            }
        }
    }
}
