//! SBOM trees: the relational representation every other stage works on.
//!
//! A tree is rooted at an [`SbomNode`] carrying the document's index (a pURL).
//! Composite claims (a package, a file, a relationship) are [`ComplexNode`]s and
//! single claims are [`FieldNode`] leaves. Nested [`SbomNode`]s represent
//! composed SBOMs.

mod json;
mod native;

use std::fmt;

use thiserror::Error;

use crate::encoding::DecodeError;
use crate::purl::{Purl, PurlError};

pub use json::{base_name, export_plaintext, parse_sbom, scalar_pairs};
pub use native::{parse_native, serialize_tree};

#[derive(Debug, Error)]
pub enum SbomError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("no package URL can be derived for the document")]
    MissingIndex,
    #[error(transparent)]
    InvalidIndex(#[from] PurlError),
    #[error("malformed native tree: {0}")]
    Decode(#[from] DecodeError),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourceFormat {
    Spdx,
    CycloneDx,
    Native,
}

impl SourceFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceFormat::Spdx => "spdx",
            SourceFormat::CycloneDx => "cyclonedx",
            SourceFormat::Native => "native",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spdx" => Some(SourceFormat::Spdx),
            "cyclonedx" | "cdx" => Some(SourceFormat::CycloneDx),
            "native" => Some(SourceFormat::Native),
            _ => None,
        }
    }

    /// The `doc_meta` text recorded on SBOM nodes produced from this format.
    pub fn doc_meta(self) -> String {
        format!("format={}", self.as_str())
    }

    pub fn from_doc_meta(meta: &str) -> Option<Self> {
        meta.split(';')
            .find_map(|kv| kv.strip_prefix("format="))
            .and_then(SourceFormat::parse)
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single claim: one name/value pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldNode {
    pub name: String,
    pub value: String,
}

/// A composite claim of type `element_type` (e.g. `package`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexNode {
    pub element_type: String,
    pub children: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SbomNode {
    pub index: Purl,
    /// Redactable SBOM-level data.
    pub doc_meta: String,
    pub children: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Field(FieldNode),
    Complex(ComplexNode),
    Sbom(SbomNode),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SbomTree {
    pub root: SbomNode,
    pub source_format: SourceFormat,
}

/// Path segment naming an SBOM node in selectors.
pub const SBOM_SEGMENT: &str = "sbom";

impl FieldNode {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        FieldNode { name: name.into(), value: value.into() }
    }

    /// Canonical payload `lp(name) || lp(value)`.
    pub fn payload(&self) -> Vec<u8> {
        crate::encoding::lp_concat([self.name.as_bytes(), self.value.as_bytes()])
    }
}

impl ComplexNode {
    pub fn new(element_type: impl Into<String>, children: Vec<Node>) -> Self {
        ComplexNode { element_type: element_type.into(), children }
    }

    pub fn payload(&self) -> Vec<u8> {
        crate::encoding::lp_concat([self.element_type.as_bytes()])
    }
}

impl SbomNode {
    pub fn new(index: Purl, doc_meta: impl Into<String>, children: Vec<Node>) -> Self {
        SbomNode { index, doc_meta: doc_meta.into(), children }
    }

    /// Canonical payload `lp(index) || lp(doc_meta)`: the SBOM-level data `r`.
    pub fn payload(&self) -> Vec<u8> {
        crate::encoding::lp_concat([self.index.as_str().as_bytes(), self.doc_meta.as_bytes()])
    }
}

impl Node {
    pub fn field(name: impl Into<String>, value: impl Into<String>) -> Node {
        Node::Field(FieldNode::new(name, value))
    }

    pub fn complex(element_type: impl Into<String>, children: Vec<Node>) -> Node {
        Node::Complex(ComplexNode::new(element_type, children))
    }

    pub fn children(&self) -> &[Node] {
        match self {
            Node::Field(_) => &[],
            Node::Complex(c) => &c.children,
            Node::Sbom(s) => &s.children,
        }
    }

    /// The name this node contributes to a selector path.
    pub fn segment(&self) -> &str {
        match self {
            Node::Field(f) => &f.name,
            Node::Complex(c) => &c.element_type,
            Node::Sbom(_) => SBOM_SEGMENT,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match self {
            Node::Field(f) => f.payload(),
            Node::Complex(c) => c.payload(),
            Node::Sbom(s) => s.payload(),
        }
    }
}

/// Borrowed view of any node, including the tree root.
#[derive(Clone, Copy, Debug)]
pub enum NodeRef<'a> {
    Field(&'a FieldNode),
    Complex(&'a ComplexNode),
    Sbom(&'a SbomNode),
}

impl<'a> NodeRef<'a> {
    pub fn from_node(n: &'a Node) -> Self {
        match n {
            Node::Field(f) => NodeRef::Field(f),
            Node::Complex(c) => NodeRef::Complex(c),
            Node::Sbom(s) => NodeRef::Sbom(s),
        }
    }

    pub fn children(self) -> &'a [Node] {
        match self {
            NodeRef::Field(_) => &[],
            NodeRef::Complex(c) => &c.children,
            NodeRef::Sbom(s) => &s.children,
        }
    }

    pub fn segment(self) -> &'a str {
        match self {
            NodeRef::Field(f) => &f.name,
            NodeRef::Complex(c) => &c.element_type,
            NodeRef::Sbom(_) => SBOM_SEGMENT,
        }
    }

    pub fn payload(self) -> Vec<u8> {
        match self {
            NodeRef::Field(f) => f.payload(),
            NodeRef::Complex(c) => c.payload(),
            NodeRef::Sbom(s) => s.payload(),
        }
    }
}

/// Position of a node as child indices from the root (the root is empty).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub Vec<u32>);

impl NodeId {
    pub fn root() -> Self {
        NodeId(Vec::new())
    }

    pub fn child(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v.push(u32::try_from(i).expect("too many children"));
        NodeId(v)
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn parse(s: &str) -> Option<Self> {
        let rest = s.strip_prefix('r')?;
        if rest.is_empty() {
            return Some(NodeId::root());
        }
        rest.strip_prefix('/')?
            .split('/')
            .map(|p| p.parse().ok())
            .collect::<Option<Vec<u32>>>()
            .map(NodeId)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("r")?;
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

/// Node visited during a pre-order walk.
pub struct Visit<'a, 'p> {
    pub id: &'p NodeId,
    pub path: &'p [&'a str],
    pub node: NodeRef<'a>,
}

impl SbomTree {
    pub fn new(root: SbomNode, source_format: SourceFormat) -> Self {
        SbomTree { root, source_format }
    }

    /// Pre-order walk over every node, root first.
    pub fn walk<'a>(&'a self, mut f: impl FnMut(Visit<'a, '_>)) {
        fn go<'a>(
            node: NodeRef<'a>,
            id: NodeId,
            path: &mut Vec<&'a str>,
            f: &mut dyn FnMut(Visit<'a, '_>),
        ) {
            path.push(node.segment());
            f(Visit { id: &id, path, node });
            for (i, child) in node.children().iter().enumerate() {
                go(NodeRef::from_node(child), id.child(i), path, f);
            }
            path.pop();
        }
        go(NodeRef::Sbom(&self.root), NodeId::root(), &mut Vec::new(), &mut f);
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(|_| n += 1);
        n
    }

    pub fn get(&self, id: &NodeId) -> Option<NodeRef<'_>> {
        let mut cur = NodeRef::Sbom(&self.root);
        for &i in &id.0 {
            cur = NodeRef::from_node(cur.children().get(i as usize)?);
        }
        Some(cur)
    }

    /// Checks the structural invariants of every node.
    pub fn validate(&self) -> Result<(), SbomError> {
        let mut problem = None;
        self.walk(|v| {
            if problem.is_some() {
                return;
            }
            match v.node {
                NodeRef::Field(f) if f.name.is_empty() => {
                    problem = Some(format!("field node {} has an empty name", v.id));
                }
                NodeRef::Complex(c) if c.element_type.is_empty() => {
                    problem = Some(format!("complex node {} has an empty element type", v.id));
                }
                _ => {}
            }
        });
        match problem {
            Some(p) => Err(SbomError::InvalidTree(p)),
            None => Ok(()),
        }
    }

    /// Composes several trees: the first is the top-level artifact, each
    /// following tree is appended as a nested SBOM node.
    pub fn compose(mut trees: Vec<SbomTree>) -> Option<SbomTree> {
        if trees.is_empty() {
            return None;
        }
        let mut top = trees.remove(0);
        for t in trees {
            top.root.children.push(Node::Sbom(t.root));
        }
        Some(top)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SbomTree {
        SbomTree::new(
            SbomNode::new(
                Purl::parse("pkg:generic/demo@1").unwrap(),
                SourceFormat::Native.doc_meta(),
                vec![
                    Node::field("name", "demo"),
                    Node::complex("package", vec![Node::field("name", "a"), Node::field("version", "1")]),
                ],
            ),
            SourceFormat::Native,
        )
    }

    #[test]
    fn walk_is_preorder_with_paths() {
        let t = sample();
        let mut seen = Vec::new();
        t.walk(|v| seen.push((v.id.to_string(), v.path.join("."))));
        assert_eq!(
            seen,
            vec![
                ("r".into(), "sbom".into()),
                ("r/0".into(), "sbom.name".into()),
                ("r/1".into(), "sbom.package".into()),
                ("r/1/0".into(), "sbom.package.name".into()),
                ("r/1/1".into(), "sbom.package.version".into()),
            ]
        );
    }

    #[test]
    fn node_id_round_trip() {
        for s in ["r", "r/0", "r/3/12/0"] {
            assert_eq!(NodeId::parse(s).unwrap().to_string(), s);
        }
        assert!(NodeId::parse("x/1").is_none());
    }

    #[test]
    fn get_by_id() {
        let t = sample();
        match t.get(&NodeId(vec![1, 1])).unwrap() {
            NodeRef::Field(f) => assert_eq!(f.value, "1"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(t.get(&NodeId(vec![5])).is_none());
    }

    #[test]
    fn validate_rejects_empty_names() {
        let mut t = sample();
        t.root.children.push(Node::field("", "x"));
        assert!(t.validate().is_err());
    }

    #[test]
    fn composition_appends_child_sboms() {
        let t = SbomTree::compose(vec![sample(), sample()]).unwrap();
        assert!(matches!(t.root.children.last(), Some(Node::Sbom(_))));
        t.validate().unwrap();
    }
}
