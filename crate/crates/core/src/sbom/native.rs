//! Native tree format: a tag byte (0x01 field, 0x02 complex, 0x03 sbom), the
//! node's length-prefixed text fields, a 4-byte child count, then the
//! children, recursively.

use crate::encoding::{put_lp, put_u32, DecodeError, Reader};
use crate::purl::Purl;

use super::{ComplexNode, FieldNode, Node, SbomError, SbomNode, SbomTree, SourceFormat};

pub const TAG_FIELD: u8 = 0x01;
pub const TAG_COMPLEX: u8 = 0x02;
pub const TAG_SBOM: u8 = 0x03;

// Deeper trees than this are rejected rather than risking stack exhaustion.
const MAX_DEPTH: usize = 512;

pub fn serialize_tree(tree: &SbomTree) -> Vec<u8> {
    let mut buf = Vec::new();
    write_sbom(&mut buf, &tree.root);
    buf
}

fn write_sbom(buf: &mut Vec<u8>, s: &SbomNode) {
    buf.push(TAG_SBOM);
    put_lp(buf, s.index.as_str().as_bytes());
    put_lp(buf, s.doc_meta.as_bytes());
    write_children(buf, &s.children);
}

fn write_children(buf: &mut Vec<u8>, children: &[Node]) {
    put_u32(buf, u32::try_from(children.len()).expect("too many children"));
    for c in children {
        write_node(buf, c);
    }
}

fn write_node(buf: &mut Vec<u8>, node: &Node) {
    match node {
        Node::Field(f) => {
            buf.push(TAG_FIELD);
            put_lp(buf, f.name.as_bytes());
            put_lp(buf, f.value.as_bytes());
            put_u32(buf, 0);
        }
        Node::Complex(c) => {
            buf.push(TAG_COMPLEX);
            put_lp(buf, c.element_type.as_bytes());
            write_children(buf, &c.children);
        }
        Node::Sbom(s) => write_sbom(buf, s),
    }
}

/// Decodes a tree written by [`serialize_tree`]. The source format is read back
/// from the root's `doc_meta`.
pub fn parse_native(bytes: &[u8]) -> Result<SbomTree, SbomError> {
    let mut r = Reader::new(bytes);
    let root = match read_node(&mut r, 0)? {
        Node::Sbom(s) => s,
        _ => return Err(SbomError::InvalidTree("root is not an SBOM node".into())),
    };
    r.finish()?;
    let source_format = SourceFormat::from_doc_meta(&root.doc_meta).unwrap_or(SourceFormat::Native);
    let tree = SbomTree { root, source_format };
    tree.validate()?;
    Ok(tree)
}

fn read_node(r: &mut Reader<'_>, depth: usize) -> Result<Node, SbomError> {
    if depth > MAX_DEPTH {
        return Err(SbomError::InvalidTree("nesting too deep".into()));
    }
    let tag = r.u8()?;
    let node = match tag {
        TAG_FIELD => {
            let name = r.lp_str()?;
            let value = r.lp_str()?;
            if r.u32()? != 0 {
                return Err(SbomError::InvalidTree("field node with children".into()));
            }
            Node::Field(FieldNode { name, value })
        }
        TAG_COMPLEX => {
            let element_type = r.lp_str()?;
            let children = read_children(r, depth)?;
            Node::Complex(ComplexNode { element_type, children })
        }
        TAG_SBOM => {
            let index = Purl::parse(&r.lp_str()?)?;
            let doc_meta = r.lp_str()?;
            let children = read_children(r, depth)?;
            Node::Sbom(SbomNode { index, doc_meta, children })
        }
        _ => return Err(DecodeError::Invalid("node tag").into()),
    };
    Ok(node)
}

fn read_children(r: &mut Reader<'_>, depth: usize) -> Result<Vec<Node>, SbomError> {
    let n = r.u32()? as usize;
    // Each child needs at least 5 bytes; bound the allocation by the input.
    let mut out = Vec::with_capacity(n.min(r.remaining() / 5));
    for _ in 0..n {
        out.push(read_node(r, depth + 1)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn leaf() -> impl Strategy<Value = Node> {
        ("[a-zA-Z]{1,8}", ".{0,12}").prop_map(|(n, v)| Node::field(n, v))
    }

    fn node() -> impl Strategy<Value = Node> {
        leaf().prop_recursive(4, 48, 6, |inner| {
            ("[a-z]{1,8}", prop::collection::vec(inner, 0..6))
                .prop_map(|(t, children)| Node::complex(t, children))
        })
    }

    fn tree() -> impl Strategy<Value = SbomTree> {
        prop::collection::vec(node(), 0..6).prop_map(|children| {
            SbomTree::new(
                SbomNode::new(
                    Purl::parse("pkg:generic/x@1").unwrap(),
                    SourceFormat::Native.doc_meta(),
                    children,
                ),
                SourceFormat::Native,
            )
        })
    }

    proptest! {
        #[test]
        fn native_round_trip(t in tree()) {
            let bytes = serialize_tree(&t);
            prop_assert_eq!(parse_native(&bytes).unwrap(), t.clone());
            prop_assert_eq!(serialize_tree(&t), bytes);
        }
    }

    #[test]
    fn exact_layout_of_small_tree() {
        let t = SbomTree::new(
            SbomNode::new(Purl::parse("pkg:a/b@1").unwrap(), "m", vec![Node::field("n", "v")]),
            SourceFormat::Native,
        );
        let mut expected = vec![TAG_SBOM, 0, 0, 0, 9];
        expected.extend_from_slice(b"pkg:a/b@1");
        expected.extend_from_slice(&[0, 0, 0, 1, b'm', 0, 0, 0, 1, TAG_FIELD, 0, 0, 0, 1, b'n', 0, 0, 0, 1, b'v', 0, 0, 0, 0]);
        assert_eq!(serialize_tree(&t), expected);
    }

    #[test]
    fn differing_values_differ_in_bytes() {
        let mk = |v: &str| {
            SbomTree::new(
                SbomNode::new(Purl::parse("pkg:a/b@1").unwrap(), "", vec![Node::field("n", v)]),
                SourceFormat::Native,
            )
        };
        assert_ne!(serialize_tree(&mk("1")), serialize_tree(&mk("2")));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_native(&[]).is_err());
        assert!(parse_native(&[0x09]).is_err());
        let t = SbomTree::new(
            SbomNode::new(Purl::parse("pkg:a/b@1").unwrap(), "", vec![]),
            SourceFormat::Native,
        );
        let mut bytes = serialize_tree(&t);
        bytes.push(0);
        assert!(parse_native(&bytes).is_err());
        // child count claims more than is present
        let mut bytes = serialize_tree(&t);
        let n = bytes.len();
        bytes[n - 1] = 3;
        assert!(parse_native(&bytes).is_err());
    }
}
