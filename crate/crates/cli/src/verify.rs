//! `verify` and `query`: the consumer and verifier side.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use petra_core::merkle::{prove_membership_at, select_nodes, verify_membership, verify_sameness};
use petra_core::month::Month;
use petra_core::pipeline::{consume, read_bundle, verify_embedded, verify_signatures, DecryptedView, PipelineError};
use petra_core::policy::PathSelector;
use petra_core::sbom::{export_plaintext, ComplexNode, Node, NodeId, NodeRef, SbomNode, SbomTree, SourceFormat};
use serde_json::{json, Value};

use crate::files::{load_container, load_key};
use crate::{read, write_out, CliError, Config, EXIT_OK};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub sbom: PathBuf,
    /// Producer salt bundle: check sameness over the full plaintext.
    #[arg(long, conflicts_with = "key")]
    pub plaintext: Option<PathBuf>,
    /// Consumer key: check what it can open.
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Also prove membership of the nodes this selector matches.
    #[arg(long)]
    pub field: Option<PathSelector>,
    /// Current window (YYYY-MM); expired keys are not tried.
    #[arg(long)]
    pub now: Option<Month>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Spdx,
    Cdx,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[arg(long)]
    pub sbom: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long, default_value = "**")]
    pub select: PathSelector,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    #[arg(long)]
    pub now: Option<Month>,
}

pub fn verify(cfg: &Config, args: VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let redacted = load_container(&args.sbom)?;
    let trust = cfg.trusted_keys()?;
    let mut lines = vec![format!("merkle_root: {}", redacted.merkle_root.to_hex())];

    if let Some(key) = &args.key {
        let sk = load_key(key)?;
        let view = consume(&redacted, &sk, &cfg.public_params()?, &trust, args.field.as_ref(), args.now)?;
        lines.push("signatures: ok".into());
        lines.push(sameness_line(view.report.matched(), 0, view.report.unverifiable()));
        if args.field.is_some() {
            lines.push(membership_line(view.membership.iter().map(|(id, _)| id)));
        }
    } else {
        verify_signatures(&redacted, &trust)?;
        verify_embedded(&redacted, &trust)?;
        lines.push("signatures: ok".into());
        if let Some(path) = &args.plaintext {
            let (bundle, root) = read_bundle(&read(path)?)?;
            if root != redacted.merkle_root {
                return Err(CliError::Usage("salt bundle belongs to a different container".into()));
            }
            let report = verify_sameness(&redacted.root, &bundle.tree, &bundle.salts).map_err(PipelineError::from)?;
            lines.push(sameness_line(report.matched(), report.mismatched(), report.unverifiable()));
            if report.mismatched() > 0 {
                write_out(out, lines.join("\n") + "\n")?;
                let ids: Vec<String> = report.mismatches().iter().map(ToString::to_string).collect();
                return Err(PipelineError::Lied(format!("plaintext hash mismatch at {}", ids.join(", "))).into());
            }
            if let Some(sel) = &args.field {
                let mut names = BTreeMap::new();
                bundle.tree.walk(|v| {
                    names.insert(v.id.clone(), v.node.segment().to_owned());
                });
                let hits = select_nodes(&redacted.root, sel, &names);
                for id in &hits {
                    let proof = prove_membership_at(&redacted.root, id).map_err(PipelineError::from)?;
                    if !verify_membership(&proof, &redacted.merkle_root) {
                        return Err(PipelineError::Lied(format!("membership proof for {id} does not verify")).into());
                    }
                }
                lines.push(membership_line(hits.iter()));
            }
        }
    }
    lines.push("status: ok".into());
    write_out(out, lines.join("\n") + "\n")?;
    Ok(EXIT_OK)
}

fn sameness_line(matched: usize, mismatched: usize, unverifiable: usize) -> String {
    format!("sameness: {matched} match, {mismatched} mismatch, {unverifiable} unverifiable")
}

fn membership_line<'a>(ids: impl Iterator<Item = &'a NodeId>) -> String {
    let ids: Vec<String> = ids.map(ToString::to_string).collect();
    if ids.is_empty() {
        "membership: no accessible node matches".into()
    } else {
        format!("membership: verified {}", ids.join(" "))
    }
}

pub fn query(cfg: &Config, args: QueryArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let redacted = load_container(&args.sbom)?;
    let sk = load_key(&args.key)?;
    let view = consume(&redacted, &sk, &cfg.public_params()?, &cfg.trusted_keys()?, None, args.now)?;
    let hits = selected(&view, &args.select);
    let text = match args.format {
        OutputFormat::Json => {
            let entries: Vec<Value> = hits.iter().map(|(id, path)| entry(&view, id, path)).collect();
            serde_json::to_string_pretty(&Value::Array(entries)).expect("json") + "\n"
        }
        OutputFormat::Spdx | OutputFormat::Cdx => {
            let format = if args.format == OutputFormat::Spdx { SourceFormat::Spdx } else { SourceFormat::CycloneDx };
            let keep: BTreeSet<NodeId> = hits.into_iter().map(|(id, _)| id).collect();
            let mut tree = prune(&view.tree, &keep);
            if tree.source_format != format {
                tree.source_format = SourceFormat::Native;
            }
            String::from_utf8(export_plaintext(&tree, format)?).expect("json is utf-8") + "\n"
        }
    };
    write_out(out, text)?;
    Ok(EXIT_OK)
}

/// Nodes the selector matches in the view, plus placeholders standing where
/// a matching node could be.
fn selected(view: &DecryptedView, sel: &PathSelector) -> Vec<(NodeId, String)> {
    let literals: Vec<&str> = sel.as_str().split('.').filter(|s| *s != "*" && *s != "**").collect();
    let mut hits = Vec::new();
    view.tree.walk(|v| {
        let hit = sel.matches(v.path)
            || (view.placeholders.contains_key(v.id) && {
                let mut path = v.path.to_vec();
                literals.iter().any(|lit| {
                    *path.last_mut().expect("non-empty path") = lit;
                    sel.matches(&path)
                })
            });
        if hit {
            hits.push((v.id.clone(), v.path.join(".")));
        }
    });
    hits
}

fn entry(view: &DecryptedView, id: &NodeId, path: &str) -> Value {
    if let Some(p) = view.placeholders.get(id) {
        return json!({
            "id": id.to_string(),
            "path": path,
            "redacted": { "policy_id": p.policy_id.to_hex(), "hash": p.redacted_hash.to_hex() }
        });
    }
    match view.tree.get(id).expect("walked id") {
        NodeRef::Field(f) => json!({ "id": id.to_string(), "path": path, "name": f.name, "value": f.value }),
        NodeRef::Complex(c) => json!({ "id": id.to_string(), "path": path, "type": c.element_type }),
        NodeRef::Sbom(s) => json!({ "id": id.to_string(), "path": path, "index": s.index.as_str() }),
    }
}

fn is_prefix(a: &NodeId, b: &NodeId) -> bool {
    a.0.len() <= b.0.len() && b.0[..a.0.len()] == a.0[..]
}

/// Keeps selected nodes, their ancestors and their descendants.
fn prune(tree: &SbomTree, keep: &BTreeSet<NodeId>) -> SbomTree {
    fn children(nodes: &[Node], id: &NodeId, keep: &BTreeSet<NodeId>, inside: bool) -> Vec<Node> {
        let mut out = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            let cid = id.child(i);
            let selected = inside || keep.contains(&cid);
            if !selected && !keep.iter().any(|k| is_prefix(&cid, k)) {
                continue;
            }
            out.push(match n {
                Node::Field(f) => Node::Field(f.clone()),
                Node::Complex(c) => Node::Complex(ComplexNode::new(&c.element_type, children(&c.children, &cid, keep, selected))),
                Node::Sbom(s) => Node::Sbom(SbomNode::new(s.index.clone(), &s.doc_meta, children(&s.children, &cid, keep, selected))),
            });
        }
        out
    }
    let all = keep.contains(&NodeId::root());
    let root = &tree.root;
    SbomTree::new(
        SbomNode::new(root.index.clone(), &root.doc_meta, children(&root.children, &NodeId::root(), keep, all)),
        tree.source_format,
    )
}
