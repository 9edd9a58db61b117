use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use petra_core::encoding::Reader;
use petra_core::merkle::{redacted_pass, Body};

use crate::files::load_container;
use crate::{write_out, CliError, EXIT_OK};

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub sbom: PathBuf,
}

/// Prints the container's structure: roots, signatures, key slots and one
/// line per node. Public names are shown; sealed nodes show their slot.
pub fn inspect(args: InspectArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let r = load_container(&args.sbom)?;
    let hashes = redacted_pass(&r.root).map_err(petra_core::pipeline::PipelineError::from)?;
    let mut text = format!(
        "merkle_root: {}{}\ngenerator_signature: {}\nproducer_countersignature: {}\n",
        r.merkle_root.to_hex(),
        if hashes.merkle_root == r.merkle_root { "" } else { " (does not match the tree)" },
        if r.generator_signature.is_some() { "present" } else { "absent" },
        if r.producer_countersignature.is_some() { "present" } else { "absent" },
    );
    r.root.walk(|id, node, _| {
        let indent = "  ".repeat(id.depth());
        let marker = match node.body() {
            Body::Public(_) => "P".to_owned(),
            Body::Redacted(s) => format!("R slot={}", s.slot),
        };
        let line = match node.as_sbom() {
            Some(s) => {
                let mut l = format!("{indent}{id} SBOM {marker} hash={}", hashes.nodes[id].redacted.to_hex());
                if let Body::Public(p) = &s.meta {
                    if let Ok(index) = Reader::new(p).lp_str() {
                        l += &format!(" index={index}");
                    }
                }
                if s.attestation.is_some() {
                    l += " embedded";
                }
                for (i, slot) in s.keyslots.iter().enumerate() {
                    l += &format!("\n{indent}  slot {i}: {} {}", &slot.policy_id.to_hex()[..16], slot.access);
                }
                l
            }
            None => {
                let kind = if node.is_field() { "field" } else { "complex" };
                let name = node.public_name().unwrap_or_else(|| "?".into());
                format!("{indent}{id} {kind} {marker} {name}")
            }
        };
        text.push_str(&line);
        text.push('\n');
    });
    write_out(out, text)?;
    Ok(EXIT_OK)
}
