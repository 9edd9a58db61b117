//! A directory store indexed by package URL, and split-view detection.
//!
//! Each entry is `<store>/<percent-encoded purl>.petra`. A store holds one
//! root per package URL: republishing the same root is a no-op, a different
//! root is refused.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use percent_encoding::{percent_encode, AsciiSet, NON_ALPHANUMERIC};
use petra_core::encoding::Hash256;
use petra_core::pipeline::{read_container, verify_embedded, verify_signatures};

use crate::files::{load_container, public_index};
use crate::{read, write_out, CliError, Config, EXIT_OK};

const FILE_SAFE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_');

#[derive(Subcommand, Debug)]
pub enum StoreCommand {
    /// Add a signed container to the store.
    Publish {
        #[arg(long)]
        sbom: PathBuf,
        /// Package URL to index under (default: the container's public index).
        #[arg(long)]
        purl: Option<String>,
    },
    /// Retrieve the stored container for a package URL.
    Fetch {
        #[arg(long)]
        purl: String,
        /// Output file (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Containers to compare.
    #[arg(required = true)]
    pub containers: Vec<PathBuf>,
    /// Also compare against the configured store's entries.
    #[arg(long)]
    pub with_store: bool,
}

pub fn entry_path(store: &Path, purl: &str) -> PathBuf {
    store.join(format!("{}.petra", percent_encode(purl.as_bytes(), FILE_SAFE)))
}

pub fn store(cfg: &Config, cmd: StoreCommand, out: &mut dyn Write) -> Result<i32, CliError> {
    let dir = cfg.store()?;
    match cmd {
        StoreCommand::Publish { sbom, purl } => {
            let bytes = read(&sbom)?;
            let redacted = read_container(&bytes)?;
            let index = public_index(&redacted);
            let purl = match (purl, index) {
                (Some(p), Some(i)) if p != i => {
                    return Err(CliError::Usage(format!("container is indexed as {i}, not {p}")));
                }
                (Some(p), _) => p,
                (None, Some(i)) => i,
                (None, None) => return Err(CliError::Usage("container index is redacted; pass --purl".into())),
            };
            let trust = cfg.trusted_keys()?;
            verify_signatures(&redacted, &trust)
                .and_then(|_| verify_embedded(&redacted, &trust))
                .map_err(|e| CliError::SignatureRejected(e.to_string()))?;

            let dest = entry_path(dir, &purl);
            if dest.exists() {
                let existing = read_container(&read(&dest)?)?;
                if existing.merkle_root != redacted.merkle_root {
                    return Err(CliError::SplitView(format!(
                        "{purl} is already published with root {}",
                        existing.merkle_root.to_hex()
                    )));
                }
                write_out(out, format!("already published {purl} {}\n", redacted.merkle_root.to_hex()))?;
                return Ok(EXIT_OK);
            }
            std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
            let tmp = dest.with_extension("petra.tmp");
            std::fs::write(&tmp, &bytes).map_err(CliError::io(&tmp))?;
            std::fs::rename(&tmp, &dest).map_err(CliError::io(&dest))?;
            write_out(out, format!("published {purl} {}\n", redacted.merkle_root.to_hex()))?;
        }
        StoreCommand::Fetch { purl, out: dest } => {
            let path = entry_path(dir, &purl);
            let bytes = match std::fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(CliError::NotFound(purl)),
                Err(e) => return Err(CliError::io(&path)(e)),
            };
            match dest {
                Some(d) => std::fs::write(&d, &bytes).map_err(CliError::io(&d))?,
                None => out.write_all(&bytes).map_err(CliError::io("<stdout>"))?,
            }
        }
    }
    Ok(EXIT_OK)
}

/// Groups containers by package URL; more than one root under a URL is a
/// split view.
pub fn compare(cfg: &Config, args: CompareArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut sources: Vec<PathBuf> = args.containers;
    if args.with_store {
        let dir = cfg.store()?;
        let mut stored: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(CliError::io(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "petra"))
            .collect();
        stored.sort();
        sources.extend(stored);
    }
    let mut by_purl: BTreeMap<String, BTreeMap<Hash256, Vec<String>>> = BTreeMap::new();
    let mut text = String::new();
    for path in &sources {
        let r = load_container(path)?;
        let purl = public_index(&r).unwrap_or_else(|| "(redacted index)".into());
        text += &format!("{} {} {}\n", r.merkle_root.to_hex(), purl, path.display());
        if purl != "(redacted index)" {
            by_purl.entry(purl).or_default().entry(r.merkle_root).or_default().push(path.display().to_string());
        }
    }
    let conflicts: Vec<&String> = by_purl.iter().filter(|(_, roots)| roots.len() > 1).map(|(p, _)| p).collect();
    for p in &conflicts {
        text += &format!("SPLIT VIEW {p}: {} distinct roots\n", by_purl[*p].len());
    }
    write_out(out, text)?;
    if conflicts.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(CliError::SplitView(conflicts.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_are_flat_file_names() {
        let p = entry_path(Path::new("/s"), "pkg:npm/%40scope/left-pad@1.3.0?arch=x86");
        let name = p.file_name().unwrap().to_str().unwrap();
        assert!(!name.contains('/') && !name.contains(':') && !name.contains('?'));
        assert!(name.ends_with(".petra"));
        assert_ne!(entry_path(Path::new("/s"), "pkg:a/b@1"), entry_path(Path::new("/s"), "pkg:a/b@2"));
    }
}
