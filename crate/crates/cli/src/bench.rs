//! Storage and timing overhead over a corpus of SBOM documents.
//!
//! Overhead compares the `.petra` container (countersigned, as distributed)
//! with the source document as found on disk. Timings: `tree_ms` parses the
//! document, `encrypt_ms` is the whole redaction (hashing, encapsulation,
//! encryption, signing), `merkle_ms` recomputes the redacted hash pass alone,
//! `decrypt_ms` is a full-access consume (signature checks, decapsulation,
//! decryption, plaintext-hash checks).

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use clap::Args;
use petra_core::abkem::{abe_keygen, abe_setup, Scheme};
use petra_core::merkle::redacted_pass;
use petra_core::month::Month;
use petra_core::pipeline::{consume, countersign, redact, write_container, SigningKeyPair, TrustedKeys};
use petra_core::policy::{AttributeSet, RedactionPolicy};

use crate::files::{load_policy, parse_any};
use crate::redact::rng;
use crate::{write, write_out, CliError, EXIT_OK};

pub const CSV_HEADER: &str = "file,plain_bytes,redacted_bytes,overhead_pct,tree_ms,encrypt_ms,merkle_ms,decrypt_ms";

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Directory of SPDX/CycloneDX JSON documents.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "bsw07")]
    pub scheme: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub file: String,
    pub plain_bytes: usize,
    pub redacted_bytes: usize,
    pub overhead_pct: f64,
    pub tree_ms: f64,
    pub encrypt_ms: f64,
    pub merkle_ms: f64,
    pub decrypt_ms: f64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub mean: BenchRow,
    pub skipped: usize,
}

impl BenchRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{:.2},{:.3},{:.3},{:.3},{:.3}",
            self.file,
            self.plain_bytes,
            self.redacted_bytes,
            self.overhead_pct,
            self.tree_ms,
            self.encrypt_ms,
            self.merkle_ms,
            self.decrypt_ms
        )
    }
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            s += &r.csv();
            s.push('\n');
        }
        s
    }

    /// Mean of |encrypt - decrypt| relative to mean encrypt time.
    pub fn timing_asymmetry(&self) -> f64 {
        if self.rows.is_empty() || self.mean.encrypt_ms == 0.0 {
            return 0.0;
        }
        let diff: f64 = self.rows.iter().map(|r| (r.encrypt_ms - r.decrypt_ms).abs()).sum::<f64>() / self.rows.len() as f64;
        diff / self.mean.encrypt_ms
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

fn mean_row(rows: &[BenchRow]) -> BenchRow {
    let n = rows.len().max(1) as f64;
    let avg = |f: fn(&BenchRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    BenchRow {
        file: "MEAN".into(),
        plain_bytes: avg(|r| r.plain_bytes as f64).round() as usize,
        redacted_bytes: avg(|r| r.redacted_bytes as f64).round() as usize,
        overhead_pct: avg(|r| r.overhead_pct),
        tree_ms: avg(|r| r.tree_ms),
        encrypt_ms: avg(|r| r.encrypt_ms),
        merkle_ms: avg(|r| r.merkle_ms),
        decrypt_ms: avg(|r| r.decrypt_ms),
    }
}

/// Benchmarks every `*.json` file in `corpus` (sorted by name) under a fresh,
/// in-memory key service.
pub fn run_bench(corpus: &Path, policy: &RedactionPolicy, scheme: Scheme, seed: u64) -> Result<BenchReport, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus)
        .map_err(CliError::io(corpus))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut rng = rng(Some(seed));
    let (pp, mk) = abe_setup(scheme, 128, &mut rng).map_err(petra_core::pipeline::PipelineError::from)?;
    let gen = SigningKeyPair::generate(&mut rng);
    let prod = SigningKeyPair::generate(&mut rng);
    let trust = TrustedKeys { generator: gen.public(), producer: prod.public() };
    let window = policy.enforce_expiry.then(|| Month::of(Utc::now()));

    let mut rows = Vec::new();
    let mut skipped = 0;
    for path in files {
        let bytes = std::fs::read(&path).map_err(CliError::io(&path))?;
        let t = Instant::now();
        let Ok(tree) = parse_any(&bytes) else {
            skipped += 1;
            continue;
        };
        let tree_ms = ms(t);

        let t = Instant::now();
        let (bundle, redacted) = redact(vec![tree], policy, &pp, &gen, window, &mut rng)?;
        let encrypt_ms = ms(t);

        let t = Instant::now();
        redacted_pass(&redacted.root).map_err(petra_core::pipeline::PipelineError::from)?;
        let merkle_ms = ms(t);

        let signed = countersign(&redacted, &bundle, &prod, &gen.public())?;
        let container = write_container(&signed);

        let mut leaves = BTreeSet::new();
        signed.root.walk(|_, node, _| {
            if let Some(s) = node.as_sbom() {
                for slot in &s.keyslots {
                    leaves.extend(slot.access.leaves().into_iter().map(str::to_owned));
                }
            }
        });
        leaves.insert("bench:full".to_owned());
        let attrs = AttributeSet::from_iter(leaves)?;
        let sk = abe_keygen(&mk, &attrs, &mut rng).map_err(petra_core::pipeline::PipelineError::from)?;

        let t = Instant::now();
        consume(&signed, &sk, &pp, &trust, None, None)?;
        let decrypt_ms = ms(t);

        rows.push(BenchRow {
            file: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            plain_bytes: bytes.len(),
            redacted_bytes: container.len(),
            overhead_pct: (container.len() as f64 / bytes.len() as f64 - 1.0) * 100.0,
            tree_ms,
            encrypt_ms,
            merkle_ms,
            decrypt_ms,
        });
    }
    let mean = mean_row(&rows);
    Ok(BenchReport { rows, mean, skipped })
}

pub fn bench(args: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let policy = load_policy(&args.policy)?;
    let scheme = Scheme::parse(&args.scheme).ok_or_else(|| CliError::Usage(format!("unknown scheme {}", args.scheme)))?;
    let report = run_bench(&args.corpus, &policy, scheme, args.seed)?;
    if report.skipped > 0 {
        let _ = writeln!(err, "warning: skipped {} unparseable file(s)", report.skipped);
    }
    match &args.csv {
        Some(path) => {
            write(path, report.to_csv().as_bytes())?;
            write_out(
                out,
                format!(
                    "files: {}\nskipped: {}\nmean overhead: {:.2}%\nmean encrypt: {:.3} ms\nmean decrypt: {:.3} ms\n",
                    report.rows.len(),
                    report.skipped,
                    report.mean.overhead_pct,
                    report.mean.encrypt_ms,
                    report.mean.decrypt_ms
                ),
            )?;
        }
        None => write_out(out, report.to_csv())?,
    }
    Ok(EXIT_OK)
}
