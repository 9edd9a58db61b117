//! The `petra` command line. [`run`] is the whole program; the binary only
//! forwards `std::env::args` and exits with its status.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub mod bench;
pub mod config;
pub mod error;
pub mod files;
pub mod inspect;
pub mod keys;
pub mod redact;
pub mod store;
pub mod verify;

pub use config::Config;
pub use error::{CliError, EXIT_FAILURE, EXIT_LIED, EXIT_OK, EXIT_SPLIT_VIEW, EXIT_UNTRUSTED};

#[derive(Parser, Debug)]
#[command(name = "petra", version, about = "Redacted SBOM exchange")]
pub struct Cli {
    /// Configuration file (default: ./petra.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Per-invocation overrides of `petra.toml` entries.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// ABE public parameters
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Generator verifying key
    #[arg(long = "generator-pub", global = true)]
    pub generator_public: Option<PathBuf>,
    /// Producer verifying key
    #[arg(long = "producer-pub", global = true)]
    pub producer_public: Option<PathBuf>,
    /// Generator signing key
    #[arg(long = "generator-key", global = true)]
    pub generator_key: Option<PathBuf>,
    /// Producer signing key
    #[arg(long = "producer-key", global = true)]
    pub producer_key: Option<PathBuf>,
    /// Directory store
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Key service base URL
    #[arg(long = "kms", global = true)]
    pub kms_url: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Redact one or more SBOMs into a signed container.
    Redact(redact::RedactArgs),
    /// Countersign a container after auditing it against its salt bundle.
    Countersign(redact::CountersignArgs),
    /// Check signatures, sameness and optionally membership of a field.
    Verify(verify::VerifyArgs),
    /// Decrypt and print selected fields.
    Query(verify::QueryArgs),
    /// Show a container's structure without decrypting anything.
    Inspect(inspect::InspectArgs),
    /// Flag containers claiming one package URL with different roots.
    Compare(store::CompareArgs),
    /// Publish to or fetch from a directory store.
    #[command(subcommand)]
    Store(store::StoreCommand),
    /// Measure storage and time overhead over a corpus.
    Bench(bench::BenchArgs),
    /// Key service operations.
    #[command(subcommand)]
    Keys(keys::KeysCommand),
}

impl Overrides {
    fn apply(self, mut cfg: Config) -> Config {
        macro_rules! take {
            ($($f:ident),*) => { $( if self.$f.is_some() { cfg.$f = self.$f; } )* };
        }
        take!(params, generator_public, producer_public, generator_key, producer_key, store, kms_url);
        cfg
    }
}

/// Runs one invocation, writing results to `out` and diagnostics to `err`.
/// Returns the exit status.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return EXIT_FAILURE;
            }
            let _ = write!(out, "{rendered}");
            return EXIT_OK;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let body = json!({ "error": { "code": e.code(), "message": e.to_string() } });
            let _ = writeln!(err, "{body}");
            e.exit_code()
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = cli.overrides.apply(Config::load(cli.config.as_deref())?);
    match cli.command {
        Command::Redact(a) => redact::redact(&cfg, a, out),
        Command::Countersign(a) => redact::countersign(&cfg, a, out),
        Command::Verify(a) => verify::verify(&cfg, a, out),
        Command::Query(a) => verify::query(&cfg, a, out),
        Command::Inspect(a) => inspect::inspect(a, out),
        Command::Compare(a) => store::compare(&cfg, a, out),
        Command::Store(c) => store::store(&cfg, c, out),
        Command::Bench(a) => bench::bench(a, out, err),
        Command::Keys(c) => keys::keys(&cfg, c, out),
    }
}

pub(crate) fn write_out(out: &mut dyn Write, text: impl AsRef<str>) -> Result<(), CliError> {
    out.write_all(text.as_ref().as_bytes()).map_err(CliError::io("<stdout>"))
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(CliError::io(path))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(CliError::io(path))
}
