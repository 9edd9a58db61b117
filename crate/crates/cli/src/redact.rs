use std::io::Write;
use std::path::PathBuf;

use chrono::Utc;
use clap::Args;
use petra_core::month::Month;
use petra_core::pipeline::{self, read_bundle, write_bundle, write_container};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::files::{load_container, load_policy, load_sbom, stem};
use crate::{read, write, write_out, CliError, Config, EXIT_OK};

#[derive(Args, Debug)]
pub struct RedactArgs {
    /// Input SBOM; repeat to compose, the first being the top-level artifact.
    #[arg(long, required = true)]
    pub sbom: Vec<PathBuf>,
    #[arg(long)]
    pub policy: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Output file stem (default: the first input's stem).
    #[arg(long)]
    pub name: Option<String>,
    /// Already redacted container to embed under the (single) input.
    #[arg(long)]
    pub embed: Option<PathBuf>,
    /// Expiry window (YYYY-MM) for policies that enforce expiry; defaults
    /// to the current month.
    #[arg(long)]
    pub window: Option<Month>,
    /// Seeds the RNG for reproducible output. Testing only: salts become
    /// predictable.
    #[arg(long, hide = true)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CountersignArgs {
    /// Container to countersign.
    #[arg(long)]
    pub sbom: PathBuf,
    /// The matching `.petra-salts` bundle.
    #[arg(long)]
    pub plaintext: PathBuf,
    /// Where to write the result (default: overwrite the input).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub(crate) fn rng(seed: Option<u64>) -> StdRng {
    seed.map(StdRng::seed_from_u64).unwrap_or_else(StdRng::from_entropy)
}

pub fn redact(cfg: &Config, args: RedactArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let policy = load_policy(&args.policy)?;
    let trees = args.sbom.iter().map(|p| load_sbom(p)).collect::<Result<Vec<_>, _>>()?;
    let pp = cfg.public_params()?;
    let gen = cfg.generator_key()?;
    let window = policy.enforce_expiry.then(|| args.window.unwrap_or_else(|| Month::of(Utc::now())));
    let mut rng = rng(args.seed);

    let (bundle, mut redacted) = match &args.embed {
        None => pipeline::redact(trees, &policy, &pp, &gen, window, &mut rng)?,
        Some(child) => {
            let [parent] = trees.as_slice() else {
                return Err(CliError::Usage("--embed takes exactly one --sbom".into()));
            };
            let child = load_container(child)?;
            pipeline::compose(parent, &child, &policy, &pp, &gen, &cfg.trusted_keys()?, window, &mut rng)?
        }
    };
    if let Some(prod) = cfg.producer_key()? {
        redacted = pipeline::countersign(&redacted, &bundle, &prod, &gen.public())?;
    }

    let name = args.name.unwrap_or_else(|| stem(&args.sbom[0]));
    std::fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    write(&args.out.join(format!("{name}.petra")), &write_container(&redacted))?;
    write(&args.out.join(format!("{name}.petra-salts")), &write_bundle(&bundle, redacted.merkle_root))?;
    write_out(out, format!("{}\n", redacted.merkle_root.to_hex()))?;
    Ok(EXIT_OK)
}

pub fn countersign(cfg: &Config, args: CountersignArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let redacted = load_container(&args.sbom)?;
    let (bundle, root) = read_bundle(&read(&args.plaintext)?)?;
    if root != redacted.merkle_root {
        return Err(CliError::Usage("salt bundle belongs to a different container".into()));
    }
    let prod = cfg.producer_key()?.ok_or_else(|| CliError::Config("producer_key is not configured".into()))?;
    let signed = pipeline::countersign(&redacted, &bundle, &prod, &cfg.generator_public()?)?;
    let dest = args.out.unwrap_or(args.sbom);
    write(&dest, &write_container(&signed))?;
    write_out(out, format!("countersigned {}\n", signed.merkle_root.to_hex()))?;
    Ok(EXIT_OK)
}
