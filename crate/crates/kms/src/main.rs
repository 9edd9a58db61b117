use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use petra_kms::http::{router, AppState};
use petra_kms::{KeyService, KmsConfig, STATE_ENV};

#[derive(Parser)]
#[command(name = "petra-kms", version, about = "Attribute-based key service")]
struct Cli {
    /// State directory.
    #[arg(long, env = STATE_ENV, global = true, default_value = "petra-kms-state")]
    state: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create parameters, master key and signing keys.
    Setup {
        #[arg(long, default_value = "bsw07")]
        scheme: String,
        /// Token claims copied into attributes.
        #[arg(long = "map-claim", default_values = ["role", "org", "cert"])]
        mapped_claims: Vec<String>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8470")]
        listen: SocketAddr,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Setup { scheme, mapped_claims } => {
            KeyService::setup(&cli.state, KmsConfig { scheme, mapped_claims })
                .with_context(|| format!("setting up {}", cli.state.display()))?;
            println!("initialized {}", cli.state.display());
        }
        Command::Serve { listen } => {
            let service = KeyService::open(&cli.state)?;
            let listener = tokio::net::TcpListener::bind(listen).await?;
            eprintln!("petra-kms listening on {}", listener.local_addr()?);
            axum::serve(listener, router(AppState::new(service))).await?;
        }
    }
    Ok(())
}
