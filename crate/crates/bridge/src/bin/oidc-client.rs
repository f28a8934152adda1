use std::path::PathBuf;

use clap::{Parser, Subcommand};
use url::Url;
use vcbridge::client::{AuthMethod, ClientOptions, OidcClient};
use vcbridge::clock::{Clock, SystemClock};
use vcbridge::wallet::{Faults, Wallet};

/// Test relying party: runs an authorization code login against a bridge.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one login, answering the QR code with a simulated wallet.
    Run {
        #[arg(long)]
        bridge: Url,
        #[arg(long)]
        client_id: String,
        #[arg(long)]
        client_secret: String,
        #[arg(long)]
        redirect_uri: String,
        #[arg(long, default_value = "openid")]
        scope: String,
        /// Wallet vault directory (see wallet-sim).
        #[arg(long)]
        auto_wallet: PathBuf,
        /// Authenticate at the token endpoint with form parameters instead of Basic.
        #[arg(long)]
        client_secret_post: bool,
        #[arg(long)]
        tamper_code: bool,
        #[arg(long)]
        wrong_nonce: bool,
        #[arg(long)]
        violate_holder_binding: bool,
        #[arg(long)]
        tamper_signature: bool,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let Cmd::Run {
        bridge,
        client_id,
        client_secret,
        redirect_uri,
        scope,
        auto_wallet,
        client_secret_post,
        tamper_code,
        wrong_nonce,
        violate_holder_binding,
        tamper_signature,
    } = Args::parse().cmd;
    let wallet = Wallet::open(&auto_wallet)?;
    let client = OidcClient::new(ClientOptions {
        bridge,
        client_id,
        client_secret,
        redirect_uri,
        scope,
        auth_method: if client_secret_post { AuthMethod::Post } else { AuthMethod::Basic },
        tamper_code,
        nonce: None,
    });
    let faults = Faults { wrong_nonce, violate_holder_binding, tamper_signature };
    let report = client.run(&wallet, faults, SystemClock.now()).await?;
    for ex in &report.exchanges {
        eprintln!("{} {} -> {}{}", ex.method, ex.path(), ex.status, ex.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default());
    }
    if let Some(p) = &report.presentation {
        eprintln!("presentation: {} {}", p.status, p.body);
    }
    if let Some(t) = &report.token {
        eprintln!("token endpoint: {} {}", t.status, t.error().unwrap_or("ok"));
    }
    if let Some(id) = &report.id_token_claims {
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({
            "id_token": id,
            "access_token": report.access_token_claims,
        }))?);
    }
    std::process::exit(if report.succeeded() { 0 } else { 1 });
}
