use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use vcbridge::clock::SystemClock;
use vcbridge::config::BridgeConfig;
use vcbridge::server::{self, Bridge};

/// Serves the bridge. Configuration comes from the environment:
/// EXTERNAL_URL, DID_KEY_JWK, LOGIN_POLICY, OIDC_CLIENTS and optionally
/// PEX_DESCRIPTOR_OVERRIDE, OIDC_SIGNING_JWK, DID_WEB_ORIGIN_OVERRIDES, BIND.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Print the bridge DID and the generated presentation definition, then exit.
    #[arg(long)]
    check: bool,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let config = BridgeConfig::from_env()?;
    let bind = config.bind;
    let bridge = Arc::new(Bridge::new(config, Arc::new(SystemClock)));
    if args.check {
        println!("{}", bridge.rp.did());
        println!("{}", serde_json::to_string_pretty(&bridge.rp.presentation_definition("check"))?);
        return Ok(());
    }
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    tracing::info!(did = bridge.rp.did(), "listening on {bind}");
    server::serve(listener, bridge).await?;
    Ok(())
}
