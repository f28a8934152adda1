use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use vcbridge::clock::{Clock, SystemClock};
use vcbridge::transcript::RecordingClient;
use vcbridge::wallet::{self, CredentialOptions, Faults, Issuer, Wallet};
use vcbridge_core::StatusBits;

/// Holder wallet and credential issuer for end-to-end testing.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a vault (or open an existing one) and print the holder DID.
    Init { vault: PathBuf },
    /// Write a fresh private JWK and print its did:key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// P-256 instead of Ed25519.
        #[arg(long)]
        p256: bool,
    },
    /// Issue a credential; stored in --vault or printed.
    Issue {
        #[arg(long)]
        issuer_key: PathBuf,
        /// Issuer DID; defaults to the did:key of the issuer key.
        #[arg(long)]
        issuer_did: Option<String>,
        /// Subject DID; defaults to the vault holder.
        #[arg(long)]
        subject: Option<String>,
        /// credentialSubject claims as a JSON object.
        #[arg(long)]
        claims: String,
        /// Additional credential type.
        #[arg(long = "type")]
        types: Vec<String>,
        /// Status list credential URL for a revocation entry.
        #[arg(long, requires = "index")]
        status_list: Option<String>,
        /// Index into the status list.
        #[arg(long, requires = "status_list")]
        index: Option<u64>,
        /// Validity in seconds from now.
        #[arg(long)]
        expires_in: Option<i64>,
        /// Issue a credential that expired an hour ago.
        #[arg(long, conflicts_with = "expires_in")]
        expired: bool,
        #[arg(long)]
        vault: Option<PathBuf>,
    },
    /// Print a signed status list credential.
    StatusList {
        #[arg(long)]
        issuer_key: PathBuf,
        #[arg(long)]
        issuer_did: Option<String>,
        /// URL the list will be served from.
        #[arg(long)]
        url: String,
        /// List size in bytes (eight entries per byte).
        #[arg(long, default_value_t = 16 * 1024)]
        size_bytes: usize,
        /// Indices to mark revoked.
        #[arg(long)]
        revoke: Vec<u64>,
    },
    /// Print the DID document for a did:web issuer.
    DidDoc {
        #[arg(long)]
        issuer_key: PathBuf,
        #[arg(long)]
        issuer_did: String,
    },
    /// Answer a QR URI with credentials from the vault.
    Present {
        /// The QR URI (openid-vc://...).
        uri: String,
        #[arg(long)]
        vault: PathBuf,
        #[arg(long)]
        wrong_nonce: bool,
        #[arg(long)]
        violate_holder_binding: bool,
        #[arg(long)]
        tamper_signature: bool,
    },
}

fn issuer(key: &std::path::Path, did: Option<String>) -> anyhow::Result<Issuer> {
    let key = wallet::read_key(key)?;
    Ok(match did {
        Some(did) => Issuer::with_did(key, did),
        None => Issuer::with_did_key(key),
    })
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let now = SystemClock.now();
    match Args::parse().cmd {
        Cmd::Init { vault } => println!("{}", Wallet::init(&vault)?.did()),
        Cmd::Keygen { out, p256 } => {
            let key = if p256 { wallet::random_p256() } else { wallet::random_ed25519() };
            wallet::write_key(&out, &key)?;
            println!("{}", Issuer::with_did_key(key).did());
        }
        Cmd::Issue {
            issuer_key,
            issuer_did,
            subject,
            claims,
            types,
            status_list,
            index,
            expires_in,
            expired,
            vault,
        } => {
            let issuer = issuer(&issuer_key, issuer_did)?;
            let subject = match (subject, &vault) {
                (Some(s), _) => s,
                (None, Some(v)) => Wallet::open(v)?.did().to_owned(),
                (None, None) => anyhow::bail!("--subject or --vault is required"),
            };
            let claims = serde_json::from_str(&claims).context("--claims")?;
            let (not_before, expires) = if expired {
                (now - 7200, Some(now - 3600))
            } else {
                (now, expires_in.map(|s| now + s))
            };
            let opts = CredentialOptions {
                extra_types: types,
                status: status_list.zip(index),
                not_before,
                expires,
            };
            let jwt = issuer.issue(&subject, claims, &opts)?;
            match vault {
                Some(v) => println!("{}", Wallet::store(&v, &jwt)?.display()),
                None => println!("{jwt}"),
            }
        }
        Cmd::StatusList { issuer_key, issuer_did, url, size_bytes, revoke } => {
            let issuer = issuer(&issuer_key, issuer_did)?;
            let mut bits = StatusBits::zeroed(size_bytes);
            for i in revoke {
                bits.set(i, true)?;
            }
            println!("{}", issuer.status_list(&url, &bits, now));
        }
        Cmd::DidDoc { issuer_key, issuer_did } => {
            let issuer = issuer(&issuer_key, Some(issuer_did))?;
            println!("{}", serde_json::to_string_pretty(&issuer.did_document())?);
        }
        Cmd::Present { uri, vault, wrong_nonce, violate_holder_binding, tamper_signature } => {
            let wallet = Wallet::open(&vault)?;
            let faults = Faults { wrong_nonce, violate_holder_binding, tamper_signature };
            let outcome = wallet.present(&RecordingClient::default(), &uri, faults, now).await?;
            println!("{} {}", outcome.status, outcome.body);
            std::process::exit(if outcome.accepted() { 0 } else { 1 });
        }
    }
    Ok(())
}
