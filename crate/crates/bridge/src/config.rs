//! Startup configuration, read from the environment.
//!
//! Values holding JSON may be given inline or as a path to a file. Any
//! problem aborts startup with a message naming the variable.

use std::collections::HashMap;
use std::net::SocketAddr;

use anyhow::{anyhow, bail, Context};
use url::Url;
use vcbridge_core::jws::{Jwk, SigningKey};
use vcbridge_core::pex::{self, InputDescriptor};
use vcbridge_core::policy::{self, LoginPolicy};

use crate::provider::{self, ClientConfig};
use crate::resolver::Fetcher;

pub const DEFAULT_BIND: &str = "0.0.0.0:3000";

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub external_url: String,
    pub bridge_key: SigningKey,
    pub policy: LoginPolicy,
    pub descriptor_override: Option<Vec<InputDescriptor>>,
    pub clients: Vec<ClientConfig>,
    /// Token signing key; generated at startup when absent.
    pub oidc_key: Option<SigningKey>,
    pub fetch_overrides: HashMap<String, Url>,
    pub bind: SocketAddr,
}

impl BridgeConfig {
    pub fn from_env() -> anyhow::Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> anyhow::Result<Self> {
        let required = |k: &str| get(k).filter(|v| !v.trim().is_empty()).ok_or_else(|| anyhow!("{k} is not set"));

        let external_url = required("EXTERNAL_URL")?;
        let parsed = Url::parse(&external_url).with_context(|| format!("EXTERNAL_URL {external_url:?}"))?;
        if !matches!(parsed.scheme(), "http" | "https") || parsed.host().is_none() {
            bail!("EXTERNAL_URL must be an absolute http(s) URL");
        }
        if parsed.query().is_some() || parsed.fragment().is_some() {
            bail!("EXTERNAL_URL must not carry a query or fragment");
        }

        let bridge_key = signing_key(&required("DID_KEY_JWK")?).context("DID_KEY_JWK")?;
        if !matches!(bridge_key, SigningKey::Ed25519(_)) {
            bail!("DID_KEY_JWK must be an Ed25519 (OKP) key");
        }

        let policy_text = inline_or_file(&required("LOGIN_POLICY")?).context("LOGIN_POLICY")?;
        let policy = policy::parse_policy(&policy_text).context("LOGIN_POLICY")?;

        let descriptor_override = match get("PEX_DESCRIPTOR_OVERRIDE").filter(|v| !v.trim().is_empty()) {
            Some(v) => {
                let text = inline_or_file(&v).context("PEX_DESCRIPTOR_OVERRIDE")?;
                Some(pex::parse_descriptors(&text).context("PEX_DESCRIPTOR_OVERRIDE")?)
            }
            None => None,
        };

        let clients_text = inline_or_file(&required("OIDC_CLIENTS")?).context("OIDC_CLIENTS")?;
        let clients = provider::parse_clients(&clients_text).context("OIDC_CLIENTS")?;

        let oidc_key = match get("OIDC_SIGNING_JWK").filter(|v| !v.trim().is_empty()) {
            Some(v) => Some(signing_key(&v).context("OIDC_SIGNING_JWK")?),
            None => None,
        };

        let fetch_overrides = match get("DID_WEB_ORIGIN_OVERRIDES") {
            Some(v) => Fetcher::parse_overrides(&v).context("DID_WEB_ORIGIN_OVERRIDES")?,
            None => HashMap::new(),
        };

        let bind = get("BIND").unwrap_or_else(|| DEFAULT_BIND.into());
        let bind = bind.parse().with_context(|| format!("BIND {bind:?}"))?;

        Ok(Self { external_url, bridge_key, policy, descriptor_override, clients, oidc_key, fetch_overrides, bind })
    }
}

fn signing_key(text: &str) -> anyhow::Result<SigningKey> {
    let jwk: Jwk = serde_json::from_str(&inline_or_file(text)?)?;
    Ok(jwk.signing_key()?)
}

/// JSON values may be written inline; anything else is a file path.
fn inline_or_file(value: &str) -> anyhow::Result<String> {
    let trimmed = value.trim();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return Ok(trimmed.to_owned());
    }
    std::fs::read_to_string(trimmed).with_context(|| format!("reading {trimmed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const POLICY: &str = r#"[{"credentialID":"1","patterns":[{"issuer":"did:web:issuer.example","claims":[{"claimPath":"$.credentialSubject.email"}]}]}]"#;
    const CLIENTS: &str = r#"[{"client_id":"rp","client_secret":"s","redirect_uris":["https://rp.example/cb"]}]"#;

    fn ed_jwk() -> String {
        let key = SigningKey::Ed25519(ed25519_dalek::SigningKey::from_bytes(&[1u8; 32]));
        serde_json::to_string(&key.to_jwk()).unwrap()
    }

    fn env(extra: &[(&'static str, String)]) -> HashMap<&'static str, String> {
        let mut m: HashMap<&str, String> = [
            ("EXTERNAL_URL", "https://bridge.example".to_owned()),
            ("DID_KEY_JWK", ed_jwk()),
            ("LOGIN_POLICY", POLICY.to_owned()),
            ("OIDC_CLIENTS", CLIENTS.to_owned()),
        ]
        .into_iter()
        .collect();
        m.extend(extra.iter().cloned());
        m
    }

    fn load(m: &HashMap<&'static str, String>) -> anyhow::Result<BridgeConfig> {
        BridgeConfig::from_lookup(|k| m.get(k).cloned())
    }

    #[test]
    fn minimal_environment_loads() {
        let c = load(&env(&[])).unwrap();
        assert_eq!(c.clients.len(), 1);
        assert!(c.descriptor_override.is_none());
        assert!(c.oidc_key.is_none());
        assert_eq!(c.bind.port(), 3000);
    }

    #[test]
    fn missing_or_bad_values_name_the_variable() {
        let mut m = env(&[]);
        m.remove("LOGIN_POLICY");
        assert!(load(&m).unwrap_err().to_string().contains("LOGIN_POLICY"));

        let m = env(&[("LOGIN_POLICY", r#"[{"credentialID":"1","patterns":[]}]"#.into())]);
        assert!(format!("{:#}", load(&m).unwrap_err()).contains("LOGIN_POLICY"));

        let m = env(&[("PEX_DESCRIPTOR_OVERRIDE", "{}".into())]);
        assert!(format!("{:#}", load(&m).unwrap_err()).contains("PEX_DESCRIPTOR_OVERRIDE"));

        let m = env(&[("EXTERNAL_URL", "bridge.example".into())]);
        assert!(load(&m).is_err());
    }

    #[test]
    fn policy_may_come_from_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        std::fs::write(&path, POLICY).unwrap();
        let c = load(&env(&[("LOGIN_POLICY", path.display().to_string())])).unwrap();
        assert_eq!(c.policy.expected_credentials()[0].credential_id, "1");
    }

    #[test]
    fn bridge_key_must_be_ed25519() {
        let p = SigningKey::P256(p256::ecdsa::SigningKey::from_slice(&[3u8; 32]).unwrap());
        let m = env(&[("DID_KEY_JWK", serde_json::to_string(&p.to_jwk()).unwrap())]);
        assert!(load(&m).is_err());
    }
}
