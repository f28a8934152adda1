//! Outbound fetches: `did:web` documents and status list credentials.
//!
//! Only HTTPS is used, redirects must stay on the original host, responses
//! are capped at 64 KiB and time out after 5 s. For local deployments and
//! tests, individual hosts can be mapped onto another origin (which may be
//! plain HTTP) with an explicit override table.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::Value;
use url::Url;
use vcbridge_core::credential::{self, PrefetchedResolver};
use vcbridge_core::did::{self, DidDocumentKey, DidError};
use vcbridge_core::status::{self, StatusListReference};
use vcbridge_core::{CredentialStatus, KeyResolver, VerifyError};

use crate::statuslist;

pub const FETCH_TIMEOUT: Duration = Duration::from_secs(5);
pub const MAX_RESPONSE_BYTES: usize = 64 * 1024;
pub const DID_WEB_CACHE_TTL: Duration = Duration::from_secs(60);
const MAX_REDIRECTS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("invalid URL {0}")]
    InvalidUrl(String),
    #[error("refusing non-HTTPS URL {0}")]
    InsecureScheme(String),
    #[error("request failed: {0}")]
    Http(String),
    #[error("unexpected status {0}")]
    Status(u16),
    #[error("response larger than {MAX_RESPONSE_BYTES} bytes")]
    TooLarge,
}

/// HTTP GET with the outbound restrictions applied.
#[derive(Debug, Clone)]
pub struct Fetcher {
    client: reqwest::Client,
    overrides: HashMap<String, Url>,
}

impl Fetcher {
    pub fn new() -> Self {
        Self::with_overrides(HashMap::new())
    }

    /// `overrides` maps a URL authority (`host` or `host:port`) to the origin
    /// that should be contacted instead.
    pub fn with_overrides(overrides: HashMap<String, Url>) -> Self {
        let policy = reqwest::redirect::Policy::custom(|attempt| {
            let first = attempt.previous().first().and_then(|u| u.host_str().map(str::to_owned));
            if attempt.previous().len() > MAX_REDIRECTS {
                attempt.error("too many redirects")
            } else if attempt.url().host_str().map(str::to_owned) != first {
                attempt.stop()
            } else {
                attempt.follow()
            }
        });
        let client = reqwest::Client::builder()
            .timeout(FETCH_TIMEOUT)
            .redirect(policy)
            .build()
            .expect("HTTP client builds");
        Self { client, overrides }
    }

    /// Parses `host=origin,host=origin` (as found in the environment).
    pub fn parse_overrides(spec: &str) -> Result<HashMap<String, Url>, FetchError> {
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|pair| {
                let (host, origin) = pair.split_once('=').ok_or_else(|| FetchError::InvalidUrl(pair.into()))?;
                let origin = Url::parse(origin).map_err(|_| FetchError::InvalidUrl(origin.into()))?;
                Ok((host.trim().to_owned(), origin))
            })
            .collect()
    }

    /// The URL that will actually be requested for `url`.
    pub fn effective_url(&self, url: &str) -> Result<Url, FetchError> {
        let parsed = Url::parse(url).map_err(|_| FetchError::InvalidUrl(url.into()))?;
        let authority = match (parsed.host_str(), parsed.port()) {
            (Some(h), Some(p)) => format!("{h}:{p}"),
            (Some(h), None) => h.to_owned(),
            _ => return Err(FetchError::InvalidUrl(url.into())),
        };
        if let Some(origin) = self.overrides.get(&authority) {
            let mut mapped = origin.clone();
            let base = origin.path().trim_end_matches('/');
            mapped.set_path(&format!("{base}{}", parsed.path()));
            mapped.set_query(parsed.query());
            return Ok(mapped);
        }
        if parsed.scheme() != "https" {
            return Err(FetchError::InsecureScheme(url.into()));
        }
        Ok(parsed)
    }

    pub async fn get(&self, url: &str) -> Result<Vec<u8>, FetchError> {
        let target = self.effective_url(url)?;
        let mut resp = self.client.get(target).send().await.map_err(|e| FetchError::Http(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(FetchError::Status(resp.status().as_u16()));
        }
        if resp.content_length().is_some_and(|n| n as usize > MAX_RESPONSE_BYTES) {
            return Err(FetchError::TooLarge);
        }
        let mut body = Vec::new();
        while let Some(chunk) = resp.chunk().await.map_err(|e| FetchError::Http(e.to_string()))? {
            body.extend_from_slice(&chunk);
            if body.len() > MAX_RESPONSE_BYTES {
                return Err(FetchError::TooLarge);
            }
        }
        Ok(body)
    }
}

impl Default for Fetcher {
    fn default() -> Self {
        Self::new()
    }
}

/// `did:key` and `did:web` resolution with a short-lived document cache.
#[derive(Debug)]
pub struct DidResolver {
    fetcher: Fetcher,
    cache: Mutex<HashMap<String, (Value, Instant)>>,
}

impl DidResolver {
    pub fn new(fetcher: Fetcher) -> Self {
        Self { fetcher, cache: Mutex::default() }
    }

    pub fn fetcher(&self) -> &Fetcher {
        &self.fetcher
    }

    async fn web_document(&self, did: &str) -> Result<Value, DidError> {
        if let Some((doc, at)) = self.cache.lock().expect("cache lock").get(did) {
            if at.elapsed() < DID_WEB_CACHE_TTL {
                return Ok(doc.clone());
            }
        }
        let url = did::did_web_location(did)?.https_url();
        let body = self.fetcher.get(&url).await.map_err(|e| DidError::ResolutionFailure(format!("{url}: {e}")))?;
        let doc: Value = serde_json::from_slice(&body)
            .map_err(|e| DidError::ResolutionFailure(format!("{url}: document is not JSON: {e}")))?;
        self.cache.lock().expect("cache lock").insert(did.to_owned(), (doc.clone(), Instant::now()));
        Ok(doc)
    }

    pub async fn resolve_did(&self, did: &str, kid: Option<&str>) -> Result<DidDocumentKey, DidError> {
        let parsed = did::Did::parse(did)?;
        match parsed.method {
            "key" => PrefetchedResolver::new().resolve_key(did, kid),
            "web" => did::select_document_key(&self.web_document(did).await?, did, kid),
            other => Err(DidError::UnsupportedMethod(other.to_owned())),
        }
    }

    /// Fetches every `did:web` document among `dids` so the synchronous
    /// verifier can run. Failures are recorded, not raised; they surface
    /// when (and if) the key is actually needed.
    pub async fn prefetch(&self, dids: &[String]) -> PrefetchedResolver {
        let mut out = PrefetchedResolver::new();
        for d in dids {
            if !d.starts_with("did:web:") || out.has_document(d) {
                continue;
            }
            match self.web_document(d).await {
                Ok(doc) => out.insert_document(d.clone(), doc),
                Err(e) => out.insert_failure(d.clone(), e.to_string()),
            }
        }
        out
    }

    /// Resolves the keys a presentation needs and verifies it.
    pub async fn verify_presentation(
        &self,
        envelope: &str,
        challenge: &str,
        audience: &str,
        now: i64,
    ) -> Result<vcbridge_core::VerifiedPresentation, VerifyError> {
        let keys = self.prefetch(&credential::signer_dids(envelope)?).await;
        credential::verify_vp(envelope, challenge, audience, now, &keys)
    }

    pub async fn verify_credential(&self, envelope: &str, now: i64) -> Result<Value, VerifyError> {
        let jws = vcbridge_core::jws::Jws::parse(envelope)?;
        let iss = jws.payload.get("iss").and_then(Value::as_str).map(str::to_owned).into_iter().collect::<Vec<_>>();
        let keys = self.prefetch(&iss).await;
        credential::verify_vc(envelope, now, &keys)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StatusCheckError {
    #[error("could not fetch status list: {0}")]
    FetchFailure(String),
    #[error("status list credential failed verification: {0}")]
    BadStatusListSignature(String),
    #[error(transparent)]
    Status(#[from] status::StatusError),
}

impl DidResolver {
    /// Looks up the revocation bit a credential points at. The list must be
    /// signed by `expected_issuer` when one is given.
    pub async fn check_status(
        &self,
        reference: &StatusListReference,
        expected_issuer: Option<&str>,
        now: i64,
    ) -> Result<CredentialStatus, StatusCheckError> {
        let body = self
            .fetcher
            .get(&reference.status_list_credential)
            .await
            .map_err(|e| StatusCheckError::FetchFailure(e.to_string()))?;
        let envelope = String::from_utf8(body).map_err(|_| StatusCheckError::FetchFailure("body is not UTF-8".into()))?;
        let list_vc = self
            .verify_credential(envelope.trim(), now)
            .await
            .map_err(|e| StatusCheckError::BadStatusListSignature(e.to_string()))?;
        if let Some(expected) = expected_issuer {
            if vcbridge_core::policy::credential_issuer(&list_vc) != Some(expected) {
                return Err(StatusCheckError::BadStatusListSignature(format!(
                    "status list is not issued by {expected}"
                )));
            }
        }
        let encoded = status::encoded_list(&list_vc)?;
        let bits = statuslist::decode_list(encoded)
            .map_err(|e| StatusCheckError::Status(status::StatusError::MalformedList(e.to_string())))?;
        Ok(bits.status(reference.status_list_index)?)
    }
}
