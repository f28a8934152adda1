//! Verification of JWT-secured verifiable credentials and presentations.
//!
//! A credential is a compact JWS whose payload carries the credential under
//! `vc`; a presentation carries its credentials' envelopes under
//! `vp.verifiableCredential`. Keys are looked up through a [`KeyResolver`],
//! which lets callers pre-fetch remote DID documents before running the
//! (synchronous) checks here.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value};

use crate::did::{self, DidDocumentKey, DidError};
use crate::jws::{self, Jws, JwsError, SigningKey};
use crate::policy::credential_issuer;

/// Clock skew tolerated on every validity window, in seconds.
pub const LEEWAY_SECS: i64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error("bad signature")]
    BadSignature,
    #[error("credential has expired")]
    Expired,
    #[error("credential is not yet valid")]
    NotYetValid,
    #[error("malformed credential: {0}")]
    MalformedCredential(String),
    #[error(transparent)]
    Did(#[from] DidError),
    #[error("presentation challenge does not match")]
    ChallengeMismatch,
    #[error("presentation audience does not match")]
    AudienceMismatch,
    #[error("credential {index} is not issued to the presentation holder")]
    HolderBindingViolation { index: usize },
    #[error("credential {index}: {source}")]
    NestedVc { index: usize, source: Box<VerifyError> },
}

impl From<JwsError> for VerifyError {
    fn from(e: JwsError) -> Self {
        match e {
            JwsError::Malformed(m) => VerifyError::Malformed(m.into()),
            _ => VerifyError::BadSignature,
        }
    }
}

/// Looks up the verification key for a DID (and optional key id).
pub trait KeyResolver {
    fn resolve_key(&self, did: &str, kid: Option<&str>) -> Result<DidDocumentKey, DidError>;
}

/// Resolves `did:key` offline and `did:web` from documents fetched ahead of
/// time. Any other method is unsupported.
#[derive(Debug, Clone, Default)]
pub struct PrefetchedResolver {
    documents: BTreeMap<String, Result<Value, String>>,
}

impl PrefetchedResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_document(&mut self, did: impl Into<String>, document: Value) {
        self.documents.insert(did.into(), Ok(document));
    }

    /// Records that fetching the document for `did` failed.
    pub fn insert_failure(&mut self, did: impl Into<String>, reason: impl Into<String>) {
        self.documents.insert(did.into(), Err(reason.into()));
    }

    pub fn has_document(&self, did: &str) -> bool {
        self.documents.contains_key(did)
    }
}

impl KeyResolver for PrefetchedResolver {
    fn resolve_key(&self, did: &str, kid: Option<&str>) -> Result<DidDocumentKey, DidError> {
        let parsed = did::Did::parse(did)?;
        match parsed.method {
            "key" => {
                let key = did::resolve_did_key(did)?;
                let absolute = kid.map(|k| if k.starts_with('#') { alloc::format!("{did}{k}") } else { k.to_string() });
                match absolute {
                    Some(kid) if kid != key.key_id => {
                        Err(DidError::ResolutionFailure(alloc::format!("no key {kid} in {did}")))
                    }
                    _ => Ok(key),
                }
            }
            "web" => {
                match self.documents.get(did) {
                    Some(Ok(doc)) => did::select_document_key(doc, did, kid),
                    Some(Err(reason)) => Err(DidError::ResolutionFailure(reason.clone())),
                    None => Err(DidError::ResolutionFailure(alloc::format!("document for {did} not available"))),
                }
            }
            other => Err(DidError::UnsupportedMethod(other.to_string())),
        }
    }
}

/// DIDs whose keys are needed to verify a presentation: the holder and
/// every credential issuer. Nothing is verified here.
pub fn signer_dids(vp_envelope: &str) -> Result<Vec<String>, VerifyError> {
    let vp = Jws::parse(vp_envelope)?;
    let mut out = Vec::new();
    if let Some(iss) = vp.payload.get("iss").and_then(Value::as_str) {
        out.push(iss.to_string());
    }
    for env in embedded_credentials(&vp.payload).unwrap_or_default() {
        if let Some(iss) = Jws::parse(env).ok().and_then(|j| j.payload.get("iss")?.as_str().map(String::from)) {
            if !out.contains(&iss) {
                out.push(iss);
            }
        }
    }
    Ok(out)
}

fn embedded_credentials(vp_payload: &Value) -> Result<Vec<&str>, VerifyError> {
    let list = vp_payload
        .get("vp")
        .and_then(|vp| vp.get("verifiableCredential"))
        .ok_or_else(|| VerifyError::MalformedCredential("presentation carries no verifiableCredential".into()))?;
    let items: Vec<&Value> = match list {
        Value::Array(a) => a.iter().collect(),
        single => alloc::vec![single],
    };
    items
        .into_iter()
        .map(|v| v.as_str().ok_or_else(|| VerifyError::MalformedCredential("embedded credential is not a compact JWS".into())))
        .collect()
}

fn check_signature(jws: &Jws, signer: &str, resolver: &impl KeyResolver) -> Result<(), VerifyError> {
    if let Some(kid) = jws.kid() {
        if !kid.starts_with('#') && did::did_of(kid) != signer {
            return Err(VerifyError::BadSignature);
        }
    }
    let key = resolver.resolve_key(signer, jws.kid())?;
    jws.verify(&key.public_key)?;
    Ok(())
}

fn numeric(payload: &Value, claim: &str) -> Result<Option<i64>, VerifyError> {
    match payload.get(claim) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_i64()
            .or_else(|| v.as_f64().map(|f| f as i64))
            .map(Some)
            .ok_or_else(|| VerifyError::MalformedCredential(alloc::format!("{claim} is not a number"))),
    }
}

fn rfc3339(vc: &Value, field: &str) -> Result<Option<i64>, VerifyError> {
    match vc.get(field).and_then(Value::as_str) {
        None => Ok(None),
        Some(s) => chrono::DateTime::parse_from_rfc3339(s)
            .map(|t| Some(t.timestamp()))
            .map_err(|_| VerifyError::MalformedCredential(alloc::format!("{field} is not an RFC 3339 timestamp"))),
    }
}

fn check_window(not_before: &[Option<i64>], not_after: &[Option<i64>], now: i64) -> Result<(), VerifyError> {
    if not_before.iter().flatten().any(|&t| now + LEEWAY_SECS < t) {
        return Err(VerifyError::NotYetValid);
    }
    if not_after.iter().flatten().any(|&t| now - LEEWAY_SECS >= t) {
        return Err(VerifyError::Expired);
    }
    Ok(())
}

/// The subject ids of a credential (`credentialSubject` may be an array).
pub fn subject_ids(vc: &Value) -> Vec<Option<&str>> {
    match vc.get("credentialSubject") {
        Some(Value::Array(items)) => items.iter().map(|s| s.get("id").and_then(Value::as_str)).collect(),
        Some(s) => alloc::vec![s.get("id").and_then(Value::as_str)],
        None => Vec::new(),
    }
}

/// Decodes a credential envelope without checking anything but its shape.
/// Holders use this to look at their own credentials.
pub fn decode_vc_unverified(envelope: &str) -> Result<Value, VerifyError> {
    let jws = Jws::parse(envelope)?;
    let iss = jws
        .payload
        .get("iss")
        .and_then(Value::as_str)
        .ok_or_else(|| VerifyError::MalformedCredential("missing iss".into()))?;
    normalize(&jws.payload, iss)
}

fn normalize(payload: &Value, iss: &str) -> Result<Value, VerifyError> {
    let mut vc = payload
        .get("vc")
        .filter(|v| v.is_object())
        .cloned()
        .ok_or_else(|| VerifyError::MalformedCredential("missing vc object".into()))?;
    match credential_issuer(&vc) {
        None if vc.get("issuer").is_none() => {
            vc["issuer"] = Value::String(iss.into());
        }
        Some(i) if i == iss => {}
        _ => return Err(VerifyError::MalformedCredential("vc.issuer disagrees with iss".into())),
    }
    let sub = payload.get("sub").and_then(Value::as_str);
    match vc.get_mut("credentialSubject") {
        Some(Value::Object(subject)) => match (subject.get("id").and_then(Value::as_str), sub) {
            (None, Some(sub)) => {
                subject.insert("id".into(), Value::String(sub.into()));
            }
            (Some(id), Some(sub)) if id != sub => {
                return Err(VerifyError::MalformedCredential("credentialSubject.id disagrees with sub".into()))
            }
            _ => {}
        },
        Some(Value::Array(_)) => {}
        _ => return Err(VerifyError::MalformedCredential("missing credentialSubject".into())),
    }
    Ok(vc)
}

/// Verifies a credential envelope and returns the decoded credential, with
/// `issuer` and `credentialSubject.id` filled in from the JWT registered
/// claims when the credential body leaves them out.
pub fn verify_vc(envelope: &str, now: i64, resolver: &impl KeyResolver) -> Result<Value, VerifyError> {
    let jws = Jws::parse(envelope)?;
    let payload = &jws.payload;
    let iss = payload
        .get("iss")
        .and_then(Value::as_str)
        .ok_or_else(|| VerifyError::MalformedCredential("missing iss".into()))?;
    check_signature(&jws, iss, resolver)?;
    let vc = normalize(payload, iss)?;
    check_window(
        &[numeric(payload, "nbf")?, rfc3339(&vc, "issuanceDate")?, rfc3339(&vc, "validFrom")?],
        &[numeric(payload, "exp")?, rfc3339(&vc, "expirationDate")?, rfc3339(&vc, "validUntil")?],
        now,
    )?;
    Ok(vc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifiedPresentation {
    pub holder_did: String,
    pub credentials: Vec<Value>,
    pub challenge: String,
    pub audience: String,
}

/// Verifies a presentation envelope: holder signature, challenge and
/// audience binding, every embedded credential, then holder binding.
pub fn verify_vp(
    envelope: &str,
    expected_challenge: &str,
    expected_audience: &str,
    now: i64,
    resolver: &impl KeyResolver,
) -> Result<VerifiedPresentation, VerifyError> {
    let jws = Jws::parse(envelope)?;
    let payload = &jws.payload;
    let holder = payload
        .get("iss")
        .and_then(Value::as_str)
        .ok_or_else(|| VerifyError::MalformedCredential("presentation missing iss".into()))?;
    check_signature(&jws, holder, resolver)?;
    if let Some(h) = payload.get("vp").and_then(|vp| vp.get("holder")).and_then(Value::as_str) {
        if h != holder {
            return Err(VerifyError::MalformedCredential("vp.holder disagrees with iss".into()));
        }
    }

    if payload.get("nonce").and_then(Value::as_str) != Some(expected_challenge) {
        return Err(VerifyError::ChallengeMismatch);
    }
    let audience_ok = match payload.get("aud") {
        Some(Value::String(a)) => a == expected_audience,
        Some(Value::Array(a)) => a.iter().any(|v| v.as_str() == Some(expected_audience)),
        _ => false,
    };
    if !audience_ok {
        return Err(VerifyError::AudienceMismatch);
    }
    check_window(&[numeric(payload, "nbf")?], &[numeric(payload, "exp")?], now)?;

    let mut credentials = Vec::new();
    for (index, env) in embedded_credentials(payload)?.into_iter().enumerate() {
        let vc = verify_vc(env, now, resolver)
            .map_err(|e| VerifyError::NestedVc { index, source: Box::new(e) })?;
        credentials.push(vc);
    }
    for (index, vc) in credentials.iter().enumerate() {
        let ids = subject_ids(vc);
        if ids.is_empty() || ids.iter().any(|id| *id != Some(holder)) {
            return Err(VerifyError::HolderBindingViolation { index });
        }
    }
    Ok(VerifiedPresentation {
        holder_did: holder.to_string(),
        credentials,
        challenge: expected_challenge.to_string(),
        audience: expected_audience.to_string(),
    })
}

/// Key id to put in a JWS header when signing as `did` with `key`.
pub fn signer_kid(did: &str, key: &SigningKey) -> String {
    if did.starts_with("did:key:") {
        did::did_key_id_for(&key.public_key())
    } else {
        alloc::format!("{did}#key-1")
    }
}

/// Signs a credential as a JWT. `credential` is the `vc` body; `issuer`,
/// `subject`, and the window become the registered claims.
pub fn issue_vc(
    key: &SigningKey,
    issuer: &str,
    subject: &str,
    credential: Value,
    not_before: i64,
    expires: Option<i64>,
) -> String {
    let mut payload = Map::new();
    payload.insert("iss".into(), issuer.into());
    payload.insert("sub".into(), subject.into());
    payload.insert("nbf".into(), not_before.into());
    payload.insert("iat".into(), not_before.into());
    if let Some(exp) = expires {
        payload.insert("exp".into(), exp.into());
    }
    payload.insert("vc".into(), credential);
    let mut header = Map::new();
    header.insert("typ".into(), "JWT".into());
    header.insert("kid".into(), signer_kid(issuer, key).into());
    jws::sign_compact(key, header, &Value::Object(payload))
}

/// Signs a presentation wrapping `credentials` as `holder`.
pub fn issue_vp(
    key: &SigningKey,
    holder: &str,
    audience: &str,
    nonce: &str,
    credentials: &[String],
    issued_at: i64,
) -> String {
    let payload = serde_json::json!({
        "iss": holder,
        "aud": audience,
        "nonce": nonce,
        "iat": issued_at,
        "nbf": issued_at,
        "exp": issued_at + 600,
        "vp": {
            "@context": ["https://www.w3.org/2018/credentials/v1"],
            "type": ["VerifiablePresentation"],
            "holder": holder,
            "verifiableCredential": credentials,
        }
    });
    let mut header = Map::new();
    header.insert("typ".into(), "JWT".into());
    header.insert("kid".into(), signer_kid(holder, key).into());
    jws::sign_compact(key, header, &payload)
}
