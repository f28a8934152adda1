//! DID syntax, offline `did:key` resolution, `did:web` URL mapping and
//! verification key selection from DID documents.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

use crate::jws::{Jwk, PublicKey};

const ED25519_PUB: [u8; 2] = [0xed, 0x01];
const P256_PUB: [u8; 2] = [0x80, 0x24];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DidError {
    #[error("malformed DID {0:?}")]
    Malformed(String),
    #[error("unsupported DID method `{0}`")]
    UnsupportedMethod(String),
    #[error("DID resolution failed: {0}")]
    ResolutionFailure(String),
}

/// A syntactically valid `did:<method>:<method-specific-id>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Did<'a> {
    pub method: &'a str,
    pub method_specific_id: &'a str,
}

impl<'a> Did<'a> {
    pub fn parse(s: &'a str) -> Result<Self, DidError> {
        let malformed = || DidError::Malformed(s.to_string());
        let rest = s.strip_prefix("did:").ok_or_else(malformed)?;
        let (method, msi) = rest.split_once(':').ok_or_else(malformed)?;
        if method.is_empty() || !method.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()) {
            return Err(malformed());
        }
        let id_char = |c: char| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_' | ':' | '%');
        if msi.is_empty() || msi.ends_with(':') || !msi.chars().all(id_char) {
            return Err(malformed());
        }
        Ok(Self { method, method_specific_id: msi })
    }
}

/// Strips a DID URL down to the DID (drops `#fragment`, `?query`, `/path`).
pub fn did_of(did_url: &str) -> &str {
    let end = did_url.find(['#', '?', '/']).unwrap_or(did_url.len());
    &did_url[..end]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DidDocumentKey {
    pub did: String,
    pub key_id: String,
    pub public_key: PublicKey,
}

/// Encodes a public key as a `did:key` identifier.
pub fn did_key_for(key: &PublicKey) -> String {
    alloc::format!("did:key:{}", multibase_key(key))
}

/// The fragment-qualified key id of a `did:key` (`did:key:z…#z…`).
pub fn did_key_id_for(key: &PublicKey) -> String {
    let mb = multibase_key(key);
    alloc::format!("did:key:{mb}#{mb}")
}

fn multibase_key(key: &PublicKey) -> String {
    let mut bytes = Vec::with_capacity(35);
    match key {
        PublicKey::Ed25519(k) => {
            bytes.extend_from_slice(&ED25519_PUB);
            bytes.extend_from_slice(k.as_bytes());
        }
        PublicKey::P256(k) => {
            bytes.extend_from_slice(&P256_PUB);
            bytes.extend_from_slice(k.to_encoded_point(true).as_bytes());
        }
    }
    alloc::format!("z{}", bs58::encode(bytes).into_string())
}

fn decode_multibase_key(mb: &str) -> Result<PublicKey, DidError> {
    let bad = |why: &str| DidError::ResolutionFailure(alloc::format!("{why} in multibase key {mb:?}"));
    let b58 = mb.strip_prefix('z').ok_or_else(|| bad("unsupported multibase prefix"))?;
    let bytes = bs58::decode(b58).into_vec().map_err(|_| bad("invalid base58btc"))?;
    match bytes.split_at_checked(2) {
        Some((codec, raw)) if codec == ED25519_PUB => {
            let raw: [u8; 32] = raw.try_into().map_err(|_| bad("wrong Ed25519 key length"))?;
            ed25519_dalek::VerifyingKey::from_bytes(&raw)
                .map(PublicKey::Ed25519)
                .map_err(|_| bad("invalid Ed25519 point"))
        }
        Some((codec, raw)) if codec == P256_PUB => p256::ecdsa::VerifyingKey::from_sec1_bytes(raw)
            .map(PublicKey::P256)
            .map_err(|_| bad("invalid P-256 point")),
        _ => Err(bad("unsupported multicodec")),
    }
}

/// Resolves a `did:key` locally. No I/O is involved.
pub fn resolve_did_key(did: &str) -> Result<DidDocumentKey, DidError> {
    let parsed = Did::parse(did)?;
    if parsed.method != "key" {
        return Err(DidError::UnsupportedMethod(parsed.method.to_string()));
    }
    let mb = parsed.method_specific_id;
    let public_key = decode_multibase_key(mb).map_err(|_| DidError::Malformed(did.to_string()))?;
    Ok(DidDocumentKey { did: did.to_string(), key_id: alloc::format!("{did}#{mb}"), public_key })
}

/// Where a `did:web` document lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DidWebLocation {
    /// Host, with `:port` when the DID encodes one.
    pub authority: String,
    /// Absolute path of the document, e.g. `/issuer/did.json`.
    pub path: String,
}

impl DidWebLocation {
    pub fn https_url(&self) -> String {
        alloc::format!("https://{}{}", self.authority, self.path)
    }
}

/// Maps `did:web:<domain>[:<path>…]` onto the document location: bare
/// domains use `/.well-known/did.json`, paths map to `/<path>/did.json`.
pub fn did_web_location(did: &str) -> Result<DidWebLocation, DidError> {
    let parsed = Did::parse(did)?;
    if parsed.method != "web" {
        return Err(DidError::UnsupportedMethod(parsed.method.to_string()));
    }
    let mut parts = parsed.method_specific_id.split(':');
    let domain = parts.next().unwrap_or_default();
    let authority = domain.replace("%3A", ":").replace("%3a", ":");
    let host = authority.split(':').next().unwrap_or_default();
    if host.is_empty()
        || !host.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'.' || b == b'-')
        || authority.contains('%')
    {
        return Err(DidError::Malformed(did.to_string()));
    }
    let segments: Vec<&str> = parts.collect();
    if segments.iter().any(|s| s.is_empty() || *s == "." || *s == ".." || s.contains('%')) {
        return Err(DidError::Malformed(did.to_string()));
    }
    let path = if segments.is_empty() {
        "/.well-known/did.json".to_string()
    } else {
        alloc::format!("/{}/did.json", segments.join("/"))
    };
    Ok(DidWebLocation { authority, path })
}

/// Picks the verification key from a DID document.
///
/// With a `kid` (absolute or `#fragment`), the matching verification method
/// is used. Without one, the first `assertionMethod` entry wins, then the
/// first `authentication` entry.
pub fn select_document_key(document: &Value, did: &str, kid: Option<&str>) -> Result<DidDocumentKey, DidError> {
    let fail = |why: String| DidError::ResolutionFailure(why);
    if document.get("id").and_then(Value::as_str) != Some(did) {
        return Err(fail(alloc::format!("document id does not match {did}")));
    }
    let absolute = |id: &str| if id.starts_with('#') { alloc::format!("{did}{id}") } else { id.to_string() };
    let methods: Vec<&Value> = document
        .get("verificationMethod")
        .and_then(Value::as_array)
        .map(|a| a.iter().collect())
        .unwrap_or_default();
    let find_method = |id: &str| -> Option<&Value> {
        let want = absolute(id);
        methods.iter().copied().find(|m| m.get("id").and_then(Value::as_str).map(absolute).as_deref() == Some(want.as_str()))
    };

    let method: &Value = match kid {
        Some(kid) => {
            if did_of(kid) != did && !kid.starts_with('#') {
                return Err(fail(alloc::format!("key {kid} is not controlled by {did}")));
            }
            find_method(kid).ok_or_else(|| fail(alloc::format!("no verification method {kid}")))?
        }
        None => ["assertionMethod", "authentication"]
            .iter()
            .filter_map(|rel| document.get(*rel).and_then(Value::as_array).and_then(|a| a.first()))
            .find_map(|entry| match entry {
                Value::String(id) => find_method(id),
                obj @ Value::Object(_) => Some(obj),
                _ => None,
            })
            .ok_or_else(|| fail("document has no assertion or authentication key".into()))?,
    };

    let key_id = method
        .get("id")
        .and_then(Value::as_str)
        .map(absolute)
        .ok_or_else(|| fail("verification method without id".into()))?;
    let public_key = if let Some(jwk) = method.get("publicKeyJwk") {
        let jwk: Jwk = serde_json::from_value(jwk.clone()).map_err(|e| fail(e.to_string()))?;
        jwk.public_key().map_err(|e| fail(e.to_string()))?
    } else if let Some(mb) = method.get("publicKeyMultibase").and_then(Value::as_str) {
        decode_multibase_key(mb)?
    } else {
        return Err(fail(alloc::format!("verification method {key_id} has no supported key encoding")));
    };
    Ok(DidDocumentKey { did: did.to_string(), key_id, public_key })
}

/// A minimal DID document for a key, suitable for serving as `did:web`.
pub fn document_for_key(did: &str, key: &PublicKey) -> Value {
    let key_id = alloc::format!("{did}#key-1");
    let vm_type = match key {
        PublicKey::Ed25519(_) => "JsonWebKey2020",
        PublicKey::P256(_) => "JsonWebKey2020",
    };
    serde_json::json!({
        "@context": ["https://www.w3.org/ns/did/v1", "https://w3id.org/security/suites/jws-2020/v1"],
        "id": did,
        "verificationMethod": [{
            "id": key_id,
            "type": vm_type,
            "controller": did,
            "publicKeyJwk": key.to_jwk(),
        }],
        "assertionMethod": [key_id],
        "authentication": [key_id],
    })
}
