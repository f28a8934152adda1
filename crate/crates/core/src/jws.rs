//! Compact JWS with EdDSA (Ed25519) and ES256, plus the JWK encodings the
//! bridge needs for its own keys and for DID documents.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use p256::ecdsa::signature::{Signer as _, Verifier as _};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JwsError {
    #[error("malformed compact JWS: {0}")]
    Malformed(&'static str),
    #[error("unsupported algorithm {0:?}")]
    UnsupportedAlgorithm(String),
    #[error("algorithm {alg} does not fit the verification key")]
    AlgorithmMismatch { alg: String },
    #[error("signature verification failed")]
    BadSignature,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyError {
    #[error("unsupported key type {0}")]
    Unsupported(String),
    #[error("invalid key material: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    EdDsa,
    Es256,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::EdDsa => "EdDSA",
            Algorithm::Es256 => "ES256",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, JwsError> {
        match name {
            "EdDSA" => Ok(Algorithm::EdDsa),
            "ES256" => Ok(Algorithm::Es256),
            other => Err(JwsError::UnsupportedAlgorithm(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublicKey {
    Ed25519(ed25519_dalek::VerifyingKey),
    P256(p256::ecdsa::VerifyingKey),
}

impl PublicKey {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            PublicKey::Ed25519(_) => Algorithm::EdDsa,
            PublicKey::P256(_) => Algorithm::Es256,
        }
    }

    pub fn to_jwk(&self) -> Jwk {
        match self {
            PublicKey::Ed25519(k) => Jwk {
                kty: "OKP".into(),
                crv: "Ed25519".into(),
                x: b64(k.as_bytes()),
                y: None,
                d: None,
                kid: None,
                alg: None,
                use_: None,
            },
            PublicKey::P256(k) => {
                let point = k.to_encoded_point(false);
                Jwk {
                    kty: "EC".into(),
                    crv: "P-256".into(),
                    x: b64(point.x().expect("uncompressed point")),
                    y: Some(b64(point.y().expect("uncompressed point"))),
                    d: None,
                    kid: None,
                    alg: None,
                    use_: None,
                }
            }
        }
    }

    pub fn verify(&self, alg: Algorithm, message: &[u8], signature: &[u8]) -> Result<(), JwsError> {
        if alg != self.algorithm() {
            return Err(JwsError::AlgorithmMismatch { alg: alg.name().into() });
        }
        match self {
            PublicKey::Ed25519(k) => {
                let sig = ed25519_dalek::Signature::from_slice(signature).map_err(|_| JwsError::BadSignature)?;
                k.verify(message, &sig).map_err(|_| JwsError::BadSignature)
            }
            PublicKey::P256(k) => {
                let sig = p256::ecdsa::Signature::from_slice(signature).map_err(|_| JwsError::BadSignature)?;
                k.verify(message, &sig).map_err(|_| JwsError::BadSignature)
            }
        }
    }
}

#[derive(Clone)]
pub enum SigningKey {
    Ed25519(ed25519_dalek::SigningKey),
    P256(p256::ecdsa::SigningKey),
}

impl core::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_tuple("SigningKey").field(&self.public_key()).finish()
    }
}

impl SigningKey {
    pub fn public_key(&self) -> PublicKey {
        match self {
            SigningKey::Ed25519(k) => PublicKey::Ed25519(k.verifying_key()),
            SigningKey::P256(k) => PublicKey::P256(*k.verifying_key()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.public_key().algorithm()
    }

    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        match self {
            SigningKey::Ed25519(k) => k.sign(message).to_bytes().to_vec(),
            SigningKey::P256(k) => {
                let sig: p256::ecdsa::Signature = k.sign(message);
                sig.to_bytes().to_vec()
            }
        }
    }

    /// Private JWK (includes `d`).
    pub fn to_jwk(&self) -> Jwk {
        let mut jwk = self.public_key().to_jwk();
        jwk.d = Some(match self {
            SigningKey::Ed25519(k) => b64(k.as_bytes()),
            SigningKey::P256(k) => b64(&k.to_bytes()),
        });
        jwk
    }
}

/// JSON Web Key, restricted to OKP/Ed25519 and EC/P-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jwk {
    pub kty: String,
    pub crv: String,
    pub x: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alg: Option<String>,
    #[serde(default, rename = "use", skip_serializing_if = "Option::is_none")]
    pub use_: Option<String>,
}

impl Jwk {
    pub fn public_key(&self) -> Result<PublicKey, KeyError> {
        match (self.kty.as_str(), self.crv.as_str()) {
            ("OKP", "Ed25519") => {
                let x: [u8; 32] = unb64(&self.x)?.try_into().map_err(|_| KeyError::Invalid("Ed25519 x length"))?;
                ed25519_dalek::VerifyingKey::from_bytes(&x)
                    .map(PublicKey::Ed25519)
                    .map_err(|_| KeyError::Invalid("Ed25519 point"))
            }
            ("EC", "P-256") => {
                let coord = |b: Vec<u8>| -> Result<[u8; 32], KeyError> {
                    b.try_into().map_err(|_| KeyError::Invalid("P-256 coordinate length"))
                };
                let x = coord(unb64(&self.x)?)?;
                let y = coord(unb64(self.y.as_deref().ok_or(KeyError::Invalid("missing y"))?)?)?;
                let point = p256::EncodedPoint::from_affine_coordinates(&x.into(), &y.into(), false);
                p256::ecdsa::VerifyingKey::from_encoded_point(&point)
                    .map(PublicKey::P256)
                    .map_err(|_| KeyError::Invalid("P-256 point"))
            }
            (kty, crv) => Err(KeyError::Unsupported(alloc::format!("{kty}/{crv}"))),
        }
    }

    pub fn signing_key(&self) -> Result<SigningKey, KeyError> {
        let d = unb64(self.d.as_deref().ok_or(KeyError::Invalid("missing private component d"))?)?;
        let key = match (self.kty.as_str(), self.crv.as_str()) {
            ("OKP", "Ed25519") => {
                let d: [u8; 32] = d.try_into().map_err(|_| KeyError::Invalid("Ed25519 d length"))?;
                SigningKey::Ed25519(ed25519_dalek::SigningKey::from_bytes(&d))
            }
            ("EC", "P-256") => SigningKey::P256(
                p256::ecdsa::SigningKey::from_slice(&d).map_err(|_| KeyError::Invalid("P-256 scalar"))?,
            ),
            (kty, crv) => return Err(KeyError::Unsupported(alloc::format!("{kty}/{crv}"))),
        };
        if key.public_key() != self.public_key()? {
            return Err(KeyError::Invalid("private and public components disagree"));
        }
        Ok(key)
    }

    /// JWK thumbprint: SHA-256 over the required members in lexicographic
    /// order, base64url encoded.
    pub fn thumbprint(&self) -> String {
        let canonical = match self.kty.as_str() {
            "EC" => alloc::format!(
                r#"{{"crv":"{}","kty":"EC","x":"{}","y":"{}"}}"#,
                self.crv,
                self.x,
                self.y.as_deref().unwrap_or_default()
            ),
            _ => alloc::format!(r#"{{"crv":"{}","kty":"{}","x":"{}"}}"#, self.crv, self.kty, self.x),
        };
        b64(&Sha256::digest(canonical.as_bytes()))
    }
}

pub fn b64(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

pub fn unb64(text: &str) -> Result<Vec<u8>, KeyError> {
    URL_SAFE_NO_PAD.decode(text).map_err(|_| KeyError::Invalid("base64url"))
}

/// A parsed (not yet verified) compact JWS.
#[derive(Debug, Clone, PartialEq)]
pub struct Jws {
    pub header: Map<String, Value>,
    pub payload: Value,
    signing_input: String,
    signature: Vec<u8>,
}

impl Jws {
    pub fn parse(compact: &str) -> Result<Self, JwsError> {
        let mut parts = compact.trim().split('.');
        let (Some(h), Some(p), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(JwsError::Malformed("expected three dot-separated parts"));
        };
        let decode = |part: &str, what| URL_SAFE_NO_PAD.decode(part).map_err(|_| JwsError::Malformed(what));
        let header: Map<String, Value> = serde_json::from_slice(&decode(h, "header encoding")?)
            .map_err(|_| JwsError::Malformed("header is not a JSON object"))?;
        let payload: Value = serde_json::from_slice(&decode(p, "payload encoding")?)
            .map_err(|_| JwsError::Malformed("payload is not JSON"))?;
        let signature = decode(s, "signature encoding")?;
        let signing_input = alloc::format!("{h}.{p}");
        Ok(Self { header, payload, signing_input, signature })
    }

    pub fn algorithm(&self) -> Result<Algorithm, JwsError> {
        let alg = self.header.get("alg").and_then(Value::as_str).ok_or(JwsError::Malformed("missing alg"))?;
        Algorithm::from_name(alg)
    }

    pub fn kid(&self) -> Option<&str> {
        self.header.get("kid").and_then(Value::as_str)
    }

    pub fn verify(&self, key: &PublicKey) -> Result<(), JwsError> {
        key.verify(self.algorithm()?, self.signing_input.as_bytes(), &self.signature)
    }
}

/// Signs `payload` as a compact JWS. `alg` is set from the key; the caller
/// supplies any other header members.
pub fn sign_compact(key: &SigningKey, mut header: Map<String, Value>, payload: &Value) -> String {
    header.insert("alg".into(), Value::String(key.algorithm().name().into()));
    let h = b64(&serde_json::to_vec(&header).expect("header serializes"));
    let p = b64(&serde_json::to_vec(payload).expect("payload serializes"));
    let input = alloc::format!("{h}.{p}");
    let sig = b64(&key.sign(input.as_bytes()));
    alloc::format!("{input}.{sig}")
}
