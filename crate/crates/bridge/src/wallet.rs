//! A scriptable holder wallet and a matching credential issuer.
//!
//! The wallet keeps an Ed25519 key and a directory of credential JWTs. It
//! follows a QR URI, checks the signed request, picks credentials by field
//! presence, and posts a presentation. Fault switches produce the
//! misbehaving presentations a verifier has to refuse.

use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context};
use serde_json::{json, Value};
use url::Url;
use vcbridge_core::credential::{self, decode_vc_unverified};
use vcbridge_core::did;
use vcbridge_core::jws::{self, Jwk, Jws, SigningKey};
use vcbridge_core::pex::{InputDescriptor, PresentationDefinition};
use vcbridge_core::status;
use vcbridge_core::StatusBits;

use crate::rp::REQUEST_OBJECT_TYP;
use crate::statuslist;
use crate::transcript::RecordingClient;

pub const HOLDER_KEY_FILE: &str = "holder.jwk";

pub fn random_ed25519() -> SigningKey {
    SigningKey::Ed25519(ed25519_dalek::SigningKey::generate(&mut rand::rngs::OsRng))
}

pub fn random_p256() -> SigningKey {
    SigningKey::P256(p256::ecdsa::SigningKey::random(&mut rand::rngs::OsRng))
}

pub fn read_key(path: &Path) -> anyhow::Result<SigningKey> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let jwk: Jwk = serde_json::from_str(&text).with_context(|| format!("{} is not a JWK", path.display()))?;
    Ok(jwk.signing_key()?)
}

pub fn write_key(path: &Path, key: &SigningKey) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&key.to_jwk())?)
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Answer with a nonce other than the one requested.
    pub wrong_nonce: bool,
    /// Present credentials regardless of whose they are.
    pub violate_holder_binding: bool,
    /// Corrupt the presentation signature.
    pub tamper_signature: bool,
}

/// What came back from the response endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PresentOutcome {
    pub status: u16,
    pub body: Value,
    pub login_id: String,
    pub presented: usize,
}

impl PresentOutcome {
    pub fn accepted(&self) -> bool {
        self.status == 200
    }

    pub fn error_code(&self) -> Option<&str> {
        self.body.get("error").and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectError {
    #[error("no suitable credential for {0}")]
    NoSuitableCredential(String),
}

/// A parsed, signature-checked presentation request.
#[derive(Debug, Clone)]
pub struct PresentationRequest {
    pub client_id: String,
    pub response_uri: String,
    pub nonce: String,
    pub state: Option<String>,
    pub definition: PresentationDefinition,
}

pub struct Wallet {
    key: SigningKey,
    did: String,
    credentials: Vec<String>,
}

impl Wallet {
    pub fn new(key: SigningKey) -> Self {
        let did = did::did_key_for(&key.public_key());
        Self { key, did, credentials: Vec::new() }
    }

    pub fn generate() -> Self {
        Self::new(random_ed25519())
    }

    pub fn did(&self) -> &str {
        &self.did
    }

    pub fn key(&self) -> &SigningKey {
        &self.key
    }

    pub fn credentials(&self) -> &[String] {
        &self.credentials
    }

    pub fn add_credential(&mut self, jwt: impl Into<String>) {
        self.credentials.push(jwt.into());
    }

    /// Opens a vault directory: `holder.jwk` plus any number of `*.jwt`
    /// files, read in file name order.
    pub fn open(dir: &Path) -> anyhow::Result<Self> {
        let mut wallet = Self::new(read_key(&dir.join(HOLDER_KEY_FILE))?);
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jwt"))
            .collect();
        files.sort();
        for f in files {
            wallet.add_credential(std::fs::read_to_string(&f)?.trim());
        }
        Ok(wallet)
    }

    /// Creates a vault with a fresh key, or opens the existing one.
    pub fn init(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let key_path = dir.join(HOLDER_KEY_FILE);
        if !key_path.exists() {
            write_key(&key_path, &random_ed25519())?;
        }
        Self::open(dir)
    }

    /// Stores a credential in a vault directory; returns the file written.
    pub fn store(dir: &Path, jwt: &str) -> anyhow::Result<std::path::PathBuf> {
        let n = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "jwt"))
            .count();
        let path = dir.join(format!("{n:04}.jwt"));
        std::fs::write(&path, jwt)?;
        Ok(path)
    }

    /// Fetches and checks the request behind a QR URI.
    pub async fn fetch_request(&self, http: &RecordingClient, qr_uri: &str) -> anyhow::Result<PresentationRequest> {
        let qr = Url::parse(qr_uri).context("QR URI")?;
        ensure!(qr.scheme() == "openid-vc", "unexpected QR scheme {}", qr.scheme());
        let param = |name: &str| {
            qr.query_pairs().find(|(k, _)| k == name).map(|(_, v)| v.into_owned()).ok_or_else(|| anyhow!("QR URI lacks {name}"))
        };
        let client_id = param("client_id")?;
        let request_uri = param("request_uri")?;

        let resp = http.get(&request_uri).await?;
        ensure!(resp.status().is_success(), "request_uri answered {}", resp.status());
        let jwt = resp.text().await?;
        let request = Jws::parse(jwt.trim()).map_err(|e| anyhow!("request object: {e}"))?;
        ensure!(request.header.get("typ").and_then(Value::as_str) == Some(REQUEST_OBJECT_TYP), "request object has the wrong typ");
        let verifier = did::resolve_did_key(&client_id).map_err(|e| anyhow!("client_id: {e}"))?;
        if let Some(kid) = request.kid() {
            ensure!(kid == verifier.key_id, "request object kid does not belong to client_id");
        }
        request.verify(&verifier.public_key).map_err(|e| anyhow!("request object: {e}"))?;

        let p = &request.payload;
        let str_claim = |k: &str| p.get(k).and_then(Value::as_str).map(str::to_owned);
        ensure!(str_claim("client_id").as_deref() == Some(client_id.as_str()), "request client_id disagrees with the QR code");
        ensure!(str_claim("response_type").as_deref() == Some("vp_token"), "unsupported response_type");
        ensure!(str_claim("response_mode").as_deref() == Some("direct_post"), "unsupported response_mode");
        let definition = serde_json::from_value(p.get("presentation_definition").cloned().unwrap_or_default())
            .context("presentation_definition")?;
        Ok(PresentationRequest {
            response_uri: str_claim("response_uri").ok_or_else(|| anyhow!("request lacks response_uri"))?,
            nonce: str_claim("nonce").ok_or_else(|| anyhow!("request lacks nonce"))?,
            state: str_claim("state"),
            client_id,
            definition,
        })
    }

    /// Credentials to answer `definition` with, as `(vault index,
    /// descriptor id)` pairs.
    ///
    /// Descriptors sharing a group are alternatives and each group takes
    /// the first vault credential satisfying any of them; an ungrouped
    /// descriptor is a group of its own. Only field presence is checked,
    /// and a credential is used at most once.
    pub fn select(&self, definition: &PresentationDefinition, any_subject: bool) -> Result<Vec<(usize, String)>, SelectError> {
        let decoded: Vec<Option<Value>> = self.credentials.iter().map(|c| decode_vc_unverified(c).ok()).collect();
        let mut groups: Vec<(Option<&str>, Vec<&InputDescriptor>)> = Vec::new();
        for d in &definition.input_descriptors {
            match d.group.first().map(String::as_str) {
                Some(g) => match groups.iter_mut().find(|(name, _)| *name == Some(g)) {
                    Some((_, members)) => members.push(d),
                    None => groups.push((Some(g), vec![d])),
                },
                None => groups.push((None, vec![d])),
            }
        }
        let mut chosen: Vec<(usize, String)> = Vec::new();
        for (name, members) in groups {
            let pick = decoded.iter().enumerate().find_map(|(i, vc)| {
                let vc = vc.as_ref()?;
                if chosen.iter().any(|(c, _)| *c == i) {
                    return None;
                }
                if !any_subject && !credential::subject_ids(vc).iter().all(|id| *id == Some(self.did.as_str())) {
                    return None;
                }
                members.iter().find(|d| d.is_satisfied_by(vc)).map(|d| (i, d.id.clone()))
            });
            match pick {
                Some(p) => chosen.push(p),
                None => return Err(SelectError::NoSuitableCredential(name.unwrap_or(&members[0].id).to_owned())),
            }
        }
        Ok(chosen)
    }

    /// Builds the presentation for `request` from the given vault entries.
    pub fn presentation(&self, request: &PresentationRequest, picks: &[(usize, String)], faults: Faults, now: i64) -> String {
        let creds: Vec<String> = picks.iter().map(|(i, _)| self.credentials[*i].clone()).collect();
        let nonce = if faults.wrong_nonce { format!("{}-not", request.nonce) } else { request.nonce.clone() };
        let vp = credential::issue_vp(&self.key, &self.did, &request.client_id, &nonce, &creds, now);
        if faults.tamper_signature {
            tamper(&vp)
        } else {
            vp
        }
    }

    /// Runs the whole wallet side of a login.
    pub async fn present(
        &self,
        http: &RecordingClient,
        qr_uri: &str,
        faults: Faults,
        now: i64,
    ) -> anyhow::Result<PresentOutcome> {
        let request = self.fetch_request(http, qr_uri).await?;
        self.respond(http, &request, faults, now).await
    }

    /// Selects credentials for an already fetched request and posts the
    /// presentation.
    pub async fn respond(
        &self,
        http: &RecordingClient,
        request: &PresentationRequest,
        faults: Faults,
        now: i64,
    ) -> anyhow::Result<PresentOutcome> {
        let picks = self.select(&request.definition, faults.violate_holder_binding)?;
        let vp = self.presentation(request, &picks, faults, now);
        let submission = json!({
            "id": uuid::Uuid::new_v4().to_string(),
            "definition_id": request.definition.id,
            "descriptor_map": picks.iter().enumerate().map(|(n, (_, id))| json!({
                "id": id,
                "format": "jwt_vp_json",
                "path": "$",
                "path_nested": {"format": "jwt_vc_json", "path": format!("$.vp.verifiableCredential[{n}]")}
            })).collect::<Vec<_>>(),
        });
        let mut form = vec![("vp_token", vp), ("presentation_submission", submission.to_string())];
        if let Some(state) = &request.state {
            form.push(("state", state.clone()));
        }
        let resp = http.post_form(&request.response_uri, &form, None).await?;
        let status = resp.status().as_u16();
        let body = resp.json::<Value>().await.unwrap_or(Value::Null);
        Ok(PresentOutcome { status, body, login_id: request.nonce.clone(), presented: picks.len() })
    }
}

/// Flips one bit of a compact JWS signature.
pub fn tamper(compact: &str) -> String {
    let (signing_input, sig) = compact.rsplit_once('.').expect("compact JWS");
    let mut raw = jws::unb64(sig).expect("signature is base64url");
    raw[0] ^= 0x01;
    format!("{signing_input}.{}", jws::b64(&raw))
}

/// What goes into a credential besides its claims.
#[derive(Debug, Clone, Default)]
pub struct CredentialOptions {
    pub extra_types: Vec<String>,
    /// `(statusListCredential URL, index)`.
    pub status: Option<(String, u64)>,
    pub not_before: i64,
    pub expires: Option<i64>,
}

/// A credential issuer: a key plus the DID it speaks for.
pub struct Issuer {
    key: SigningKey,
    did: String,
}

impl Issuer {
    /// An issuer identified by the `did:key` of `key`.
    pub fn with_did_key(key: SigningKey) -> Self {
        let did = did::did_key_for(&key.public_key());
        Self { key, did }
    }

    /// An issuer with an arbitrary DID (for `did:web` the document must
    /// list this key; see [`Issuer::did_document`]).
    pub fn with_did(key: SigningKey, did: impl Into<String>) -> Self {
        Self { key, did: did.into() }
    }

    pub fn did(&self) -> &str {
        &self.did
    }

    pub fn did_document(&self) -> Value {
        did::document_for_key(&self.did, &self.key.public_key())
    }

    /// Issues a credential about `subject` carrying `claims` in
    /// `credentialSubject`.
    pub fn issue(&self, subject: &str, claims: Value, opts: &CredentialOptions) -> anyhow::Result<String> {
        let Value::Object(mut claims) = claims else { bail!("claims must be a JSON object") };
        claims.insert("id".into(), subject.into());
        let mut types = vec![Value::from("VerifiableCredential")];
        types.extend(opts.extra_types.iter().cloned().map(Value::from));
        let mut body = json!({
            "@context": ["https://www.w3.org/2018/credentials/v1"],
            "type": types,
            "issuer": self.did,
            "credentialSubject": claims,
        });
        if let Some((url, index)) = &opts.status {
            body["credentialStatus"] = status::status_entry(url, *index);
        }
        Ok(credential::issue_vc(&self.key, &self.did, subject, body, opts.not_before, opts.expires))
    }

    /// A signed status list credential served at `url`.
    pub fn status_list(&self, url: &str, bits: &StatusBits, now: i64) -> String {
        let body = status::status_list_credential_body(url, &statuslist::encode_list(bits));
        credential::issue_vc(&self.key, &self.did, &format!("{url}#list"), body, now, None)
    }
}
