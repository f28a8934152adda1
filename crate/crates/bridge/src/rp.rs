//! Relying party endpoints for the cross-device flow.
//!
//! The login page asks for a QR code, the wallet fetches a signed
//! presentation request and posts its presentation back, and the page polls
//! until the login has been accepted.

use std::sync::Arc;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use vcbridge_core::claims::{self, ClaimError};
use vcbridge_core::credential::VerifyError;
use vcbridge_core::did::{self, DidError};
use vcbridge_core::jws::{self, Jws, SigningKey};
use vcbridge_core::pex::{self, InputDescriptor, PresentationDefinition};
use vcbridge_core::policy::{self, LoginPolicy};
use vcbridge_core::status::{self, CredentialStatus};
use vcbridge_core::TokenPair;

use crate::clock::SharedClock;
use crate::provider::{FlowError, Provider, SessionStatus};
use crate::resolver::{DidResolver, StatusCheckError};
use crate::store::{Namespace, SessionStore, StoreError, DEFAULT_TTL_SECS};

/// Longest QR payload we are willing to render.
pub const MAX_QR_URI_LEN: usize = 400;
pub const REQUEST_OBJECT_TYP: &str = "oauth-authz-req+jwt";

// Everything except unreserved characters and the ones that keep a URL
// readable inside another URL's query.
const QUERY_VALUE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~').remove(b':').remove(b'/');

/// Reasons a login attempt is refused. Each one maps to a distinct error
/// code on the wire.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("request is missing {0}")]
    InvalidRequest(&'static str),
    #[error("unknown, expired or already used login id")]
    UnknownLoginId,
    #[error("malformed presentation or credential: {0}")]
    Malformed(String),
    #[error("signature verification failed")]
    BadSignature,
    #[error("presentation nonce does not match this login")]
    ChallengeMismatch,
    #[error("presentation is addressed to someone else")]
    AudienceMismatch,
    #[error("credential or presentation has expired")]
    Expired,
    #[error("credential or presentation is not yet valid")]
    NotYetValid,
    #[error("credential {index} is not about the presenter")]
    HolderBindingViolation { index: usize },
    #[error("unsupported DID method: {0}")]
    UnsupportedMethod(String),
    #[error("could not resolve signer: {0}")]
    ResolutionFailure(String),
    #[error("presented credentials do not satisfy the login policy")]
    NoMatch,
    #[error("credential {index} has been revoked")]
    Revoked { index: usize },
    #[error("revocation status unavailable: {0}")]
    StatusUnavailable(String),
    #[error("claims could not be assembled: {0}")]
    Claims(String),
    #[error("claims conflict at {0}")]
    PathConflict(String),
    #[error("login could not be completed")]
    LoginFailed,
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::InvalidRequest(_) => "InvalidRequest",
            Rejection::UnknownLoginId => "UnknownLoginId",
            Rejection::Malformed(_) => "MalformedCredential",
            Rejection::BadSignature => "BadSignature",
            Rejection::ChallengeMismatch => "ChallengeMismatch",
            Rejection::AudienceMismatch => "AudienceMismatch",
            Rejection::Expired => "Expired",
            Rejection::NotYetValid => "NotYetValid",
            Rejection::HolderBindingViolation { .. } => "HolderBindingViolation",
            Rejection::UnsupportedMethod(_) => "UnsupportedMethod",
            Rejection::ResolutionFailure(_) => "ResolutionFailure",
            Rejection::NoMatch => "NoMatch",
            Rejection::Revoked { .. } => "Revoked",
            Rejection::StatusUnavailable(_) => "StatusUnavailable",
            Rejection::Claims(_) => "ClaimsUnavailable",
            Rejection::PathConflict(_) => "PathConflict",
            Rejection::LoginFailed => "LoginFailed",
        }
    }

    pub fn body(&self) -> Value {
        json!({ "error": self.code(), "error_description": self.to_string() })
    }
}

impl From<VerifyError> for Rejection {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Malformed(m) | VerifyError::MalformedCredential(m) => Rejection::Malformed(m),
            VerifyError::BadSignature => Rejection::BadSignature,
            VerifyError::Expired => Rejection::Expired,
            VerifyError::NotYetValid => Rejection::NotYetValid,
            VerifyError::Did(DidError::UnsupportedMethod(m)) => Rejection::UnsupportedMethod(m),
            VerifyError::Did(DidError::Malformed(m)) => Rejection::Malformed(m),
            VerifyError::Did(DidError::ResolutionFailure(m)) => Rejection::ResolutionFailure(m),
            VerifyError::ChallengeMismatch => Rejection::ChallengeMismatch,
            VerifyError::AudienceMismatch => Rejection::AudienceMismatch,
            VerifyError::HolderBindingViolation { index } => Rejection::HolderBindingViolation { index },
            VerifyError::NestedVc { source, .. } => Rejection::from(*source),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RpError {
    #[error("unknown or expired login challenge")]
    UnknownChallenge,
    #[error("login is not awaiting a presentation")]
    WrongState,
    #[error("no claims are waiting for this subject")]
    MissingClaims,
    #[error("QR payload would be {0} bytes")]
    QrTooLong(usize),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Flow(FlowError),
}

impl From<StoreError> for RpError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Absent => RpError::UnknownChallenge,
            other => RpError::Store(other),
        }
    }
}

impl From<FlowError> for RpError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::UnknownChallenge => RpError::UnknownChallenge,
            FlowError::WrongState => RpError::WrongState,
            other => RpError::Flow(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginStart {
    pub login_id: String,
    pub qr_uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PollStatus {
    Pending,
    Ready { redirect: String },
}

/// Form body of the wallet's `direct_post` response.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct Submission {
    pub vp_token: Option<String>,
    pub presentation_submission: Option<String>,
    pub state: Option<String>,
}

pub struct RelyingParty {
    external_url: String,
    key: SigningKey,
    did: String,
    kid: String,
    policy: LoginPolicy,
    descriptor_override: Option<Vec<InputDescriptor>>,
    resolver: Arc<DidResolver>,
    provider: Arc<Provider>,
    store: SessionStore,
    clock: SharedClock,
}

impl RelyingParty {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        external_url: &str,
        key: SigningKey,
        policy: LoginPolicy,
        descriptor_override: Option<Vec<InputDescriptor>>,
        resolver: Arc<DidResolver>,
        provider: Arc<Provider>,
        store: SessionStore,
        clock: SharedClock,
    ) -> Self {
        let public = key.public_key();
        Self {
            external_url: external_url.trim_end_matches('/').to_owned(),
            did: did::did_key_for(&public),
            kid: did::did_key_id_for(&public),
            key,
            policy,
            descriptor_override,
            resolver,
            provider,
            store,
            clock,
        }
    }

    /// The bridge's own identifier; wallets address presentations to it.
    pub fn did(&self) -> &str {
        &self.did
    }

    pub fn response_uri(&self) -> String {
        format!("{}/api/presentCredential", self.external_url)
    }

    pub fn presentation_definition(&self, id: &str) -> PresentationDefinition {
        match &self.descriptor_override {
            Some(d) => pex::override_definition(d.clone(), id),
            None => pex::generate_presentation_definition(&self.policy, id),
        }
    }

    /// Mints a login id for a pending login and the URI to show as a QR code.
    pub fn begin_login(&self, login_challenge: &str) -> Result<LoginStart, RpError> {
        let session = self.provider.login_session(login_challenge)?;
        if session.status != SessionStatus::AwaitingLogin {
            return Err(RpError::WrongState);
        }
        let login_id = uuid::Uuid::new_v4().to_string();
        let request_uri = format!("{}?login_id={login_id}", self.response_uri());
        let qr_uri = format!(
            "openid-vc://?client_id={}&request_uri={}",
            self.did,
            utf8_percent_encode(&request_uri, QUERY_VALUE)
        );
        if qr_uri.len() > MAX_QR_URI_LEN {
            return Err(RpError::QrTooLong(qr_uri.len()));
        }
        self.store.put(
            Namespace::LoginIdToChallenge,
            &login_id,
            Value::String(login_challenge.to_owned()),
            DEFAULT_TTL_SECS,
        )?;
        Ok(LoginStart { login_id, qr_uri })
    }

    /// The signed request object a wallet fetches via `request_uri`.
    pub fn presentation_request(&self, login_id: &str) -> Result<String, RpError> {
        self.store.get(Namespace::LoginIdToChallenge, login_id)?;
        let payload = json!({
            "iss": self.did,
            "aud": "https://self-issued.me/v2",
            "client_id": self.did,
            "client_id_scheme": "did",
            "response_type": "vp_token",
            "response_mode": "direct_post",
            "response_uri": self.response_uri(),
            "nonce": login_id,
            "state": login_id,
            "presentation_definition": self.presentation_definition(&uuid::Uuid::new_v4().to_string()),
            "iat": self.clock.now(),
            "exp": self.clock.now() + DEFAULT_TTL_SECS as i64,
        });
        let mut header = Map::new();
        header.insert("typ".into(), REQUEST_OBJECT_TYP.into());
        header.insert("kid".into(), self.kid.clone().into());
        Ok(jws::sign_compact(&self.key, header, &payload))
    }

    /// Processes a wallet submission. On success the login is accepted and
    /// the page's next poll sees the redirect.
    pub async fn submit_presentation(&self, form: &Submission) -> Result<(), Rejection> {
        let vp_token = form.vp_token.as_deref().map(single_vp_token).ok_or(Rejection::InvalidRequest("vp_token"))??;
        if let Some(ps) = &form.presentation_submission {
            // Parsed for well-formedness only; matching never trusts it.
            serde_json::from_str::<Value>(ps).map_err(|_| Rejection::InvalidRequest("a JSON presentation_submission"))?;
        }
        let login_id = match &form.state {
            Some(s) => s.clone(),
            None => Jws::parse(&vp_token)
                .ok()
                .and_then(|j| j.payload.get("nonce").and_then(Value::as_str).map(str::to_owned))
                .ok_or(Rejection::InvalidRequest("state"))?,
        };
        let challenge = match self.store.take(Namespace::LoginIdToChallenge, &login_id) {
            Ok(Value::String(c)) => c,
            _ => return Err(Rejection::UnknownLoginId),
        };

        let now = self.clock.now();
        let vp = self.resolver.verify_presentation(&vp_token, &login_id, &self.did, now).await?;
        let matched = policy::match_credentials(&vp.credentials, &self.policy).map_err(|_| Rejection::NoMatch)?;

        for (index, vc) in vp.credentials.iter().enumerate() {
            let reference = status::status_reference(vc).map_err(|e| Rejection::Malformed(e.to_string()))?;
            let Some(reference) = reference else { continue };
            match self.resolver.check_status(&reference, policy::credential_issuer(vc), now).await {
                Ok(CredentialStatus::Active) => {}
                Ok(CredentialStatus::Revoked) => return Err(Rejection::Revoked { index }),
                Err(StatusCheckError::Status(status::StatusError::IndexOutOfRange { .. })) => {
                    return Err(Rejection::Malformed("status list index out of range".into()))
                }
                Err(e) => return Err(Rejection::StatusUnavailable(e.to_string())),
            }
        }

        let expected = self.policy.expected_credentials();
        let fragments = matched
            .assignments
            .iter()
            .map(|a| {
                let ec = expected.iter().find(|e| e.credential_id == a.credential_id).expect("assignment names a policy entry");
                claims::extract_claims(&vp.credentials[a.vc_index], &ec.patterns[a.pattern_index])
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(claim_rejection)?;
        let pair = claims::merge_fragments(fragments).map_err(claim_rejection)?;

        let consent_url = self.provider.accept_login(&challenge, &vp.holder_did).map_err(|_| Rejection::LoginFailed)?;
        let pair = serde_json::to_value(&pair).expect("token pair serializes");
        self.store
            .put(Namespace::SubjectToClaims, &vp.holder_did, pair, DEFAULT_TTL_SECS)
            .and_then(|_| {
                self.store.put(Namespace::ChallengeToRedirect, &challenge, Value::String(consent_url), DEFAULT_TTL_SECS)
            })
            .map_err(|_| Rejection::LoginFailed)
    }

    /// The redirect is handed out once; later polls report pending.
    pub fn poll_redirect(&self, login_challenge: &str) -> PollStatus {
        match self.store.take(Namespace::ChallengeToRedirect, login_challenge) {
            Ok(Value::String(redirect)) => PollStatus::Ready { redirect },
            _ => PollStatus::Pending,
        }
    }

    /// Completes consent with the claims gathered at login.
    pub fn complete_consent(&self, consent_challenge: &str) -> Result<String, RpError> {
        let session = self.provider.consent_session(consent_challenge)?;
        if session.status != SessionStatus::AwaitingConsent {
            return Err(RpError::UnknownChallenge);
        }
        let subject = session.subject_did.ok_or(RpError::WrongState)?;
        let pair = self.store.take(Namespace::SubjectToClaims, &subject).map_err(|_| RpError::MissingClaims)?;
        let pair: TokenPair = serde_json::from_value(pair).map_err(|_| RpError::MissingClaims)?;
        Ok(self.provider.accept_consent(consent_challenge, pair)?)
    }
}

/// `vp_token` may be a bare JWT or a JSON array holding exactly one.
fn single_vp_token(raw: &str) -> Result<String, Rejection> {
    let raw = raw.trim();
    if !raw.starts_with('[') {
        return Ok(raw.to_owned());
    }
    match serde_json::from_str::<Vec<String>>(raw) {
        Ok(mut v) if v.len() == 1 => Ok(v.remove(0)),
        _ => Err(Rejection::Malformed("vp_token must hold exactly one presentation".into())),
    }
}

fn claim_rejection(e: ClaimError) -> Rejection {
    match e {
        ClaimError::PathConflict { token, path } => Rejection::PathConflict(format!("{token} {path}")),
        other => Rejection::Claims(other.to_string()),
    }
}
