//! The client-facing OpenID Connect provider.
//!
//! Authorization code flow only. A session moves through
//! `awaiting_login -> awaiting_consent -> code_issued`; the login phase is
//! completed by the relying party endpoints once a presentation checks out,
//! and the consent phase is completed automatically with the processed
//! claims. No refresh tokens are ever issued.

use std::collections::HashMap;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use url::Url;
use vcbridge_core::claims::RESERVED_CLAIMS;
use vcbridge_core::jws::{self, SigningKey};
use vcbridge_core::TokenPair;

use crate::clock::SharedClock;
use crate::store::{Namespace, SessionStore, StoreError, AUTH_CODE_TTL_SECS, DEFAULT_TTL_SECS};

pub const TOKEN_LIFETIME_SECS: i64 = 3600;

/// 256 random bits, base64url.
pub fn random_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub client_id: String,
    pub client_secret: String,
    pub redirect_uris: Vec<String>,
}

pub fn parse_clients(text: &str) -> anyhow::Result<Vec<ClientConfig>> {
    let clients: Vec<ClientConfig> = serde_json::from_str(text)?;
    for c in &clients {
        for uri in &c.redirect_uris {
            let parsed = Url::parse(uri).map_err(|e| anyhow::anyhow!("client {}: redirect URI {uri:?}: {e}", c.client_id))?;
            anyhow::ensure!(!parsed.cannot_be_a_base(), "client {}: redirect URI {uri:?} is not absolute", c.client_id);
            anyhow::ensure!(parsed.fragment().is_none(), "client {}: redirect URI {uri:?} has a fragment", c.client_id);
        }
    }
    Ok(clients)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingLogin,
    AwaitingConsent,
    CodeIssued,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorizationSession {
    pub login_challenge: String,
    pub client_id: String,
    pub redirect_uri: String,
    pub state: Option<String>,
    pub nonce: Option<String>,
    pub scope: Vec<String>,
    pub subject_did: Option<String>,
    pub consent_challenge: Option<String>,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FlowError {
    #[error("unknown or expired challenge")]
    UnknownChallenge,
    #[error("session is not in the state this step requires")]
    WrongState,
    #[error("token claims rejected: {0}")]
    InvalidClaims(String),
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for FlowError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Absent => FlowError::UnknownChallenge,
            other => FlowError::Store(other),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct AuthorizeParams {
    pub response_type: Option<String>,
    pub client_id: Option<String>,
    pub redirect_uri: Option<String>,
    pub scope: Option<String>,
    pub state: Option<String>,
    pub nonce: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthorizeOutcome {
    /// Send the browser to the login page.
    Login(String),
    /// Report an OAuth error back to the client.
    ErrorRedirect(String),
    /// The client cannot be trusted with a redirect; render an error.
    ErrorPage(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct TokenRequest {
    pub grant_type: Option<String>,
    pub code: Option<String>,
    pub redirect_uri: Option<String>,
    pub client_id: Option<String>,
    pub client_secret: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenResponse {
    pub access_token: String,
    pub id_token: String,
    pub token_type: String,
    pub expires_in: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{error}: {description}")]
pub struct TokenError {
    pub error: &'static str,
    pub description: String,
}

impl TokenError {
    fn new(error: &'static str, description: impl Into<String>) -> Self {
        Self { error, description: description.into() }
    }

    pub fn http_status(&self) -> u16 {
        if self.error == "invalid_client" {
            401
        } else {
            400
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CodeRecord {
    client_id: String,
    redirect_uri: String,
    nonce: Option<String>,
    subject_did: String,
    claims: TokenPair,
}

pub struct Provider {
    issuer: String,
    clients: HashMap<String, ClientConfig>,
    signing_key: SigningKey,
    kid: String,
    store: SessionStore,
    clock: SharedClock,
}

impl Provider {
    pub fn new(
        external_url: &str,
        clients: Vec<ClientConfig>,
        signing_key: SigningKey,
        store: SessionStore,
        clock: SharedClock,
    ) -> Self {
        let kid = signing_key.public_key().to_jwk().thumbprint();
        Self {
            issuer: external_url.trim_end_matches('/').to_owned(),
            clients: clients.into_iter().map(|c| (c.client_id.clone(), c)).collect(),
            signing_key,
            kid,
            store,
            clock,
        }
    }

    pub fn issuer(&self) -> &str {
        &self.issuer
    }

    pub fn key_id(&self) -> &str {
        &self.kid
    }

    pub fn discovery(&self) -> Value {
        let base = &self.issuer;
        json!({
            "issuer": base,
            "authorization_endpoint": format!("{base}/authorize"),
            "token_endpoint": format!("{base}/token"),
            "jwks_uri": format!("{base}/jwks"),
            "response_types_supported": ["code"],
            "response_modes_supported": ["query"],
            "grant_types_supported": ["authorization_code"],
            "scopes_supported": ["openid"],
            "subject_types_supported": ["public"],
            "id_token_signing_alg_values_supported": [self.signing_key.algorithm().name()],
            "token_endpoint_auth_methods_supported": ["client_secret_basic", "client_secret_post"],
            "claims_parameter_supported": false,
            "request_parameter_supported": false,
        })
    }

    pub fn jwks(&self) -> Value {
        let mut jwk = self.signing_key.public_key().to_jwk();
        jwk.kid = Some(self.kid.clone());
        jwk.alg = Some(self.signing_key.algorithm().name().into());
        jwk.use_ = Some("sig".into());
        json!({ "keys": [jwk] })
    }

    pub fn authorize(&self, params: &AuthorizeParams) -> AuthorizeOutcome {
        let Some(client) = params.client_id.as_deref().and_then(|id| self.clients.get(id)) else {
            return AuthorizeOutcome::ErrorPage("unknown client".into());
        };
        let Some(redirect_uri) = params.redirect_uri.as_deref().filter(|r| client.redirect_uris.iter().any(|u| u == r)) else {
            return AuthorizeOutcome::ErrorPage("redirect_uri is not registered for this client".into());
        };
        let error = |code: &str, desc: &str| {
            let mut url = Url::parse(redirect_uri).expect("registered redirect URIs are absolute");
            url.query_pairs_mut().append_pair("error", code).append_pair("error_description", desc);
            if let Some(state) = &params.state {
                url.query_pairs_mut().append_pair("state", state);
            }
            AuthorizeOutcome::ErrorRedirect(url.into())
        };
        if params.response_type.as_deref() != Some("code") {
            return error("unsupported_response_type", "only the authorization code flow is supported");
        }
        let scopes: Vec<&str> = params.scope.as_deref().unwrap_or_default().split_whitespace().collect();
        if !scopes.contains(&"openid") {
            return error("invalid_scope", "the openid scope is required");
        }

        let session = AuthorizationSession {
            login_challenge: random_token(),
            client_id: client.client_id.clone(),
            redirect_uri: redirect_uri.to_owned(),
            state: params.state.clone(),
            nonce: params.nonce.clone(),
            // everything beyond openid is ignored
            scope: vec!["openid".into()],
            subject_did: None,
            consent_challenge: None,
            status: SessionStatus::AwaitingLogin,
        };
        let value = serde_json::to_value(&session).expect("session serializes");
        if self.store.put(Namespace::LoginSession, &session.login_challenge, value, DEFAULT_TTL_SECS).is_err() {
            return error("server_error", "session storage unavailable");
        }
        AuthorizeOutcome::Login(format!("{}/login?login_challenge={}", self.issuer, session.login_challenge))
    }

    pub fn login_session(&self, login_challenge: &str) -> Result<AuthorizationSession, FlowError> {
        let v = self.store.get(Namespace::LoginSession, login_challenge)?;
        serde_json::from_value(v).map_err(|_| FlowError::UnknownChallenge)
    }

    fn update_session(
        &self,
        login_challenge: &str,
        f: impl FnOnce(&mut AuthorizationSession) -> Result<(), FlowError>,
    ) -> Result<AuthorizationSession, FlowError> {
        self.store.update(Namespace::LoginSession, login_challenge, |v| {
            let mut s: AuthorizationSession = serde_json::from_value(v.clone()).map_err(|_| FlowError::UnknownChallenge)?;
            f(&mut s)?;
            *v = serde_json::to_value(&s).expect("session serializes");
            Ok(s)
        })?
    }

    /// Completes the login phase for `subject_did` and opens the consent
    /// phase. Returns where the browser goes next.
    pub fn accept_login(&self, login_challenge: &str, subject_did: &str) -> Result<String, FlowError> {
        let consent_challenge = random_token();
        self.update_session(login_challenge, |s| {
            if s.status != SessionStatus::AwaitingLogin {
                return Err(FlowError::WrongState);
            }
            s.subject_did = Some(subject_did.to_owned());
            s.consent_challenge = Some(consent_challenge.clone());
            s.status = SessionStatus::AwaitingConsent;
            Ok(())
        })?;
        self.store.put(
            Namespace::ConsentSession,
            &consent_challenge,
            Value::String(login_challenge.to_owned()),
            DEFAULT_TTL_SECS,
        )?;
        Ok(format!("{}/consent?consent_challenge={consent_challenge}", self.issuer))
    }

    /// Session metadata for a consent challenge.
    pub fn consent_session(&self, consent_challenge: &str) -> Result<AuthorizationSession, FlowError> {
        let login_challenge = self.store.get(Namespace::ConsentSession, consent_challenge)?;
        self.login_session(login_challenge.as_str().ok_or(FlowError::UnknownChallenge)?)
    }

    /// Completes consent with the claims for the tokens and issues a
    /// single-use code. Returns the client redirect.
    pub fn accept_consent(&self, consent_challenge: &str, claims: TokenPair) -> Result<String, FlowError> {
        if let Some(k) = RESERVED_CLAIMS.iter().find(|k| claims.id_token.contains_key(**k) || claims.access_token.contains_key(**k)) {
            return Err(FlowError::InvalidClaims(format!("reserved claim {k}")));
        }
        let login_challenge = self.store.get(Namespace::ConsentSession, consent_challenge)?;
        let login_challenge = login_challenge.as_str().ok_or(FlowError::UnknownChallenge)?;
        let session = self.update_session(login_challenge, |s| {
            if s.status != SessionStatus::AwaitingConsent || s.consent_challenge.as_deref() != Some(consent_challenge) {
                return Err(FlowError::WrongState);
            }
            s.status = SessionStatus::CodeIssued;
            Ok(())
        })?;
        let subject_did = session.subject_did.clone().ok_or(FlowError::WrongState)?;

        let code = random_token();
        let record = CodeRecord {
            client_id: session.client_id.clone(),
            redirect_uri: session.redirect_uri.clone(),
            nonce: session.nonce.clone(),
            subject_did,
            claims,
        };
        let value = serde_json::to_value(&record).expect("code record serializes");
        self.store.put(Namespace::AuthCode, &code, value, AUTH_CODE_TTL_SECS)?;

        let mut url = Url::parse(&session.redirect_uri).expect("registered redirect URIs are absolute");
        url.query_pairs_mut().append_pair("code", &code);
        if let Some(state) = &session.state {
            url.query_pairs_mut().append_pair("state", state);
        }
        Ok(url.into())
    }

    fn authenticate(&self, basic: Option<(String, String)>, req: &TokenRequest) -> Result<&ClientConfig, TokenError> {
        let (id, secret) = match (basic, &req.client_id, &req.client_secret) {
            (Some(pair), _, _) => pair,
            (None, Some(id), Some(secret)) => (id.clone(), secret.clone()),
            _ => return Err(TokenError::new("invalid_client", "client authentication required")),
        };
        match self.clients.get(&id) {
            Some(c) if constant_time_eq(c.client_secret.as_bytes(), secret.as_bytes()) => Ok(c),
            _ => Err(TokenError::new("invalid_client", "client authentication failed")),
        }
    }

    /// Redeems an authorization code. `basic` carries HTTP Basic client
    /// credentials when the client used them.
    pub fn token(&self, req: &TokenRequest, basic: Option<(String, String)>) -> Result<TokenResponse, TokenError> {
        let client = self.authenticate(basic, req)?;
        if req.grant_type.as_deref() != Some("authorization_code") {
            return Err(TokenError::new("unsupported_grant_type", "only authorization_code is supported"));
        }
        let code = req.code.as_deref().ok_or_else(|| TokenError::new("invalid_request", "missing code"))?;
        let record = self
            .store
            .take(Namespace::AuthCode, code)
            .map_err(|_| TokenError::new("invalid_grant", "unknown, expired or already redeemed code"))?;
        let record: CodeRecord =
            serde_json::from_value(record).map_err(|_| TokenError::new("invalid_grant", "corrupt code"))?;
        if record.client_id != client.client_id {
            return Err(TokenError::new("invalid_grant", "code was issued to another client"));
        }
        if req.redirect_uri.as_deref() != Some(record.redirect_uri.as_str()) {
            return Err(TokenError::new("invalid_grant", "redirect_uri does not match the authorization request"));
        }
        Ok(self.mint(&record))
    }

    fn mint(&self, record: &CodeRecord) -> TokenResponse {
        let now = self.clock.now();
        let mut id = Map::new();
        id.insert("iss".into(), self.issuer.clone().into());
        id.insert("sub".into(), record.subject_did.clone().into());
        id.insert("aud".into(), record.client_id.clone().into());
        id.insert("iat".into(), now.into());
        id.insert("exp".into(), (now + TOKEN_LIFETIME_SECS).into());
        if let Some(nonce) = &record.nonce {
            id.insert("nonce".into(), nonce.clone().into());
        }
        for (k, v) in &record.claims.id_token {
            id.entry(k.clone()).or_insert_with(|| v.clone());
        }

        let mut access = Map::new();
        access.insert("iss".into(), self.issuer.clone().into());
        access.insert("sub".into(), record.subject_did.clone().into());
        access.insert("aud".into(), record.client_id.clone().into());
        access.insert("client_id".into(), record.client_id.clone().into());
        access.insert("iat".into(), now.into());
        access.insert("exp".into(), (now + TOKEN_LIFETIME_SECS).into());
        access.insert("scope".into(), "openid".into());
        for (k, v) in &record.claims.access_token {
            access.entry(k.clone()).or_insert_with(|| v.clone());
        }

        let header = |typ: &str| {
            let mut h = Map::new();
            h.insert("typ".into(), typ.into());
            h.insert("kid".into(), self.kid.clone().into());
            h
        };
        TokenResponse {
            id_token: jws::sign_compact(&self.signing_key, header("JWT"), &Value::Object(id)),
            access_token: jws::sign_compact(&self.signing_key, header("at+jwt"), &Value::Object(access)),
            token_type: "bearer".into(),
            expires_in: TOKEN_LIFETIME_SECS,
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use std::sync::Arc;
    use vcbridge_core::jws::Jws;

    const T0: i64 = 1_700_000_000;

    fn provider() -> (Provider, SessionStore, ManualClock) {
        let clock = ManualClock::new(T0);
        let store = SessionStore::new(Arc::new(clock.clone()));
        let key = SigningKey::P256(p256::ecdsa::SigningKey::from_slice(&[4u8; 32]).unwrap());
        let clients = vec![ClientConfig {
            client_id: "rp".into(),
            client_secret: "s3cret".into(),
            redirect_uris: vec!["https://client.example/cb".into()],
        }];
        let p = Provider::new("https://examplebridge.com/", clients, key, store.clone(), Arc::new(clock.clone()));
        (p, store, clock)
    }

    fn params(scope: &str) -> AuthorizeParams {
        AuthorizeParams {
            response_type: Some("code".into()),
            client_id: Some("rp".into()),
            redirect_uri: Some("https://client.example/cb".into()),
            scope: Some(scope.into()),
            state: Some("st".into()),
            nonce: Some("n-1".into()),
        }
    }

    fn challenge_of(outcome: AuthorizeOutcome) -> String {
        let AuthorizeOutcome::Login(url) = outcome else { panic!("{outcome:?}") };
        let url = Url::parse(&url).unwrap();
        url.query_pairs().find(|(k, _)| k == "login_challenge").unwrap().1.into_owned()
    }

    fn code_of(redirect: &str) -> String {
        Url::parse(redirect).unwrap().query_pairs().find(|(k, _)| k == "code").unwrap().1.into_owned()
    }

    fn claims() -> TokenPair {
        let mut pair = TokenPair::default();
        pair.id_token.insert("email".into(), "name@example.com".into());
        pair
    }

    fn token_req(code: &str) -> TokenRequest {
        TokenRequest {
            grant_type: Some("authorization_code".into()),
            code: Some(code.into()),
            redirect_uri: Some("https://client.example/cb".into()),
            client_id: Some("rp".into()),
            client_secret: Some("s3cret".into()),
        }
    }

    #[test]
    fn discovery_is_rooted_at_the_external_url() {
        let (p, _, _) = provider();
        let d = p.discovery();
        assert_eq!(d["issuer"], "https://examplebridge.com");
        assert_eq!(d["token_endpoint"], "https://examplebridge.com/token");
        assert_eq!(d["grant_types_supported"], json!(["authorization_code"]));
        assert!(!d.to_string().contains("refresh_token"));
        assert!(!d.to_string().contains("offline_access"));
    }

    #[test]
    fn jwks_is_stable_and_matches_the_key_id() {
        let (p, _, _) = provider();
        assert_eq!(p.jwks(), p.jwks());
        assert_eq!(p.jwks()["keys"][0]["kid"], p.key_id());
    }

    #[test]
    fn authorize_validation() {
        let (p, store, _) = provider();
        let challenge = challenge_of(p.authorize(&params("openid profile")));
        assert!(challenge.len() >= 43);
        let s = p.login_session(&challenge).unwrap();
        assert_eq!(s.scope, ["openid"]);
        assert_eq!(s.status, SessionStatus::AwaitingLogin);
        assert_eq!(store.len(), 1);

        let mut bad = params("openid");
        bad.redirect_uri = Some("https://evil.example/cb".into());
        assert!(matches!(p.authorize(&bad), AuthorizeOutcome::ErrorPage(_)));
        bad = params("openid");
        bad.client_id = Some("nobody".into());
        assert!(matches!(p.authorize(&bad), AuthorizeOutcome::ErrorPage(_)));

        bad = params("openid");
        bad.response_type = Some("token".into());
        let AuthorizeOutcome::ErrorRedirect(url) = p.authorize(&bad) else { panic!() };
        assert!(url.starts_with("https://client.example/cb?error=unsupported_response_type"));
        assert!(url.ends_with("state=st"));

        let AuthorizeOutcome::ErrorRedirect(url) = p.authorize(&params("profile")) else { panic!() };
        assert!(url.contains("error=invalid_scope"));
    }

    #[test]
    fn full_state_machine_and_token_contents() {
        let (p, _, _) = provider();
        let challenge = challenge_of(p.authorize(&params("openid")));
        let consent_url = p.accept_login(&challenge, "did:key:z6Mholder").unwrap();
        assert!(consent_url.starts_with("https://examplebridge.com/consent?consent_challenge="));
        assert_eq!(p.accept_login(&challenge, "did:key:z6Mholder"), Err(FlowError::WrongState));

        let cc = Url::parse(&consent_url).unwrap().query_pairs().next().unwrap().1.into_owned();
        assert_eq!(p.consent_session(&cc).unwrap().subject_did.as_deref(), Some("did:key:z6Mholder"));
        let redirect = p.accept_consent(&cc, claims()).unwrap();
        assert!(redirect.starts_with("https://client.example/cb?code="));
        assert!(redirect.ends_with("&state=st"));
        assert_eq!(p.accept_consent(&cc, claims()), Err(FlowError::WrongState));

        let tokens = p.token(&token_req(&code_of(&redirect)), None).unwrap();
        let id = Jws::parse(&tokens.id_token).unwrap();
        let jwk: vcbridge_core::jws::Jwk = serde_json::from_value(p.jwks()["keys"][0].clone()).unwrap();
        id.verify(&jwk.public_key().unwrap()).unwrap();
        assert_eq!(id.kid(), Some(p.key_id()));
        assert_eq!(id.payload["sub"], "did:key:z6Mholder");
        assert_eq!(id.payload["email"], "name@example.com");
        assert_eq!(id.payload["aud"], "rp");
        assert_eq!(id.payload["nonce"], "n-1");
        assert_eq!(id.payload["exp"], T0 + TOKEN_LIFETIME_SECS);
        assert_eq!(tokens.token_type, "bearer");
        let raw = serde_json::to_value(&tokens).unwrap();
        assert!(raw.get("refresh_token").is_none());
    }

    #[test]
    fn unknown_and_expired_challenges() {
        let (p, _, clock) = provider();
        assert_eq!(p.accept_login("nope", "did:key:x"), Err(FlowError::UnknownChallenge));
        let challenge = challenge_of(p.authorize(&params("openid")));
        clock.advance(DEFAULT_TTL_SECS as i64);
        assert_eq!(p.accept_login(&challenge, "did:key:x"), Err(FlowError::UnknownChallenge));
        assert_eq!(p.accept_consent("nope", TokenPair::default()), Err(FlowError::UnknownChallenge));
    }

    #[test]
    fn reserved_claims_never_reach_a_code() {
        let (p, _, _) = provider();
        let challenge = challenge_of(p.authorize(&params("openid")));
        let url = p.accept_login(&challenge, "did:key:x").unwrap();
        let cc = Url::parse(&url).unwrap().query_pairs().next().unwrap().1.into_owned();
        let mut forged = TokenPair::default();
        forged.id_token.insert("iss".into(), "https://evil".into());
        assert!(matches!(p.accept_consent(&cc, forged), Err(FlowError::InvalidClaims(_))));
    }

    fn issued_code(p: &Provider) -> String {
        let challenge = challenge_of(p.authorize(&params("openid")));
        let url = p.accept_login(&challenge, "did:key:x").unwrap();
        let cc = Url::parse(&url).unwrap().query_pairs().next().unwrap().1.into_owned();
        code_of(&p.accept_consent(&cc, claims()).unwrap())
    }

    #[test]
    fn token_endpoint_errors() {
        let (p, _, clock) = provider();
        let code = issued_code(&p);

        let mut wrong_secret = token_req(&code);
        wrong_secret.client_secret = Some("nope".into());
        assert_eq!(p.token(&wrong_secret, None).unwrap_err().error, "invalid_client");
        // failed client auth does not burn the code
        assert!(p.token(&token_req(&code), None).is_ok());
        assert_eq!(p.token(&token_req(&code), None).unwrap_err().error, "invalid_grant");

        let code = issued_code(&p);
        let basic = Some(("rp".to_owned(), "s3cret".to_owned()));
        let mut via_basic = token_req(&code);
        via_basic.client_id = None;
        via_basic.client_secret = None;
        assert!(p.token(&via_basic, basic).is_ok());

        let code = issued_code(&p);
        let mut wrong_redirect = token_req(&code);
        wrong_redirect.redirect_uri = Some("https://client.example/other".into());
        assert_eq!(p.token(&wrong_redirect, None).unwrap_err().error, "invalid_grant");

        let code = issued_code(&p);
        clock.advance(AUTH_CODE_TTL_SECS as i64);
        assert_eq!(p.token(&token_req(&code), None).unwrap_err().error, "invalid_grant");

        let mut refresh = token_req("x");
        refresh.grant_type = Some("refresh_token".into());
        assert_eq!(p.token(&refresh, None).unwrap_err().error, "unsupported_grant_type");
    }

    proptest::proptest! {
        #[test]
        fn codes_only_redeem_under_their_own_client_and_redirect(issue in (0usize..2, 0usize..2), redeem in (0usize..2, 0usize..2)) {
            let clock = ManualClock::new(T0);
            let store = SessionStore::new(Arc::new(clock.clone()));
            let key = SigningKey::P256(p256::ecdsa::SigningKey::from_slice(&[4u8; 32]).unwrap());
            let uris = |c: usize| vec![format!("https://c{c}.example/a"), format!("https://c{c}.example/b")];
            let clients = (0..2)
                .map(|c| ClientConfig { client_id: format!("rp{c}"), client_secret: format!("s{c}"), redirect_uris: uris(c) })
                .collect();
            let p = Provider::new("https://b.example", clients, key, store, Arc::new(clock));
            let mut ps = params("openid");
            ps.client_id = Some(format!("rp{}", issue.0));
            ps.redirect_uri = Some(uris(issue.0)[issue.1].clone());
            let challenge = challenge_of(p.authorize(&ps));
            let url = p.accept_login(&challenge, "did:key:x").unwrap();
            let cc = Url::parse(&url).unwrap().query_pairs().next().unwrap().1.into_owned();
            let code = code_of(&p.accept_consent(&cc, claims()).unwrap());

            let req = TokenRequest {
                grant_type: Some("authorization_code".into()),
                code: Some(code),
                redirect_uri: Some(uris(redeem.0)[redeem.1].clone()),
                client_id: Some(format!("rp{}", redeem.0)),
                client_secret: Some(format!("s{}", redeem.0)),
            };
            let result = p.token(&req, None);
            proptest::prop_assert_eq!(result.is_ok(), issue == redeem);
            if let Err(e) = result {
                proptest::prop_assert_eq!(e.error, "invalid_grant");
            }
        }
    }

    #[test]
    fn redirect_uri_with_existing_query_is_preserved() {
        let clock = ManualClock::new(T0);
        let store = SessionStore::new(Arc::new(clock.clone()));
        let key = SigningKey::P256(p256::ecdsa::SigningKey::from_slice(&[4u8; 32]).unwrap());
        let client = ClientConfig { client_id: "rp".into(), client_secret: "s".into(), redirect_uris: vec!["https://c.example/cb?tenant=a".into()] };
        let p = Provider::new("https://b.example", vec![client], key, store, Arc::new(clock));
        let mut ps = params("openid");
        ps.redirect_uri = Some("https://c.example/cb?tenant=a".into());
        let challenge = challenge_of(p.authorize(&ps));
        let url = p.accept_login(&challenge, "did:key:x").unwrap();
        let cc = Url::parse(&url).unwrap().query_pairs().next().unwrap().1.into_owned();
        assert!(p.accept_consent(&cc, claims()).unwrap().starts_with("https://c.example/cb?tenant=a&code="));
    }

    #[test]
    fn client_file_validation() {
        assert!(parse_clients(r#"[{"client_id":"a","client_secret":"b","redirect_uris":["https://x/cb"]}]"#).is_ok());
        assert!(parse_clients(r#"[{"client_id":"a","client_secret":"b","redirect_uris":["/cb"]}]"#).is_err());
        assert!(parse_clients(r#"[{"client_id":"a","client_secret":"b","redirect_uris":["https://x/cb#f"]}]"#).is_err());
    }
}
