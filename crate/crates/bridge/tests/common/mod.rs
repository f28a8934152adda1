//! Loopback fixtures: a static file server standing in for issuer web
//! hosts, and a bridge wired to it.

#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::extract::State;
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use serde_json::{json, Value};
use url::Url;
use vcbridge::client::{AuthMethod, ClientOptions, OidcClient};
use vcbridge::clock::{Clock, ManualClock, SystemClock};
use vcbridge::config::BridgeConfig;
use vcbridge::provider::ClientConfig;
use vcbridge::server::{self, Bridge};
use vcbridge::wallet::{CredentialOptions, Issuer, Wallet};
use vcbridge_core::jws::SigningKey;
use vcbridge_core::{parse_policy, StatusBits};

pub const ALTME_DID: &str = "did:web:app.altme.io:issuer";
pub const ISSUER_ONE_DID: &str = "did:web:issuers.test:one";
pub const ISSUER_TWO_DID: &str = "did:web:issuers.test:two";
pub const UNTRUSTED_DID: &str = "did:web:issuers.test:untrusted";
pub const STATUS_LIST_URL: &str = "https://app.altme.io/status/1";

pub const CLIENT_ID: &str = "acceptance-rp";
pub const CLIENT_SECRET: &str = "correct horse battery staple";
pub const REDIRECT_URI: &str = "http://127.0.0.1:9/callback";

pub const EMAIL_POLICY: &str = r#"[{
  "credentialID": "one",
  "patterns": [{
    "issuer": "did:web:app.altme.io:issuer",
    "claims": [{
      "claimPath": "$.credentialSubject.email",
      "token": "id_token"
    }]
  }]
}]"#;

pub const RENAMING_POLICY: &str = r#"[{
  "credentialID": "expected_credential_for_email",
  "patterns": [{
    "issuer": "did:example:123",
    "claims": [{
        "claimPath": "$.credentialSubject.e_mail",
        "newPath": "$.email",
        "token": "id_token"
    }]
  },
  {
    "issuer": "did:example:456",
    "claims": [{
        "claimPath": "$.credentialSubject.email",
        "token": "id_token"
    }]
  }]
}]"#;

type Files = Arc<RwLock<HashMap<String, (&'static str, String)>>>;

/// Serves whatever was published, by path.
#[derive(Clone)]
pub struct FileServer {
    pub origin: Url,
    files: Files,
}

async fn serve_file(State(files): State<Files>, uri: Uri) -> Response {
    match files.read().unwrap().get(uri.path()) {
        Some((ctype, body)) => ([(header::CONTENT_TYPE, *ctype)], body.clone()).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

impl FileServer {
    pub async fn start() -> Self {
        let files: Files = Arc::default();
        let app = axum::Router::new().fallback(serve_file).with_state(files.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let origin = Url::parse(&format!("http://{}", listener.local_addr().unwrap())).unwrap();
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self { origin, files }
    }

    pub fn publish(&self, path: &str, content_type: &'static str, body: impl Into<String>) {
        self.files.write().unwrap().insert(path.to_owned(), (content_type, body.into()));
    }

    pub fn unpublish(&self, path: &str) {
        self.files.write().unwrap().remove(path);
    }
}

fn seeded_ed25519(seed: u8) -> SigningKey {
    SigningKey::Ed25519(ed25519_dalek::SigningKey::from_bytes(&[seed; 32]))
}

/// Publishes the DID document of a path-based `did:web` issuer.
pub fn publish_issuer(server: &FileServer, did: &str, seed: u8) -> Issuer {
    let issuer = Issuer::with_did(seeded_ed25519(seed), did);
    let loc = vcbridge_core::did::did_web_location(did).unwrap();
    let url = Url::parse(&loc.https_url()).unwrap();
    server.publish(url.path(), "application/did+json", issuer.did_document().to_string());
    issuer
}

pub struct Fixture {
    pub files: FileServer,
    pub bridge: Arc<Bridge>,
    pub bridge_url: Url,
    pub clock: ManualClock,
    pub altme: Issuer,
    pub issuer_one: Issuer,
    pub issuer_two: Issuer,
    pub untrusted: Issuer,
}

impl Fixture {
    /// A bridge running `policy` (issuers in it may be any of the fixture
    /// issuers) at a frozen clock set to the current time.
    pub async fn start(policy: &str) -> Self {
        let files = FileServer::start().await;
        let altme = publish_issuer(&files, ALTME_DID, 11);
        let issuer_one = publish_issuer(&files, ISSUER_ONE_DID, 12);
        let issuer_two = publish_issuer(&files, ISSUER_TWO_DID, 13);
        let untrusted = publish_issuer(&files, UNTRUSTED_DID, 14);

        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let bridge_url = Url::parse(&format!("http://{}", listener.local_addr().unwrap())).unwrap();
        let overrides = [("app.altme.io", &files.origin), ("issuers.test", &files.origin)]
            .into_iter()
            .map(|(h, o)| (h.to_owned(), o.clone()))
            .collect();
        let config = BridgeConfig {
            external_url: bridge_url.as_str().trim_end_matches('/').to_owned(),
            bridge_key: seeded_ed25519(1),
            policy: parse_policy(policy).unwrap(),
            descriptor_override: None,
            clients: vec![ClientConfig {
                client_id: CLIENT_ID.into(),
                client_secret: CLIENT_SECRET.into(),
                redirect_uris: vec![REDIRECT_URI.into()],
            }],
            oidc_key: Some(SigningKey::P256(p256::ecdsa::SigningKey::from_slice(&[2u8; 32]).unwrap())),
            fetch_overrides: overrides,
            bind: listener.local_addr().unwrap(),
        };
        let clock = ManualClock::new(SystemClock.now());
        let bridge = Arc::new(Bridge::new(config, Arc::new(clock.clone())));
        tokio::spawn(server::serve(listener, bridge.clone()));

        let fixture = Self { files, bridge, bridge_url, clock, altme, issuer_one, issuer_two, untrusted };
        fixture.publish_status_list(&[]);
        fixture
    }

    pub fn now(&self) -> i64 {
        self.clock.now()
    }

    /// Republishes the Altme status list with the given indices revoked.
    pub fn publish_status_list(&self, revoked: &[u64]) {
        let mut bits = StatusBits::zeroed(16 * 1024);
        for &i in revoked {
            bits.set(i, true).unwrap();
        }
        let jwt = self.altme.status_list(STATUS_LIST_URL, &bits, self.now() - 10);
        self.files.publish("/status/1", "application/jwt", jwt);
    }

    pub fn client_with(&self, scope: &str, secret: &str) -> OidcClient {
        OidcClient::new(ClientOptions {
            bridge: self.bridge_url.clone(),
            client_id: CLIENT_ID.into(),
            client_secret: secret.into(),
            redirect_uri: REDIRECT_URI.into(),
            scope: scope.into(),
            auth_method: AuthMethod::Basic,
            tamper_code: false,
            nonce: None,
        })
    }

    pub fn client(&self) -> OidcClient {
        self.client_with("openid", CLIENT_SECRET)
    }

    fn options(&self, status_index: Option<u64>) -> CredentialOptions {
        CredentialOptions {
            extra_types: vec!["EmailPass".into()],
            status: status_index.map(|i| (STATUS_LIST_URL.to_owned(), i)),
            not_before: self.now() - 60,
            expires: Some(self.now() + 3600),
        }
    }

    /// The Altme proof-of-email credential for `subject`.
    pub fn altme_email(&self, subject: &str, email: &str, status_index: Option<u64>) -> String {
        let claims = json!({"email": email, "type": "EmailPass", "issuedBy": {"name": "Altme"}});
        self.altme.issue(subject, claims, &self.options(status_index)).unwrap()
    }

    pub fn issue_from(&self, issuer: &Issuer, subject: &str, claims: Value) -> String {
        issuer.issue(subject, claims, &self.options(None)).unwrap()
    }

    /// A fresh wallet holding an Altme email credential about itself.
    pub fn email_wallet(&self, status_index: Option<u64>) -> Wallet {
        let mut w = Wallet::generate();
        let vc = self.altme_email(w.did(), "name@example.com", status_index);
        w.add_credential(vc);
        w
    }
}

/// Non-registered claims of a token payload.
pub fn custom_claims(payload: &Value) -> Vec<String> {
    const REGISTERED: [&str; 8] = ["iss", "sub", "aud", "exp", "iat", "nonce", "client_id", "scope"];
    payload
        .as_object()
        .map(|m| m.keys().filter(|k| !REGISTERED.contains(&k.as_str())).cloned().collect())
        .unwrap_or_default()
}
