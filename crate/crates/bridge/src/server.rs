//! HTTP surface of the bridge.

use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Redirect, Response};
use axum::routing::get;
use axum::{Form, Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use percent_encoding::percent_decode_str;
use qrcode::render::svg;
use qrcode::{EcLevel, QrCode};
use serde::Deserialize;
use serde_json::json;
use vcbridge_core::jws::SigningKey;

use crate::clock::SharedClock;
use crate::config::BridgeConfig;
use crate::provider::{AuthorizeOutcome, AuthorizeParams, Provider, TokenRequest};
use crate::resolver::{DidResolver, Fetcher};
use crate::rp::{RelyingParty, RpError, Submission};
use crate::store::SessionStore;

/// Everything a running bridge holds.
pub struct Bridge {
    pub provider: Arc<Provider>,
    pub rp: Arc<RelyingParty>,
    pub store: SessionStore,
}

impl Bridge {
    pub fn new(config: BridgeConfig, clock: SharedClock) -> Self {
        let store = SessionStore::new(clock.clone());
        let oidc_key = config.oidc_key.unwrap_or_else(|| {
            SigningKey::P256(p256::ecdsa::SigningKey::random(&mut rand::rngs::OsRng))
        });
        let provider =
            Arc::new(Provider::new(&config.external_url, config.clients, oidc_key, store.clone(), clock.clone()));
        let resolver = Arc::new(DidResolver::new(Fetcher::with_overrides(config.fetch_overrides)));
        let rp = Arc::new(RelyingParty::new(
            &config.external_url,
            config.bridge_key,
            config.policy,
            config.descriptor_override,
            resolver,
            provider.clone(),
            store.clone(),
            clock,
        ));
        Self { provider, rp, store }
    }

    pub fn router(self: Arc<Self>) -> Router {
        Router::new()
            .route("/.well-known/openid-configuration", get(discovery))
            .route("/jwks", get(jwks))
            .route("/authorize", get(authorize))
            .route("/token", axum::routing::post(token))
            .route("/login", get(login_page))
            .route("/consent", get(consent))
            .route("/api/qr", get(qr))
            .route("/api/presentCredential", get(presentation_request).post(submit))
            .route("/api/redirect", get(poll))
            .with_state(self)
    }
}

pub async fn serve(listener: tokio::net::TcpListener, bridge: Arc<Bridge>) -> std::io::Result<()> {
    axum::serve(listener, bridge.router()).await
}

type App = State<Arc<Bridge>>;

#[derive(Debug, Deserialize)]
struct ChallengeQuery {
    login_challenge: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ConsentQuery {
    consent_challenge: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LoginIdQuery {
    login_id: Option<String>,
}

fn error_page(status: StatusCode, message: &str) -> Response {
    let body = format!(
        "<!doctype html><html><head><meta charset=\"utf-8\"><title>Sign-in error</title></head>\
         <body><h1>Sign-in error</h1><p>{}</p></body></html>",
        escape(message)
    );
    (status, Html(body)).into_response()
}

fn json_error(status: StatusCode, error: &str, description: &str) -> Response {
    (status, Json(json!({ "error": error, "error_description": description }))).into_response()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;").replace('\'', "&#39;")
}

async fn discovery(State(app): App) -> Response {
    Json(app.provider.discovery()).into_response()
}

async fn jwks(State(app): App) -> Response {
    Json(app.provider.jwks()).into_response()
}

async fn authorize(State(app): App, Query(params): Query<AuthorizeParams>) -> Response {
    match app.provider.authorize(&params) {
        AuthorizeOutcome::Login(url) | AuthorizeOutcome::ErrorRedirect(url) => Redirect::to(&url).into_response(),
        AuthorizeOutcome::ErrorPage(msg) => error_page(StatusCode::BAD_REQUEST, &msg),
    }
}

fn basic_credentials(headers: &HeaderMap) -> Option<(String, String)> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let encoded = value.strip_prefix("Basic ").or_else(|| value.strip_prefix("basic "))?;
    let decoded = String::from_utf8(STANDARD.decode(encoded.trim()).ok()?).ok()?;
    let (id, secret) = decoded.split_once(':')?;
    let unform = |s: &str| percent_decode_str(&s.replace('+', " ")).decode_utf8().ok().map(|c| c.into_owned());
    Some((unform(id)?, unform(secret)?))
}

async fn token(State(app): App, headers: HeaderMap, Form(req): Form<TokenRequest>) -> Response {
    let mut resp = match app.provider.token(&req, basic_credentials(&headers)) {
        Ok(tokens) => Json(tokens).into_response(),
        Err(e) => {
            tracing::info!(error = e.error, "token request refused: {}", e.description);
            let status = StatusCode::from_u16(e.http_status()).expect("valid status");
            let mut r = json_error(status, e.error, &e.description);
            if status == StatusCode::UNAUTHORIZED {
                r.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Basic"));
            }
            r
        }
    };
    resp.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    resp.headers_mut().insert(header::PRAGMA, HeaderValue::from_static("no-cache"));
    resp
}

fn qr_svg(data: &str) -> Option<String> {
    let code = QrCode::with_error_correction_level(data, EcLevel::M).ok()?;
    Some(
        code.render::<svg::Color<'_>>()
            .min_dimensions(256, 256)
            .dark_color(svg::Color("#000000"))
            .light_color(svg::Color("#ffffff"))
            .build(),
    )
}

async fn login_page(State(app): App, Query(q): Query<ChallengeQuery>) -> Response {
    let Some(challenge) = q.login_challenge else {
        return error_page(StatusCode::BAD_REQUEST, "missing login_challenge");
    };
    let start = match app.rp.begin_login(&challenge) {
        Ok(s) => s,
        Err(e) => return error_page(StatusCode::BAD_REQUEST, &e.to_string()),
    };
    let Some(svg) = qr_svg(&start.qr_uri) else {
        return error_page(StatusCode::INTERNAL_SERVER_ERROR, "could not render the QR code");
    };
    let poll_url = format!("/api/redirect?login_challenge={}", escape(&challenge));
    let body = format!(
        r#"<!doctype html>
<html>
<head><meta charset="utf-8"><title>Sign in</title></head>
<body>
<main id="login" data-qr-uri="{uri}" data-poll="{poll_url}">
<h1>Scan the code to sign in!</h1>
<div class="qr">{svg}</div>
<p><a href="{uri}">Open in a wallet on this device</a></p>
</main>
<script>
(function () {{
  var poll = document.getElementById("login").dataset.poll;
  function tick() {{
    fetch(poll, {{ cache: "no-store" }})
      .then(function (r) {{ return r.json(); }})
      .then(function (s) {{
        if (s.status === "ready") {{ window.location.assign(s.redirect); }}
        else {{ setTimeout(tick, 1500); }}
      }})
      .catch(function () {{ setTimeout(tick, 3000); }});
  }}
  tick();
}})();
</script>
</body>
</html>
"#,
        uri = escape(&start.qr_uri),
    );
    let mut resp = Html(body).into_response();
    resp.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    resp
}

async fn qr(State(app): App, Query(q): Query<ChallengeQuery>) -> Response {
    let Some(challenge) = q.login_challenge else {
        return json_error(StatusCode::BAD_REQUEST, "invalid_request", "missing login_challenge");
    };
    match app.rp.begin_login(&challenge) {
        Ok(start) => Json(start).into_response(),
        Err(e) => json_error(StatusCode::BAD_REQUEST, "invalid_request", &e.to_string()),
    }
}

async fn presentation_request(State(app): App, Query(q): Query<LoginIdQuery>) -> Response {
    let Some(login_id) = q.login_id else {
        return json_error(StatusCode::BAD_REQUEST, "invalid_request", "missing login_id");
    };
    match app.rp.presentation_request(&login_id) {
        Ok(jwt) => ([(header::CONTENT_TYPE, "application/oauth-authz-req+jwt")], jwt).into_response(),
        Err(_) => json_error(StatusCode::NOT_FOUND, "invalid_request", "unknown or expired login_id"),
    }
}

async fn submit(State(app): App, Form(form): Form<Submission>) -> Response {
    match app.rp.submit_presentation(&form).await {
        Ok(()) => Json(json!({})).into_response(),
        Err(rejection) => {
            tracing::info!(kind = rejection.code(), "presentation rejected: {rejection}");
            (StatusCode::BAD_REQUEST, Json(rejection.body())).into_response()
        }
    }
}

async fn poll(State(app): App, Query(q): Query<ChallengeQuery>) -> Response {
    let Some(challenge) = q.login_challenge else {
        return json_error(StatusCode::BAD_REQUEST, "invalid_request", "missing login_challenge");
    };
    let mut resp = Json(app.rp.poll_redirect(&challenge)).into_response();
    resp.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    resp
}

async fn consent(State(app): App, Query(q): Query<ConsentQuery>) -> Response {
    let Some(cc) = q.consent_challenge else {
        return error_page(StatusCode::BAD_REQUEST, "missing consent_challenge");
    };
    match app.rp.complete_consent(&cc) {
        Ok(url) => Redirect::to(&url).into_response(),
        Err(e @ (RpError::UnknownChallenge | RpError::MissingClaims | RpError::WrongState)) => {
            error_page(StatusCode::BAD_REQUEST, &e.to_string())
        }
        Err(e) => error_page(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}
