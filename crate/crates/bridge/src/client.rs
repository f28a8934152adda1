//! A cookie-less OpenID Connect client that drives a full login against a
//! bridge, with a simulated wallet scanning the QR code.

use std::time::Duration;

use anyhow::{anyhow, bail, ensure, Context};
use serde_json::Value;
use url::Url;
use vcbridge_core::jws::{Jwk, Jws};

use crate::provider::random_token;
use crate::transcript::{Exchange, RecordingClient, Transcript};
use crate::wallet::{Faults, PresentOutcome, Wallet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuthMethod {
    #[default]
    Basic,
    Post,
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub bridge: Url,
    pub client_id: String,
    pub client_secret: String,
    pub redirect_uri: String,
    pub scope: String,
    pub auth_method: AuthMethod,
    /// Send a modified code to the token endpoint.
    pub tamper_code: bool,
    /// Use this nonce instead of a random one.
    pub nonce: Option<String>,
}

/// A started authorization request.
#[derive(Debug, Clone)]
pub struct LoginHandle {
    pub login_url: String,
    pub login_challenge: String,
    pub state: String,
    pub nonce: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenOutcome {
    pub status: u16,
    pub body: Value,
}

impl TokenOutcome {
    pub fn error(&self) -> Option<&str> {
        self.body.get("error").and_then(Value::as_str)
    }
}

/// Everything a run produced. Protocol refusals are reported here rather
/// than as errors.
#[derive(Debug, Clone, Default)]
pub struct FlowReport {
    pub exchanges: Vec<Exchange>,
    pub presentation: Option<PresentOutcome>,
    pub code: Option<String>,
    pub token: Option<TokenOutcome>,
    pub id_token_claims: Option<Value>,
    pub access_token_claims: Option<Value>,
}

impl FlowReport {
    pub fn succeeded(&self) -> bool {
        self.id_token_claims.is_some()
    }
}

pub struct OidcClient {
    opts: ClientOptions,
    http: RecordingClient,
}

fn location(resp: &reqwest::Response) -> anyhow::Result<String> {
    ensure!(resp.status().is_redirection(), "expected a redirect, got {}", resp.status());
    let loc = resp.headers().get(reqwest::header::LOCATION).ok_or_else(|| anyhow!("redirect without Location"))?;
    Ok(loc.to_str()?.to_owned())
}

fn query_param(url: &str, name: &str) -> Option<String> {
    Url::parse(url).ok()?.query_pairs().find(|(k, _)| k == name).map(|(_, v)| v.into_owned())
}

/// The QR URI the login page embeds.
pub fn qr_uri_from_page(html: &str) -> Option<String> {
    let start = html.find("data-qr-uri=\"")? + "data-qr-uri=\"".len();
    let end = start + html[start..].find('"')?;
    let raw = &html[start..end];
    Some(raw.replace("&quot;", "\"").replace("&#39;", "'").replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&"))
}

impl OidcClient {
    pub fn new(opts: ClientOptions) -> Self {
        Self { opts, http: RecordingClient::default() }
    }

    pub fn with_nonce(mut self, nonce: impl Into<String>) -> Self {
        self.opts.nonce = Some(nonce.into());
        self
    }

    pub fn http(&self) -> &RecordingClient {
        &self.http
    }

    pub fn transcript(&self) -> &Transcript {
        self.http.transcript()
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}{path}", self.opts.bridge.as_str().trim_end_matches('/'))
    }

    pub async fn discovery(&self) -> anyhow::Result<Value> {
        Ok(self.http.get(&self.endpoint("/.well-known/openid-configuration")).await?.json().await?)
    }

    /// Sends the authorization request and follows it to the login page.
    pub async fn authorize(&self) -> anyhow::Result<LoginHandle> {
        let state = random_token();
        let nonce = self.opts.nonce.clone().unwrap_or_else(random_token);
        let mut url = Url::parse(&self.endpoint("/authorize"))?;
        url.query_pairs_mut()
            .append_pair("response_type", "code")
            .append_pair("client_id", &self.opts.client_id)
            .append_pair("redirect_uri", &self.opts.redirect_uri)
            .append_pair("scope", &self.opts.scope)
            .append_pair("state", &state)
            .append_pair("nonce", &nonce);
        let resp = self.http.get(url.as_str()).await?;
        let login_url = location(&resp)?;
        if let Some(err) = query_param(&login_url, "error") {
            bail!("authorization refused: {err}");
        }
        let login_challenge = query_param(&login_url, "login_challenge").ok_or_else(|| anyhow!("no login_challenge in {login_url}"))?;
        Ok(LoginHandle { login_url, login_challenge, state, nonce })
    }

    /// Loads the login page and returns the QR URI it shows.
    pub async fn login_page(&self, handle: &LoginHandle) -> anyhow::Result<String> {
        let html = self.http.get(&handle.login_url).await?.error_for_status()?.text().await?;
        qr_uri_from_page(&html).ok_or_else(|| anyhow!("login page carries no QR URI"))
    }

    /// One poll of the redirect endpoint; `Some(url)` once ready.
    pub async fn poll(&self, handle: &LoginHandle) -> anyhow::Result<Option<String>> {
        let url = self.endpoint(&format!("/api/redirect?login_challenge={}", handle.login_challenge));
        let status: Value = self.http.get(&url).await?.json().await?;
        let state = status["status"].as_str().unwrap_or_default().to_owned();
        self.transcript().annotate_last(state.clone());
        if state == "ready" {
            return status["redirect"].as_str().map(|r| Some(r.to_owned())).ok_or_else(|| anyhow!("ready without redirect"));
        }
        Ok(None)
    }

    /// Polls until the login is accepted; returns the consent URL.
    pub async fn await_redirect(&self, handle: &LoginHandle, attempts: usize) -> anyhow::Result<String> {
        for _ in 0..attempts {
            if let Some(url) = self.poll(handle).await? {
                return Ok(url);
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        bail!("login never became ready")
    }

    /// Follows the consent URL to the client callback and returns the code.
    pub async fn follow_consent(&self, handle: &LoginHandle, consent_url: &str) -> anyhow::Result<String> {
        let resp = self.http.get(consent_url).await?;
        let callback = location(&resp).context("consent")?;
        ensure!(callback.starts_with(&self.opts.redirect_uri), "callback {callback} is not our redirect URI");
        if let Some(err) = query_param(&callback, "error") {
            bail!("authorization failed: {err}");
        }
        ensure!(query_param(&callback, "state").as_deref() == Some(handle.state.as_str()), "state mismatch");
        query_param(&callback, "code").ok_or_else(|| anyhow!("callback without code"))
    }

    pub async fn redeem(&self, code: &str) -> anyhow::Result<TokenOutcome> {
        let code = if self.opts.tamper_code { format!("{code}x") } else { code.to_owned() };
        let mut form = vec![
            ("grant_type", "authorization_code".to_owned()),
            ("code", code),
            ("redirect_uri", self.opts.redirect_uri.clone()),
        ];
        // Basic credentials are form-encoded before base64
        let enc = |s: &str| url::form_urlencoded::byte_serialize(s.as_bytes()).collect::<String>();
        let (user, pass) = (enc(&self.opts.client_id), enc(&self.opts.client_secret));
        let basic = match self.opts.auth_method {
            AuthMethod::Basic => Some((user.as_str(), pass.as_str())),
            AuthMethod::Post => {
                form.push(("client_id", self.opts.client_id.clone()));
                form.push(("client_secret", self.opts.client_secret.clone()));
                None
            }
        };
        let resp = self.http.post_form(&self.endpoint("/token"), &form, basic).await?;
        let status = resp.status().as_u16();
        let body = resp.json().await.unwrap_or(Value::Null);
        Ok(TokenOutcome { status, body })
    }

    /// Checks the token response and the ID token; returns the ID and
    /// access token claims.
    pub async fn verify_tokens(&self, handle: &LoginHandle, body: &Value, now: i64) -> anyhow::Result<(Value, Value)> {
        ensure!(body.get("refresh_token").is_none(), "a refresh token was issued");
        ensure!(body["token_type"].as_str().is_some_and(|t| t.eq_ignore_ascii_case("bearer")), "token_type is not bearer");
        let jwks: Value = self.http.get(&self.endpoint("/jwks")).await?.json().await?;
        let id = Jws::parse(body["id_token"].as_str().ok_or_else(|| anyhow!("no id_token"))?)?;
        let key = jwks["keys"]
            .as_array()
            .into_iter()
            .flatten()
            .find(|k| k["kid"].as_str() == id.kid())
            .ok_or_else(|| anyhow!("id_token kid not in JWKS"))?;
        let key: Jwk = serde_json::from_value(key.clone())?;
        let public = key.public_key()?;
        id.verify(&public)?;
        let claims = &id.payload;
        ensure!(claims["iss"] == self.opts.bridge.as_str().trim_end_matches('/'), "unexpected iss");
        ensure!(claims["aud"] == self.opts.client_id.as_str(), "unexpected aud");
        ensure!(claims["nonce"] == handle.nonce.as_str(), "nonce mismatch");
        ensure!(claims["exp"].as_i64().is_some_and(|e| e > now), "id_token expired");
        let access = Jws::parse(body["access_token"].as_str().ok_or_else(|| anyhow!("no access_token"))?)?;
        access.verify(&public)?;
        Ok((id.payload, access.payload))
    }

    /// A complete login with `wallet` answering the QR code.
    pub async fn run(&self, wallet: &Wallet, faults: Faults, now: i64) -> anyhow::Result<FlowReport> {
        let mut report = FlowReport::default();
        self.discovery().await?;
        let handle = self.authorize().await?;
        let qr = self.login_page(&handle).await?;
        // the page starts polling as soon as it is shown
        ensure!(self.poll(&handle).await?.is_none(), "login ready before any presentation");
        let outcome = wallet.present(&self.http, &qr, faults, now).await?;
        let accepted = outcome.accepted();
        report.presentation = Some(outcome);
        if accepted {
            let consent_url = self.await_redirect(&handle, 250).await?;
            let code = self.follow_consent(&handle, &consent_url).await?;
            report.code = Some(code.clone());
            let token = self.redeem(&code).await?;
            if token.status == 200 {
                let (id, access) = self.verify_tokens(&handle, &token.body, now).await?;
                report.id_token_claims = Some(id);
                report.access_token_claims = Some(access);
            }
            report.token = Some(token);
        }
        report.exchanges = self.transcript().exchanges();
        Ok(report)
    }
}
