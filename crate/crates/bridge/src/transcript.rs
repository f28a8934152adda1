//! HTTP client that logs every exchange, shared by the test client and
//! the wallet so one run yields one ordered transcript.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Serialize;
use url::Url;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exchange {
    pub method: String,
    pub url: String,
    pub status: u16,
    /// Set by the caller after reading the body, e.g. a poll result.
    pub note: Option<String>,
}

impl Exchange {
    pub fn path(&self) -> String {
        Url::parse(&self.url).map(|u| u.path().to_owned()).unwrap_or_default()
    }

    pub fn query(&self, name: &str) -> Option<String> {
        Url::parse(&self.url).ok()?.query_pairs().find(|(k, _)| k == name).map(|(_, v)| v.into_owned())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Transcript(Arc<Mutex<Vec<Exchange>>>);

impl Transcript {
    pub fn record(&self, exchange: Exchange) {
        self.0.lock().expect("transcript lock").push(exchange);
    }

    pub fn annotate_last(&self, note: impl Into<String>) {
        if let Some(last) = self.0.lock().expect("transcript lock").last_mut() {
            last.note = Some(note.into());
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.0.lock().expect("transcript lock").clone()
    }
}

/// Never follows redirects; callers read `Location` themselves.
#[derive(Debug, Clone)]
pub struct RecordingClient {
    client: reqwest::Client,
    transcript: Transcript,
}

impl Default for RecordingClient {
    fn default() -> Self {
        Self::new(Transcript::default())
    }
}

impl RecordingClient {
    pub fn new(transcript: Transcript) -> Self {
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(Duration::from_secs(10))
            .build()
            .expect("HTTP client builds");
        Self { client, transcript }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    async fn send(&self, method: &str, url: &str, req: reqwest::RequestBuilder) -> reqwest::Result<reqwest::Response> {
        let resp = req.send().await?;
        self.transcript.record(Exchange {
            method: method.into(),
            url: url.into(),
            status: resp.status().as_u16(),
            note: None,
        });
        Ok(resp)
    }

    pub async fn get(&self, url: &str) -> reqwest::Result<reqwest::Response> {
        self.send("GET", url, self.client.get(url)).await
    }

    pub async fn post_form<T: Serialize + ?Sized>(
        &self,
        url: &str,
        form: &T,
        basic: Option<(&str, &str)>,
    ) -> reqwest::Result<reqwest::Response> {
        let mut req = self.client.post(url).form(form);
        if let Some((user, pass)) = basic {
            req = req.basic_auth(user, Some(pass));
        }
        self.send("POST", url, req).await
    }
}
