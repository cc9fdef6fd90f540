//! Blocking HTTP client for the `/api/v1` surface. Passwords are hashed
//! here, so only their SHA-1 digest ever leaves the process.

use std::fmt;
use std::time::Duration;

use reqwest::blocking::Client as Http;
use reqwest::Method;
use serde_json::{json, Value};
use sha1::{Digest, Sha1};

use revbib_core::capability::API_PREFIX;

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";

pub fn password_digest(password: &str) -> String {
    hex::encode(Sha1::digest(password.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientError {
    /// The service answered with an error envelope.
    Api { status: u16, code: String, message: String },
    Transport(String),
    Decode(String),
}

impl fmt::Display for ClientError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientError::Api { status, code, message } => write!(f, "{status} {code}: {message}"),
            ClientError::Transport(m) => write!(f, "cannot reach service: {m}"),
            ClientError::Decode(m) => write!(f, "unexpected response: {m}"),
        }
    }
}

impl std::error::Error for ClientError {}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    token: Option<String>,
    http: Http,
}

impl Client {
    pub fn new(server: &str) -> Result<Self, ClientError> {
        let http = Http::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Client {
            base: format!("{}{API_PREFIX}", server.trim_end_matches('/')),
            token: None,
            http,
        })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    /// Sends one request and returns the envelope's `data`.
    pub fn call(
        &self,
        method: Method,
        path: &str,
        body: Option<&Value>,
        idempotency_key: Option<&str>,
    ) -> Result<Value, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        if let Some(k) = idempotency_key {
            req = req.header("Idempotency-Key", k);
        }
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| ClientError::Decode(format!("{e}: {text:.200}")))?;
        revbib_server::decode_envelope(&value).map_err(|(code, message)| {
            if code == "decode" {
                ClientError::Decode(message)
            } else {
                ClientError::Api { status, code, message }
            }
        })
    }

    pub fn get(&self, path: &str) -> Result<Value, ClientError> {
        self.call(Method::GET, path, None, None)
    }

    pub fn register(
        &self,
        username: &str,
        password: &str,
        email: &str,
        first_name: &str,
        last_name: &str,
    ) -> Result<Value, ClientError> {
        let body = json!({
            "username": username,
            "password_digest": password_digest(password),
            "email": email,
            "first_name": first_name,
            "last_name": last_name,
        });
        self.call(Method::POST, "/auth/register", Some(&body), None)
    }

    /// Logs in and returns a client carrying the new token.
    pub fn login(&self, username: &str, password: &str) -> Result<Client, ClientError> {
        let body = json!({ "username": username, "password_digest": password_digest(password) });
        let data = self.call(Method::POST, "/auth/login", Some(&body), None)?;
        let token = data["token"]
            .as_str()
            .ok_or_else(|| ClientError::Decode("login response has no token".into()))?;
        Ok(self.clone().with_token(token))
    }
}
