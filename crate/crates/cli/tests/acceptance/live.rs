//! Service fixtures: in-process instances and a real HTTP listener.

use std::cell::RefCell;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use reqwest::blocking::Client as Http;
use serde_json::{json, Value};
use tempfile::TempDir;

use revbib_cli::client::password_digest;
use revbib_core::auth::Registration;
use revbib_core::capability::API_PREFIX;
use revbib_core::clock::ManualClock;
use revbib_core::config::ServiceConfig;
use revbib_core::Bibliography;

pub const PASSWORD: &str = "plain text that must never leave the client";

pub struct Instance {
    pub dir: TempDir,
    pub clock: Arc<ManualClock>,
    pub svc: Arc<Bibliography>,
}

pub fn config(scenario: u8, dir: &TempDir) -> ServiceConfig {
    let mut c = ServiceConfig::new(scenario, dir.path().join("data"));
    // Key stretching cost is irrelevant to these checks.
    c.verifier_iterations = 1_000;
    c.roles.moderators = vec!["mod".into()];
    c.roles.associate_users = vec!["assoc".into()];
    c
}

pub fn instance(scenario: u8) -> Instance {
    instance_with(scenario, |_| {})
}

pub fn instance_with(scenario: u8, tweak: impl FnOnce(&mut ServiceConfig)) -> Instance {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut c = config(scenario, &dir);
    tweak(&mut c);
    let clock = Arc::new(ManualClock::new(
        Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap(),
    ));
    let svc = Arc::new(Bibliography::open(c, clock.clone()).expect("service opens"));
    Instance { dir, clock, svc }
}

impl Instance {
    /// Registers `name` if needed and logs in.
    pub fn user(&self, name: &str) -> String {
        let _ = self.svc.register(Registration {
            username: name.into(),
            password_digest: password_digest(PASSWORD),
            email: format!("{name}@example.org"),
            first_name: name.into(),
            last_name: "Acceptance".into(),
        });
        self.svc
            .login(name, &password_digest(PASSWORD))
            .expect("login")
            .token
    }

    pub fn reopen(self) -> Instance {
        let config = self.svc.config().clone();
        drop(self.svc);
        let svc = Arc::new(Bibliography::open(config, self.clock.clone()).expect("reopen"));
        Instance { dir: self.dir, clock: self.clock, svc }
    }
}

/// An instance behind a real TCP listener. Dropping it stops the server.
pub struct Served {
    pub inst: Instance,
    pub base: String,
    http: Http,
    /// Every request and response body, in order.
    pub transcript: RefCell<Vec<String>>,
    _runtime: tokio::runtime::Runtime,
}

pub fn serve(inst: Instance) -> Served {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .expect("runtime");
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .expect("bind");
    let addr = listener.local_addr().unwrap();
    runtime.spawn(revbib_server::serve(
        listener,
        inst.svc.clone(),
        std::future::pending(),
    ));
    Served {
        inst,
        base: format!("http://{addr}{API_PREFIX}"),
        http: Http::new(),
        transcript: RefCell::new(Vec::new()),
        _runtime: runtime,
    }
}

impl Served {
    /// Raw call; returns the status and parsed envelope.
    pub fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (u16, Value) {
        let method = reqwest::Method::from_bytes(method.as_bytes()).unwrap();
        let mut req = self.http.request(method.clone(), format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let mut log = format!("{method} {path}");
        if let Some(b) = body {
            log.push(' ');
            log.push_str(&b.to_string());
            req = req.json(&b);
        }
        self.transcript.borrow_mut().push(log);
        let resp = req.send().expect("request sent");
        let status = resp.status().as_u16();
        let text = resp.text().expect("body");
        self.transcript.borrow_mut().push(text.clone());
        let value = serde_json::from_str(&text).unwrap_or(Value::String(text));
        (status, value)
    }

    /// Registers over HTTP (if needed) and logs in.
    pub fn user(&self, name: &str) -> String {
        self.call(
            "POST",
            "/auth/register",
            None,
            Some(json!({
                "username": name,
                "password_digest": password_digest(PASSWORD),
                "email": format!("{name}@example.org"),
                "first_name": name,
                "last_name": "Acceptance",
            })),
        );
        let (status, v) = self.call(
            "POST",
            "/auth/login",
            None,
            Some(json!({"username": name, "password_digest": password_digest(PASSWORD)})),
        );
        assert_eq!(status, 200, "login {name}: {v}");
        v["data"]["token"].as_str().unwrap().to_string()
    }
}
