#![allow(dead_code)]

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use revbib_core::auth::Registration;
use revbib_core::clock::ManualClock;
use revbib_core::config::ServiceConfig;
use revbib_core::domain::{RecordDraft, TaxonomyPath};
use revbib_core::Bibliography;
use sha1::{Digest, Sha1};
use tempfile::TempDir;

pub const PASSWORD: &str = "correct horse battery staple";

pub fn digest(password: &str) -> String {
    hex::encode(Sha1::digest(password.as_bytes()))
}

pub struct Fixture {
    pub dir: TempDir,
    pub clock: Arc<ManualClock>,
    pub svc: Bibliography,
}

pub fn config(scenario: u8, dir: &TempDir) -> ServiceConfig {
    let mut c = ServiceConfig::new(scenario, dir.path().join("data"));
    c.verifier_iterations = 1_000;
    c.roles.moderators = vec!["mod".into()];
    c.roles.associate_users = vec!["assoc".into()];
    c
}

pub fn fixture(scenario: u8) -> Fixture {
    fixture_with(scenario, |_| {})
}

pub fn fixture_with(scenario: u8, tweak: impl FnOnce(&mut ServiceConfig)) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(scenario, &dir);
    tweak(&mut c);
    let clock = Arc::new(ManualClock::new(
        Utc.with_ymd_and_hms(2025, 6, 1, 12, 0, 0).unwrap(),
    ));
    let svc = Bibliography::open(c, clock.clone()).unwrap();
    Fixture { dir, clock, svc }
}

impl Fixture {
    /// Registers `name` (if new) and returns a fresh token.
    pub fn user(&self, name: &str) -> String {
        let _ = self.svc.register(Registration {
            username: name.into(),
            password_digest: digest(PASSWORD),
            email: format!("{name}@example.org"),
            first_name: name.into(),
            last_name: "Tester".into(),
        });
        self.svc.login(name, &digest(PASSWORD)).unwrap().token
    }

    pub fn reopen(self) -> Fixture {
        let config = self.svc.config().clone();
        drop(self.svc);
        let svc = Bibliography::open(config, self.clock.clone()).unwrap();
        Fixture {
            dir: self.dir,
            clock: self.clock,
            svc,
        }
    }
}

pub fn networks() -> TaxonomyPath {
    TaxonomyPath::new("networks", "network-protocols")
}

pub fn draft(title: &str, year: i32) -> RecordDraft {
    draft_in(&networks(), title, year)
}

pub fn draft_in(path: &TaxonomyPath, title: &str, year: i32) -> RecordDraft {
    RecordDraft {
        field_id: path.field_id.clone(),
        subfield_id: path.subfield_id.clone(),
        title: title.into(),
        authors: vec!["A. Author".into(), "B. Author".into()],
        venue: "ACM Computing Surveys".into(),
        year,
        citation_count: Some(3),
        keywords: vec!["survey".into()],
        abstract_text: Some("A review of the field.".into()),
        doi: None,
    }
}
