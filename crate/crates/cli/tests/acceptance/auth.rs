use std::fs;
use std::path::{Path, PathBuf};

use chrono::Duration;
use serde_json::{json, Value};

use revbib_cli::client::password_digest;
use revbib_core::capability::{endpoint_catalog, API_PREFIX};

use crate::live::{instance, serve, Served, PASSWORD};
use crate::{ensure, Check};

fn concrete(path: &str) -> String {
    path.strip_prefix(API_PREFIX)
        .unwrap_or(path)
        .replace("{area}", "computing")
        .replace("{field}", "networks")
        .replace("{subfield}", "network-protocols")
        .replace("{record}", "1")
        .replace("{kind}", "moderation")
}

/// Every authenticated endpoint must answer 401 with the given token.
fn sweep(s: &Served, token: Option<&str>, label: &str) -> Check {
    for e in endpoint_catalog().into_iter().filter(|e| e.authenticated) {
        let path = concrete(&e.path);
        let body = (e.method != "GET").then(|| json!({}));
        let (status, v) = s.call(&e.method, &path, token, body);
        ensure!(
            status == 401 && v["code"] == "unauthorized",
            "{label}: {} {path} answered {status} {v}",
            e.method
        );
    }
    Ok(())
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) {
    if let Ok(entries) = fs::read_dir(dir) {
        for entry in entries.flatten() {
            let p = entry.path();
            if p.is_dir() {
                files_under(&p, out);
            } else {
                out.push(p);
            }
        }
    }
}

fn holds(haystack: &[u8], needle: &str) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle.as_bytes())
}

fn registration(name: &str, digest: &str) -> Value {
    json!({
        "username": name,
        "password_digest": digest,
        "email": format!("{name}@example.org"),
        "first_name": name,
        "last_name": "Acceptance",
    })
}

fn bad_digests() -> Vec<String> {
    let good = password_digest(PASSWORD);
    vec![
        "not a digest at all".to_string(),
        good.to_uppercase(),
        good[..39].to_string(),
        format!("{good}0"),
        format!("{}g", &good[..39]),
        String::new(),
    ]
}

fn scenario(n: u8) -> Check {
    let s = serve(instance(n));
    let ttl = s.inst.svc.config().token_ttl_secs as i64;

    sweep(&s, None, "no token")?;
    sweep(&s, Some("deadbeef"), "bogus token")?;
    sweep(&s, Some(&"0".repeat(64)), "well-formed unknown token")?;

    // Expiry.
    let token = s.user("expiring");
    let (status, _) = s.call("GET", "/profile", Some(&token), None);
    ensure!(status == 200, "fresh token rejected ({status})");
    s.inst.clock.advance(Duration::seconds(ttl - 1));
    let (status, _) = s.call("GET", "/profile", Some(&token), None);
    ensure!(status == 200, "token rejected before its lifetime ended ({status})");
    s.inst.clock.advance(Duration::seconds(2));
    sweep(&s, Some(&token), "expired token")?;

    // Revocation on password change: the session that changed it survives,
    // every other one dies.
    let first = s.user("changer");
    let second = s.user("changer");
    ensure!(first != second, "two logins returned the same token");
    let new_digest = password_digest("a different secret phrase");
    let (status, v) = s.call("PATCH", "/profile", Some(&second), Some(json!({"password_digest": new_digest})));
    ensure!(status == 200, "password change failed: {status} {v}");
    sweep(&s, Some(&first), "token revoked by password change")?;
    let (status, _) = s.call("GET", "/profile", Some(&second), None);
    ensure!(status == 200, "changing session lost its token ({status})");
    let (status, _) = s.call(
        "POST",
        "/auth/login",
        None,
        Some(json!({"username": "changer", "password_digest": password_digest(PASSWORD)})),
    );
    ensure!(status == 401, "old password still logs in ({status})");
    let (status, _) = s.call(
        "POST",
        "/auth/login",
        None,
        Some(json!({"username": "changer", "password_digest": new_digest})),
    );
    ensure!(status == 200, "new password refused ({status})");

    // Digest format at every entry point.
    for (i, bad) in bad_digests().iter().enumerate() {
        let (status, v) = s.call("POST", "/auth/register", None, Some(registration(&format!("fmt{i}"), bad)));
        ensure!(status == 400 && v["code"] == "validation", "register with {bad:?}: {status} {v}");
        let (status, v) = s.call(
            "POST",
            "/auth/login",
            None,
            Some(json!({"username": "expiring", "password_digest": bad})),
        );
        ensure!(status == 400 && v["code"] == "validation", "login with {bad:?}: {status} {v}");
        let (status, v) = s.call("PATCH", "/profile", Some(&second), Some(json!({"password_digest": bad})));
        ensure!(status == 400 && v["code"] == "validation", "profile with {bad:?}: {status} {v}");
    }

    // Some real traffic so the stores hold more than accounts.
    let (status, v) = s.call(
        "POST",
        "/areas/computing/records",
        Some(&second),
        Some(json!({
            "field_id": "networks",
            "subfield_id": "network-protocols",
            "title": "Secrets survey",
            "authors": ["A. Writer"],
            "venue": "Surveys",
            "year": 2020,
        })),
    );
    ensure!(status == 200, "submit: {status} {v}");

    let export = s.inst.dir.path().join("export");
    s.inst.svc.export(&export).map_err(|e| e.to_string())?;

    // The cleartext never travels; the digest travels only client to server.
    let transcript = s.transcript.borrow();
    for (i, line) in transcript.iter().enumerate() {
        ensure!(!line.contains(PASSWORD), "cleartext password in transcript line {i}");
        let response = i % 2 == 1;
        ensure!(
            !(response && line.contains(&password_digest(PASSWORD))),
            "digest echoed in response {i}"
        );
    }
    // Nothing on disk holds the password, its digest, or a live token.
    let mut files = Vec::new();
    files_under(s.inst.dir.path(), &mut files);
    ensure!(files.len() > 3, "only {} files to scan", files.len());
    let secrets = [PASSWORD.to_string(), password_digest(PASSWORD), new_digest.clone(), second.clone()];
    for f in &files {
        let bytes = fs::read(f).map_err(|e| e.to_string())?;
        for secret in &secrets {
            ensure!(!holds(&bytes, secret), "{} holds a secret", f.display());
        }
    }
    Ok(())
}

pub fn auth_contract() -> Check {
    for n in 1..=6 {
        scenario(n).map_err(|e| format!("scenario {n}: {e}"))?;
    }
    Ok(())
}
