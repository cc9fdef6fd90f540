//! Credentials, verifiers, and tokens.
//!
//! Clients never send a password: they send the lowercase hex SHA-1 of it.
//! The server treats that digest as the secret and stores only a salted
//! PBKDF2-HMAC-SHA256 verifier of it. Tokens are random 256-bit values;
//! only their SHA-256 is persisted.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Role, UserId};
use crate::error::{Error, Result};

pub const DIGEST_HEX_LEN: usize = 40;
pub const DEFAULT_VERIFIER_ITERATIONS: u32 = 100_000;
const SALT_LEN: usize = 16;
const VERIFIER_LEN: usize = 32;
const VERIFIER_SCHEME: &str = "pbkdf2-sha256";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub username: String,
    pub first_name: String,
    pub last_name: String,
    pub email: String,
    #[serde(skip)]
    pub password_verifier: String,
    pub role: Role,
    pub created_at: DateTime<Utc>,
    pub preferences: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthToken {
    pub token: String,
    pub user_id: UserId,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registration {
    pub username: String,
    pub password_digest: String,
    pub email: String,
    #[serde(default)]
    pub first_name: String,
    #[serde(default)]
    pub last_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileChanges {
    #[serde(default)]
    pub password_digest: Option<String>,
    #[serde(default)]
    pub email: Option<String>,
    /// Merged into the existing map; an empty value removes the key.
    #[serde(default)]
    pub preferences: Option<BTreeMap<String, String>>,
}

/// Lowercase hex SHA-1, exactly 40 characters.
pub fn validate_digest(digest: &str) -> Result<()> {
    let ok = digest.len() == DIGEST_HEX_LEN
        && digest.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
    if ok {
        Ok(())
    } else {
        Err(Error::validation(
            "password_digest must be 40 lowercase hexadecimal characters",
        ))
    }
}

pub fn validate_email(email: &str) -> Result<()> {
    let bad = || Error::validation(format!("invalid email address {email:?}"));
    if email.chars().any(char::is_whitespace) {
        return Err(bad());
    }
    let (local, domain) = email.split_once('@').ok_or_else(bad)?;
    let domain_ok = !domain.contains('@')
        && domain.contains('.')
        && domain.split('.').all(|label| !label.is_empty());
    if local.is_empty() || !domain_ok {
        return Err(bad());
    }
    Ok(())
}

pub fn validate_username(username: &str) -> Result<()> {
    if username.trim().is_empty() || username.trim() != username {
        return Err(Error::validation(
            "username must be non-empty without surrounding whitespace",
        ));
    }
    Ok(())
}

fn derive(digest: &str, salt: &[u8], iterations: u32) -> [u8; VERIFIER_LEN] {
    let mut out = [0u8; VERIFIER_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(digest.as_bytes(), salt, iterations, &mut out);
    out
}

/// Encodes as `pbkdf2-sha256$<iterations>$<salt hex>$<hash hex>`.
pub fn make_verifier(digest: &str, iterations: u32) -> String {
    let mut salt = [0u8; SALT_LEN];
    rand::rng().fill_bytes(&mut salt);
    let hash = derive(digest, &salt, iterations);
    format!(
        "{VERIFIER_SCHEME}${iterations}${}${}",
        hex::encode(salt),
        hex::encode(hash)
    )
}

pub fn check_verifier(digest: &str, verifier: &str) -> bool {
    let mut parts = verifier.split('$');
    let (Some(VERIFIER_SCHEME), Some(iter), Some(salt), Some(hash), None) = (
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
    ) else {
        return false;
    };
    let (Ok(iterations), Ok(salt), Ok(expected)) =
        (iter.parse::<u32>(), hex::decode(salt), hex::decode(hash))
    else {
        return false;
    };
    let actual = derive(digest, &salt, iterations);
    constant_time_eq(&actual, &expected)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// 64 hex characters from the thread-local CSPRNG.
pub fn new_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

pub fn token_fingerprint(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}
