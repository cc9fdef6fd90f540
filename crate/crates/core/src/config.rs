//! Service configuration file (TOML).
//!
//! ```toml
//! scenario = 4
//! consensus_threshold = 10
//! auto_decide = true
//! data_dir = "data"
//! bind = "127.0.0.1:8080"
//! token_ttl_secs = 86400
//! areas = ["computing"]
//!
//! [roles]
//! moderators = ["alice"]
//! associate_users = []
//!
//! [seeds]
//! physics = "seeds/physics.toml"
//! ```
//!
//! `REVBIB_BIND` and `REVBIB_DATA_DIR` override `bind` and `data_dir`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::auth::DEFAULT_VERIFIER_ITERATIONS;
use crate::domain::{Role, ScenarioConfig, DEFAULT_CONSENSUS_THRESHOLD};
use crate::error::{Error, Result};
use crate::recommender::CfParams;

pub const ENV_BIND: &str = "REVBIB_BIND";
pub const ENV_DATA_DIR: &str = "REVBIB_DATA_DIR";
pub const DEFAULT_TOKEN_TTL_SECS: u64 = 24 * 60 * 60;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleBootstrap {
    #[serde(default)]
    pub moderators: Vec<String>,
    #[serde(default)]
    pub associate_users: Vec<String>,
}

impl RoleBootstrap {
    pub fn role_for(&self, username: &str) -> Option<Role> {
        if self.moderators.iter().any(|u| u == username) {
            Some(Role::Moderator)
        } else if self.associate_users.iter().any(|u| u == username) {
            Some(Role::AssociateUser)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub scenario: u8,
    #[serde(default = "default_threshold")]
    pub consensus_threshold: u32,
    #[serde(default = "default_true")]
    pub auto_decide: bool,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_ttl")]
    pub token_ttl_secs: u64,
    #[serde(default = "default_iterations")]
    pub verifier_iterations: u32,
    /// Areas created at first boot if their store does not exist yet.
    #[serde(default = "default_areas")]
    pub areas: Vec<String>,
    /// Seed file per area id; `computing` has a built-in seed.
    #[serde(default)]
    pub seeds: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub roles: RoleBootstrap,
    #[serde(default)]
    pub recommender: CfParams,
}

fn default_threshold() -> u32 {
    DEFAULT_CONSENSUS_THRESHOLD
}
fn default_true() -> bool {
    true
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}
fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_ttl() -> u64 {
    DEFAULT_TOKEN_TTL_SECS
}
fn default_iterations() -> u32 {
    DEFAULT_VERIFIER_ITERATIONS
}
fn default_areas() -> Vec<String> {
    vec!["computing".into()]
}

impl ServiceConfig {
    pub fn new(scenario: u8, data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            scenario,
            consensus_threshold: default_threshold(),
            auto_decide: true,
            data_dir: data_dir.into(),
            bind: default_bind(),
            token_ttl_secs: default_ttl(),
            verifier_iterations: default_iterations(),
            areas: default_areas(),
            seeds: BTreeMap::new(),
            roles: RoleBootstrap::default(),
            recommender: CfParams::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ServiceConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.scenario_config()?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`, applies environment overrides, and resolves relative
    /// paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.data_dir.is_relative() {
            config.data_dir = base.join(&config.data_dir);
        }
        for seed in config.seeds.values_mut() {
            if seed.is_relative() {
                *seed = base.join(&*seed);
            }
        }
        config.apply_env();
        Ok(config)
    }

    pub fn apply_env(&mut self) {
        if let Ok(bind) = std::env::var(ENV_BIND) {
            self.bind = bind;
        }
        if let Ok(dir) = std::env::var(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_ttl_secs == 0 {
            return Err(Error::Config("token_ttl_secs must be positive".into()));
        }
        if self.verifier_iterations == 0 {
            return Err(Error::Config("verifier_iterations must be positive".into()));
        }
        if self.recommender.neighbors == 0 {
            return Err(Error::Config("recommender.neighbors must be positive".into()));
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let mut sc = ScenarioConfig::new(self.scenario)?
            .with_threshold(self.consensus_threshold)?
            .with_auto_decide(self.auto_decide);
        sc.areas = self.areas.clone();
        Ok(sc)
    }
}
