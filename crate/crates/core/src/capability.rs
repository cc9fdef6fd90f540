//! Which functionalities each deployment scenario offers, and to whom.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{Role, Scenario};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Functionality {
    /// Add a new record.
    U1,
    /// List records of a sub-field.
    U2,
    /// Bibliometrics of a sub-field.
    U3,
    /// Rate a record and read its score.
    U4,
    /// Recommendations from ratings.
    U5,
    /// Evaluate pending records.
    U6,
    /// List records pending a moderator decision.
    A1,
    /// Decide on pending records, including opening them for evaluation.
    A2,
    /// Add, rename, or delete sub-fields.
    A3,
    /// Add a new area with its classification tree.
    A4,
}

impl Functionality {
    pub const ALL: [Functionality; 10] = [
        Functionality::U1,
        Functionality::U2,
        Functionality::U3,
        Functionality::U4,
        Functionality::U5,
        Functionality::U6,
        Functionality::A1,
        Functionality::A2,
        Functionality::A3,
        Functionality::A4,
    ];

    pub fn description(self) -> &'static str {
        match self {
            Functionality::U1 => "add bibliographic information of a review article",
            Functionality::U2 => "list review articles in a sub-field",
            Functionality::U3 => "bibliometrics of a sub-field",
            Functionality::U4 => "rate an article and retrieve its overall score",
            Functionality::U5 => "recommended articles based on the user's ratings",
            Functionality::U6 => "evaluate articles open for evaluation",
            Functionality::A1 => "list articles pending a decision",
            Functionality::A2 => "approve, reject, or open articles for evaluation",
            Functionality::A3 => "add, modify, or delete sub-fields",
            Functionality::A4 => "add a science and technology area",
        }
    }

    pub fn supported_in(self, scenario: Scenario) -> bool {
        match self {
            Functionality::U1
            | Functionality::U2
            | Functionality::U3
            | Functionality::U4
            | Functionality::U5
            | Functionality::A3
            | Functionality::A4 => true,
            Functionality::U6 => scenario.has_social_evaluation(),
            Functionality::A1 | Functionality::A2 => scenario.has_moderator(),
        }
    }

    /// Role the caller must hold, beyond being authenticated.
    pub fn required_role(self, scenario: Scenario) -> Option<Role> {
        match self {
            Functionality::A1 | Functionality::A2 => Some(Role::Moderator),
            Functionality::A3 | Functionality::A4 => Some(privileged_role(scenario)),
            _ => None,
        }
    }

    fn note(self, scenario: Scenario) -> Option<&'static str> {
        match (self, scenario.number()) {
            (Functionality::A1 | Functionality::A2, 2) => Some(
                "submitted articles are automatically marked un-approved and open for evaluation by users",
            ),
            (Functionality::A3 | Functionality::A4, 1 | 2) => {
                Some("additional role for Associate user")
            }
            (Functionality::A2, 3 | 5) => {
                Some("approve and reject only; opening for evaluation is not offered")
            }
            _ => None,
        }
    }

    /// Fails with a capability error when `scenario` lacks this functionality.
    pub fn ensure(self, scenario: Scenario) -> Result<()> {
        if self.supported_in(scenario) {
            Ok(())
        } else {
            Err(Error::Capability {
                scenario: scenario.number(),
                functionality: self.to_string(),
            })
        }
    }
}

impl fmt::Display for Functionality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The role that manages taxonomies and sees load metrics.
pub fn privileged_role(scenario: Scenario) -> Role {
    if scenario.has_moderator() {
        Role::Moderator
    } else {
        Role::AssociateUser
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityEntry {
    pub functionality: Functionality,
    pub description: String,
    pub supported: bool,
    pub required_role: Option<Role>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub method: String,
    pub path: String,
    pub functionality: Option<Functionality>,
    pub authenticated: bool,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityMatrix {
    pub scenario: Scenario,
    pub environment: crate::domain::Environment,
    pub consensus_threshold: u32,
    pub auto_decide: bool,
    pub functionalities: Vec<CapabilityEntry>,
    pub endpoints: Vec<Endpoint>,
}

impl CapabilityMatrix {
    pub fn for_config(config: &crate::domain::ScenarioConfig) -> Self {
        let scenario = config.scenario;
        CapabilityMatrix {
            scenario,
            environment: scenario.environment(),
            consensus_threshold: config.consensus_threshold,
            auto_decide: config.consensus_is_automatic(),
            functionalities: Functionality::ALL
                .into_iter()
                .map(|f| CapabilityEntry {
                    functionality: f,
                    description: f.description().to_string(),
                    supported: f.supported_in(scenario),
                    required_role: f.required_role(scenario),
                    note: f.note(scenario).map(str::to_string),
                })
                .collect(),
            endpoints: endpoint_catalog()
                .into_iter()
                .filter(|e| e.functionality.is_none_or(|f| f.supported_in(scenario)))
                .collect(),
        }
    }

    pub fn supports(&self, f: Functionality) -> bool {
        self.functionalities
            .iter()
            .any(|e| e.functionality == f && e.supported)
    }
}

pub const API_PREFIX: &str = "/api/v1";

/// Every HTTP endpoint of the service, whether or not the running scenario
/// enables it.
pub fn endpoint_catalog() -> Vec<Endpoint> {
    use Functionality::*;
    let e = |method: &str, path: &str, f: Option<Functionality>, auth: bool, summary: &str| Endpoint {
        method: method.to_string(),
        path: format!("{API_PREFIX}{path}"),
        functionality: f,
        authenticated: auth,
        summary: summary.to_string(),
    };
    vec![
        e("GET", "/capabilities", None, false, "scenario capability matrix and this catalog"),
        e("POST", "/auth/register", None, false, "create a user profile"),
        e("POST", "/auth/login", None, false, "exchange credentials for a token"),
        e("GET", "/profile", None, true, "the caller's profile"),
        e("PATCH", "/profile", None, true, "change password digest, email, or preferences"),
        e("POST", "/roles", None, true, "grant a role to a user"),
        e("GET", "/search", None, false, "keyword search over approved articles"),
        e("GET", "/metrics", None, true, "load counters"),
        e("GET", "/areas", None, true, "hosted areas"),
        e("POST", "/areas", Some(A4), true, "add an area with its classification tree"),
        e("GET", "/areas/{area}/taxonomy", None, true, "classification tree of an area"),
        e("POST", "/areas/{area}/fields/{field}/subfields", Some(A3), true, "add, rename, or delete a sub-field"),
        e("POST", "/areas/{area}/records", Some(U1), true, "submit a record"),
        e("GET", "/areas/{area}/records/{record}", None, true, "one record with its score"),
        e("GET", "/areas/{area}/fields/{field}/subfields/{subfield}/records", Some(U2), true, "approved records of a sub-field"),
        e("GET", "/areas/{area}/fields/{field}/subfields/{subfield}/bibliometrics", Some(U3), true, "sub-field bibliometrics"),
        e("POST", "/areas/{area}/bibliometrics/refresh", Some(U3), true, "recompute all cached bibliometrics"),
        e("PUT", "/areas/{area}/records/{record}/rating", Some(U4), true, "rate a record"),
        e("GET", "/areas/{area}/records/{record}/rating", Some(U4), true, "overall score of a record"),
        e("GET", "/areas/{area}/recommendations", Some(U5), true, "recommended records"),
        e("PUT", "/areas/{area}/records/{record}/evaluation", Some(U6), true, "evaluate a pending record"),
        e("GET", "/pending/evaluation", Some(U6), true, "records open for evaluation"),
        e("GET", "/pending/moderation", Some(A1), true, "records awaiting a moderator"),
        e("GET", "/areas/{area}/records/{record}/evaluations", Some(A1), true, "evaluation tally of a record"),
        e("POST", "/areas/{area}/records/{record}/decision", Some(A2), true, "approve, reject, or open for evaluation"),
    ]
}
