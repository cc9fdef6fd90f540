//! Seeded synthetic workload that drives the service in-process and counts
//! the evaluation and moderation work each scenario demands.
//!
//! Every record gets its own ChaCha stream (`seed`, stream = record index),
//! so a record's fate does not depend on how many draws earlier records
//! consumed. Work runs in a fixed logical order on a fresh data directory
//! with a frozen clock.

use std::fmt;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use revbib_core::auth::Registration;
use revbib_core::clock::ManualClock;
use revbib_core::config::ServiceConfig;
use revbib_core::domain::{ArticleStatus, Environment, RecordDraft, RecordEdits, TaxonomyPath};
use revbib_core::evaluation::EvaluationInput;
use revbib_core::service::Decision;
use revbib_core::{Bibliography, Result};

pub const BUCKET_HEADER: &str =
    "load buckets by actions per record: < 0.2 low, < 1.0 medium, >= 1.0 high";

const AREA: &str = "computing";
const MODERATOR: &str = "sim-moderator";
/// Not a real secret; synthetic accounts only.
const SIM_DIGEST: &str = "0123456789abcdef0123456789abcdef01234567";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Low,
    Medium,
    High,
}

impl Bucket {
    pub fn of(actions: u64, records: usize) -> Bucket {
        let per_record = if records == 0 { 0.0 } else { actions as f64 / records as f64 };
        if per_record < 0.2 {
            Bucket::Low
        } else if per_record < 1.0 {
            Bucket::Medium
        } else {
            Bucket::High
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::Low => "low",
            Bucket::Medium => "medium",
            Bucket::High => "high",
        })
    }
}

/// Behavior of the synthetic population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    /// Submissions that are not review articles at all.
    pub non_review_rate: f64,
    /// Submissions filed under the wrong sub-field, by environment.
    pub misclassified_private: f64,
    pub misclassified_public: f64,
    /// Records a moderator hands to evaluators when evaluation exists.
    pub difficult_rate: f64,
    /// Chance an evaluator gives the correct verdict.
    pub agreement_prob: f64,
}

impl Default for UserModel {
    fn default() -> Self {
        UserModel {
            non_review_rate: 0.1,
            misclassified_private: 0.1,
            misclassified_public: 0.4,
            difficult_rate: 0.4,
            agreement_prob: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub scenario: u8,
    pub n_records: usize,
    pub n_users: usize,
    pub seed: u64,
    pub threshold: u32,
    pub model: UserModel,
}

impl SimParams {
    pub fn new(scenario: u8, n_records: usize, n_users: usize, seed: u64) -> Self {
        SimParams {
            scenario,
            n_records,
            n_users,
            seed,
            threshold: 10,
            model: UserModel::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleTotals {
    pub actions: u64,
    pub per_record: f64,
    pub bucket: Bucket,
}

impl RoleTotals {
    fn new(actions: u64, records: usize) -> Self {
        RoleTotals {
            actions,
            per_record: if records == 0 { 0.0 } else { actions as f64 / records as f64 },
            bucket: Bucket::of(actions, records),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub bucket_cutoffs: String,
    pub scenario: u8,
    pub n_records: usize,
    pub n_users: usize,
    pub seed: u64,
    pub threshold: u32,
    /// Evaluations submitted by users.
    pub user_evaluation_actions: u64,
    /// Approvals and rejections, plus one per corrective edit.
    pub moderator_decision_actions: u64,
    /// Records a moderator opened for evaluation; not decisions.
    pub moderator_triage_actions: u64,
    pub user: RoleTotals,
    pub moderator: RoleTotals,
    pub approved: u64,
    pub rejected: u64,
    /// False when some record ran out of evaluators before a decision.
    pub complete: bool,
    pub unfinished_records: u64,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.bucket_cutoffs)?;
        writeln!(
            f,
            "scenario {}  records {}  users {}  seed {}  threshold {}",
            self.scenario, self.n_records, self.n_users, self.seed, self.threshold
        )?;
        writeln!(
            f,
            "user       evaluations {:>5}  per record {:>6.2}  {}",
            self.user.actions, self.user.per_record, self.user.bucket
        )?;
        writeln!(
            f,
            "moderator  decisions   {:>5}  per record {:>6.2}  {}  (opened for evaluation: {})",
            self.moderator.actions,
            self.moderator.per_record,
            self.moderator.bucket,
            self.moderator_triage_actions
        )?;
        write!(f, "approved {}  rejected {}", self.approved, self.rejected)?;
        if !self.complete {
            write!(f, "\nINCOMPLETE: {} records undecided", self.unfinished_records)?;
        }
        Ok(())
    }
}

fn register(svc: &Bibliography, username: &str) -> Result<String> {
    svc.register(Registration {
        username: username.into(),
        password_digest: SIM_DIGEST.into(),
        email: format!("{username}@sim.invalid"),
        first_name: "Sim".into(),
        last_name: username.into(),
    })?;
    Ok(svc.login(username, SIM_DIGEST)?.token)
}

/// What an evaluator of a record should say.
fn correct_verdict(is_review: bool, truth: &TaxonomyPath) -> EvaluationInput {
    if is_review {
        EvaluationInput::review(truth.clone())
    } else {
        EvaluationInput::not_review()
    }
}

fn wrong_verdict(
    rng: &mut ChaCha8Rng,
    correct: &EvaluationInput,
    paths: &[TaxonomyPath],
) -> EvaluationInput {
    loop {
        let candidate = if rng.random_bool(0.5) {
            EvaluationInput::not_review()
        } else {
            EvaluationInput::review(paths.choose(rng).expect("taxonomy has paths").clone())
        };
        if candidate != *correct {
            return candidate;
        }
    }
}

/// Runs the workload on a throwaway data directory.
pub fn simulate_load(params: &SimParams) -> Result<LoadReport> {
    let dir = tempfile::tempdir()?;
    let mut config = ServiceConfig::new(params.scenario, dir.path().join("data"));
    config.consensus_threshold = params.threshold;
    config.auto_decide = true;
    config.verifier_iterations = 1_000;
    config.roles.moderators = vec![MODERATOR.into()];
    let clock = Arc::new(ManualClock::new(
        Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
    ));
    let svc = Bibliography::open(config, clock)?;
    let scenario = svc.scenario().clone();
    let moderated = scenario.scenario.has_moderator();
    let social = scenario.scenario.has_social_evaluation();
    let misclassified_rate = match scenario.environment() {
        Environment::Private => params.model.misclassified_private,
        Environment::Public => params.model.misclassified_public,
    };

    let users: Vec<String> = (0..params.n_users)
        .map(|i| register(&svc, &format!("sim-user-{i:03}")))
        .collect::<Result<_>>()?;
    let moderator = if moderated { Some(register(&svc, MODERATOR)?) } else { None };
    let paths = svc.taxonomy(&users[0], AREA)?.paths();

    let mut report = LoadReport {
        bucket_cutoffs: BUCKET_HEADER.into(),
        scenario: params.scenario,
        n_records: params.n_records,
        n_users: params.n_users,
        seed: params.seed,
        threshold: params.threshold,
        user_evaluation_actions: 0,
        moderator_decision_actions: 0,
        moderator_triage_actions: 0,
        user: RoleTotals::new(0, params.n_records),
        moderator: RoleTotals::new(0, params.n_records),
        approved: 0,
        rejected: 0,
        complete: true,
        unfinished_records: 0,
    };

    for i in 0..params.n_records {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(i as u64);

        let submitter = rng.random_range(0..users.len());
        let truth = paths.choose(&mut rng).expect("taxonomy has paths").clone();
        let is_review = !rng.random_bool(params.model.non_review_rate);
        let misclassified = rng.random_bool(misclassified_rate);
        let difficult = rng.random_bool(params.model.difficult_rate);
        let filed = if misclassified {
            let others: Vec<_> = paths.iter().filter(|p| **p != truth).collect();
            (*others.choose(&mut rng).expect("at least two paths")).clone()
        } else {
            truth.clone()
        };

        let draft = RecordDraft {
            field_id: filed.field_id.clone(),
            subfield_id: filed.subfield_id.clone(),
            title: format!("Synthetic article {i:05}"),
            authors: vec![format!("Author {submitter}")],
            venue: "Synthetic Surveys".into(),
            year: 2000 + (i % 25) as i32,
            citation_count: Some(rng.random_range(0..500)),
            keywords: vec![],
            abstract_text: None,
            doi: None,
        };
        let mut record = svc.submit_record(&users[submitter], AREA, &draft, None)?;

        if record.status == ArticleStatus::PendingModeration {
            let token = moderator.as_deref().expect("moderated scenario");
            let decision = if social && difficult {
                report.moderator_triage_actions += 1;
                Decision::OpenForEvaluation
            } else if !is_review {
                report.moderator_decision_actions += 1;
                Decision::Reject { reason: Some("not a review article".into()) }
            } else if misclassified {
                report.moderator_decision_actions += 2;
                Decision::Approve {
                    edits: Some(RecordEdits {
                        field_id: Some(truth.field_id.clone()),
                        subfield_id: Some(truth.subfield_id.clone()),
                        ..RecordEdits::default()
                    }),
                }
            } else {
                report.moderator_decision_actions += 1;
                Decision::Approve { edits: None }
            };
            record = svc.moderator_decide(token, AREA, record.record_id, &decision)?;
        }

        if record.status == ArticleStatus::PendingEvaluation {
            let correct = correct_verdict(is_review, &truth);
            let mut evaluators: Vec<usize> = (0..users.len()).filter(|&u| u != submitter).collect();
            evaluators.shuffle(&mut rng);
            for u in evaluators {
                let verdict = if rng.random_bool(params.model.agreement_prob) {
                    correct.clone()
                } else {
                    wrong_verdict(&mut rng, &correct, &paths)
                };
                let outcome = svc.submit_evaluation(&users[u], AREA, record.record_id, &verdict)?;
                report.user_evaluation_actions += 1;
                record = outcome.record;
                if outcome.decided {
                    break;
                }
            }
        }

        match record.status {
            ArticleStatus::Approved => report.approved += 1,
            ArticleStatus::Rejected => report.rejected += 1,
            _ => report.unfinished_records += 1,
        }
    }

    report.complete = report.unfinished_records == 0;
    report.user = RoleTotals::new(report.user_evaluation_actions, params.n_records);
    report.moderator = RoleTotals::new(report.moderator_decision_actions, params.n_records);
    Ok(report)
}
