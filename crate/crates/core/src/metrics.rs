use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::domain::Role;

#[derive(Debug, Default)]
struct RoleCounters {
    submissions: AtomicU64,
    evaluations: AtomicU64,
    decisions: AtomicU64,
}

/// Process-lifetime action counters. Only ever incremented.
#[derive(Debug, Default)]
pub struct LoadMetrics {
    submissions: AtomicU64,
    moderator_decisions: AtomicU64,
    corrective_edits: AtomicU64,
    evaluations_submitted: AtomicU64,
    auto_decisions: AtomicU64,
    by_role: [RoleCounters; 3],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleLoad {
    pub submissions: u64,
    pub evaluations: u64,
    pub decisions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSnapshot {
    pub submissions: u64,
    pub moderator_decisions: u64,
    /// Decisions that approved an edited record.
    pub corrective_edits: u64,
    pub evaluations_submitted: u64,
    pub auto_decisions: u64,
    pub user: RoleLoad,
    pub associate_user: RoleLoad,
    pub moderator: RoleLoad,
    pub pending_moderation: u64,
    pub pending_evaluation: u64,
}

fn slot(role: Role) -> usize {
    match role {
        Role::User => 0,
        Role::AssociateUser => 1,
        Role::Moderator => 2,
    }
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

impl LoadMetrics {
    pub fn submission(&self, role: Role) {
        bump(&self.submissions);
        bump(&self.by_role[slot(role)].submissions);
    }

    pub fn evaluation(&self, role: Role) {
        bump(&self.evaluations_submitted);
        bump(&self.by_role[slot(role)].evaluations);
    }

    pub fn moderator_decision(&self, role: Role, edited: bool) {
        bump(&self.moderator_decisions);
        if edited {
            bump(&self.corrective_edits);
        }
        bump(&self.by_role[slot(role)].decisions);
    }

    pub fn auto_decision(&self) {
        bump(&self.auto_decisions);
    }

    pub fn snapshot(&self, pending_moderation: u64, pending_evaluation: u64) -> LoadSnapshot {
        let role = |r: Role| {
            let c = &self.by_role[slot(r)];
            RoleLoad {
                submissions: c.submissions.load(Ordering::Relaxed),
                evaluations: c.evaluations.load(Ordering::Relaxed),
                decisions: c.decisions.load(Ordering::Relaxed),
            }
        };
        LoadSnapshot {
            submissions: self.submissions.load(Ordering::Relaxed),
            moderator_decisions: self.moderator_decisions.load(Ordering::Relaxed),
            corrective_edits: self.corrective_edits.load(Ordering::Relaxed),
            evaluations_submitted: self.evaluations_submitted.load(Ordering::Relaxed),
            auto_decisions: self.auto_decisions.load(Ordering::Relaxed),
            user: role(Role::User),
            associate_user: role(Role::AssociateUser),
            moderator: role(Role::Moderator),
            pending_moderation,
            pending_evaluation,
        }
    }
}
