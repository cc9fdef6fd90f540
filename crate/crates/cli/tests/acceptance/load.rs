use revbib_cli::simulate::{simulate_load, LoadReport, SimParams};

use crate::{ensure, ok, Check};

const RECORDS: usize = 100;
const USERS: usize = 20;
const SEED: u64 = 42;

fn run(scenario: u8) -> Result<LoadReport, String> {
    let mut p = SimParams::new(scenario, RECORDS, USERS, SEED);
    p.threshold = 10;
    ok(simulate_load(&p), &format!("simulate scenario {scenario}"))
}

pub fn load_ordering() -> Check {
    let reports: Vec<LoadReport> = (1..=6).map(run).collect::<Result<_, _>>()?;
    for r in &reports {
        ensure!(r.complete, "scenario {} left {} records undecided", r.scenario, r.unfinished_records);
        ensure!(
            r.approved + r.rejected == RECORDS as u64,
            "scenario {}: {} approved + {} rejected",
            r.scenario,
            r.approved,
            r.rejected
        );
    }
    let m = |s: usize| reports[s - 1].moderator_decision_actions;
    let u = |s: usize| reports[s - 1].user_evaluation_actions;
    let summary = (1..=6)
        .map(|s| format!("s{s}: user {} moderator {}", u(s), m(s)))
        .collect::<Vec<_>>()
        .join(", ");

    ensure!(m(1) == 0 && m(2) == 0, "moderator load without a moderator ({summary})");
    ensure!(m(5) > m(3), "moderator: s5 not above s3 ({summary})");
    ensure!(m(3) > m(6), "moderator: s3 not above s6 ({summary})");
    ensure!(m(6) > m(4), "moderator: s6 not above s4 ({summary})");

    ensure!(u(1) == 0 && u(3) == 0 && u(5) == 0, "user evaluations without U6 ({summary})");
    for s in [1, 3, 4, 5, 6] {
        ensure!(u(2) > u(s), "user: s2 not strictly above s{s} ({summary})");
    }
    ensure!(u(4) > 0 && u(6) > 0, "no user evaluations in s4/s6 ({summary})");

    // Same seed, same report.
    for s in [2, 6] {
        let again = run(s as u8)?;
        ensure!(again == reports[s - 1], "scenario {s} is not reproducible");
    }
    println!("      {summary}");
    Ok(())
}
