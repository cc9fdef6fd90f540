//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time budget.

mod auth;
mod live;
mod load;
mod oracle;
mod workflow;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

pub type Check = Result<(), String>;

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    }};
}

/// Turns any displayable error into a criterion failure.
pub fn ok<T, E: std::fmt::Display>(r: Result<T, E>, what: &str) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria = [
        Criterion { name: "rating formula exactness", budget: secs(5), run: scoring::rating_formula_exactness },
        Criterion { name: "score bounds", budget: None, run: scoring::score_bounds },
        Criterion { name: "consensus threshold", budget: secs(30), run: workflow::consensus_threshold },
        Criterion { name: "gating matrix", budget: secs(30), run: workflow::gating_matrix },
        Criterion { name: "state-machine soundness", budget: secs(5), run: workflow::state_machine_soundness },
        Criterion { name: "bibliometrics coherence", budget: secs(10), run: data::bibliometrics_coherence },
        Criterion { name: "recommender oracle equivalence", budget: secs(30), run: data::recommender_oracle },
        Criterion { name: "load ordering", budget: secs(60), run: load::load_ordering },
        Criterion { name: "persistence round-trip and crash consistency", budget: secs(60), run: data::persistence },
        Criterion { name: "auth contract", budget: None, run: auth::auth_contract },
    ];

    let mut failed = 0;
    let mut ran = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(()), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(()) => println!("PASS  {}  ({elapsed:.2?})", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}  ({elapsed:.2?}): {why}", c.name);
            }
        }
    }
    println!("\nacceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
