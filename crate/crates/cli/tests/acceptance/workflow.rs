use std::collections::BTreeSet;
use std::sync::Barrier;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use revbib_core::domain::{
    initial_status, transition, ArticleStatus, Event, RecordDraft, ScenarioConfig, TaxonomyPath,
};
use revbib_core::evaluation::EvaluationInput;
use revbib_core::service::Decision;
use revbib_core::Error;

use crate::live::{instance, serve, Instance, Served};
use crate::oracle::{self, VerdictKey};
use crate::{ensure, ok, Check};

const AREA: &str = "computing";

fn draft(title: &str) -> RecordDraft {
    RecordDraft {
        field_id: "networks".into(),
        subfield_id: "network-protocols".into(),
        title: title.into(),
        authors: vec!["E. Valuated".into()],
        venue: "Surveys".into(),
        year: 2018,
        citation_count: Some(1),
        keywords: vec![],
        abstract_text: None,
        doi: None,
    }
}

fn paths() -> [TaxonomyPath; 2] {
    [
        TaxonomyPath::new("networks", "network-protocols"),
        TaxonomyPath::new("networks", "network-services"),
    ]
}

fn to_input(v: &VerdictKey) -> EvaluationInput {
    match v {
        None => EvaluationInput::not_review(),
        Some((f, s)) => EvaluationInput::review(TaxonomyPath::new(f.clone(), s.clone())),
    }
}

fn key(p: &TaxonomyPath) -> VerdictKey {
    Some((p.field_id.clone(), p.subfield_id.clone()))
}

/// Submits a record and brings it to PendingEvaluation.
fn pending_record(inst: &Instance, submitter: &str, title: &str) -> Result<i64, String> {
    let rec = ok(inst.svc.submit_record(submitter, AREA, &draft(title), None), "submit")?;
    if rec.status == ArticleStatus::PendingModeration {
        let m = inst.user("mod");
        ok(
            inst.svc.moderator_decide(&m, AREA, rec.record_id, &Decision::OpenForEvaluation),
            "open",
        )?;
    }
    Ok(rec.record_id)
}

pub fn consensus_threshold() -> Check {
    for scenario in [2u8, 4, 6] {
        let inst = instance(scenario);
        let sub = inst.user("submitter");
        let evaluators: Vec<String> = (0..30).map(|i| inst.user(&format!("ev{i}"))).collect();
        let [right, wrong] = paths();

        // Nine agreeing evaluations, with dissent mixed in, then the tenth.
        let id = pending_record(&inst, &sub, &format!("Threshold s{scenario}"))?;
        let mut votes: Vec<EvaluationInput> = vec![EvaluationInput::review(right.clone()); 9];
        votes.insert(3, EvaluationInput::review(wrong.clone()));
        votes.insert(6, EvaluationInput::not_review());
        for (i, v) in votes.iter().enumerate() {
            let out = ok(inst.svc.submit_evaluation(&evaluators[i], AREA, id, v), "evaluate")?;
            ensure!(!out.decided, "s{scenario}: decided after {} evaluations", i + 1);
            ensure!(out.record.status == ArticleStatus::PendingEvaluation, "s{scenario}: left pending early");
        }
        let tenth = EvaluationInput::review(right.clone());
        let out = ok(inst.svc.submit_evaluation(&evaluators[votes.len()], AREA, id, &tenth), "10th")?;
        ensure!(out.decided, "s{scenario}: tenth agreeing evaluation did not decide");
        ensure!(out.record.status == ArticleStatus::Approved, "s{scenario}: status {:?}", out.record.status);
        ensure!(out.decision.supporting_count == 10, "supporting count {}", out.decision.supporting_count);

        // Ten "not a review" verdicts reject.
        let id = pending_record(&inst, &sub, &format!("Not a review s{scenario}"))?;
        for (i, ev) in evaluators.iter().take(10).enumerate() {
            let out = ok(inst.svc.submit_evaluation(ev, AREA, id, &EvaluationInput::not_review()), "evaluate")?;
            ensure!(out.decided == (i == 9), "s{scenario}: not-review decided={} at {}", out.decided, i + 1);
            if out.decided {
                ensure!(out.record.status == ArticleStatus::Rejected, "not-review consensus approved");
            }
        }
    }

    // Random vote sequences against the oracle.
    let inst = instance(2);
    let sub = inst.user("submitter");
    let evaluators: Vec<String> = (0..30).map(|i| inst.user(&format!("ev{i}"))).collect();
    let alphabet: Vec<VerdictKey> = vec![key(&paths()[0]), key(&paths()[1]), None];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..60 {
        let id = pending_record(&inst, &sub, &format!("Random votes {trial}"))?;
        let weights = [rng.random_range(1..10), rng.random_range(1..10), rng.random_range(1..4)];
        let total: u32 = weights.iter().sum();
        let mut cast: Vec<VerdictKey> = Vec::new();
        for ev in &evaluators {
            let mut pick = rng.random_range(0..total);
            let mut idx = 0;
            while pick >= weights[idx] {
                pick -= weights[idx];
                idx += 1;
            }
            let v = alphabet[idx].clone();
            cast.push(v.clone());
            let out = ok(inst.svc.submit_evaluation(ev, AREA, id, &to_input(&v)), "evaluate")?;
            let expected = oracle::consensus(&cast, 10);
            ensure!(
                out.decided == expected.is_some(),
                "trial {trial}: after {} votes decided={} oracle={expected:?}",
                cast.len(),
                out.decided
            );
            if let Some(winner) = expected {
                let n = cast.iter().filter(|c| **c == winner).count();
                ensure!(n == 10, "trial {trial}: decided on the {n}th agreeing vote");
                let status = if winner.is_some() { ArticleStatus::Approved } else { ArticleStatus::Rejected };
                ensure!(out.record.status == status, "trial {trial}: status {:?}", out.record.status);
                break;
            }
        }
    }

    race()
}

/// Concurrent "tenth" evaluations: exactly one terminal transition each.
fn race() -> Check {
    let inst = instance(2);
    let sub = inst.user("submitter");
    let evaluators: Vec<String> = (0..17).map(|i| inst.user(&format!("ev{i}"))).collect();
    let [right, wrong] = paths();
    let before = ok(inst.svc.metrics_snapshot(), "metrics")?.auto_decisions;
    for trial in 0..100 {
        let id = pending_record(&inst, &sub, &format!("Race {trial}"))?;
        for ev in &evaluators[..9] {
            ok(inst.svc.submit_evaluation(ev, AREA, id, &EvaluationInput::review(right.clone())), "seed vote")?;
        }
        let racers = &evaluators[9..];
        let barrier = Barrier::new(racers.len());
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = racers
                .iter()
                .enumerate()
                .map(|(i, ev)| {
                    let barrier = &barrier;
                    let svc = &inst.svc;
                    // Mostly agreeing racers with a dissenter or two.
                    let verdict = if i % 3 == 2 {
                        EvaluationInput::review(wrong.clone())
                    } else {
                        EvaluationInput::review(right.clone())
                    };
                    s.spawn(move || {
                        barrier.wait();
                        svc.submit_evaluation(ev, AREA, id, &verdict)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("racer")).collect()
        });
        let decided = results.iter().filter(|r| matches!(r, Ok(o) if o.decided)).count();
        ensure!(decided == 1, "trial {trial}: {decided} racers saw a decision");
        for r in &results {
            match r {
                Ok(_) | Err(Error::State(_)) => {}
                Err(e) => return Err(format!("trial {trial}: unexpected error {e}")),
            }
        }
        let store = ok(inst.svc.area_store(AREA), "store")?;
        let (record, evals) = ok(
            store.read(|tx| Ok((tx.require_record(id)?, tx.evaluations_for(id)?))),
            "read back",
        )?;
        ensure!(record.status == ArticleStatus::Approved, "trial {trial}: {:?}", record.status);
        ensure!(record.decided_at.is_some(), "trial {trial}: no decision time");
        let agreeing = evals.iter().filter(|e| e.proposed.as_ref() == Some(&right)).count();
        ensure!(agreeing == 10, "trial {trial}: {agreeing} agreeing evaluations stored");
    }
    let after = ok(inst.svc.metrics_snapshot(), "metrics")?.auto_decisions;
    ensure!(after - before == 100, "{} automatic decisions for 100 records", after - before);
    Ok(())
}

// ---- gating ----

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Supported,
    NotSupported,
    /// Supported through the associate-user role.
    Associate,
    /// Replaced by automatic marking for evaluation.
    Automatic,
}

const FUNCTIONALITIES: [&str; 10] = ["U1", "U2", "U3", "U4", "U5", "U6", "A1", "A2", "A3", "A4"];

/// Rows U1..A4, columns scenarios 1..6.
fn table(f: usize, scenario: u8) -> Cell {
    use Cell::*;
    const ROWS: [[Cell; 6]; 10] = [
        [Supported; 6],
        [Supported; 6],
        [Supported; 6],
        [Supported; 6],
        [Supported; 6],
        [NotSupported, Supported, NotSupported, Supported, NotSupported, Supported],
        [NotSupported, Automatic, Supported, Supported, Supported, Supported],
        [NotSupported, Automatic, Supported, Supported, Supported, Supported],
        [Associate, Associate, Supported, Supported, Supported, Supported],
        [Associate, Associate, Supported, Supported, Supported, Supported],
    ];
    ROWS[f][scenario as usize - 1]
}

fn expect(call: (u16, Value), status: u16, what: &str) -> Result<Value, String> {
    ensure!(call.0 == status, "{what}: HTTP {} (wanted {status}): {}", call.0, call.1);
    Ok(call.1)
}

fn expect_unsupported(call: (u16, Value), what: &str) -> Check {
    let v = expect(call, 501, what)?;
    ensure!(v["code"] == "capability_unsupported", "{what}: code {}", v["code"]);
    Ok(())
}

fn gating_scenario(scenario: u8) -> Check {
    let inst = instance(scenario);
    let svc = inst.svc.clone();
    // Fixture state prepared in-process; every checked call goes over HTTP.
    let alice = inst.user("alice");
    let moderator = inst.user("mod");
    let approved = {
        let rec = ok(svc.submit_record(&alice, AREA, &draft("Approved survey"), None), "submit")?;
        match rec.status {
            ArticleStatus::Approved => {}
            ArticleStatus::PendingModeration => {
                ok(svc.moderator_decide(&moderator, AREA, rec.record_id, &Decision::Approve { edits: None }), "approve")?;
            }
            ArticleStatus::PendingEvaluation => {
                for i in 0..10 {
                    let ev = inst.user(&format!("crowd{i}"));
                    let v = EvaluationInput::review(paths()[0].clone());
                    ok(svc.submit_evaluation(&ev, AREA, rec.record_id, &v), "crowd")?;
                }
            }
            s => return Err(format!("unexpected initial status {s:?}")),
        }
        rec.record_id
    };
    let open_for_eval = if [2, 4, 6].contains(&scenario) {
        Some(pending_record(&inst, &alice, "Awaiting evaluation")?)
    } else {
        None
    };
    let awaiting_moderator = if scenario >= 3 {
        Some(ok(svc.submit_record(&alice, AREA, &draft("Awaiting moderator"), None), "submit")?.record_id)
    } else {
        None
    };

    let http: Served = serve(inst);
    let bob = http.user("bob");
    let assoc = http.user("assoc");
    let moderator = http.user("mod");
    let privileged = if scenario <= 2 { &assoc } else { &moderator };
    let area = format!("/areas/{AREA}");
    let sub = format!("{area}/fields/networks/subfields/network-protocols");

    let (_, caps) = http.call("GET", "/capabilities", None, None);
    let entries = caps["data"]["functionalities"].as_array().cloned().unwrap_or_default();
    ensure!(entries.len() == 10, "capability matrix has {} rows", entries.len());

    for (fi, name) in FUNCTIONALITIES.iter().enumerate() {
        let cell = table(fi, scenario);
        let what = format!("s{scenario} {name}");
        let entry = entries
            .iter()
            .find(|e| e["functionality"] == *name)
            .ok_or_else(|| format!("{what}: missing from capabilities"))?;
        let supported = matches!(cell, Cell::Supported | Cell::Associate);
        ensure!(entry["supported"] == supported, "{what}: advertised {}", entry["supported"]);
        let note = entry["note"].as_str().unwrap_or("");
        match cell {
            Cell::Associate => ensure!(note.contains("Associate user"), "{what}: note {note:?}"),
            Cell::Automatic => ensure!(note.contains("automatically"), "{what}: note {note:?}"),
            _ => {}
        }

        match (*name, supported) {
            ("U1", _) => {
                let body = json!({
                    "field_id": "networks", "subfield_id": "network-protocols",
                    "title": "Submitted over HTTP", "authors": ["H. Ttp"],
                    "venue": "Surveys", "year": 2021,
                });
                let v = expect(http.call("POST", &format!("{area}/records"), Some(&bob), Some(body)), 200, &what)?;
                let want = match scenario {
                    1 => "approved",
                    2 => "pending_evaluation",
                    _ => "pending_moderation",
                };
                ensure!(v["data"]["status"] == want, "{what}: new record is {}", v["data"]["status"]);
                if scenario == 2 {
                    // Auto-pending: straight onto the evaluation list.
                    let id = v["data"]["record_id"].clone();
                    let list = expect(http.call("GET", "/pending/evaluation", Some(&bob), None), 200, &what)?;
                    let listed = list["data"].as_array().unwrap().iter().any(|r| r["record_id"] == id);
                    ensure!(listed, "{what}: new record not open for evaluation");
                }
            }
            ("U2", _) => {
                let v = expect(http.call("GET", &format!("{sub}/records"), Some(&bob), None), 200, &what)?;
                let listed = v["data"].as_array().unwrap().iter().any(|r| r["record_id"] == approved);
                ensure!(listed, "{what}: approved record not listed");
            }
            ("U3", _) => {
                let v = expect(http.call("GET", &format!("{sub}/bibliometrics"), Some(&bob), None), 200, &what)?;
                ensure!(v["data"]["paper_count"].as_u64() >= Some(1), "{what}: {v}");
            }
            ("U4", _) => {
                let rating = json!({"quality": "medium", "familiarity": "expert"});
                let path = format!("{area}/records/{approved}/rating");
                expect(http.call("PUT", &path, Some(&bob), Some(rating)), 200, &what)?;
                let v = expect(http.call("GET", &path, Some(&bob), None), 200, &what)?;
                ensure!(v["data"]["display"] == "66.67", "{what}: score {}", v["data"]["display"]);
            }
            ("U5", _) => {
                let path = format!("{area}/recommendations");
                expect(http.call("GET", &path, Some(&bob), None), 200, &what)?;
            }
            ("U6", true) => {
                let id = open_for_eval.expect("evaluation fixture");
                let body = json!({"is_review": true, "field_id": "networks", "subfield_id": "network-protocols"});
                let path = format!("{area}/records/{id}/evaluation");
                expect(http.call("PUT", &path, Some(&bob), Some(body)), 200, &what)?;
                expect(http.call("GET", "/pending/evaluation", Some(&bob), None), 200, &what)?;
            }
            ("U6", false) => {
                let body = json!({"is_review": false});
                let path = format!("{area}/records/{approved}/evaluation");
                expect_unsupported(http.call("PUT", &path, Some(&bob), Some(body)), &what)?;
                expect_unsupported(http.call("GET", "/pending/evaluation", Some(&bob), None), &what)?;
            }
            ("A1", true) => {
                let id = awaiting_moderator.expect("moderation fixture");
                let v = expect(http.call("GET", "/pending/moderation", Some(&moderator), None), 200, &what)?;
                let listed = v["data"].as_array().unwrap().iter().any(|r| r["record_id"] == id);
                ensure!(listed, "{what}: pending record not listed");
                expect(http.call("GET", &format!("{area}/records/{id}/evaluations"), Some(&moderator), None), 200, &what)?;
                expect(http.call("GET", "/pending/moderation", Some(&bob), None), 403, &what)?;
            }
            ("A1", false) => {
                expect_unsupported(http.call("GET", "/pending/moderation", Some(privileged), None), &what)?;
                let path = format!("{area}/records/{approved}/evaluations");
                expect_unsupported(http.call("GET", &path, Some(privileged), None), &what)?;
            }
            ("A2", true) => {
                let id = awaiting_moderator.expect("moderation fixture");
                let path = format!("{area}/records/{id}/decision");
                let approve = json!({"decision": "approve"});
                expect(http.call("POST", &path, Some(&bob), Some(approve.clone())), 403, &what)?;
                let open = http.call("POST", &path, Some(&moderator), Some(json!({"decision": "open_for_evaluation"})));
                if [4, 6].contains(&scenario) {
                    let v = expect(open, 200, &what)?;
                    ensure!(v["data"]["status"] == "pending_evaluation", "{what}: opened to {}", v["data"]["status"]);
                } else {
                    expect_unsupported(open, &format!("{what} open_for_evaluation"))?;
                    let v = expect(http.call("POST", &path, Some(&moderator), Some(approve)), 200, &what)?;
                    ensure!(v["data"]["status"] == "approved", "{what}: {}", v["data"]["status"]);
                }
            }
            ("A2", false) => {
                let path = format!("{area}/records/{approved}/decision");
                let body = json!({"decision": "reject"});
                expect_unsupported(http.call("POST", &path, Some(privileged), Some(body)), &what)?;
            }
            ("A3", _) => {
                let path = format!("{area}/fields/networks/subfields");
                let body = json!({"action": "add", "name": format!("Gated topic {scenario}")});
                expect(http.call("POST", &path, Some(&bob), Some(body.clone())), 403, &what)?;
                if scenario >= 3 {
                    // The associate role does not exist here; that account is a plain user.
                    expect(http.call("POST", &path, Some(&assoc), Some(body.clone())), 403, &what)?;
                }
                expect(http.call("POST", &path, Some(privileged), Some(body)), 200, &what)?;
            }
            ("A4", _) => {
                let body = json!({"name": format!("Area for scenario {scenario}"),
                                  "fields": [{"name": "Basics", "subfields": ["Intro"]}]});
                expect(http.call("POST", "/areas", Some(&bob), Some(body.clone())), 403, &what)?;
                if scenario >= 3 {
                    expect(http.call("POST", "/areas", Some(&assoc), Some(body.clone())), 403, &what)?;
                }
                expect(http.call("POST", "/areas", Some(privileged), Some(body)), 200, &what)?;
            }
            (other, s) => return Err(format!("no probe for {other} supported={s}")),
        }
    }
    Ok(())
}

pub fn gating_matrix() -> Check {
    for scenario in 1..=6 {
        gating_scenario(scenario)?;
    }
    Ok(())
}

// ---- lifecycle ----

pub fn state_machine_soundness() -> Check {
    use ArticleStatus::*;
    let mut cases = 0usize;
    for scenario in 1..=6u8 {
        for auto_decide in [true, false] {
            let config = ok(ScenarioConfig::new(scenario), "config")?.with_auto_decide(auto_decide);
            let start = initial_status(&config);
            ensure!(start == oracle::initial(scenario), "s{scenario}: initial {start:?}");

            let mut reachable = BTreeSet::from([format!("{start:?}")]);
            let mut terminal_reached_from_all = true;
            // Every event sequence of length 0..=3 from the initial state.
            let mut frontier: Vec<(ArticleStatus, Vec<Event>)> = vec![(start, vec![])];
            for _depth in 0..3 {
                let mut next_frontier = Vec::new();
                for (state, history) in &frontier {
                    for event in Event::ALL {
                        cases += 1;
                        let got = transition(*state, event, &config);
                        let want = oracle::next_status(scenario, auto_decide, *state, event);
                        match (&got, want) {
                            (Ok(g), Some(w)) if *g == w => {
                                reachable.insert(format!("{g:?}"));
                                let mut h = history.clone();
                                h.push(event);
                                next_frontier.push((*g, h));
                            }
                            (Err(Error::Transition { .. }), None) => {}
                            _ => {
                                return Err(format!(
                                    "s{scenario} auto={auto_decide} after {history:?}: {state:?} --{event:?}--> {got:?}, oracle {want:?}"
                                ))
                            }
                        }
                        if state.is_terminal() {
                            ensure!(got.is_err(), "s{scenario}: terminal {state:?} accepted {event:?}");
                        }
                    }
                    if !state.is_terminal() {
                        // Some single event must lead on; two at most reach a terminal state.
                        let ends = Event::ALL.iter().any(|e1| match transition(*state, *e1, &config) {
                            Ok(s1) if s1.is_terminal() => true,
                            Ok(s1) => Event::ALL
                                .iter()
                                .any(|e2| matches!(transition(s1, *e2, &config), Ok(s2) if s2.is_terminal())),
                            Err(_) => false,
                        });
                        terminal_reached_from_all &= ends;
                    }
                }
                frontier = next_frontier;
            }
            ensure!(terminal_reached_from_all, "s{scenario}: a non-terminal state is a dead end");

            let expected: BTreeSet<String> = match scenario {
                1 => vec![Approved],
                2 => vec![PendingEvaluation, Approved, Rejected],
                3 | 5 => vec![PendingModeration, Approved, Rejected],
                _ => vec![PendingModeration, PendingEvaluation, Approved, Rejected],
            }
            .into_iter()
            .map(|s| format!("{s:?}"))
            .collect();
            ensure!(
                reachable == expected,
                "s{scenario} auto={auto_decide}: reachable {reachable:?}, expected {expected:?}"
            );
        }
    }
    ensure!(cases > 0, "nothing enumerated");
    Ok(())
}
