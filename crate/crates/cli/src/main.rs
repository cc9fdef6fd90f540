use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use reqwest::Method;
use serde::Serialize;
use serde_json::{json, Value};

use revbib_cli::client::{Client, ClientError, DEFAULT_SERVER};
use revbib_cli::import::import_batch;
use revbib_cli::simulate::{simulate_load, SimParams, BUCKET_HEADER};
use revbib_core::clock::SystemClock;
use revbib_core::config::ServiceConfig;
use revbib_core::{Bibliography, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "revbib", version, about = "Collaborative bibliography of review articles")]
struct Cli {
    /// Service configuration file (TOML).
    #[arg(long, global = true, env = "REVBIB_CONFIG")]
    config: Option<PathBuf>,
    /// Area the command works on.
    #[arg(long, global = true, default_value = "computing")]
    area: String,
    /// Scenario 1-6; overrides the configuration file.
    #[arg(long, global = true)]
    scenario: Option<u8>,
    /// Seed for the load simulation.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Base URL of a running service.
    #[arg(long, global = true, env = "REVBIB_SERVER")]
    server: Option<String>,
    /// Bearer token from `login`.
    #[arg(long, global = true, env = "REVBIB_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service until interrupted.
    Serve,
    /// Submit every line of a JSON-lines file of record drafts.
    Import { file: PathBuf },
    /// Run the synthetic workload; without --scenario, all six.
    SimulateLoad {
        #[arg(long, default_value_t = 100)]
        records: usize,
        #[arg(long, default_value_t = 20)]
        users: usize,
        #[arg(long, default_value_t = 10)]
        threshold: u32,
    },
    /// Dump every table as JSON lines.
    Export { dir: PathBuf },
    /// Scenario capabilities and endpoint catalog.
    Capabilities,
    Register {
        #[arg(long)]
        username: String,
        #[arg(long, env = "REVBIB_PASSWORD", hide_env_values = true)]
        password: String,
        #[arg(long)]
        email: String,
        #[arg(long)]
        first_name: String,
        #[arg(long)]
        last_name: String,
    },
    /// Print a token for later commands.
    Login {
        #[arg(long)]
        username: String,
        #[arg(long, env = "REVBIB_PASSWORD", hide_env_values = true)]
        password: String,
    },
    Profile,
    /// Submit one record draft (JSON file).
    Submit {
        file: PathBuf,
        #[arg(long)]
        idempotency_key: Option<String>,
    },
    Show { record: i64 },
    /// Approved records of a sub-field, newest first.
    List {
        #[arg(long)]
        field: String,
        #[arg(long)]
        subfield: String,
        #[arg(long, default_value_t = 1)]
        page: u32,
        #[arg(long, default_value_t = 50)]
        page_size: u32,
    },
    Search { query: String },
    Bibliometrics {
        #[arg(long)]
        field: String,
        #[arg(long)]
        subfield: String,
    },
    Rate {
        record: i64,
        #[arg(long, value_enum)]
        quality: Level3,
        #[arg(long, value_enum)]
        familiarity: Familiarity,
    },
    Score { record: i64 },
    Recommend {
        #[arg(short, default_value_t = 10)]
        n: usize,
    },
    /// Evaluate a record open for evaluation.
    Evaluate {
        record: i64,
        #[arg(long, conflicts_with_all = ["field", "subfield"])]
        not_review: bool,
        #[arg(long, required_unless_present = "not_review")]
        field: Option<String>,
        #[arg(long, required_unless_present = "not_review")]
        subfield: Option<String>,
    },
    /// Records waiting on a moderator or on evaluators.
    Pending {
        #[arg(value_enum)]
        kind: PendingKind,
    },
    /// Evaluation tally of a record.
    Tally { record: i64 },
    Moderate {
        record: i64,
        #[command(subcommand)]
        decision: ModerateCmd,
    },
    Taxonomy {
        #[command(subcommand)]
        action: Option<TaxonomyCmd>,
    },
    /// Add an area from a TOML or JSON seed file.
    AddArea { file: PathBuf },
    Metrics,
    GrantRole {
        username: String,
        #[arg(value_enum)]
        role: RoleArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Level3 {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Familiarity {
    Low,
    Moderate,
    Expert,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PendingKind {
    Moderation,
    Evaluation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoleArg {
    User,
    AssociateUser,
    Moderator,
}

#[derive(Debug, Subcommand)]
enum ModerateCmd {
    Approve {
        /// JSON file of corrections applied before approval.
        #[arg(long)]
        edits: Option<PathBuf>,
    },
    Reject {
        #[arg(long)]
        reason: Option<String>,
    },
    Open,
}

#[derive(Debug, Subcommand)]
enum TaxonomyCmd {
    Show,
    Add {
        #[arg(long)]
        field: String,
        #[arg(long)]
        name: String,
    },
    Rename {
        #[arg(long)]
        field: String,
        #[arg(long)]
        subfield: String,
        #[arg(long)]
        name: String,
    },
    Delete {
        #[arg(long)]
        field: String,
        #[arg(long)]
        subfield: String,
    },
}

/// A failed command and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
    fn op(message: impl Into<String>) -> Self {
        Failure { code: EXIT_FAILURE, message: message.into() }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::op(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::usage(e.to_string()),
            e => Failure::op(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.command {
        Command::Serve => tracing::Level::INFO,
        _ => tracing::Level::WARN,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Serve => serve(cli),
        Command::SimulateLoad { records, users, threshold } => {
            simulate(cli, *records, *users, *threshold)
        }
        Command::Export { dir } => export(cli, dir),
        Command::Import { file } => import(cli, file),
        other => remote(cli, other),
    }
}

fn load_config(cli: &Cli) -> Result<ServiceConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => ServiceConfig::load(path)?,
        None => {
            let scenario = cli
                .scenario
                .ok_or_else(|| Failure::usage("give --config or --scenario"))?;
            let mut c = ServiceConfig::new(scenario, "data");
            c.apply_env();
            c
        }
    };
    if let Some(s) = cli.scenario {
        config.scenario = s;
    }
    config.scenario_config()?;
    config.validate()?;
    Ok(config)
}

fn serve(cli: &Cli) -> Outcome {
    let config = load_config(cli)?;
    let bind = config.bind.clone();
    let svc = Arc::new(Bibliography::open(config, Arc::new(SystemClock))?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::op(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| Failure::usage(format!("cannot bind {bind}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::op(e.to_string()))?;
        tracing::info!(%addr, scenario = svc.scenario().scenario.number(), "listening");
        revbib_server::serve(listener, svc, shutdown_signal())
            .await
            .map_err(|e| Failure::op(e.to_string()))
    })?;
    tracing::info!("stopped");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn simulate(cli: &Cli, records: usize, users: usize, threshold: u32) -> Outcome {
    if users < 2 {
        return Err(Failure::usage("the simulation needs at least two users"));
    }
    let scenarios: Vec<u8> = match cli.scenario {
        Some(s) if (1..=6).contains(&s) => vec![s],
        Some(s) => return Err(Failure::usage(format!("scenario must be 1-6, got {s}"))),
        None => (1..=6).collect(),
    };
    let mut reports = Vec::new();
    for s in scenarios {
        let mut p = SimParams::new(s, records, users, cli.seed);
        p.threshold = threshold;
        reports.push(simulate_load(&p)?);
    }
    if cli.json {
        print_json(cli, &reports);
    } else {
        println!("# {BUCKET_HEADER}");
        for r in &reports {
            // Drop the repeated header line.
            let text = r.to_string();
            println!("{}\n", text.split_once('\n').map_or(text.as_str(), |(_, rest)| rest));
        }
    }
    if reports.iter().all(|r| r.complete) {
        Ok(())
    } else {
        Err(Failure::op("simulation incomplete: some records never reached a decision"))
    }
}

fn export(cli: &Cli, dir: &Path) -> Outcome {
    let config = load_config(cli)?;
    let svc = Bibliography::open(config, Arc::new(SystemClock))?;
    let written = svc.export(dir)?;
    if cli.json {
        print_json(cli, &written);
    } else {
        for p in written {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn client(cli: &Cli) -> Result<Client, Failure> {
    let server = match (&cli.server, &cli.config) {
        (Some(s), _) => s.clone(),
        (None, Some(_)) => format!("http://{}", load_config(cli)?.bind),
        (None, None) => DEFAULT_SERVER.to_string(),
    };
    let c = Client::new(&server)?;
    Ok(match &cli.token {
        Some(t) => c.with_token(t.clone()),
        None => c,
    })
}

fn import(cli: &Cli, file: &Path) -> Outcome {
    let f = File::open(file).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
    let c = client(cli)?;
    let path = format!("/areas/{}/records", cli.area);
    let report = import_batch(BufReader::new(f), |draft| {
        let body = serde_json::to_value(draft).map_err(|e| e.to_string())?;
        let data = c
            .call(Method::POST, &path, Some(&body), None)
            .map_err(|e| e.to_string())?;
        let id = data["record_id"].as_i64().ok_or("response has no record_id")?;
        let status = data["status"].as_str().unwrap_or("").to_string();
        Ok((id, status))
    })
    .map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
    if cli.json {
        print_json(cli, &report);
    } else {
        for l in &report.lines {
            match &l.outcome {
                revbib_cli::import::LineOutcome::Submitted { record_id, status } => {
                    println!("line {}: record {record_id} {status}", l.line)
                }
                revbib_cli::import::LineOutcome::Failed { error } => {
                    println!("line {}: FAILED {error}", l.line)
                }
            }
        }
        println!("submitted {}  failed {}", report.submitted, report.failed);
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn read_seed(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    if let Ok(v) = serde_json::from_str(&text) {
        return Ok(v);
    }
    let seed = revbib_core::taxonomy::AreaSeed::from_toml_str(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    serde_json::to_value(seed).map_err(|e| Failure::op(e.to_string()))
}

fn value_name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .replace('-', "_")
}

fn remote(cli: &Cli, cmd: &Command) -> Outcome {
    let c = client(cli)?;
    let area = &cli.area;
    let data = match cmd {
        Command::Capabilities => c.get("/capabilities")?,
        Command::Register { username, password, email, first_name, last_name } => {
            c.register(username, password, email, first_name, last_name)?
        }
        Command::Login { username, password } => {
            let logged_in = c.login(username, password)?;
            let token = logged_in.token().unwrap_or_default().to_string();
            if cli.json {
                print_json(cli, &json!({ "token": token }));
            } else {
                println!("{token}");
            }
            return Ok(());
        }
        Command::Profile => c.get("/profile")?,
        Command::Submit { file, idempotency_key } => c.call(
            Method::POST,
            &format!("/areas/{area}/records"),
            Some(&read_json(file)?),
            idempotency_key.as_deref(),
        )?,
        Command::Show { record } => c.get(&format!("/areas/{area}/records/{record}"))?,
        Command::List { field, subfield, page, page_size } => c.get(&format!(
            "/areas/{area}/fields/{field}/subfields/{subfield}/records?page={page}&page_size={page_size}"
        ))?,
        Command::Search { query } => {
            let url = reqwest::Url::parse_with_params("http://x/search", [("q", query), ("area", area)])
                .map_err(|e| Failure::usage(e.to_string()))?;
            c.get(&format!("/search?{}", url.query().unwrap_or("")))?
        }
        Command::Bibliometrics { field, subfield } => c.get(&format!(
            "/areas/{area}/fields/{field}/subfields/{subfield}/bibliometrics"
        ))?,
        Command::Rate { record, quality, familiarity } => c.call(
            Method::PUT,
            &format!("/areas/{area}/records/{record}/rating"),
            Some(&json!({ "quality": value_name(*quality), "familiarity": value_name(*familiarity) })),
            None,
        )?,
        Command::Score { record } => c.get(&format!("/areas/{area}/records/{record}/rating"))?,
        Command::Recommend { n } => c.get(&format!("/areas/{area}/recommendations?n={n}"))?,
        Command::Evaluate { record, not_review, field, subfield } => {
            let body = if *not_review {
                json!({ "is_review": false })
            } else {
                json!({ "is_review": true, "field_id": field, "subfield_id": subfield })
            };
            c.call(
                Method::PUT,
                &format!("/areas/{area}/records/{record}/evaluation"),
                Some(&body),
                None,
            )?
        }
        Command::Pending { kind } => c.get(&format!("/pending/{}", value_name(*kind)))?,
        Command::Tally { record } => c.get(&format!("/areas/{area}/records/{record}/evaluations"))?,
        Command::Moderate { record, decision } => {
            let body = match decision {
                ModerateCmd::Approve { edits } => match edits {
                    Some(p) => json!({ "decision": "approve", "edits": read_json(p)? }),
                    None => json!({ "decision": "approve" }),
                },
                ModerateCmd::Reject { reason } => json!({ "decision": "reject", "reason": reason }),
                ModerateCmd::Open => json!({ "decision": "open_for_evaluation" }),
            };
            c.call(
                Method::POST,
                &format!("/areas/{area}/records/{record}/decision"),
                Some(&body),
                None,
            )?
        }
        Command::Taxonomy { action } => {
            let (field, body) = match action {
                None | Some(TaxonomyCmd::Show) => {
                    let data = c.get(&format!("/areas/{area}/taxonomy"))?;
                    return print_data(cli, &data);
                }
                Some(TaxonomyCmd::Add { field, name }) => {
                    (field, json!({ "action": "add", "name": name }))
                }
                Some(TaxonomyCmd::Rename { field, subfield, name }) => (
                    field,
                    json!({ "action": "rename", "subfield_id": subfield, "name": name }),
                ),
                Some(TaxonomyCmd::Delete { field, subfield }) => {
                    (field, json!({ "action": "delete", "subfield_id": subfield }))
                }
            };
            c.call(
                Method::POST,
                &format!("/areas/{area}/fields/{field}/subfields"),
                Some(&body),
                None,
            )?
        }
        Command::AddArea { file } => c.call(Method::POST, "/areas", Some(&read_seed(file)?), None)?,
        Command::Metrics => c.get("/metrics")?,
        Command::GrantRole { username, role } => c.call(
            Method::POST,
            "/roles",
            Some(&json!({ "username": username, "role": value_name(*role) })),
            None,
        )?,
        Command::Serve
        | Command::Import { .. }
        | Command::SimulateLoad { .. }
        | Command::Export { .. } => unreachable!("handled locally"),
    };
    print_data(cli, &data)
}

fn print_data(cli: &Cli, data: &Value) -> Outcome {
    print_json(cli, data);
    Ok(())
}

fn print_json<T: Serialize + ?Sized>(cli: &Cli, v: &T) {
    let text = if cli.json {
        serde_json::to_string(v)
    } else {
        serde_json::to_string_pretty(v)
    };
    println!("{}", text.expect("serializable output"));
}
