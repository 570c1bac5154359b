use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};

use oaival::engine::{run_validation, Outcome, ValidationReport};
use oaival::model::{validate_base_url, UtcDatestamp};
use oaival::registry::{ComplianceLevel, Registry, RegistryError};
use oaival::simulator::{serve, Fault, FaultProfile, RepoContent, Simulator};
use oaival::stats::{StatsSummary, ValidationLog, ValidationLogEntry};
use oaival::transport::RetryPolicy;

const EXIT_ROBUST: u8 = 0;
const EXIT_RUNTIME: u8 = 1;
const EXIT_VALID_EXCLUDING_EXCEPTIONS: u8 = 2;
const EXIT_FAILED: u8 = 3;
const EXIT_ABORTED: u8 = 4;
const EXIT_INTAKE: u8 = 5;
const EXIT_USAGE: u8 = 64;

/// Validate OAI-PMH 2.0 repositories, keep a registry of compliant ones, and
/// run a fault-injecting test repository.
#[derive(Debug, Parser)]
#[command(name = "oaival", version)]
struct Cli {
    /// Validation log (JSON lines).
    #[arg(
        long,
        global = true,
        env = "OAIVAL_LOG",
        default_value = "oaival-log.jsonl"
    )]
    log: PathBuf,
    /// Registry file (JSON).
    #[arg(
        long,
        global = true,
        env = "OAIVAL_REGISTRY",
        default_value = "oaival-registry.json"
    )]
    registry: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full test sequence against a base URL and print the report.
    Validate {
        base_url: String,
        #[command(flatten)]
        run: RunOptions,
    },
    /// Validate, then enter the repository in the registry.
    Register {
        base_url: String,
        #[arg(long, value_enum, default_value_t = Level::Robust)]
        level: Level,
        #[command(flatten)]
        run: RunOptions,
    },
    /// List registered repositories.
    Browse {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        output: Format,
    },
    /// Summarize the validation log.
    Stats {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        output: Format,
        /// Rows in the most-common-issues table.
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Serve a simulated repository until interrupted.
    Simulate {
        /// Fault to inject, `name` or `name=value`; repeatable.
        #[arg(long = "fault", value_parser = parse_fault)]
        faults: Vec<Fault>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Also write every request to this JSON-lines file.
        #[arg(long)]
        request_log: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunOptions {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    output: Format,
    /// Skip the illegal-request tests.
    #[arg(long)]
    no_exceptions: bool,
    /// Successive 503 Retry-After replies tolerated per request.
    #[arg(long, default_value_t = 5)]
    max_retries: u32,
    /// Longest single Retry-After wait honoured, in seconds.
    #[arg(long, default_value_t = 60)]
    max_wait: u64,
    /// Budget for one request including its retries, in seconds.
    #[arg(long, default_value_t = 600)]
    deadline: u64,
    /// Timeout of a single HTTP request, in seconds.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
}

impl RunOptions {
    fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_successive_retry_after: self.max_retries,
            max_single_wait: Duration::from_secs(self.max_wait),
            overall_deadline: Duration::from_secs(self.deadline),
            request_timeout: Duration::from_secs(self.timeout),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Level {
    Basic,
    Robust,
    DublinCore,
}

impl From<Level> for ComplianceLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::Basic => ComplianceLevel::Basic,
            Level::Robust => ComplianceLevel::Robust,
            Level::DublinCore => ComplianceLevel::DublinCore,
        }
    }
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    s.parse::<Fault>()
        .map_err(|e| format!("{e}; known faults: {}", Fault::NAMES.join(", ")))
}

fn exit_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::RobustlyValid => EXIT_ROBUST,
        Outcome::ValidExcludingExceptions => EXIT_VALID_EXCLUDING_EXCEPTIONS,
        Outcome::Failed => EXIT_FAILED,
        Outcome::Aborted(_) => EXIT_ABORTED,
    }
}

struct Failure(u8, String);

type CmdResult = Result<u8, Failure>;

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_RUNTIME, e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, message)) => {
            eprintln!("oaival: {message}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let log = ValidationLog::new(&cli.log);
    match cli.command {
        Command::Validate { base_url, run } => {
            let report = validate(&log, &base_url, &run)?;
            print_report(&report, run.output);
            Ok(exit_code(report.outcome))
        }
        Command::Register {
            base_url,
            level,
            run,
        } => {
            let report = validate(&log, &base_url, &run)?;
            print_report(&report, run.output);
            let mut registry = Registry::load(&cli.registry).map_err(runtime)?;
            match registry.register(&report, level.into(), UtcDatestamp::second(Utc::now())) {
                Ok(entry) => {
                    registry.save(&cli.registry).map_err(runtime)?;
                    eprintln!(
                        "registered {} at level {}",
                        entry.base_url, entry.compliance_level
                    );
                    Ok(EXIT_ROBUST)
                }
                Err(RegistryError::NotEligible {
                    level,
                    reason,
                    blocking,
                }) => {
                    let mut msg =
                        format!("NotEligible: cannot register at level {level}: {reason}");
                    for issue in blocking {
                        msg.push_str(&format!("\n  - [{}] {}", issue.kind, issue.detail));
                    }
                    Err(Failure(EXIT_FAILED, msg))
                }
                Err(e @ RegistryError::DuplicateBaseUrl { .. }) => {
                    Err(Failure(EXIT_FAILED, e.to_string()))
                }
                Err(e) => Err(runtime(e)),
            }
        }
        Command::Browse { output } => {
            let registry = Registry::load(&cli.registry).map_err(runtime)?;
            match output {
                Format::Text => emit(&registry.render_table()),
                Format::Structured => emit(&registry.to_json()),
            }
            Ok(0)
        }
        Command::Stats { output, top } => {
            let entries = log.read().map_err(runtime)?;
            let summary = StatsSummary::from_log(&entries, top);
            match output {
                Format::Text => emit(&summary.render_text()),
                Format::Structured => emit(&format!(
                    "{}\n",
                    serde_json::to_string_pretty(&summary).expect("summary serializes")
                )),
            }
            Ok(0)
        }
        Command::Simulate {
            faults,
            port,
            bind,
            request_log,
        } => simulate(faults, &bind, port, request_log),
    }
}

fn validate(log: &ValidationLog, raw: &str, run: &RunOptions) -> Result<ValidationReport, Failure> {
    let policy = run.policy();
    policy
        .validate()
        .map_err(|e| Failure(EXIT_USAGE, e.to_string()))?;
    let base = match validate_base_url(raw) {
        Ok(base) => base,
        Err(e) => {
            log.append(&ValidationLogEntry::rejected(raw, &e, Utc::now()))
                .map_err(runtime)?;
            return Err(Failure(EXIT_INTAKE, e.to_string()));
        }
    };
    let report = run_validation(&base, policy, !run.no_exceptions).map_err(runtime)?;
    log.append(&ValidationLogEntry::validated(raw, &report, Utc::now()))
        .map_err(runtime)?;
    Ok(report)
}

/// Write to stdout, ignoring a closed pipe (`oaival ... | head`).
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn print_report(report: &ValidationReport, format: Format) {
    match format {
        Format::Text => emit(&report.render_text()),
        Format::Structured => emit(&format!("{}\n", report.to_json())),
    }
}

fn simulate(faults: Vec<Fault>, bind: &str, port: u16, request_log: Option<PathBuf>) -> CmdResult {
    let profile = FaultProfile::from_faults(faults);
    for shadowed in profile.shadowed() {
        eprintln!("warning: fault {shadowed} has no effect in this combination");
    }
    let mut simulator = Simulator::new(profile.clone(), RepoContent::default()).map_err(runtime)?;
    if let Some(path) = &request_log {
        simulator = simulator.with_log_file(path).map_err(runtime)?;
    }
    let server = serve((bind, port), simulator).map_err(runtime)?;
    emit(&format!(
        "Serving simulated repository at {} (faults: {profile})\n",
        server.base_url()
    ));
    server.wait();
    Ok(0)
}
