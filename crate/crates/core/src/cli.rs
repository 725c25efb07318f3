//! `arggate` command line. Machine-readable results go to stdout,
//! diagnostics to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::clock::{Clock, FixedClock, SystemClock};
use crate::drafter::{DrafterMeta, EndpointConfig, Fault, FaultSpec, DEFAULT_TIMEOUT_SECS};
use crate::kernel;
use crate::knowledge::CaseDocument;
use crate::ledger::prov_json::to_prov_json;
use crate::ledger::{verify_file, AgentKind, ChainStatus, ProvAgent};
use crate::model::parse_and_normalize;
use crate::pipeline::{home_from_env, DrafterChoice, GraphView, PipelineError, RunOptions, RunOutcome, Workspace};
use crate::policy::{load_policy, PolicySet};
use crate::service::{self, AppState, TokenTable, DEFAULT_PORT};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum Exit {
    Ok = 0,
    Invalid = 1,
    Usage = 2,
    Escalated = 3,
    Failure = 4,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "arggate", version, about = "Evidence-gated argument graphs for automated decisions")]
pub struct Cli {
    /// Workspace directory (defaults to $ARGGATE_HOME, then ./arggate-data).
    #[arg(long, global = true)]
    pub home: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a case end to end: draft, validate, repair, persist or escalate.
    Run(RunArgs),
    /// Validate an AG document without persisting anything.
    Validate {
        /// AG document (JSON).
        ag_file: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Evidence store operations.
    #[command(subcommand)]
    Evidence(EvidenceCmd),
    /// Provenance ledger operations.
    #[command(subcommand)]
    Ledger(LedgerCmd),
    /// Audit queries over persisted graphs.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Export a persisted graph or the ledger.
    Export {
        #[arg(long, value_enum)]
        format: ExportKind,
        /// Graph id (not needed for prov-json).
        graph: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the oversight HTTP service.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// JSON array of {token, role, agent_id, display_name}; defaults to <home>/tokens.json.
        #[arg(long)]
        tokens: Option<PathBuf>,
    },
    /// Submit a human revision of an escalated graph.
    Revise {
        graph: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        agent: String,
    },
    /// Approve a pending assumption of an escalated graph.
    Approve {
        graph: String,
        assumption: String,
        #[arg(long)]
        agent: String,
    },
    /// Attach a reviewer note to `node` or `node@graph`.
    Annotate {
        node: String,
        #[arg(long)]
        text: String,
        #[arg(long)]
        agent: String,
    },
    /// Record a human disposition against a decision.
    Override {
        graph: String,
        #[arg(long)]
        disposition: String,
        #[arg(long, default_value = "")]
        rationale: String,
        #[arg(long)]
        agent: String,
    },
    /// Re-run the latest recorded run of a case.
    Rerun { case: String },
    /// List escalated graphs awaiting review.
    Queue,
    /// List persisted and escalated graphs.
    Graphs,
    #[command(subcommand)]
    Agents(AgentsCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DrafterKind {
    Reference,
    Endpoint,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, value_enum, default_value_t = DrafterKind::Reference)]
    pub drafter: DrafterKind,
    /// Generation endpoint URL (with `--drafter endpoint`).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECS)]
    pub timeout: u64,
    #[arg(long, default_value = "endpoint-model")]
    pub model_id: String,
    #[arg(long, default_value = "unversioned")]
    pub model_version: String,
    /// Use the reference drafter for a round the endpoint cannot serve.
    #[arg(long)]
    pub fallback: bool,
    /// Inject a drafter fault (test builds or ARGGATE_TEST_MODE=1 only).
    #[arg(long = "fault")]
    pub faults: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum EvidenceCmd {
    /// Ingest one file, or every entry of a manifest.
    Ingest {
        #[arg(long, required_unless_present = "manifest")]
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        manifest: Option<PathBuf>,
        #[arg(long, required_unless_present = "manifest")]
        corpus: Option<String>,
        #[arg(long = "class", required_unless_present = "manifest")]
        source_class: Option<String>,
        #[arg(long, required_unless_present = "manifest")]
        title: Option<String>,
        #[arg(long)]
        agent: String,
    },
    /// Print a stored item.
    Show { hash: String },
}

#[derive(Debug, Subcommand)]
pub enum LedgerCmd {
    /// Check the hash chain (of the workspace ledger, or `--file`).
    Verify {
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AuditCmd {
    EvidenceForClaim {
        claim: String,
        #[arg(long)]
        graph: Option<String>,
    },
    GenerationContext {
        node: String,
        #[arg(long)]
        graph: Option<String>,
    },
    Approvals { graph: String },
}

#[derive(Debug, Subcommand)]
pub enum AgentsCmd {
    Register {
        id: String,
        #[arg(long, value_enum, default_value_t = AgentKindArg::Human)]
        kind: AgentKindArg,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKindArg {
    Human,
    Model,
    Software,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    GsnDot,
    GsnJson,
    ProvJson,
    /// The AG document.
    Ag,
    /// The violation report.
    Report,
    /// Document, report and GSN together, as served by `GET /api/graphs/{id}`.
    Bundle,
}

/// Failure carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self { exit: Exit::Usage, message: msg.into() }
    }

    fn failure(msg: impl Into<String>) -> Self {
        Self { exit: Exit::Failure, message: msg.into() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let exit = match &e {
            PipelineError::Parse(_)
            | PipelineError::Case(_)
            | PipelineError::MissingField(_)
            | PipelineError::UnknownGraph(_)
            | PipelineError::UnknownNode(_)
            | PipelineError::UnknownAssumption(_)
            | PipelineError::UnknownCase(_)
            | PipelineError::UnknownAgent(_)
            | PipelineError::NotHumanAgent(_)
            | PipelineError::AlreadyApproved(_) => Exit::Usage,
            PipelineError::Audit(a) if a.code().starts_with("Unknown") || a.code() == "NotAiGenerated" => Exit::Usage,
            PipelineError::GatingViolation(_) => Exit::Invalid,
            _ => Exit::Failure,
        };
        CliError { exit, message: format!("{}: {e}", e.code()) }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::failure(e.to_string())
    }
}

/// `ARGGATE_FIXED_CLOCK` set to an RFC 3339 instant (or `1` for the default
/// epoch) makes every timestamp deterministic. A fixed clock resumes one
/// step after the newest timestamp already in `home`'s ledger, so separate
/// invocations never reuse an instant.
pub fn clock_from_env(home: Option<&Path>) -> Result<Arc<dyn Clock>, CliError> {
    let origin = match std::env::var("ARGGATE_FIXED_CLOCK") {
        Err(_) => return Ok(Arc::new(SystemClock)),
        Ok(v) if v.is_empty() || v == "0" => return Ok(Arc::new(SystemClock)),
        Ok(v) if v == "1" => DateTime::parse_from_rfc3339("2026-01-01T00:00:00Z").expect("valid literal"),
        Ok(v) => DateTime::parse_from_rfc3339(&v).map_err(|e| CliError::usage(format!("ARGGATE_FIXED_CLOCK: {e}")))?,
    }
    .with_timezone(&Utc);
    let last = home
        .and_then(|h| std::fs::read_to_string(h.join("ledger").join("prov.ndjson")).ok())
        .and_then(|text| {
            let line = text.lines().rfind(|l| !l.trim().is_empty())?.to_owned();
            let v: serde_json::Value = serde_json::from_str(&line).ok()?;
            DateTime::parse_from_rfc3339(v.get("timestamp")?.as_str()?).ok()
        })
        .map(|t| t.with_timezone(&Utc) + chrono::Duration::seconds(1));
    Ok(Arc::new(FixedClock::new(last.map_or(origin, |l| l.max(origin)), 1000)))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_policy(path: &Path) -> Result<PolicySet, CliError> {
    load_policy(read(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn print_json(out: &mut dyn Write, v: &serde_json::Value) -> Result<(), CliError> {
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json value"))?;
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

struct Ctx {
    home: PathBuf,
}

impl Ctx {
    fn open(&self) -> Result<Workspace, CliError> {
        Ok(Workspace::open(&self.home, clock_from_env(Some(&self.home))?)?)
    }

    fn open_read(&self) -> Result<Workspace, CliError> {
        if !self.home.exists() {
            return Err(CliError::usage(format!("no workspace at {}", self.home.display())));
        }
        Ok(Workspace::open_read_only(&self.home)?)
    }
}

fn outcome_exit(o: &RunOutcome) -> Exit {
    match o {
        RunOutcome::Accepted { .. } => Exit::Ok,
        RunOutcome::Escalated { .. } => Exit::Escalated,
        RunOutcome::Failed { .. } => Exit::Failure,
    }
}

#[derive(Deserialize)]
struct ManifestEntry {
    file: PathBuf,
    title: String,
    source_class: String,
    corpus_id: String,
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<Exit, CliError> {
    let ctx = Ctx { home: cli.home.unwrap_or_else(home_from_env) };
    match cli.command {
        Command::Run(a) => {
            let case = CaseDocument::from_bytes(read(&a.case)?).map_err(|e| CliError::usage(e.to_string()))?;
            let policy = read_policy(&a.policy)?;
            let faults = a
                .faults
                .iter()
                .map(|f| f.parse::<Fault>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::usage)?;
            let drafter = match a.drafter {
                DrafterKind::Reference => DrafterChoice::Reference,
                DrafterKind::Endpoint => {
                    let url = a.endpoint.ok_or_else(|| CliError::usage("--drafter endpoint needs --endpoint URL"))?;
                    let reference = DrafterMeta::reference();
                    let meta = DrafterMeta {
                        drafter_id: format!("endpoint:{url}"),
                        model_id: a.model_id,
                        model_version: a.model_version,
                        ..reference
                    };
                    DrafterChoice::Endpoint { config: EndpointConfig { url, timeout_secs: a.timeout, meta }, fallback: a.fallback }
                }
            };
            let mut ws = ctx.open()?;
            let outcome = ws.run_case(&case, &policy, &RunOptions { drafter, faults: FaultSpec(faults) });
            if let RunOutcome::Failed { error, .. } = &outcome {
                writeln!(err, "run failed: {error}")?;
            }
            print_json(out, &outcome.to_json())?;
            Ok(outcome_exit(&outcome))
        }
        Command::Validate { ag_file, policy } => {
            let policy = read_policy(&policy)?;
            let g = match parse_and_normalize(read(&ag_file)?) {
                Ok(g) => g,
                Err(e) => {
                    print_json(out, &json!({"valid": false, "error": e.code(), "message": e.to_string()}))?;
                    return Ok(Exit::Usage);
                }
            };
            let ws = if ctx.home.exists() { ctx.open_read()? } else { Workspace::in_memory(clock_from_env(None)?) };
            let verdict = kernel::valid(&g, &policy, ws.store(), ws.provenance())
                .map_err(|e| CliError::failure(e.to_string()))?;
            writeln!(out, "{}", String::from_utf8(verdict.report().to_canonical_bytes()).expect("utf8"))?;
            Ok(if verdict.is_valid() { Exit::Ok } else { Exit::Invalid })
        }
        Command::Evidence(EvidenceCmd::Ingest { file, manifest, corpus, source_class, title, agent }) => {
            let mut ws = ctx.open()?;
            let agent = ws
                .agent(&agent)
                .cloned()
                .unwrap_or(ProvAgent { id: agent.clone(), kind: AgentKind::Human, display_name: agent });
            let entries = match manifest {
                Some(m) => {
                    let base = m.parent().map(Path::to_path_buf).unwrap_or_default();
                    let list: Vec<ManifestEntry> =
                        serde_json::from_slice(&read(&m)?).map_err(|e| CliError::usage(format!("{}: {e}", m.display())))?;
                    list.into_iter().map(|e| ManifestEntry { file: base.join(&e.file), ..e }).collect()
                }
                None => vec![ManifestEntry {
                    file: file.expect("clap requires file"),
                    title: title.expect("clap requires title"),
                    source_class: source_class.expect("clap requires class"),
                    corpus_id: corpus.expect("clap requires corpus"),
                }],
            };
            let mut items = Vec::new();
            for e in entries {
                let content = String::from_utf8(read(&e.file)?)
                    .map_err(|_| CliError::usage(format!("{} is not UTF-8 text", e.file.display())))?;
                let item = ws.ingest_evidence(&content, &e.corpus_id, &e.source_class, &e.title, &agent)?;
                items.push(json!({"hash": item.hash, "title": item.title, "source_class": item.source_class}));
            }
            print_json(out, &json!(items))?;
            Ok(Exit::Ok)
        }
        Command::Evidence(EvidenceCmd::Show { hash }) => {
            let ws = ctx.open_read()?;
            match ws.evidence(&hash)? {
                Some(item) => {
                    print_json(out, &to_value(&item))?;
                    Ok(Exit::Ok)
                }
                None => Err(CliError::usage(format!("unknown evidence {hash}"))),
            }
        }
        Command::Ledger(LedgerCmd::Verify { file }) => {
            let path = file.unwrap_or_else(|| ctx.home.join("ledger").join("prov.ndjson"));
            let status = verify_file(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let v = match &status {
                ChainStatus::Ok { entries, head } => json!({"status": "ok", "entries": entries, "head": head}),
                ChainStatus::Broken { first_bad_seq, reason } => {
                    writeln!(err, "ledger chain broken at seq {first_bad_seq}: {reason}")?;
                    json!({"status": "broken", "first_bad_seq": first_bad_seq, "reason": reason})
                }
            };
            print_json(out, &v)?;
            Ok(if status.is_ok() { Exit::Ok } else { Exit::Invalid })
        }
        Command::Audit(cmd) => {
            let ws = ctx.open_read()?;
            let qualify = |id: String, g: Option<String>| match g {
                Some(g) => format!("{id}@{g}"),
                None => id,
            };
            let v = match cmd {
                AuditCmd::EvidenceForClaim { claim, graph } => to_value(&ws.audit_evidence_for_claim(&qualify(claim, graph))?),
                AuditCmd::GenerationContext { node, graph } => to_value(&ws.audit_generation_context(&qualify(node, graph))?),
                AuditCmd::Approvals { graph } => to_value(&ws.audit_approvals(&graph)?),
            };
            print_json(out, &v)?;
            Ok(Exit::Ok)
        }
        Command::Export { format, graph, out: dest } => {
            let ws = ctx.open_read()?;
            let bytes = if format == ExportKind::ProvJson {
                let mut b = serde_json::to_vec_pretty(&to_prov_json(ws.provenance())).expect("json");
                b.push(b'\n');
                b
            } else {
                let id = graph.ok_or_else(|| CliError::usage("export needs a graph id"))?;
                let view = match format {
                    ExportKind::GsnDot => GraphView::GsnDot,
                    ExportKind::GsnJson => GraphView::GsnJson,
                    ExportKind::Ag => GraphView::Document,
                    ExportKind::Report => GraphView::Report,
                    _ => GraphView::Bundle,
                };
                ws.render(&id, view).ok_or_else(|| CliError::usage(format!("unknown graph {id}")))?
            };
            match dest {
                Some(p) => std::fs::write(&p, bytes)?,
                None => out.write_all(&bytes)?,
            }
            Ok(Exit::Ok)
        }
        Command::Serve { port, tokens } => {
            let path = tokens.unwrap_or_else(|| ctx.home.join("tokens.json"));
            let table = TokenTable::load(&path).map_err(|e| CliError::usage(e.to_string()))?;
            let state = AppState::new(ctx.open()?, table)?;
            let rt = tokio::runtime::Runtime::new()?;
            writeln!(err, "arggate oversight service listening on port {port}")?;
            rt.block_on(service::serve(state, port))?;
            Ok(Exit::Ok)
        }
        Command::Revise { graph, file, agent } => {
            let bytes = read(&file)?;
            let mut ws = ctx.open()?;
            let o = ws.submit_revision(&graph, &bytes, &agent)?;
            print_json(out, &o.to_json())?;
            Ok(outcome_exit(&o))
        }
        Command::Approve { graph, assumption, agent } => {
            let mut ws = ctx.open()?;
            let o = ws.approve_assumption(&graph, &assumption, &agent)?;
            print_json(out, &o.to_json())?;
            Ok(outcome_exit(&o))
        }
        Command::Annotate { node, text, agent } => {
            let mut ws = ctx.open()?;
            let id = ws.annotate(&node, &text, &agent)?;
            print_json(out, &json!({"activity_id": id}))?;
            Ok(Exit::Ok)
        }
        Command::Override { graph, disposition, rationale, agent } => {
            let mut ws = ctx.open()?;
            let rec = ws.override_decision(&graph, &disposition, &rationale, &agent)?;
            print_json(out, &to_value(&rec))?;
            Ok(Exit::Ok)
        }
        Command::Rerun { case } => {
            let mut ws = ctx.open()?;
            let o = ws.rerun_case(&case)?;
            print_json(out, &o.to_json())?;
            Ok(outcome_exit(&o))
        }
        Command::Queue => {
            print_json(out, &to_value(&ctx.open_read()?.queue()))?;
            Ok(Exit::Ok)
        }
        Command::Graphs => {
            print_json(out, &to_value(&ctx.open_read()?.graphs()))?;
            Ok(Exit::Ok)
        }
        Command::Agents(AgentsCmd::Register { id, kind, name }) => {
            let kind = match kind {
                AgentKindArg::Human => AgentKind::Human,
                AgentKindArg::Model => AgentKind::Model,
                AgentKindArg::Software => AgentKind::Software,
            };
            let agent = ProvAgent { display_name: name.unwrap_or_else(|| id.clone()), id, kind };
            let mut ws = ctx.open()?;
            ws.register_agent(agent.clone())?;
            print_json(out, &to_value(&agent))?;
            Ok(Exit::Ok)
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Usage } else { Exit::Ok };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code.code();
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code.code(),
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.exit.code()
        }
    }
}
