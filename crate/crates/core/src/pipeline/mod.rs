//! Case orchestration: build the case knowledge graph, retrieve evidence,
//! draft, parse, validate, then either persist with provenance or explain
//! and repair, for at most `max_repair_rounds` drafter invocations.

mod human;
mod lock;
mod package;
mod view;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_bytes};
use crate::clock::{Clock, SystemClock};
use crate::drafter::{
    faults_allowed, DraftError, DraftRequest, Drafter, DrafterMeta, EndpointConfig, EndpointDrafter,
    FaultSpec, ReferenceDrafter, SCHEMA_VERSION,
};
use crate::evidence::{
    evidence_entity_id, retrieve_evidence, EvidenceItem, EvidenceLookup, EvidenceStore, IngestRequest,
    RetrievalSet, StoreError, StoreSnapshot,
};
use crate::kernel::{self, KernelError, Verdict, ViolationReport};
use crate::knowledge::{build_case_knowledge_graph, CaseDocument, CaseError, CaseKnowledgeGraph};
use crate::ledger::audit::{
    audit_approvals, audit_evidence_for_claim, audit_generation_context, ApprovalEntry, AuditError,
    EvidenceAudit, GenerationContext,
};
use crate::ledger::emit::kernel_agent;
use crate::ledger::{
    attr, emit_provenance, graph_entity_id, kg_entity_id, policy_entity_id, ActivityKind, AgentKind,
    Attributes, ChainStatus, EmitContext, EntityKind, HumanEdit, Ledger, LedgerError, ProvActivity,
    ProvAgent, ProvEntity, ProvRelation, ProvenanceRecord, KERNEL_AGENT_ID,
};
use crate::model::{parse_and_normalize, AgDocument, ArgumentGraph, DraftDocument, ParseError};
use crate::policy::PolicySet;

pub use lock::HomeLock;
pub use view::GraphView;
pub use package::{DecisionPackage, OverrideRecord, PackageManifest, SeqRange};

/// Store root used when `ARGGATE_HOME` is unset.
pub const DEFAULT_HOME: &str = "./arggate-data";

pub fn home_from_env() -> PathBuf {
    std::env::var_os("ARGGATE_HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_HOME))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DrafterChoice {
    #[default]
    Reference,
    Endpoint {
        config: EndpointConfig,
        /// Fall back to the reference drafter when the endpoint fails.
        fallback: bool,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub drafter: DrafterChoice,
    pub faults: FaultSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Accepted { run_id: String, rounds_used: u32, package: Box<DecisionPackage> },
    Escalated { run_id: String, rounds_used: u32, graph_id: String, report: ViolationReport },
    Failed { run_id: String, error: String },
}

impl RunOutcome {
    pub fn run_id(&self) -> &str {
        match self {
            RunOutcome::Accepted { run_id, .. }
            | RunOutcome::Escalated { run_id, .. }
            | RunOutcome::Failed { run_id, .. } => run_id,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, RunOutcome::Accepted { .. })
    }

    pub fn graph_id(&self) -> Option<&str> {
        match self {
            RunOutcome::Accepted { package, .. } => Some(package.graph_id()),
            RunOutcome::Escalated { graph_id, .. } => Some(graph_id),
            RunOutcome::Failed { .. } => None,
        }
    }

    pub fn rounds_used(&self) -> Option<u32> {
        match self {
            RunOutcome::Accepted { rounds_used, .. } | RunOutcome::Escalated { rounds_used, .. } => Some(*rounds_used),
            RunOutcome::Failed { .. } => None,
        }
    }

    /// Machine-readable summary as printed by the CLI and returned by the
    /// service.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            RunOutcome::Accepted { run_id, rounds_used, package } => serde_json::json!({
                "outcome": "accepted",
                "run_id": run_id,
                "rounds_used": rounds_used,
                "graph_id": package.graph_id(),
                "provenance": package.manifest.provenance,
            }),
            RunOutcome::Escalated { run_id, rounds_used, graph_id, report } => serde_json::json!({
                "outcome": "escalated",
                "run_id": run_id,
                "rounds_used": rounds_used,
                "graph_id": graph_id,
                "report": report,
            }),
            RunOutcome::Failed { run_id, error } => serde_json::json!({
                "outcome": "failed",
                "run_id": run_id,
                "error": error,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Accepted,
    Escalated,
    Failed,
}

/// Everything needed to resume a run after human action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub case: CaseDocument,
    pub policy: PolicySet,
    pub retrieval: RetrievalSet,
    pub drafter: DrafterMeta,
    pub status: RunStatus,
    pub rounds_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<AgDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ViolationReport>,
    #[serde(default)]
    pub human_edits: Vec<HumanEdit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub run_id: String,
    pub case_id: String,
    pub graph_id: String,
    pub rounds_used: u32,
    pub report: ViolationReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub graph_id: String,
    pub case_id: String,
    pub run_id: String,
    /// `persisted` or `escalated`.
    pub status: String,
    pub valid: bool,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Draft(#[from] DraftError),
    #[error("draft rejected by parser: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("io: {0}")]
    Io(String),
    #[error("persistence refused: {0}")]
    GatingViolation(String),
    #[error("unknown graph `{0}`")]
    UnknownGraph(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown assumption `{0}`")]
    UnknownAssumption(String),
    #[error("assumption `{0}` is already approved")]
    AlreadyApproved(String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("agent `{0}` is not a human agent")]
    NotHumanAgent(String),
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("decision case policy mismatch: {0}")]
    PolicyMismatch(String),
    #[error("{0}")]
    Busy(String),
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Case(_) => "CaseError",
            PipelineError::Draft(d) => d.code(),
            PipelineError::Parse(p) => p.code(),
            PipelineError::Kernel(_) => "KernelError",
            PipelineError::Store(_) => "StoreError",
            PipelineError::Ledger(_) => "LedgerError",
            PipelineError::Audit(a) => a.code(),
            PipelineError::Io(_) => "Io",
            PipelineError::GatingViolation(_) => "GatingViolation",
            PipelineError::UnknownGraph(_) => "UnknownGraph",
            PipelineError::UnknownNode(_) => "UnknownNode",
            PipelineError::UnknownAssumption(_) => "UnknownAssumption",
            PipelineError::AlreadyApproved(_) => "AlreadyApproved",
            PipelineError::UnknownAgent(_) => "UnknownAgent",
            PipelineError::NotHumanAgent(_) => "NotHumanAgent",
            PipelineError::UnknownCase(_) => "UnknownCase",
            PipelineError::MissingField(_) => "MissingField",
            PipelineError::PolicyMismatch(_) => "PolicyMismatch",
            PipelineError::Busy(_) => "Busy",
        }
    }
}

/// Inputs to [`Workspace::persist`]: a graph and the kernel verdict issued
/// for it, plus the context provenance needs.
pub struct PersistRequest<'a> {
    pub run_id: &'a str,
    pub graph: &'a ArgumentGraph,
    pub verdict: &'a Verdict,
    pub policy: &'a PolicySet,
    pub kg: &'a CaseKnowledgeGraph,
    pub retrieval: &'a RetrievalSet,
    pub drafter: &'a DrafterMeta,
    pub human_edits: &'a [HumanEdit],
    pub rounds_used: u32,
}

struct Persisted {
    package: DecisionPackage,
    graph: ArgumentGraph,
}

/// Ledger, evidence store, run states and decision packages under one home
/// directory (or purely in memory).
pub struct Workspace {
    home: Option<PathBuf>,
    ledger: Ledger,
    store: EvidenceStore,
    runs: BTreeMap<String, RunState>,
    persisted: BTreeMap<String, Persisted>,
    allow_faults: bool,
    _lock: Option<HomeLock>,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("home", &self.home)
            .field("ledger", &self.ledger)
            .field("runs", &self.runs.len())
            .field("persisted", &self.persisted.len())
            .finish()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl Workspace {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            home: None,
            ledger: Ledger::in_memory(clock),
            store: EvidenceStore::in_memory(),
            runs: BTreeMap::new(),
            persisted: BTreeMap::new(),
            allow_faults: faults_allowed(),
            _lock: None,
        }
    }

    /// Opens `home` for a mutating session, holding its lock until drop.
    pub fn open(home: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, PipelineError> {
        let home = home.as_ref();
        let lock = HomeLock::acquire(home).map_err(PipelineError::Busy)?;
        let mut ws = Self::load(home, clock)?;
        ws._lock = Some(lock);
        Ok(ws)
    }

    /// Opens `home` without taking the lock. Mutations are still possible
    /// through the API but callers are expected to only read.
    pub fn open_read_only(home: impl AsRef<Path>) -> Result<Self, PipelineError> {
        Self::load(home.as_ref(), Arc::new(SystemClock))
    }

    pub fn open_default() -> Result<Self, PipelineError> {
        Self::open(home_from_env(), Arc::new(SystemClock))
    }

    fn load(home: &Path, clock: Arc<dyn Clock>) -> Result<Self, PipelineError> {
        let ledger = Ledger::open(home.join("ledger").join("prov.ndjson"), clock)?;
        let store = EvidenceStore::open(home.join("store"))?;
        let mut ws = Self {
            home: Some(home.to_path_buf()),
            ledger,
            store,
            runs: BTreeMap::new(),
            persisted: BTreeMap::new(),
            allow_faults: faults_allowed(),
            _lock: None,
        };
        let runs_dir = home.join("runs");
        if runs_dir.is_dir() {
            let mut paths: Vec<_> = fs::read_dir(&runs_dir)?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
            paths.sort();
            for p in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
                let state: RunState = serde_json::from_slice(&fs::read(&p)?)
                    .map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
                ws.runs.insert(state.run_id.clone(), state);
            }
        }
        let out = home.join("out");
        if out.is_dir() {
            for entry in fs::read_dir(&out)?.filter_map(|e| e.ok()) {
                let pkg = DecisionPackage::read_from(&entry.path()).map_err(PipelineError::Io)?;
                let graph = ArgumentGraph::from_document(pkg.document.clone())?;
                ws.persisted.insert(pkg.graph_id().to_owned(), Persisted { package: pkg, graph });
            }
        }
        Ok(ws)
    }

    pub fn home(&self) -> Option<&Path> {
        self.home.as_deref()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn store(&self) -> &EvidenceStore {
        &self.store
    }

    pub fn now(&self) -> String {
        self.ledger.now()
    }

    pub fn set_faults_allowed(&mut self, allow: bool) {
        self.allow_faults = allow;
    }

    pub fn package_dir(&self, graph_id: &str) -> Option<PathBuf> {
        self.home.as_ref().map(|h| h.join("out").join(graph_id))
    }

    // ----- agents and evidence -------------------------------------------

    pub fn register_agent(&mut self, agent: ProvAgent) -> Result<(), PipelineError> {
        self.ledger.ensure_agent(agent)?;
        Ok(())
    }

    pub fn agent(&self, id: &str) -> Option<&ProvAgent> {
        self.ledger.record().agents.get(id)
    }

    pub(crate) fn human_agent(&self, id: &str) -> Result<&ProvAgent, PipelineError> {
        match self.agent(id) {
            None => Err(PipelineError::UnknownAgent(id.to_owned())),
            Some(a) if a.kind != AgentKind::Human => Err(PipelineError::NotHumanAgent(id.to_owned())),
            Some(a) => Ok(a),
        }
    }

    pub fn ingest_evidence(
        &mut self,
        content: &str,
        corpus_id: &str,
        source_class: &str,
        title: &str,
        agent: &ProvAgent,
    ) -> Result<EvidenceItem, PipelineError> {
        let req = IngestRequest { content, corpus_id, source_class, title, agent };
        Ok(self.store.ingest(req, &mut self.ledger)?)
    }

    pub fn evidence(&self, hash: &str) -> Result<Option<EvidenceItem>, PipelineError> {
        Ok(self.store.lookup(hash)?)
    }

    // ----- runs ----------------------------------------------------------

    fn next_run_id(&self, case_id: &str) -> String {
        let n = self.runs.values().filter(|r| r.case.case_id == case_id).count();
        format!("{case_id}#{}", n + 1)
    }

    fn save_run(&self, run_id: &str) -> Result<(), PipelineError> {
        if let (Some(home), Some(state)) = (&self.home, self.runs.get(run_id)) {
            let name = format!("{}.json", run_id.replace(['/', '\\'], "_"));
            write_atomic(&home.join("runs").join(name), &to_canonical_bytes(state))?;
        }
        Ok(())
    }

    pub fn run(&self, run_id: &str) -> Option<&RunState> {
        self.runs.get(run_id)
    }

    pub fn runs(&self) -> impl Iterator<Item = &RunState> {
        self.runs.values()
    }

    /// Runs the case end to end. Infrastructure failures are ledgered and
    /// reported as [`RunOutcome::Failed`].
    pub fn run_case(&mut self, case: &CaseDocument, policy: &PolicySet, opts: &RunOptions) -> RunOutcome {
        let run_id = self.next_run_id(&case.case_id);
        match self.run_inner(&run_id, case, policy, opts) {
            Ok(outcome) => outcome,
            Err(e) => {
                let error = e.to_string();
                self.record_failure(&run_id, &error);
                RunOutcome::Failed { run_id, error }
            }
        }
    }

    /// Re-runs the latest recorded case `case_id` with its pinned policy and
    /// the reference drafter.
    pub fn rerun_case(&mut self, case_id: &str) -> Result<RunOutcome, PipelineError> {
        let last = self
            .runs
            .values()
            .filter(|r| r.case.case_id == case_id)
            .max_by_key(|r| run_number(&r.run_id))
            .ok_or_else(|| PipelineError::UnknownCase(case_id.to_owned()))?;
        let (case, policy) = (last.case.clone(), last.policy.clone());
        Ok(self.run_case(&case, &policy, &RunOptions::default()))
    }

    fn record_failure(&mut self, run_id: &str, error: &str) {
        if let Some(state) = self.runs.get_mut(run_id) {
            state.status = RunStatus::Failed;
            state.error = Some(error.to_owned());
        }
        let _ = self.save_run(run_id);
        let now = self.ledger.now();
        let mut attrs = Attributes::new();
        attrs.insert(attr::RUN_ID.into(), run_id.to_owned());
        attrs.insert(attr::ERROR.into(), error.to_owned());
        let _ = self.ledger.ensure_agent(kernel_agent());
        let _ = self.ledger.record_activity(
            ProvActivity {
                id: format!("fail:{run_id}:{}", self.ledger.len()),
                kind: ActivityKind::Fail,
                started_at: now.clone(),
                ended_at: now,
                used: vec![],
                generated: vec![],
                attributes: attrs,
            },
            &[KERNEL_AGENT_ID],
        );
    }

    fn simple_activity(
        &mut self,
        id: String,
        kind: ActivityKind,
        used: Vec<String>,
        generated: Vec<String>,
        attributes: Attributes,
        agent: &str,
    ) -> Result<(), PipelineError> {
        let now = self.ledger.now();
        self.ledger.record_activity(
            ProvActivity { id, kind, started_at: now.clone(), ended_at: now, used, generated, attributes },
            &[agent],
        )?;
        Ok(())
    }

    fn record_kg(&mut self, run_id: &str, kg: &CaseKnowledgeGraph) -> Result<(), PipelineError> {
        let kg_hash = kg.hash();
        let entity = kg_entity_id(&kg_hash);
        self.ledger.ensure_entity(ProvEntity {
            id: entity.clone(),
            kind: EntityKind::CaseKg,
            content_hash: kg_hash.clone(),
            attributes: Attributes::new(),
        })?;
        let mut a = Attributes::new();
        a.insert(attr::RUN_ID.into(), run_id.to_owned());
        a.insert(attr::CASE_ID.into(), kg.case_id.clone());
        a.insert(attr::KG_HASH.into(), kg_hash);
        self.simple_activity(format!("build_kg:{run_id}"), ActivityKind::BuildKg, vec![], vec![entity], a, KERNEL_AGENT_ID)
    }

    fn record_retrieval(
        &mut self,
        run_id: &str,
        kg: &CaseKnowledgeGraph,
        policy: &PolicySet,
        r: &RetrievalSet,
    ) -> Result<(), PipelineError> {
        let mut used = vec![kg_entity_id(&kg.hash()), policy_entity_id(policy)];
        for item in &r.items {
            let id = evidence_entity_id(&item.hash);
            self.ledger.ensure_entity(ProvEntity {
                id: id.clone(),
                kind: EntityKind::EvidenceItem,
                content_hash: item.hash.clone(),
                attributes: Attributes::new(),
            })
            .or_else(|e| match e {
                // Already recorded at ingest, with title and class attributes.
                LedgerError::DuplicateId(_) => Ok(None),
                e => Err(e),
            })?;
            used.push(id);
        }
        self.ledger.ensure_entity(ProvEntity {
            id: r.entity_id(),
            kind: EntityKind::RetrievalSet,
            content_hash: r.id.clone(),
            attributes: Attributes::new(),
        })?;
        let mut a = Attributes::new();
        a.insert(attr::RUN_ID.into(), run_id.to_owned());
        a.insert(attr::KG_HASH.into(), r.kg_hash.clone());
        a.insert(attr::K.into(), r.params.k.to_string());
        a.insert(attr::SCORING_VERSION.into(), r.params.scoring_version.clone());
        a.insert(attr::POLICY_FINGERPRINT.into(), r.policy_fingerprint.clone());
        a.insert(attr::RETRIEVAL_SET_ID.into(), r.id.clone());
        self.simple_activity(format!("retrieve:{run_id}"), ActivityKind::Retrieve, used, vec![r.entity_id()], a, KERNEL_AGENT_ID)
    }

    fn record_policy(&mut self, policy: &PolicySet) -> Result<(), PipelineError> {
        self.ledger.ensure_entity(ProvEntity {
            id: policy_entity_id(policy),
            kind: EntityKind::Policy,
            content_hash: policy.fingerprint(),
            attributes: Attributes::new(),
        })?;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn record_generation(
        &mut self,
        run_id: &str,
        gen_ref: &str,
        round: u32,
        meta: &DrafterMeta,
        draft: &DraftDocument,
        kg: &CaseKnowledgeGraph,
        policy: &PolicySet,
        r: &RetrievalSet,
    ) -> Result<String, PipelineError> {
        self.ledger.ensure_agent(meta.agent())?;
        self.ledger.ensure_entity(meta.prompt_entity())?;
        self.ledger.ensure_entity(meta.model_card_entity())?;
        let body_hash = sha256_hex(draft.body.as_bytes());
        let doc_entity = format!("draft-doc:{body_hash}");
        self.ledger.ensure_entity(ProvEntity {
            id: doc_entity.clone(),
            kind: EntityKind::DraftDoc,
            content_hash: body_hash,
            attributes: Attributes::new(),
        })?;
        let mut a = meta.generation_attributes(&r.id);
        a.insert(attr::ROUND.into(), round.to_string());
        a.insert(attr::RUN_ID.into(), run_id.to_owned());
        a.insert(attr::CASE_ID.into(), kg.case_id.clone());
        let kind = if round == 1 { ActivityKind::Draft } else { ActivityKind::Repair };
        let used = vec![
            kg_entity_id(&kg.hash()),
            r.entity_id(),
            policy_entity_id(policy),
            meta.prompt_entity_id(),
            meta.model_card_entity_id(),
        ];
        self.simple_activity(gen_ref.to_owned(), kind, used, vec![doc_entity.clone()], a, &meta.agent_id())?;
        Ok(doc_entity)
    }

    /// Records the graph entity (by hash only) and its derivation.
    fn record_graph(&mut self, g: &ArgumentGraph, derived_from: &str) -> Result<String, PipelineError> {
        let gid = g.id().0;
        let entity = graph_entity_id(&gid);
        let fresh = self
            .ledger
            .ensure_entity(ProvEntity {
                id: entity.clone(),
                kind: EntityKind::AgGraph,
                content_hash: gid.clone(),
                attributes: Attributes::new(),
            })?
            .is_some();
        if fresh && self.ledger.record().entities.contains_key(derived_from) {
            self.ledger.relate(ProvRelation::WasDerivedFrom { generated: entity, used: derived_from.to_owned() })?;
        }
        Ok(gid)
    }

    fn record_invalid(&mut self, run_id: &str, round: u32, policy: &PolicySet, report: &ViolationReport) -> Result<(), PipelineError> {
        let gid = &report.graph_id.0;
        let mut a = Attributes::new();
        a.insert(attr::OUTCOME.into(), "invalid".into());
        a.insert(attr::POLICY_FINGERPRINT.into(), policy.fingerprint());
        a.insert(attr::POLICY_ID.into(), policy.id.clone());
        a.insert(attr::POLICY_VERSION.into(), policy.version.to_string());
        a.insert(attr::GRAPH_ID.into(), gid.clone());
        a.insert(attr::RUN_ID.into(), run_id.to_owned());
        a.insert(attr::ROUND.into(), round.to_string());
        a.insert(attr::VIOLATIONS.into(), report.violations.len().to_string());
        let id = format!("validate:{run_id}:{}", self.ledger.len());
        self.simple_activity(id, ActivityKind::Validate, vec![graph_entity_id(gid), policy_entity_id(policy)], vec![], a, KERNEL_AGENT_ID)
    }

    fn record_escalation(&mut self, run_id: &str, round: u32, report: &ViolationReport) -> Result<(), PipelineError> {
        let gid = &report.graph_id.0;
        let mut a = Attributes::new();
        a.insert(attr::GRAPH_ID.into(), gid.clone());
        a.insert(attr::RUN_ID.into(), run_id.to_owned());
        a.insert(attr::ROUND.into(), round.to_string());
        a.insert(attr::VIOLATIONS.into(), report.violations.len().to_string());
        let id = format!("escalate:{run_id}:{}", self.ledger.len());
        self.simple_activity(id, ActivityKind::Escalate, vec![graph_entity_id(gid)], vec![], a, KERNEL_AGENT_ID)
    }

    fn resolve_items(snapshot: &StoreSnapshot, r: &RetrievalSet) -> Result<Vec<EvidenceItem>, PipelineError> {
        r.items
            .iter()
            .map(|s| {
                snapshot.lookup(&s.hash)?.ok_or_else(|| PipelineError::Store(StoreError::IntegrityError(s.hash.clone())))
            })
            .collect()
    }

    fn run_inner(
        &mut self,
        run_id: &str,
        case: &CaseDocument,
        policy: &PolicySet,
        opts: &RunOptions,
    ) -> Result<RunOutcome, PipelineError> {
        if !opts.faults.is_empty() && !self.allow_faults {
            return Err(DraftError::FaultsRefused.into());
        }
        self.ledger.ensure_agent(kernel_agent())?;
        let kg = build_case_knowledge_graph(case)?;
        self.record_kg(run_id, &kg)?;
        self.record_policy(policy)?;

        // The store is pinned for the whole run.
        let snapshot = self.store.snapshot();
        let retrieval = retrieve_evidence(&kg, policy, &snapshot)?;
        self.record_retrieval(run_id, &kg, policy, &retrieval)?;
        let items = Self::resolve_items(&snapshot, &retrieval)?;

        let reference = ReferenceDrafter::new().with_faults_allowed(self.allow_faults);
        let endpoint = match &opts.drafter {
            DrafterChoice::Reference => None,
            DrafterChoice::Endpoint { config, fallback } => Some((EndpointDrafter::new(config.clone()), *fallback)),
        };
        let first_meta = endpoint.as_ref().map(|(e, _)| e.meta().clone()).unwrap_or_else(|| reference.meta().clone());
        self.runs.insert(
            run_id.to_owned(),
            RunState {
                run_id: run_id.to_owned(),
                case: case.clone(),
                policy: policy.clone(),
                retrieval: retrieval.clone(),
                drafter: first_meta,
                status: RunStatus::Running,
                rounds_used: 0,
                graph_id: None,
                document: None,
                report: None,
                human_edits: vec![],
                error: None,
            },
        );

        let max = policy.max_repair_rounds.max(1);
        let mut previous: Option<AgDocument> = None;
        let mut feedback: Option<ViolationReport> = None;
        let mut prev_graph_entity = String::new();
        for round in 1..=max {
            let gen_ref = format!("draft:{run_id}:r{round}");
            let req = DraftRequest {
                kg: &kg,
                retrieval: &retrieval,
                items: &items,
                policy,
                schema_version: SCHEMA_VERSION,
                round,
                feedback: feedback.as_ref(),
                previous: previous.as_ref(),
                generation_ref: &gen_ref,
            };
            let call = |d: &dyn Drafter| if round == 1 { d.draft(&req, &opts.faults) } else { d.repair(&req) };
            let (draft, meta) = match &endpoint {
                None => (call(&reference)?, reference.meta().clone()),
                Some((ep, fallback)) => match call(ep) {
                    Ok(d) => (d, ep.meta().clone()),
                    Err(e @ (DraftError::EndpointUnreachable(_) | DraftError::MalformedResponse(_))) => {
                        let mut a = Attributes::new();
                        a.insert(attr::RUN_ID.into(), run_id.to_owned());
                        a.insert(attr::ROUND.into(), round.to_string());
                        a.insert(attr::DRAFTER_ID.into(), ep.meta().drafter_id.clone());
                        a.insert(attr::ERROR.into(), e.to_string());
                        let id = format!("fail:{run_id}:{}", self.ledger.len());
                        self.simple_activity(id, ActivityKind::Fail, vec![], vec![], a, KERNEL_AGENT_ID)?;
                        if !fallback {
                            return Err(e.into());
                        }
                        (call(&reference)?, reference.meta().clone())
                    }
                    Err(e) => return Err(e.into()),
                },
            };
            let doc_entity = self.record_generation(run_id, &gen_ref, round, &meta, &draft, &kg, policy, &retrieval)?;
            let g = parse_and_normalize(&draft)?;
            let derived = if round == 1 { doc_entity } else { prev_graph_entity.clone() };
            let gid = self.record_graph(&g, &derived)?;
            prev_graph_entity = graph_entity_id(&gid);

            let verdict = kernel::valid(&g, policy, &snapshot, self.ledger.record())?;
            if let Some(state) = self.runs.get_mut(run_id) {
                state.drafter = meta.clone();
                state.rounds_used = round;
                state.graph_id = Some(gid.clone());
                state.document = Some(g.to_document());
            }
            if verdict.is_valid() {
                let package = self.persist(PersistRequest {
                    run_id,
                    graph: &g,
                    verdict: &verdict,
                    policy,
                    kg: &kg,
                    retrieval: &retrieval,
                    drafter: &meta,
                    human_edits: &[],
                    rounds_used: round,
                })?;
                return Ok(RunOutcome::Accepted { run_id: run_id.to_owned(), rounds_used: round, package: Box::new(package) });
            }
            let report = verdict.into_report();
            self.record_invalid(run_id, round, policy, &report)?;
            if round == max || !report.has_self_repairable() {
                return self.escalate(run_id, round, report);
            }
            previous = Some(g.to_document());
            feedback = Some(report);
        }
        unreachable!("the last round either persists or escalates")
    }

    fn escalate(&mut self, run_id: &str, round: u32, report: ViolationReport) -> Result<RunOutcome, PipelineError> {
        self.record_escalation(run_id, round, &report)?;
        if let Some(state) = self.runs.get_mut(run_id) {
            state.status = RunStatus::Escalated;
            state.rounds_used = round;
            state.graph_id = Some(report.graph_id.0.clone());
            state.report = Some(report.clone());
        }
        self.save_run(run_id)?;
        Ok(RunOutcome::Escalated {
            run_id: run_id.to_owned(),
            rounds_used: round,
            graph_id: report.graph_id.0.clone(),
            report,
        })
    }

    /// Stores an accepted graph. Refused unless `verdict` is a valid kernel
    /// verdict for exactly this graph under exactly this policy.
    pub fn persist(&mut self, req: PersistRequest<'_>) -> Result<DecisionPackage, PipelineError> {
        let gid = req.graph.id();
        if !req.verdict.is_valid() {
            return Err(PipelineError::GatingViolation("verdict is not valid".into()));
        }
        if *req.verdict.graph_id() != gid {
            return Err(PipelineError::GatingViolation(format!(
                "verdict was issued for graph {}, not {}",
                req.verdict.graph_id(),
                gid
            )));
        }
        if req.verdict.policy_fingerprint() != req.policy.fingerprint() {
            return Err(PipelineError::GatingViolation("verdict was issued under a different policy".into()));
        }
        // The caller's verdict is only a claim; the kernel decides.
        let own = kernel::valid(req.graph, req.policy, &self.store, self.ledger.record())?;
        if own.report() != req.verdict.report() {
            return Err(PipelineError::GatingViolation("verdict does not match the kernel's own result".into()));
        }
        let record = emit_provenance(
            &mut self.ledger,
            &EmitContext {
                run_id: req.run_id,
                graph: req.graph,
                kg: req.kg,
                retrieval: req.retrieval,
                model_meta: req.drafter,
                human_meta: req.human_edits,
                policy: req.policy,
                report: req.verdict.report(),
            },
        )?;
        let (first, last) = record.seq_range.expect("emit appends entries");
        let package = DecisionPackage::assemble(
            req.graph,
            req.verdict.report().clone(),
            req.run_id,
            &req.policy.fingerprint(),
            req.rounds_used,
            SeqRange { first, last },
        );
        if let Some(dir) = self.package_dir(&gid.0) {
            package.write_to(&dir)?;
        }
        if let Some(state) = self.runs.get_mut(req.run_id) {
            state.status = RunStatus::Accepted;
            state.graph_id = Some(gid.0.clone());
            state.document = Some(req.graph.to_document());
            state.report = Some(req.verdict.report().clone());
            state.rounds_used = req.rounds_used;
        }
        self.save_run(req.run_id)?;
        self.persisted.insert(gid.0, Persisted { package: package.clone(), graph: req.graph.clone() });
        Ok(package)
    }

    // ----- reads ---------------------------------------------------------

    pub fn packages(&self) -> impl Iterator<Item = &DecisionPackage> {
        self.persisted.values().map(|p| &p.package)
    }

    pub fn package(&self, graph_id: &str) -> Option<&DecisionPackage> {
        self.persisted.get(graph_id).map(|p| &p.package)
    }

    pub fn persisted_graph(&self, graph_id: &str) -> Option<&ArgumentGraph> {
        self.persisted.get(graph_id).map(|p| &p.graph)
    }

    pub fn queue(&self) -> Vec<QueueEntry> {
        self.runs
            .values()
            .filter(|r| r.status == RunStatus::Escalated)
            .filter_map(|r| {
                Some(QueueEntry {
                    run_id: r.run_id.clone(),
                    case_id: r.case.case_id.clone(),
                    graph_id: r.graph_id.clone()?,
                    rounds_used: r.rounds_used,
                    report: r.report.clone()?,
                })
            })
            .collect()
    }

    fn queued_run(&self, graph_id: &str) -> Option<&RunState> {
        self.runs
            .values()
            .find(|r| r.status == RunStatus::Escalated && r.graph_id.as_deref() == Some(graph_id))
    }

    pub fn graphs(&self) -> Vec<GraphSummary> {
        let mut out: Vec<GraphSummary> = self
            .persisted
            .values()
            .map(|p| GraphSummary {
                graph_id: p.package.graph_id().to_owned(),
                case_id: p.package.manifest.case_id.clone(),
                run_id: p.package.manifest.run_id.clone(),
                status: "persisted".into(),
                valid: true,
            })
            .collect();
        out.extend(self.queue().into_iter().map(|q| GraphSummary {
            graph_id: q.graph_id,
            case_id: q.case_id,
            run_id: q.run_id,
            status: "escalated".into(),
            valid: false,
        }));
        out.sort_by(|a, b| a.graph_id.cmp(&b.graph_id));
        out
    }

    /// Document and report of a persisted or escalated graph.
    pub fn graph_view(&self, graph_id: &str) -> Option<(AgDocument, ViolationReport)> {
        if let Some(p) = self.persisted.get(graph_id) {
            return Some((p.package.document.clone(), p.package.report.clone()));
        }
        let r = self.queued_run(graph_id)?;
        Some((r.document.clone()?, r.report.clone()?))
    }

    pub fn graph(&self, graph_id: &str) -> Option<ArgumentGraph> {
        if let Some(p) = self.persisted.get(graph_id) {
            return Some(p.graph.clone());
        }
        let doc = self.queued_run(graph_id)?.document.clone()?;
        ArgumentGraph::from_document(doc).ok()
    }

    pub fn verify_ledger(&self) -> ChainStatus {
        self.ledger.verify_chain()
    }

    pub fn provenance(&self) -> &ProvenanceRecord {
        self.ledger.record()
    }

    /// Revalidates a persisted package against its pinned policy and the
    /// current store.
    pub fn revalidate(&self, graph_id: &str) -> Result<Verdict, PipelineError> {
        let p = self.persisted.get(graph_id).ok_or_else(|| PipelineError::UnknownGraph(graph_id.to_owned()))?;
        let run = self
            .runs
            .get(&p.package.manifest.run_id)
            .ok_or_else(|| PipelineError::UnknownGraph(graph_id.to_owned()))?;
        Ok(kernel::valid(&p.graph, &run.policy, &self.store, self.ledger.record())?)
    }

    // ----- audit ---------------------------------------------------------

    /// Resolves `node` or `node@graph` to the persisted graph holding it;
    /// an unqualified id resolves to the most recently persisted graph.
    fn resolve_persisted(&self, node_ref: &str) -> Option<(&ArgumentGraph, String)> {
        let (node, graph) = match node_ref.rsplit_once('@') {
            Some((n, g)) => (n, Some(g)),
            None => (node_ref, None),
        };
        let id = crate::model::NodeId::new(node);
        let hit = match graph {
            Some(g) => self.persisted.get(g).filter(|p| p.graph.node(&id).is_some()),
            None => self
                .persisted
                .values()
                .filter(|p| p.graph.node(&id).is_some())
                .max_by_key(|p| p.package.manifest.provenance.last),
        };
        hit.map(|p| (&p.graph, node.to_owned()))
    }

    pub fn audit_evidence_for_claim(&self, claim_ref: &str) -> Result<EvidenceAudit, PipelineError> {
        let (g, node) =
            self.resolve_persisted(claim_ref).ok_or_else(|| AuditError::UnknownClaim(claim_ref.to_owned()))?;
        Ok(audit_evidence_for_claim(g, self.ledger.record(), &node)?)
    }

    pub fn audit_generation_context(&self, node_ref: &str) -> Result<GenerationContext, PipelineError> {
        let (g, node) =
            self.resolve_persisted(node_ref).ok_or_else(|| AuditError::UnknownNode(node_ref.to_owned()))?;
        Ok(audit_generation_context(g, self.ledger.record(), &node)?)
    }

    pub fn audit_approvals(&self, graph_id: &str) -> Result<Vec<ApprovalEntry>, PipelineError> {
        if !self.persisted.contains_key(graph_id) {
            return Err(AuditError::UnknownGraph(graph_id.to_owned()).into());
        }
        Ok(audit_approvals(self.ledger.record(), graph_id)?)
    }
}

fn run_number(run_id: &str) -> u64 {
    run_id.rsplit_once('#').and_then(|(_, n)| n.parse().ok()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::evidence::retrieve_evidence;
    use crate::model::{DocNode, GraphMeta, NodeKind};
    use crate::policy::load_policy;

    #[test]
    fn persist_rejects_a_forged_report() {
        let mut ws = Workspace::in_memory(Arc::new(FixedClock::epoch()));
        let policy = load_policy(
            br#"{"id":"P","version":1,"source_classes":[{"id":"record"}],
                "coverage":[{"top_claim_class":"decision","required_child_classes":["step"]}]}"#,
        )
        .unwrap();
        let case = CaseDocument::from_bytes(br#"{"case_id":"c","decision_class":"decision","entities":[{"id":"a","kind":"person"}]}"#).unwrap();
        let kg = build_case_knowledge_graph(&case).unwrap();
        let retrieval = retrieve_evidence(&kg, &policy, &ws.store.snapshot()).unwrap();
        let mut goal = DocNode::bare("goal", NodeKind::Claim, "Decision", crate::model::Generator::System);
        goal.claim_class = Some("decision".into());
        let doc = AgDocument {
            nodes: vec![goal],
            edges: vec![],
            meta: GraphMeta { case_id: "c".into(), policy_id: "P".into(), policy_version: 1, round: 1 },
        };
        let g = ArgumentGraph::from_document(doc).unwrap();
        let honest = kernel::valid(&g, &policy, &ws.store, ws.ledger.record()).unwrap();
        assert!(!honest.is_valid());
        let mut report = honest.report().clone();
        report.valid = true;
        report.violations.clear();
        let forged = Verdict::forged(report);
        let err = ws
            .persist(PersistRequest {
                run_id: "r",
                graph: &g,
                verdict: &forged,
                policy: &policy,
                kg: &kg,
                retrieval: &retrieval,
                drafter: &DrafterMeta::reference(),
                human_edits: &[],
                rounds_used: 1,
            })
            .unwrap_err();
        assert!(matches!(err, PipelineError::GatingViolation(_)), "{err:?}");
        assert_eq!(ws.packages().count(), 0);
        assert!(ws.ledger.is_empty());
    }
}
