//! PROV-aligned provenance ledger: entities, activities, agents and relation
//! records stored as a hash-chained, append-only, newline-delimited log.

pub mod audit;
pub(crate) mod emit;
pub mod prov_json;
mod record;

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_bytes};
use crate::clock::Clock;

pub use emit::{
    emit_provenance, graph_entity_id, kg_entity_id, node_entity_id, package_entity_id, policy_entity_id,
    EmitContext, HumanEdit, KERNEL_AGENT_ID,
};
pub use record::ProvenanceRecord;

/// Attribute keys used on activities and entities.
pub mod attr {
    pub const MODEL_ID: &str = "model_id";
    pub const MODEL_VERSION: &str = "model_version";
    pub const PROMPT_TEMPLATE_ID: &str = "prompt_template_id";
    pub const PROMPT_TEMPLATE_VERSION: &str = "prompt_template_version";
    pub const RETRIEVAL_SET_ID: &str = "retrieval_set_id";
    pub const DRAFTER_ID: &str = "drafter_id";
    pub const ROUND: &str = "round";
    pub const CASE_ID: &str = "case_id";
    pub const RUN_ID: &str = "run_id";
    pub const GRAPH_ID: &str = "graph_id";
    pub const SOURCE_GRAPH_ID: &str = "source_graph_id";
    pub const NODE_ID: &str = "node_id";
    pub const OUTCOME: &str = "outcome";
    pub const POLICY_ID: &str = "policy_id";
    pub const POLICY_VERSION: &str = "policy_version";
    pub const POLICY_FINGERPRINT: &str = "policy_fingerprint";
    pub const VIOLATIONS: &str = "violations";
    pub const ACTION: &str = "action";
    pub const ANNOTATION: &str = "annotation";
    pub const DISPOSITION: &str = "disposition";
    pub const RATIONALE: &str = "rationale";
    pub const KG_HASH: &str = "kg_hash";
    pub const K: &str = "k";
    pub const SCORING_VERSION: &str = "scoring_version";
    pub const ERROR: &str = "error";
    pub const TITLE: &str = "title";
    pub const SOURCE_CLASS: &str = "source_class";
    pub const CORPUS_ID: &str = "corpus_id";

    /// Attributes every draft/repair activity must carry.
    pub const GENERATION_CONTEXT: [&str; 5] =
        [MODEL_ID, MODEL_VERSION, PROMPT_TEMPLATE_ID, PROMPT_TEMPLATE_VERSION, RETRIEVAL_SET_ID];
}

pub type Attributes = std::collections::BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    AgNode,
    AgGraph,
    EvidenceItem,
    RetrievalSet,
    DraftDoc,
    Policy,
    PromptTemplate,
    ModelCard,
    CaseKg,
    DecisionPackage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvEntity {
    pub id: String,
    pub kind: EntityKind,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Attributes::is_empty")]
    pub attributes: Attributes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Ingest,
    BuildKg,
    Retrieve,
    Draft,
    Repair,
    Validate,
    Approve,
    Edit,
    Override,
    Persist,
    Escalate,
    Fail,
}

impl ActivityKind {
    pub fn is_generation(self) -> bool {
        matches!(self, ActivityKind::Draft | ActivityKind::Repair)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityKind::Ingest => "ingest",
            ActivityKind::BuildKg => "build_kg",
            ActivityKind::Retrieve => "retrieve",
            ActivityKind::Draft => "draft",
            ActivityKind::Repair => "repair",
            ActivityKind::Validate => "validate",
            ActivityKind::Approve => "approve",
            ActivityKind::Edit => "edit",
            ActivityKind::Override => "override",
            ActivityKind::Persist => "persist",
            ActivityKind::Escalate => "escalate",
            ActivityKind::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvActivity {
    pub id: String,
    pub kind: ActivityKind,
    pub started_at: String,
    pub ended_at: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub used: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generated: Vec<String>,
    #[serde(default, skip_serializing_if = "Attributes::is_empty")]
    pub attributes: Attributes,
}

impl ProvActivity {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Human,
    Model,
    Software,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvAgent {
    pub id: String,
    pub kind: AgentKind,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProvRelation {
    WasGeneratedBy { entity: String, activity: String },
    Used { activity: String, entity: String },
    WasAssociatedWith { activity: String, agent: String },
    WasAttributedTo { entity: String, agent: String },
    WasDerivedFrom { generated: String, used: String },
}

impl ProvRelation {
    pub fn name(&self) -> &'static str {
        match self {
            ProvRelation::WasGeneratedBy { .. } => "wasGeneratedBy",
            ProvRelation::Used { .. } => "used",
            ProvRelation::WasAssociatedWith { .. } => "wasAssociatedWith",
            ProvRelation::WasAttributedTo { .. } => "wasAttributedTo",
            ProvRelation::WasDerivedFrom { .. } => "wasDerivedFrom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Payload {
    Entity(ProvEntity),
    Activity(ProvActivity),
    Agent(ProvAgent),
    Relation(ProvRelation),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub seq: u64,
    pub timestamp: String,
    pub payload: Payload,
    pub prev_hash: String,
    pub entry_hash: String,
}

/// `action` attribute of an edit activity that only attaches a note.
pub const ANNOTATE_ACTION: &str = "annotate";

pub const GENESIS_PREV_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// SHA-256 over seq, timestamp, canonical payload and previous hash,
/// concatenated in that order.
pub fn entry_hash(seq: u64, timestamp: &str, payload: &Payload, prev_hash: &str) -> String {
    let mut buf = Vec::new();
    buf.extend_from_slice(seq.to_string().as_bytes());
    buf.extend_from_slice(timestamp.as_bytes());
    buf.extend_from_slice(&to_canonical_bytes(payload));
    buf.extend_from_slice(prev_hash.as_bytes());
    sha256_hex(buf)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Ok { entries: u64, head: String },
    Broken { first_bad_seq: u64, reason: String },
}

impl ChainStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainStatus::Ok { .. })
    }
}

/// Verifies a serialized ledger: every line must be the canonical encoding
/// of an entry whose seq, linkage and hash are consistent.
pub fn verify_bytes(bytes: &[u8]) -> ChainStatus {
    let mut prev = GENESIS_PREV_HASH.to_owned();
    let mut count = 0u64;
    for (seq, line) in lines_of(bytes).enumerate() {
        let seq = seq as u64;
        match check_line(seq, line, &prev) {
            Ok(entry) => prev = entry.entry_hash,
            Err(reason) => return ChainStatus::Broken { first_bad_seq: seq, reason },
        }
        count += 1;
    }
    ChainStatus::Ok { entries: count, head: prev }
}

fn lines_of(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    body.split(|b| *b == b'\n').filter(move |_| !bytes.is_empty())
}

fn check_line(seq: u64, line: &[u8], prev: &str) -> Result<LedgerEntry, String> {
    let entry: LedgerEntry =
        serde_json::from_slice(line).map_err(|e| format!("unparseable entry: {e}"))?;
    if to_canonical_bytes(&entry) != line {
        return Err("entry is not in canonical form".into());
    }
    if entry.seq != seq {
        return Err(format!("seq {} out of order", entry.seq));
    }
    if entry.prev_hash != prev {
        return Err("prev_hash does not match predecessor".into());
    }
    if entry.entry_hash != entry_hash(entry.seq, &entry.timestamp, &entry.payload, &entry.prev_hash) {
        return Err("entry_hash mismatch".into());
    }
    Ok(entry)
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger chain is corrupt at seq {0}; refusing to append")]
    ChainCorrupt(u64),
    #[error("id `{0}` is already recorded with different content")]
    DuplicateId(String),
    #[error("{context} references unknown id `{id}`")]
    UnknownReference { context: String, id: String },
    #[error("ledger io: {0}")]
    Io(#[from] std::io::Error),
}

/// Append-only hash-chained log with an in-memory PROV view.
pub struct Ledger {
    file: Option<File>,
    path: Option<PathBuf>,
    entries: Vec<LedgerEntry>,
    lines: Vec<Vec<u8>>,
    record: ProvenanceRecord,
    broken_at: Option<u64>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("path", &self.path)
            .field("entries", &self.entries.len())
            .field("broken_at", &self.broken_at)
            .finish()
    }
}

impl Ledger {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            file: None,
            path: None,
            entries: Vec::new(),
            lines: Vec::new(),
            record: ProvenanceRecord::default(),
            broken_at: None,
            clock,
        }
    }

    /// Opens (creating if needed) a file-backed ledger. A corrupt file is
    /// loaded up to the last good entry and further appends are refused.
    pub fn open(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, LedgerError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mut ledger = Self::in_memory(clock);
        let status = verify_bytes(&bytes);
        let good = match &status {
            ChainStatus::Ok { entries, .. } => *entries,
            ChainStatus::Broken { first_bad_seq, .. } => *first_bad_seq,
        };
        for line in lines_of(&bytes).take(good as usize) {
            let entry: LedgerEntry = serde_json::from_slice(line).expect("verified");
            ledger.record.apply(&entry);
            ledger.lines.push(line.to_vec());
            ledger.entries.push(entry);
        }
        if let ChainStatus::Broken { first_bad_seq, .. } = status {
            ledger.broken_at = Some(first_bad_seq);
        }
        ledger.file = Some(OpenOptions::new().create(true).append(true).open(&path)?);
        ledger.path = Some(path);
        Ok(ledger)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn now(&self) -> String {
        self.clock.now()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head_hash(&self) -> &str {
        self.entries.last().map(|e| e.entry_hash.as_str()).unwrap_or(GENESIS_PREV_HASH)
    }

    /// Everything committed so far, as a PROV view.
    pub fn record(&self) -> &ProvenanceRecord {
        &self.record
    }

    /// The committed bytes, one canonical entry per line.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for l in &self.lines {
            out.extend_from_slice(l);
            out.push(b'\n');
        }
        out
    }

    pub fn verify_chain(&self) -> ChainStatus {
        match self.broken_at {
            Some(seq) => ChainStatus::Broken { first_bad_seq: seq, reason: "corrupt on load".into() },
            None => verify_bytes(&self.to_bytes()),
        }
    }

    fn check_refs(&self, payload: &Payload) -> Result<(), LedgerError> {
        let rec = &self.record;
        let missing = |context: &str, id: &str| LedgerError::UnknownReference {
            context: context.to_owned(),
            id: id.to_owned(),
        };
        match payload {
            Payload::Entity(e) => {
                if rec.entities.contains_key(&e.id) {
                    return Err(LedgerError::DuplicateId(e.id.clone()));
                }
            }
            Payload::Agent(a) => {
                if rec.agents.contains_key(&a.id) {
                    return Err(LedgerError::DuplicateId(a.id.clone()));
                }
            }
            Payload::Activity(a) => {
                if rec.activities.contains_key(&a.id) {
                    return Err(LedgerError::DuplicateId(a.id.clone()));
                }
                for id in a.used.iter().chain(&a.generated) {
                    if !rec.entities.contains_key(id) {
                        return Err(missing(&format!("activity {}", a.id), id));
                    }
                }
            }
            Payload::Relation(r) => {
                let (ent, act, agent, ent2) = match r {
                    ProvRelation::WasGeneratedBy { entity, activity } => (Some(entity), Some(activity), None, None),
                    ProvRelation::Used { activity, entity } => (Some(entity), Some(activity), None, None),
                    ProvRelation::WasAssociatedWith { activity, agent } => (None, Some(activity), Some(agent), None),
                    ProvRelation::WasAttributedTo { entity, agent } => (Some(entity), None, Some(agent), None),
                    ProvRelation::WasDerivedFrom { generated, used } => (Some(generated), None, None, Some(used)),
                };
                for e in ent.into_iter().chain(ent2) {
                    if !rec.entities.contains_key(e) {
                        return Err(missing(r.name(), e));
                    }
                }
                if let Some(a) = act {
                    if !rec.activities.contains_key(a) {
                        return Err(missing(r.name(), a));
                    }
                }
                if let Some(a) = agent {
                    if !rec.agents.contains_key(a) {
                        return Err(missing(r.name(), a));
                    }
                }
            }
        }
        Ok(())
    }

    /// Appends one payload. The entry is written and synced before returning.
    pub fn append(&mut self, payload: Payload) -> Result<LedgerEntry, LedgerError> {
        if let Some(seq) = self.broken_at {
            return Err(LedgerError::ChainCorrupt(seq));
        }
        if let Some(last) = self.entries.last() {
            let expect = entry_hash(last.seq, &last.timestamp, &last.payload, &last.prev_hash);
            if expect != last.entry_hash {
                self.broken_at = Some(last.seq);
                return Err(LedgerError::ChainCorrupt(last.seq));
            }
        }
        self.check_refs(&payload)?;
        let seq = self.len();
        let timestamp = self.clock.now();
        let prev_hash = self.head_hash().to_owned();
        let hash = entry_hash(seq, &timestamp, &payload, &prev_hash);
        let entry = LedgerEntry { seq, timestamp, payload, prev_hash, entry_hash: hash };
        let line = to_canonical_bytes(&entry);
        if let Some(f) = self.file.as_mut() {
            let mut buf = line.clone();
            buf.push(b'\n');
            f.write_all(&buf)?;
            f.flush()?;
            f.sync_data()?;
        }
        self.record.apply(&entry);
        self.lines.push(line);
        self.entries.push(entry.clone());
        Ok(entry)
    }

    /// Appends the entity unless an identical one is already recorded.
    pub fn ensure_entity(&mut self, entity: ProvEntity) -> Result<Option<LedgerEntry>, LedgerError> {
        match self.record.entities.get(&entity.id) {
            Some(existing) if existing.content_hash == entity.content_hash => Ok(None),
            Some(_) => Err(LedgerError::DuplicateId(entity.id)),
            None => self.append(Payload::Entity(entity)).map(Some),
        }
    }

    pub fn ensure_agent(&mut self, agent: ProvAgent) -> Result<Option<LedgerEntry>, LedgerError> {
        match self.record.agents.get(&agent.id) {
            Some(existing) if existing == &agent => Ok(None),
            Some(_) => Err(LedgerError::DuplicateId(agent.id)),
            None => self.append(Payload::Agent(agent)).map(Some),
        }
    }

    pub fn relate(&mut self, relation: ProvRelation) -> Result<LedgerEntry, LedgerError> {
        self.append(Payload::Relation(relation))
    }

    /// Appends an activity followed by its `used`/`wasGeneratedBy` relations
    /// and associations with `agents`.
    pub fn record_activity(
        &mut self,
        activity: ProvActivity,
        agents: &[&str],
    ) -> Result<(u64, u64), LedgerError> {
        let id = activity.id.clone();
        let used = activity.used.clone();
        let generated = activity.generated.clone();
        let first = self.append(Payload::Activity(activity))?.seq;
        let mut last = first;
        for e in used {
            last = self.relate(ProvRelation::Used { activity: id.clone(), entity: e })?.seq;
        }
        for e in generated {
            last = self.relate(ProvRelation::WasGeneratedBy { entity: e, activity: id.clone() })?.seq;
        }
        for a in agents {
            last = self
                .relate(ProvRelation::WasAssociatedWith { activity: id.clone(), agent: (*a).to_owned() })?
                .seq;
        }
        Ok((first, last))
    }

    /// Test hook: overwrite committed bytes of one entry.
    #[doc(hidden)]
    pub fn tamper_line(&mut self, seq: usize, f: impl FnOnce(&mut Vec<u8>)) {
        f(&mut self.lines[seq]);
    }
}

pub fn verify_file(path: impl AsRef<Path>) -> std::io::Result<ChainStatus> {
    Ok(verify_bytes(&fs::read(path)?))
}
