//! Content-addressed evidence corpus and deterministic lexical retrieval.
//!
//! On disk: `objects/<first2>/<hash>` holds content bytes and `index.json`
//! maps hash to admissibility metadata.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{canonical_hash, is_sha256_hex, sha256_hex, to_canonical_bytes};
use crate::knowledge::{token_set, CaseKnowledgeGraph};
use crate::ledger::{
    attr, ActivityKind, Attributes, EntityKind, Ledger, LedgerError, ProvActivity, ProvAgent,
    ProvEntity,
};
use crate::policy::PolicySet;

pub const SCORING_VERSION: &str = "token-overlap-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub corpus_id: String,
    pub source_class: String,
    pub title: String,
    pub ingested_at: String,
    pub ingested_by: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub hash: String,
    pub corpus_id: String,
    pub source_class: String,
    pub title: String,
    pub content: String,
    pub ingested_at: String,
    pub ingested_by: String,
}

impl EvidenceItem {
    pub fn entity_id(&self) -> String {
        evidence_entity_id(&self.hash)
    }
}

pub fn evidence_entity_id(hash: &str) -> String {
    format!("evidence:{hash}")
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("evidence content must be non-empty")]
    EmptyContent,
    #[error("evidence store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("stored object {0} does not match its hash")]
    IntegrityError(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Read access used by the validation kernel.
pub trait EvidenceLookup {
    /// `Ok(None)` means the hash is unknown; an object whose bytes no longer
    /// match its hash is an error, never a silent result.
    fn lookup(&self, hash: &str) -> Result<Option<EvidenceItem>, StoreError>;
}

#[derive(Debug, Clone)]
enum Backend {
    Memory(Arc<HashMap<String, String>>),
    Dir(PathBuf),
}

impl Backend {
    fn read(&self, hash: &str) -> Result<String, StoreError> {
        match self {
            Backend::Memory(m) => m.get(hash).cloned().ok_or_else(|| StoreError::IntegrityError(hash.to_owned())),
            Backend::Dir(root) => {
                let path = object_path(root, hash);
                match fs::read(&path) {
                    Ok(bytes) => String::from_utf8(bytes).map_err(|_| StoreError::IntegrityError(hash.to_owned())),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                        Err(StoreError::IntegrityError(hash.to_owned()))
                    }
                    Err(e) => Err(StoreError::StoreUnavailable(e.to_string())),
                }
            }
        }
    }
}

fn object_path(root: &Path, hash: &str) -> PathBuf {
    root.join("objects").join(&hash[..2]).join(hash)
}

#[derive(Debug, Clone)]
pub struct EvidenceStore {
    index: BTreeMap<String, IndexEntry>,
    backend: Backend,
}

impl Default for EvidenceStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

pub struct IngestRequest<'a> {
    pub content: &'a str,
    pub corpus_id: &'a str,
    pub source_class: &'a str,
    pub title: &'a str,
    pub agent: &'a ProvAgent,
}

impl EvidenceStore {
    pub fn in_memory() -> Self {
        Self { index: BTreeMap::new(), backend: Backend::Memory(Arc::default()) }
    }

    /// Opens (creating if needed) the directory store rooted at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let unavailable = |e: std::io::Error| StoreError::StoreUnavailable(e.to_string());
        fs::create_dir_all(root.join("objects")).map_err(unavailable)?;
        let index_path = root.join("index.json");
        let index = match fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::StoreUnavailable(format!("index.json: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(unavailable(e)),
        };
        Ok(Self { index, backend: Backend::Dir(root) })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Index version; equals the number of items since the store is
    /// append-only.
    pub fn version(&self) -> u64 {
        self.index.len() as u64
    }

    pub fn index(&self) -> &BTreeMap<String, IndexEntry> {
        &self.index
    }

    /// Stores `content` under its hash and logs the ingestion. Re-ingesting
    /// identical bytes returns the existing item unchanged.
    pub fn ingest(&mut self, req: IngestRequest<'_>, ledger: &mut Ledger) -> Result<EvidenceItem, StoreError> {
        if req.content.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let hash = sha256_hex(req.content.as_bytes());
        if self.index.contains_key(&hash) {
            return self.lookup(&hash)?.ok_or(StoreError::IntegrityError(hash));
        }
        let entry = IndexEntry {
            corpus_id: req.corpus_id.to_owned(),
            source_class: req.source_class.to_owned(),
            title: req.title.to_owned(),
            ingested_at: ledger.now(),
            ingested_by: req.agent.id.clone(),
        };
        match &mut self.backend {
            Backend::Memory(m) => {
                Arc::make_mut(m).insert(hash.clone(), req.content.to_owned());
            }
            Backend::Dir(root) => {
                let path = object_path(root, &hash);
                let io = |e: std::io::Error| StoreError::StoreUnavailable(e.to_string());
                fs::create_dir_all(path.parent().expect("object dir")).map_err(io)?;
                fs::write(&path, req.content.as_bytes()).map_err(io)?;
                let mut next = self.index.clone();
                next.insert(hash.clone(), entry.clone());
                let tmp = root.join("index.json.tmp");
                fs::write(&tmp, to_canonical_bytes(&next)).map_err(io)?;
                fs::rename(&tmp, root.join("index.json")).map_err(io)?;
            }
        }
        self.index.insert(hash.clone(), entry.clone());

        ledger.ensure_agent(req.agent.clone())?;
        let entity_id = evidence_entity_id(&hash);
        let mut attrs = Attributes::new();
        attrs.insert(attr::TITLE.into(), entry.title.clone());
        attrs.insert(attr::SOURCE_CLASS.into(), entry.source_class.clone());
        attrs.insert(attr::CORPUS_ID.into(), entry.corpus_id.clone());
        ledger.ensure_entity(ProvEntity {
            id: entity_id.clone(),
            kind: EntityKind::EvidenceItem,
            content_hash: hash.clone(),
            attributes: attrs,
        })?;
        let now = ledger.now();
        ledger.record_activity(
            ProvActivity {
                id: format!("ingest:{hash}"),
                kind: ActivityKind::Ingest,
                started_at: entry.ingested_at.clone(),
                ended_at: now,
                used: vec![],
                generated: vec![entity_id],
                attributes: Attributes::new(),
            },
            &[req.agent.id.as_str()],
        )?;

        Ok(EvidenceItem {
            hash,
            corpus_id: entry.corpus_id,
            source_class: entry.source_class,
            title: entry.title,
            content: req.content.to_owned(),
            ingested_at: entry.ingested_at,
            ingested_by: entry.ingested_by,
        })
    }

    /// A read-only view pinned to the current index version.
    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot { index: Arc::new(self.index.clone()), backend: self.backend.clone() }
    }

    #[doc(hidden)]
    pub fn corrupt_for_tests(&mut self, hash: &str, content: &str) {
        match &mut self.backend {
            Backend::Memory(m) => {
                Arc::make_mut(m).insert(hash.to_owned(), content.to_owned());
            }
            Backend::Dir(root) => fs::write(object_path(root, hash), content).expect("write object"),
        }
    }

    #[doc(hidden)]
    pub fn forget_for_tests(&mut self, hash: &str) {
        self.index.remove(hash);
    }
}

impl EvidenceLookup for EvidenceStore {
    fn lookup(&self, hash: &str) -> Result<Option<EvidenceItem>, StoreError> {
        lookup_in(&self.index, &self.backend, hash)
    }
}

fn lookup_in(
    index: &BTreeMap<String, IndexEntry>,
    backend: &Backend,
    hash: &str,
) -> Result<Option<EvidenceItem>, StoreError> {
    if !is_sha256_hex(hash) {
        return Ok(None);
    }
    let Some(entry) = index.get(hash) else { return Ok(None) };
    let content = backend.read(hash)?;
    if sha256_hex(content.as_bytes()) != hash {
        return Err(StoreError::IntegrityError(hash.to_owned()));
    }
    Ok(Some(EvidenceItem {
        hash: hash.to_owned(),
        corpus_id: entry.corpus_id.clone(),
        source_class: entry.source_class.clone(),
        title: entry.title.clone(),
        content,
        ingested_at: entry.ingested_at.clone(),
        ingested_by: entry.ingested_by.clone(),
    }))
}

#[derive(Debug, Clone)]
pub struct StoreSnapshot {
    index: Arc<BTreeMap<String, IndexEntry>>,
    backend: Backend,
}

impl StoreSnapshot {
    pub fn version(&self) -> u64 {
        self.index.len() as u64
    }

    pub fn hashes(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    #[doc(hidden)]
    pub fn without_for_tests(&self, hash: &str) -> StoreSnapshot {
        let mut index = (*self.index).clone();
        index.remove(hash);
        StoreSnapshot { index: Arc::new(index), backend: self.backend.clone() }
    }
}

impl EvidenceLookup for StoreSnapshot {
    fn lookup(&self, hash: &str) -> Result<Option<EvidenceItem>, StoreError> {
        lookup_in(&self.index, &self.backend, hash)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub hash: String,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub k: u32,
    pub scoring_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalSet {
    pub id: String,
    pub kg_hash: String,
    pub policy_fingerprint: String,
    pub items: Vec<ScoredItem>,
    pub params: RetrievalParams,
}

impl RetrievalSet {
    pub fn entity_id(&self) -> String {
        format!("retrieval:{}", self.id)
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.items.iter().any(|i| i.hash == hash)
    }
}

/// Distinct-token overlap between KG keywords and item content.
pub fn overlap_score(keywords: &BTreeSet<&str>, content: &str) -> u32 {
    token_set(content).iter().filter(|t| keywords.contains(t.as_str())).count() as u32
}

/// Top-k admissible items by (score desc, hash asc). Items scoring zero are
/// not retrieved.
pub fn retrieve_evidence(
    kg: &CaseKnowledgeGraph,
    policy: &PolicySet,
    store: &StoreSnapshot,
) -> Result<RetrievalSet, StoreError> {
    let keywords = kg.keyword_set();
    let mut scored = Vec::new();
    for (hash, entry) in store.index.iter() {
        let admissible = policy
            .source_class(&entry.source_class)
            .is_some_and(|c| c.admits_corpus(&entry.corpus_id));
        if !admissible {
            continue;
        }
        let item = store.lookup(hash)?.ok_or_else(|| StoreError::IntegrityError(hash.clone()))?;
        let score = overlap_score(&keywords, &item.content);
        if score > 0 {
            scored.push(ScoredItem { hash: hash.clone(), score });
        }
    }
    scored.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.hash.cmp(&b.hash)));
    scored.truncate(policy.retrieval_k as usize);

    let kg_hash = kg.hash();
    let policy_fingerprint = policy.fingerprint();
    let k = policy.retrieval_k;
    let id = canonical_hash(&(
        &kg_hash,
        &policy_fingerprint,
        k,
        scored.iter().map(|s| s.hash.as_str()).collect::<Vec<_>>(),
    ));
    Ok(RetrievalSet {
        id,
        kg_hash,
        policy_fingerprint,
        items: scored,
        params: RetrievalParams { k, scoring_version: SCORING_VERSION.to_owned() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::knowledge::{build_case_knowledge_graph, CaseDocument};
    use crate::ledger::AgentKind;
    use crate::policy::{AssumptionPolicy, SourceClass};

    fn clerk() -> ProvAgent {
        ProvAgent { id: "clerk".into(), kind: AgentKind::Human, display_name: "Clerk".into() }
    }

    fn ledger() -> Ledger {
        Ledger::in_memory(Arc::new(FixedClock::epoch()))
    }

    fn ingest(store: &mut EvidenceStore, ledger: &mut Ledger, content: &str, class: &str) -> EvidenceItem {
        store
            .ingest(
                IngestRequest { content, corpus_id: "c1", source_class: class, title: "t", agent: &clerk() },
                ledger,
            )
            .unwrap()
    }

    fn policy(classes: &[&str]) -> PolicySet {
        PolicySet {
            id: "p".into(),
            version: 1,
            source_classes: classes
                .iter()
                .map(|c| SourceClass { id: (*c).into(), description: String::new(), scope: BTreeSet::new() })
                .collect(),
            coverage: vec![],
            consistency: vec![],
            assumption_policy: AssumptionPolicy::BlockPending,
            retrieval_k: 5,
            max_repair_rounds: 3,
        }
    }

    fn kg(words: &str) -> CaseKnowledgeGraph {
        let case: CaseDocument = serde_json::from_value(serde_json::json!({
            "case_id": "c", "decision_class": "d",
            "entities": [{"id": "p", "kind": "person", "attributes": {"note": words}}]
        }))
        .unwrap();
        build_case_knowledge_graph(&case).unwrap()
    }

    #[test]
    fn ingest_is_content_addressed_and_idempotent() {
        let (mut s, mut l) = (EvidenceStore::in_memory(), ledger());
        let a = ingest(&mut s, &mut l, "Housing statute section 4", "statute");
        assert_eq!(a.hash.len(), 64);
        let before = l.len();
        let b = ingest(&mut s, &mut l, "Housing statute section 4", "statute");
        assert_eq!(a.hash, b.hash);
        assert_eq!(s.len(), 1);
        assert_eq!(l.len(), before, "re-ingest logs nothing");
        assert_eq!(s.lookup(&a.hash).unwrap().unwrap().content, "Housing statute section 4");
        assert!(l.record().activity(&format!("ingest:{}", a.hash)).is_some());
        assert!(matches!(
            s.ingest(
                IngestRequest { content: "", corpus_id: "c", source_class: "x", title: "t", agent: &clerk() },
                &mut l
            ),
            Err(StoreError::EmptyContent)
        ));
    }

    #[test]
    fn lookup_unknown_and_tampered() {
        let (mut s, mut l) = (EvidenceStore::in_memory(), ledger());
        assert!(s.lookup(&sha256_hex("nope")).unwrap().is_none());
        let a = ingest(&mut s, &mut l, "original", "statute");
        s.corrupt_for_tests(&a.hash, "tampered");
        assert!(matches!(s.lookup(&a.hash), Err(StoreError::IntegrityError(_))));
    }

    #[test]
    fn directory_store_layout_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let mut l = ledger();
        let hash = {
            let mut s = EvidenceStore::open(dir.path()).unwrap();
            ingest(&mut s, &mut l, "Record E2 income assessment", "case_records").hash
        };
        let obj = dir.path().join("objects").join(&hash[..2]).join(&hash);
        assert!(obj.exists());
        let s = EvidenceStore::open(dir.path()).unwrap();
        assert_eq!(s.lookup(&hash).unwrap().unwrap().source_class, "case_records");
        fs::write(&obj, "Record E2 income assessment!").unwrap();
        assert!(matches!(s.lookup(&hash), Err(StoreError::IntegrityError(_))));
    }

    #[test]
    fn retrieval_filters_scores_and_breaks_ties() {
        let (mut s, mut l) = (EvidenceStore::in_memory(), ledger());
        let hit = ingest(&mut s, &mut l, "eligibility criteria for benefits", "statute");
        ingest(&mut s, &mut l, "eligibility thread on a forum", "web_forum");
        ingest(&mut s, &mut l, "unrelated text", "statute");
        let r = retrieve_evidence(&kg("eligibility"), &policy(&["statute"]), &s.snapshot()).unwrap();
        assert_eq!(r.items, vec![ScoredItem { hash: hit.hash.clone(), score: 1 }]);

        let r = retrieve_evidence(&kg("eligibility"), &policy(&["web_forum_only"]), &s.snapshot()).unwrap();
        assert!(r.items.is_empty());

        let x = ingest(&mut s, &mut l, "benefits office", "statute");
        let y = ingest(&mut s, &mut l, "benefits claimant", "statute");
        let r = retrieve_evidence(&kg("benefits"), &policy(&["statute"]), &s.snapshot()).unwrap();
        let mut tied: Vec<&str> = vec![&hit.hash, &x.hash, &y.hash];
        tied.sort();
        assert_eq!(r.items.iter().map(|i| i.hash.as_str()).collect::<Vec<_>>(), tied);
    }

    #[test]
    fn snapshot_hides_later_ingests() {
        let (mut s, mut l) = (EvidenceStore::in_memory(), ledger());
        ingest(&mut s, &mut l, "eligibility one", "statute");
        let snap = s.snapshot();
        let later = ingest(&mut s, &mut l, "eligibility two", "statute");
        assert!(snap.lookup(&later.hash).unwrap().is_none());
        let a = retrieve_evidence(&kg("eligibility"), &policy(&["statute"]), &snap).unwrap();
        let b = retrieve_evidence(&kg("eligibility"), &policy(&["statute"]), &snap).unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(a.items.len(), 1);
    }
}
