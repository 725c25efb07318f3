//! Case knowledge graph built from pre-structured case documents.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::canonical_hash;

/// Fixed stop-list applied to every tokenization (50 words).
pub const STOP_WORDS: [&str; 50] = [
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "but",
    "by", "can", "for", "from", "had", "has", "have", "he", "her", "his", "if", "in", "into", "is",
    "it", "its", "not", "of", "on", "or", "our", "she", "that", "the", "their", "there", "they",
    "this", "to", "was", "we", "were", "which", "will", "with", "you",
];

/// Lowercased alphanumeric tokens minus the stop-list, in input order.
/// Underscores split tokens, so class tags like `identity_verified` yield
/// `identity` and `verified`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Person,
    Org,
    Asset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgEntity {
    pub id: String,
    pub kind: EntityKind,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgEvent {
    pub id: String,
    pub label: String,
    pub timestamp: String,
    #[serde(default)]
    pub participants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgRelation {
    pub src: String,
    pub label: String,
    pub dst: String,
}

/// Structured case input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDocument {
    pub case_id: String,
    /// Claim class of the decision being argued; selects coverage templates.
    pub decision_class: String,
    #[serde(default)]
    pub entities: Vec<KgEntity>,
    #[serde(default)]
    pub events: Vec<KgEvent>,
    #[serde(default)]
    pub relations: Vec<KgRelation>,
}

impl CaseDocument {
    pub fn from_bytes(bytes: impl AsRef<[u8]>) -> Result<Self, CaseError> {
        serde_json::from_slice(bytes.as_ref()).map_err(|e| CaseError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseKnowledgeGraph {
    pub case_id: String,
    pub decision_class: String,
    pub entities: Vec<KgEntity>,
    pub events: Vec<KgEvent>,
    pub relations: Vec<KgRelation>,
    /// Sorted token multiset.
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaseError {
    #[error("malformed case document: {0}")]
    Malformed(String),
    #[error("case has no entities")]
    EmptyCase,
    #[error("entity id `{0}` declared more than once")]
    DuplicateEntityId(String),
    #[error("event `{event}` references unknown participant `{participant}`")]
    DanglingParticipant { event: String, participant: String },
    #[error("relation `{label}` references unknown entity `{entity}`")]
    DanglingRelation { label: String, entity: String },
}

pub fn build_case_knowledge_graph(case: &CaseDocument) -> Result<CaseKnowledgeGraph, CaseError> {
    if case.case_id.is_empty() || case.decision_class.is_empty() {
        return Err(CaseError::Malformed("case_id and decision_class must be non-empty".into()));
    }
    if case.entities.is_empty() {
        return Err(CaseError::EmptyCase);
    }
    let mut entities = case.entities.clone();
    entities.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = entities.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(CaseError::DuplicateEntityId(w[0].id.clone()));
    }
    let known: BTreeSet<&str> = entities.iter().map(|e| e.id.as_str()).collect();

    let mut events = case.events.clone();
    events.sort_by(|a, b| a.id.cmp(&b.id));
    for ev in &events {
        if let Some(p) = ev.participants.iter().find(|p| !known.contains(p.as_str())) {
            return Err(CaseError::DanglingParticipant { event: ev.id.clone(), participant: p.clone() });
        }
    }
    let mut relations = case.relations.clone();
    relations.sort();
    for r in &relations {
        for end in [&r.src, &r.dst] {
            if !known.contains(end.as_str()) {
                return Err(CaseError::DanglingRelation { label: r.label.clone(), entity: end.clone() });
            }
        }
    }

    let mut keywords: Vec<String> = Vec::new();
    for e in &entities {
        for v in e.attributes.values() {
            keywords.extend(tokenize(v));
        }
    }
    for ev in &events {
        keywords.extend(tokenize(&ev.label));
    }
    for r in &relations {
        keywords.extend(tokenize(&r.label));
    }
    keywords.sort();

    Ok(CaseKnowledgeGraph {
        case_id: case.case_id.clone(),
        decision_class: case.decision_class.clone(),
        entities,
        events,
        relations,
        keywords,
    })
}

impl CaseKnowledgeGraph {
    pub fn hash(&self) -> String {
        canonical_hash(self)
    }

    pub fn keyword_set(&self) -> BTreeSet<&str> {
        self.keywords.iter().map(String::as_str).collect()
    }

    pub fn has_entity(&self, id: &str) -> bool {
        self.entities.iter().any(|e| e.id == id)
    }
}
