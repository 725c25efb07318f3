//! Reconstruction queries over a persisted graph and the ledger.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::emit::graph_entity_id;
use super::{attr, ActivityKind, AgentKind, ProvRelation, ProvenanceRecord};
use crate::evidence::evidence_entity_id;
use crate::model::{Approval, ArgumentGraph, EdgeKind, Generator, NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("unknown claim `{0}`")]
    UnknownClaim(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` is not ai-generated")]
    NotAiGenerated(String),
    #[error("unknown graph `{0}`")]
    UnknownGraph(String),
    #[error("ledger disagrees with graph: {0}")]
    Inconsistent(String),
}

impl AuditError {
    pub fn code(&self) -> &'static str {
        match self {
            AuditError::UnknownClaim(_) => "UnknownClaim",
            AuditError::UnknownNode(_) => "UnknownNode",
            AuditError::NotAiGenerated(_) => "NotAiGenerated",
            AuditError::UnknownGraph(_) => "UnknownGraph",
            AuditError::Inconsistent(_) => "Inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub node_id: NodeId,
    pub evidence_hash: String,
    pub entity_id: String,
    pub source_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionRef {
    pub node_id: NodeId,
    pub approval: Approval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceAudit {
    pub graph_id: String,
    pub claim_id: NodeId,
    pub evidence: Vec<EvidenceRef>,
    pub assumptions: Vec<AssumptionRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationContext {
    pub graph_id: String,
    pub node_id: NodeId,
    pub activity_id: String,
    pub model_id: String,
    pub model_version: String,
    pub prompt_template_id: String,
    pub prompt_template_version: String,
    pub retrieval_set_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalEntry {
    pub agent: String,
    pub action: String,
    pub timestamp: String,
    pub activity_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<String>,
}

fn persist_used(prov: &ProvenanceRecord, graph_id: &str) -> Option<BTreeSet<String>> {
    let persists: Vec<_> = prov
        .activities
        .values()
        .filter(|a| a.kind == ActivityKind::Persist && a.attr(attr::GRAPH_ID) == Some(graph_id))
        .map(|a| a.id.as_str())
        .collect();
    if persists.is_empty() {
        return None;
    }
    Some(
        prov.relations
            .iter()
            .filter_map(|r| match r {
                ProvRelation::Used { activity, entity } if persists.contains(&activity.as_str()) => {
                    Some(entity.clone())
                }
                _ => None,
            })
            .collect(),
    )
}

/// Evidence items backing `claim` in the persisted graph `g`, checked
/// against what the persist activity recorded as used.
pub fn audit_evidence_for_claim(
    g: &ArgumentGraph,
    prov: &ProvenanceRecord,
    claim: &str,
) -> Result<EvidenceAudit, AuditError> {
    let claim_id = NodeId::new(claim);
    let node = g.node(&claim_id).filter(|n| n.kind() == NodeKind::Claim);
    if node.is_none() {
        return Err(AuditError::UnknownClaim(claim.to_owned()));
    }
    let graph_id = g.id().0;
    let used = persist_used(prov, &graph_id)
        .ok_or_else(|| AuditError::Inconsistent(format!("graph {graph_id} has no persist activity")))?;

    let mut evidence = Vec::new();
    let mut assumptions = Vec::new();
    for e in g.incoming(&claim_id) {
        let Some(src) = g.node(&e.src) else { continue };
        match e.kind {
            EdgeKind::Supports => {
                let crate::model::NodeBody::Evidence { source_class, evidence_hash } = &src.body else {
                    continue;
                };
                let entity_id = evidence_entity_id(evidence_hash);
                if !used.contains(&entity_id) {
                    return Err(AuditError::Inconsistent(format!(
                        "{entity_id} supports {claim} but was not used by the persist activity"
                    )));
                }
                let title = prov.entities.get(&entity_id).and_then(|en| en.attributes.get(attr::TITLE)).cloned();
                evidence.push(EvidenceRef {
                    node_id: src.id.clone(),
                    evidence_hash: evidence_hash.clone(),
                    entity_id,
                    source_class: source_class.clone(),
                    title,
                });
            }
            EdgeKind::Underpins => {
                if let Some(a) = src.approval() {
                    assumptions.push(AssumptionRef { node_id: src.id.clone(), approval: a.clone() });
                }
            }
            _ => {}
        }
    }
    Ok(EvidenceAudit { graph_id, claim_id, evidence, assumptions })
}

/// Model, prompt template and retrieval set behind an ai-generated node.
pub fn audit_generation_context(
    g: &ArgumentGraph,
    prov: &ProvenanceRecord,
    node: &str,
) -> Result<GenerationContext, AuditError> {
    let n = g.node(&NodeId::new(node)).ok_or_else(|| AuditError::UnknownNode(node.to_owned()))?;
    if n.generator != Generator::Ai {
        return Err(AuditError::NotAiGenerated(node.to_owned()));
    }
    let r = n
        .generation_ref
        .as_deref()
        .ok_or_else(|| AuditError::Inconsistent(format!("{node} has no generation_ref")))?;
    let act = prov
        .activity(r)
        .filter(|a| a.kind.is_generation())
        .ok_or_else(|| AuditError::Inconsistent(format!("generation activity {r} is not recorded")))?;
    let get = |k: &str| {
        act.attr(k)
            .map(str::to_owned)
            .ok_or_else(|| AuditError::Inconsistent(format!("{r} lacks {k}")))
    };
    Ok(GenerationContext {
        graph_id: g.id().0,
        node_id: n.id.clone(),
        activity_id: act.id.clone(),
        model_id: get(attr::MODEL_ID)?,
        model_version: get(attr::MODEL_VERSION)?,
        prompt_template_id: get(attr::PROMPT_TEMPLATE_ID)?,
        prompt_template_version: get(attr::PROMPT_TEMPLATE_VERSION)?,
        retrieval_set_id: get(attr::RETRIEVAL_SET_ID)?,
    })
}

/// The graph and every graph it was derived from, as bare ids.
fn lineage(prov: &ProvenanceRecord, graph_id: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![graph_entity_id(graph_id)];
    while let Some(e) = stack.pop() {
        if !seen.insert(e.clone()) {
            continue;
        }
        stack.extend(prov.derived_from(&e).filter(|p| p.starts_with("graph:")).map(str::to_owned));
    }
    seen.into_iter().filter_map(|e| e.strip_prefix("graph:").map(str::to_owned)).collect()
}

/// Approve, edit and override activities by human agents on `graph_id` or
/// any graph it was revised from, in ledger order.
pub fn audit_approvals(prov: &ProvenanceRecord, graph_id: &str) -> Result<Vec<ApprovalEntry>, AuditError> {
    if !prov.entities.contains_key(&graph_entity_id(graph_id)) {
        return Err(AuditError::UnknownGraph(graph_id.to_owned()));
    }
    let graphs = lineage(prov, graph_id);
    let mut out = Vec::new();
    for act in prov.activities_in_seq_order() {
        if !matches!(act.kind, ActivityKind::Approve | ActivityKind::Edit | ActivityKind::Override) {
            continue;
        }
        if !act.attr(attr::GRAPH_ID).is_some_and(|g| graphs.contains(g)) {
            continue;
        }
        for agent in prov.associated_agents(&act.id).filter(|a| a.kind == AgentKind::Human) {
            out.push(ApprovalEntry {
                agent: agent.id.clone(),
                action: act.attr(attr::ACTION).unwrap_or(act.kind.as_str()).to_owned(),
                timestamp: act.ended_at.clone(),
                activity_id: act.id.clone(),
                node_id: act.attr(attr::NODE_ID).map(str::to_owned),
            });
        }
    }
    Ok(out)
}
