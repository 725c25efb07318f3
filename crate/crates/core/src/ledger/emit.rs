use serde::{Deserialize, Serialize};

use super::{
    attr, ActivityKind, AgentKind, Attributes, EntityKind, Ledger, LedgerError, ProvActivity,
    ProvAgent, ProvEntity, ProvRelation, ProvenanceRecord,
};
use crate::canonical::{canonical_hash, sha256_hex};
use crate::drafter::DrafterMeta;
use crate::evidence::{evidence_entity_id, RetrievalSet};
use crate::kernel::ViolationReport;
use crate::knowledge::CaseKnowledgeGraph;
use crate::model::{ArgumentGraph, Generator, NodeBody};
use crate::policy::PolicySet;

pub const KERNEL_AGENT_ID: &str = "software:arggate-kernel";

/// A human action on a node that provenance must account for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanEdit {
    pub node_id: String,
    pub agent_id: String,
    pub action: String,
}

/// Inputs to [`emit_provenance`] for one accepted graph.
pub struct EmitContext<'a> {
    pub run_id: &'a str,
    pub graph: &'a ArgumentGraph,
    pub kg: &'a CaseKnowledgeGraph,
    pub retrieval: &'a RetrievalSet,
    pub model_meta: &'a DrafterMeta,
    pub human_meta: &'a [HumanEdit],
    pub policy: &'a PolicySet,
    pub report: &'a ViolationReport,
}

pub fn graph_entity_id(graph_id: &str) -> String {
    format!("graph:{graph_id}")
}

pub fn node_entity_id(graph_id: &str, node_id: &str) -> String {
    format!("node:{graph_id}:{node_id}")
}

pub fn package_entity_id(graph_id: &str) -> String {
    format!("package:{graph_id}")
}

pub fn policy_entity_id(p: &PolicySet) -> String {
    format!("policy:{}@{}", p.id, p.version)
}

pub fn kg_entity_id(kg_hash: &str) -> String {
    format!("kg:{kg_hash}")
}

pub(crate) fn kernel_agent() -> ProvAgent {
    ProvAgent { id: KERNEL_AGENT_ID.into(), kind: AgentKind::Software, display_name: "arggate validation kernel".into() }
}

/// Records how an accepted graph came to be: graph and node entities linked
/// to their generation activities, human edits, the accepting validate
/// activity and the persist activity that generates the decision package.
///
/// The returned record holds the appended entries plus the generation
/// activities the graph's nodes reference.
pub fn emit_provenance(ledger: &mut Ledger, ctx: &EmitContext<'_>) -> Result<ProvenanceRecord, LedgerError> {
    let start = ledger.len();
    let g = ctx.graph;
    let graph_id = g.id();
    let gid = graph_id.as_str();

    ledger.ensure_agent(kernel_agent())?;
    ledger.ensure_entity(ProvEntity {
        id: policy_entity_id(ctx.policy),
        kind: EntityKind::Policy,
        content_hash: ctx.policy.fingerprint(),
        attributes: Attributes::new(),
    })?;
    ledger.ensure_entity(ProvEntity {
        id: kg_entity_id(&ctx.kg.hash()),
        kind: EntityKind::CaseKg,
        content_hash: ctx.kg.hash(),
        attributes: Attributes::new(),
    })?;
    ledger.ensure_entity(ProvEntity {
        id: ctx.retrieval.entity_id(),
        kind: EntityKind::RetrievalSet,
        content_hash: ctx.retrieval.id.clone(),
        attributes: Attributes::new(),
    })?;
    ledger.ensure_entity(ctx.model_meta.prompt_entity())?;
    ledger.ensure_entity(ctx.model_meta.model_card_entity())?;
    let graph_entity = graph_entity_id(gid);
    ledger.ensure_entity(ProvEntity {
        id: graph_entity.clone(),
        kind: EntityKind::AgGraph,
        content_hash: gid.to_owned(),
        attributes: Attributes::new(),
    })?;

    let doc = g.to_document();
    let mut evidence_entities = Vec::new();
    for (node, raw) in g.nodes().zip(&doc.nodes) {
        let entity = node_entity_id(gid, node.id.as_str());
        ledger.ensure_entity(ProvEntity {
            id: entity.clone(),
            kind: EntityKind::AgNode,
            content_hash: canonical_hash(raw),
            attributes: Attributes::new(),
        })?;
        if let (Generator::Ai, Some(r)) = (node.generator, &node.generation_ref) {
            if ledger.record().activity(r).is_some() {
                ledger.relate(ProvRelation::WasGeneratedBy { entity: entity.clone(), activity: r.clone() })?;
            }
        }
        if let NodeBody::Evidence { evidence_hash, .. } = &node.body {
            let ev = evidence_entity_id(evidence_hash);
            ledger.ensure_entity(ProvEntity {
                id: ev.clone(),
                kind: EntityKind::EvidenceItem,
                content_hash: evidence_hash.clone(),
                attributes: Attributes::new(),
            })?;
            ledger.relate(ProvRelation::WasDerivedFrom { generated: entity.clone(), used: ev.clone() })?;
            if !evidence_entities.contains(&ev) {
                evidence_entities.push(ev);
            }
        }
    }

    for (i, edit) in ctx.human_meta.iter().enumerate() {
        let already = ledger
            .record()
            .activities_for_node(ActivityKind::Edit, &edit.node_id)
            .filter(|a| a.attr(attr::ACTION) != Some(super::ANNOTATE_ACTION))
            .any(|a| ledger.record().associated_agents(&a.id).any(|ag| ag.id == edit.agent_id));
        let entity = node_entity_id(gid, &edit.node_id);
        if !already {
            let now = ledger.now();
            let mut attrs = Attributes::new();
            attrs.insert(attr::NODE_ID.into(), edit.node_id.clone());
            attrs.insert(attr::GRAPH_ID.into(), gid.to_owned());
            attrs.insert(attr::ACTION.into(), edit.action.clone());
            ledger.record_activity(
                ProvActivity {
                    id: format!("edit:{}:{gid}:{i}", ctx.run_id),
                    kind: ActivityKind::Edit,
                    started_at: now.clone(),
                    ended_at: now,
                    used: vec![],
                    generated: vec![],
                    attributes: attrs,
                },
                &[edit.agent_id.as_str()],
            )?;
        }
        if ledger.record().entities.contains_key(&entity) {
            ledger.relate(ProvRelation::WasAttributedTo { entity, agent: edit.agent_id.clone() })?;
        }
    }

    let now = ledger.now();
    let mut attrs = Attributes::new();
    attrs.insert(attr::OUTCOME.into(), "valid".into());
    attrs.insert(attr::POLICY_FINGERPRINT.into(), ctx.policy.fingerprint());
    attrs.insert(attr::POLICY_ID.into(), ctx.policy.id.clone());
    attrs.insert(attr::POLICY_VERSION.into(), ctx.policy.version.to_string());
    attrs.insert(attr::GRAPH_ID.into(), gid.to_owned());
    attrs.insert(attr::RUN_ID.into(), ctx.run_id.to_owned());
    attrs.insert(attr::VIOLATIONS.into(), "0".into());
    let validate_id = format!("validate:{}:{}", ctx.run_id, ledger.len());
    ledger.record_activity(
        ProvActivity {
            id: validate_id,
            kind: ActivityKind::Validate,
            started_at: now.clone(),
            ended_at: now,
            used: vec![graph_entity.clone(), policy_entity_id(ctx.policy)],
            generated: vec![],
            attributes: attrs,
        },
        &[KERNEL_AGENT_ID],
    )?;

    let package = package_entity_id(gid);
    ledger.ensure_entity(ProvEntity {
        id: package.clone(),
        kind: EntityKind::DecisionPackage,
        content_hash: package_content_hash(gid, ctx.report),
        attributes: Attributes::new(),
    })?;
    let now = ledger.now();
    let mut attrs = Attributes::new();
    attrs.insert(attr::GRAPH_ID.into(), gid.to_owned());
    attrs.insert(attr::RUN_ID.into(), ctx.run_id.to_owned());
    attrs.insert(attr::CASE_ID.into(), ctx.kg.case_id.clone());
    attrs.insert(attr::POLICY_FINGERPRINT.into(), ctx.policy.fingerprint());
    let mut used = vec![graph_entity.clone(), ctx.retrieval.entity_id()];
    used.extend(evidence_entities);
    ledger.record_activity(
        ProvActivity {
            id: format!("persist:{}:{gid}", ctx.run_id),
            kind: ActivityKind::Persist,
            started_at: now.clone(),
            ended_at: now,
            used,
            generated: vec![package.clone()],
            attributes: attrs,
        },
        &[KERNEL_AGENT_ID],
    )?;
    ledger.relate(ProvRelation::WasDerivedFrom { generated: package, used: graph_entity })?;

    let mut record = ProvenanceRecord::from_entries(&ledger.entries()[start as usize..]);
    for node in g.nodes() {
        if let Some(act) = node.generation_ref.as_ref().and_then(|r| ledger.record().activity(r)) {
            record.activities.entry(act.id.clone()).or_insert_with(|| act.clone());
            if let Some(seq) = ledger.record().activity_seq.get(&act.id) {
                record.activity_seq.entry(act.id.clone()).or_insert(*seq);
            }
        }
    }
    Ok(record)
}

pub fn package_content_hash(graph_id: &str, report: &ViolationReport) -> String {
    canonical_hash(&(graph_id, sha256_hex(report.to_canonical_bytes())))
}
