use std::collections::BTreeSet;

use super::{ConstraintId, RepairHint, Violation};
use crate::evidence::{EvidenceLookup, StoreError};
use crate::ledger::{attr, ActivityKind, ProvenanceRecord, ANNOTATE_ACTION};
use crate::model::{
    Approval, ArgNode, ArgumentGraph, EdgeId, EdgeKind, Generator, NodeBody, NodeId, NodeKind,
    Resolution,
};
use crate::policy::{AssumptionPolicy, PolicySet};

fn violation(
    constraint: ConstraintId,
    node_ids: Vec<NodeId>,
    edge_ids: Vec<EdgeId>,
    message: String,
    repair_hint: RepairHint,
) -> Violation {
    Violation { constraint, node_ids, edge_ids, message, repair_hint }
}

/// C1: every claim has an incoming SUPPORTS edge or is underpinned by an
/// assumption; under `block_pending` that assumption must be approved.
pub fn check_evidence_completeness(g: &ArgumentGraph, p: &PolicySet) -> Vec<Violation> {
    let mut out = Vec::new();
    for claim in g.nodes_of(NodeKind::Claim) {
        let supported = g.incoming(&claim.id).any(|e| e.kind == EdgeKind::Supports);
        let assumptions: Vec<&ArgNode> = g
            .incoming(&claim.id)
            .filter(|e| e.kind == EdgeKind::Underpins)
            .filter_map(|e| g.node(&e.src))
            .collect();
        if !supported && assumptions.is_empty() {
            out.push(violation(
                ConstraintId::C1EvidenceCompleteness,
                vec![claim.id.clone()],
                vec![],
                format!("claim `{}` has no supporting evidence and no assumption", claim.id),
                RepairHint::AddEvidence,
            ));
            continue;
        }
        let approved = assumptions.iter().any(|a| a.approval().is_some_and(Approval::is_approved));
        if !supported && !approved && p.assumption_policy == AssumptionPolicy::BlockPending {
            let mut ids = vec![claim.id.clone()];
            ids.extend(assumptions.iter().map(|a| a.id.clone()));
            out.push(violation(
                ConstraintId::C1EvidenceCompleteness,
                ids,
                vec![],
                format!("claim `{}` rests only on assumptions awaiting human approval", claim.id),
                RepairHint::ApproveAssumption,
            ));
        }
    }
    out
}

/// C2: every evidence node cites a stored item of an authorized source class,
/// within that class's corpus scope.
pub fn check_evidence_admissibility(
    g: &ArgumentGraph,
    p: &PolicySet,
    store: &dyn EvidenceLookup,
) -> Result<Vec<Violation>, StoreError> {
    let mut out = Vec::new();
    for node in g.nodes_of(NodeKind::Evidence) {
        let NodeBody::Evidence { source_class, evidence_hash } = &node.body else { continue };
        let problem = match p.source_class(source_class) {
            None => Some(format!("source class `{source_class}` is not authorized by the policy")),
            Some(class) => match store.lookup(evidence_hash)? {
                None => Some(format!("cited evidence {evidence_hash} does not exist in the store")),
                Some(item) if item.source_class != *source_class => Some(format!(
                    "cited evidence is stored under class `{}`, not `{source_class}`",
                    item.source_class
                )),
                Some(item) if !class.admits_corpus(&item.corpus_id) => Some(format!(
                    "corpus `{}` is outside the scope of class `{source_class}`",
                    item.corpus_id
                )),
                Some(_) => None,
            },
        };
        if let Some(msg) = problem {
            out.push(violation(
                ConstraintId::C2EvidenceAdmissibility,
                vec![node.id.clone()],
                vec![],
                format!("evidence `{}`: {msg}", node.id),
                RepairHint::ReplaceEvidence,
            ));
        }
    }
    Ok(out)
}

/// C3: each top-level claim governed by a coverage template reaches a claim
/// of every required class through refinement edges.
pub fn check_rule_coverage(g: &ArgumentGraph, p: &PolicySet) -> Vec<Violation> {
    let mut out = Vec::new();
    for top in g.top_level() {
        let Some(class) = g.node(top).and_then(ArgNode::claim_class) else { continue };
        let required = p.required_classes(class);
        if required.is_empty() {
            continue;
        }
        let present: BTreeSet<&str> = g
            .refinement_descendants(top)
            .iter()
            .filter(|id| *id != top)
            .filter_map(|id| g.node(id).and_then(ArgNode::claim_class))
            .collect();
        for missing in required.iter().filter(|c| !present.contains(c.as_str())) {
            out.push(violation(
                ConstraintId::C3RuleCoverage,
                vec![top.clone()],
                vec![],
                format!("top-level claim `{top}` ({class}) lacks required subclaim class `{missing}`"),
                RepairHint::AddSubclaim { class: missing.clone() },
            ));
        }
    }
    out
}

fn contradictory(p: &PolicySet, a: &ArgNode, b: &ArgNode) -> bool {
    let (
        NodeBody::Claim { claim_class: ca, polarity: pa, subject: sa },
        NodeBody::Claim { claim_class: cb, polarity: pb, subject: sb },
    ) = (&a.body, &b.body)
    else {
        return false;
    };
    if p.is_mutex(ca, cb) {
        return true;
    }
    p.has_polarity_rule() && sa.is_some() && sa == sb && pa != pb
}

/// C4: every contradictory pair of claims is joined by an ATTACKS edge that
/// names exactly one prevailing side.
pub fn check_non_contradiction(g: &ArgumentGraph, p: &PolicySet) -> Vec<Violation> {
    let claims: Vec<&ArgNode> = g.nodes_of(NodeKind::Claim).collect();
    let mut out = Vec::new();
    for (i, a) in claims.iter().enumerate() {
        for b in &claims[i + 1..] {
            if !contradictory(p, a, b) {
                continue;
            }
            let attacks: Vec<_> = g
                .edges()
                .filter(|e| e.kind == EdgeKind::Attacks)
                .filter(|e| (e.src == a.id && e.dst == b.id) || (e.src == b.id && e.dst == a.id))
                .collect();
            let pair = vec![a.id.clone(), b.id.clone()];
            if attacks.is_empty() {
                out.push(violation(
                    ConstraintId::C4NonContradiction,
                    pair,
                    vec![],
                    format!("claims `{}` and `{}` conflict but no attack edge records it", a.id, b.id),
                    RepairHint::AddAttackEdge,
                ));
                continue;
            }
            let prevailing: BTreeSet<&NodeId> = attacks
                .iter()
                .filter_map(|e| match &e.resolution {
                    Some(Resolution::Prevailing(n)) => Some(n),
                    _ => None,
                })
                .collect();
            if prevailing.len() != 1 {
                out.push(violation(
                    ConstraintId::C4NonContradiction,
                    pair,
                    attacks.iter().map(|e| e.id.clone()).collect(),
                    format!("conflict between `{}` and `{}` has no single prevailing side", a.id, b.id),
                    RepairHint::ResolveAttack,
                ));
            }
        }
    }
    out
}

/// C5: ai-generated nodes link to a generation activity carrying model,
/// prompt template and retrieval-set identifiers; human-authored nodes and
/// approvals are backed by activities associated with a human agent.
pub fn check_provenance_completeness(g: &ArgumentGraph, prov: &ProvenanceRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let c5 = |node: &ArgNode, msg: String, hint: RepairHint| {
        violation(ConstraintId::C5ProvenanceCompleteness, vec![node.id.clone()], vec![], msg, hint)
    };
    for node in g.nodes() {
        match node.generator {
            Generator::Ai => match &node.generation_ref {
                None => out.push(c5(
                    node,
                    format!("ai-generated node `{}` has no generation_ref", node.id),
                    RepairHint::AttachGenerationRef,
                )),
                Some(r) => match prov.activity(r).filter(|a| a.kind.is_generation()) {
                    None => out.push(c5(
                        node,
                        format!("generation_ref `{r}` of `{}` does not name a recorded generation activity", node.id),
                        RepairHint::AttachGenerationRef,
                    )),
                    Some(act) => {
                        let missing: Vec<&str> =
                            attr::GENERATION_CONTEXT.into_iter().filter(|k| act.attr(k).is_none()).collect();
                        if !missing.is_empty() {
                            out.push(c5(
                                node,
                                format!("generation activity `{r}` lacks {}", missing.join(", ")),
                                RepairHint::RecordGenerationContext,
                            ));
                        }
                    }
                },
            },
            Generator::Human => {
                let recorded = prov
                    .activities_for_node(ActivityKind::Edit, node.id.as_str())
                    .filter(|a| a.attr(attr::ACTION) != Some(ANNOTATE_ACTION))
                    .any(|a| prov.is_human_associated(&a.id));
                if !recorded {
                    out.push(c5(
                        node,
                        format!("human-authored node `{}` has no edit activity by a human agent", node.id),
                        RepairHint::RecordEditActivity,
                    ));
                }
            }
            Generator::System => {}
        }
        if let Some(Approval::Approved { agent, .. }) = node.approval() {
            let recorded = prov.activities_for_node(ActivityKind::Approve, node.id.as_str()).any(|a| {
                prov.associated_agents(&a.id)
                    .any(|ag| ag.id == *agent && ag.kind == crate::ledger::AgentKind::Human)
            });
            if !recorded {
                out.push(c5(
                    node,
                    format!("approval of `{}` by `{agent}` has no recorded approve activity", node.id),
                    RepairHint::RecordApproval,
                ));
            }
        }
    }
    out
}
