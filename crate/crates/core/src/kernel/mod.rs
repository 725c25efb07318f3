//! Deterministic admissibility checks over argument graphs.
//!
//! [`valid`] runs the five constraint checks in order and returns a
//! [`Verdict`] bound to the exact graph hash and policy fingerprint it was
//! computed for. Persistence accepts nothing else.

mod checks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{EvidenceLookup, StoreError};
use crate::ledger::ProvenanceRecord;
use crate::model::{ArgumentGraph, EdgeId, GraphId, NodeId};
use crate::policy::PolicySet;

pub use checks::{
    check_evidence_admissibility, check_evidence_completeness, check_non_contradiction,
    check_provenance_completeness, check_rule_coverage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConstraintId {
    C1EvidenceCompleteness,
    C2EvidenceAdmissibility,
    C3RuleCoverage,
    C4NonContradiction,
    C5ProvenanceCompleteness,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 5] = [
        ConstraintId::C1EvidenceCompleteness,
        ConstraintId::C2EvidenceAdmissibility,
        ConstraintId::C3RuleCoverage,
        ConstraintId::C4NonContradiction,
        ConstraintId::C5ProvenanceCompleteness,
    ];

    pub fn short(self) -> &'static str {
        match self {
            ConstraintId::C1EvidenceCompleteness => "C1",
            ConstraintId::C2EvidenceAdmissibility => "C2",
            ConstraintId::C3RuleCoverage => "C3",
            ConstraintId::C4NonContradiction => "C4",
            ConstraintId::C5ProvenanceCompleteness => "C5",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RepairHint {
    /// Attach evidence (or an assumption) to the claim.
    AddEvidence,
    /// A pending assumption needs human approval.
    ApproveAssumption,
    /// Cited evidence is fabricated, unauthorized or out of scope.
    ReplaceEvidence,
    AddSubclaim { class: String },
    AddAttackEdge,
    ResolveAttack,
    AttachGenerationRef,
    /// Generation activity lacks model, prompt or retrieval identifiers.
    RecordGenerationContext,
    RecordEditActivity,
    RecordApproval,
}

impl RepairHint {
    /// Hints the reference drafter can act on without a human.
    pub fn is_self_repairable(&self) -> bool {
        matches!(self, RepairHint::AddEvidence | RepairHint::AddSubclaim { .. } | RepairHint::AttachGenerationRef)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub node_ids: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edge_ids: Vec<EdgeId>,
    pub message: String,
    pub repair_hint: RepairHint,
}

/// Serializable validation outcome; what the CLI prints and the repair loop
/// consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub valid: bool,
    pub graph_id: GraphId,
    pub policy_fingerprint: String,
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        crate::canonical::to_canonical_bytes(self)
    }

    pub fn count(&self, c: ConstraintId) -> usize {
        self.violations.iter().filter(|v| v.constraint == c).count()
    }

    pub fn has_self_repairable(&self) -> bool {
        self.violations.iter().any(|v| v.repair_hint.is_self_repairable())
    }
}

/// Kernel-issued result. Only [`valid`] constructs one, so holding a verdict
/// with `is_valid()` is proof the kernel accepted that exact graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    report: ViolationReport,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.report.valid
    }

    pub fn graph_id(&self) -> &GraphId {
        &self.report.graph_id
    }

    pub fn policy_fingerprint(&self) -> &str {
        &self.report.policy_fingerprint
    }

    pub fn violations(&self) -> &[Violation] {
        &self.report.violations
    }

    pub fn report(&self) -> &ViolationReport {
        &self.report
    }

    pub fn into_report(self) -> ViolationReport {
        self.report
    }

    #[cfg(test)]
    pub(crate) fn forged(report: ViolationReport) -> Self {
        Self { report }
    }
}

pub type ValidationResult = Verdict;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("explain_violations called on a valid graph")]
    CalledOnValidGraph,
}

/// Runs all five checks in constraint order.
pub fn valid(
    g: &ArgumentGraph,
    p: &PolicySet,
    store: &dyn EvidenceLookup,
    prov: &ProvenanceRecord,
) -> Result<Verdict, KernelError> {
    let mut violations = check_evidence_completeness(g, p);
    violations.extend(check_evidence_admissibility(g, p, store)?);
    violations.extend(check_rule_coverage(g, p));
    violations.extend(check_non_contradiction(g, p));
    violations.extend(check_provenance_completeness(g, prov));
    Ok(Verdict {
        report: ViolationReport {
            valid: violations.is_empty(),
            graph_id: g.id(),
            policy_fingerprint: p.fingerprint(),
            violations,
        },
    })
}

/// The structured feedback for an invalid graph.
pub fn explain_violations(
    g: &ArgumentGraph,
    p: &PolicySet,
    store: &dyn EvidenceLookup,
    prov: &ProvenanceRecord,
) -> Result<ViolationReport, KernelError> {
    let verdict = valid(g, p, store, prov)?;
    if verdict.is_valid() {
        return Err(KernelError::CalledOnValidGraph);
    }
    Ok(verdict.into_report())
}
