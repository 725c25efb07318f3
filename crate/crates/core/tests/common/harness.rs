//! Drives scenarios through a workspace while recording, on the side, what
//! the audit queries should later report.

use std::collections::{BTreeMap, BTreeSet};

use arggate::drafter::DrafterMeta;
use arggate::evidence::retrieve_evidence;
use arggate::kernel::{self, RepairHint};
use arggate::knowledge::build_case_knowledge_graph;
use arggate::model::{AgDocument, Approval, Generator};
use arggate::pipeline::{RunOptions, RunOutcome, Workspace};
use arggate::policy::{AssumptionPolicy, PolicySet};
use rand::Rng;

use super::gen::Scenario;
use super::{fixed_clock, human, REVIEWER};

/// What the harness itself did or computed, independent of the ledger.
#[derive(Debug, Default, Clone)]
pub struct Truth {
    /// hash -> source class of every item the harness ingested.
    pub ingested: BTreeMap<String, String>,
    pub retrieval_set_id: String,
    /// (agent, action, node) in the order the harness performed them.
    pub approvals: Vec<(String, String, String)>,
}

#[derive(Debug, Default)]
pub struct Tally {
    pub runs: usize,
    pub accepted: usize,
    pub escalated: usize,
    pub failed: usize,
    pub approvals: usize,
    pub audited_decisions: usize,
    pub counterexamples: Vec<String>,
    pub audit_mismatches: Vec<String>,
}

impl Tally {
    pub fn absorb(&mut self, other: Tally) {
        self.runs += other.runs;
        self.accepted += other.accepted;
        self.escalated += other.escalated;
        self.failed += other.failed;
        self.approvals += other.approvals;
        self.audited_decisions += other.audited_decisions;
        self.counterexamples.extend(other.counterexamples);
        self.audit_mismatches.extend(other.audit_mismatches);
    }
}

pub fn prepare(s: &Scenario) -> (Workspace, Truth) {
    let mut ws = Workspace::in_memory(fixed_clock());
    ws.register_agent(human(REVIEWER)).unwrap();
    let clerk = human(super::CLERK);
    let mut truth = Truth::default();
    for e in &s.evidence {
        let item = ws.ingest_evidence(&e.content, &e.corpus_id, &e.source_class, &e.title, &clerk).unwrap();
        truth.ingested.insert(item.hash, item.source_class);
    }
    let kg = build_case_knowledge_graph(&s.case).unwrap();
    truth.retrieval_set_id = retrieve_evidence(&kg, &s.policy, &ws.store().snapshot()).unwrap().id;
    (ws, truth)
}

fn pending_only(ws: &Workspace, graph_id: &str) -> Option<Vec<String>> {
    let (doc, report) = ws.graph_view(graph_id)?;
    if report.violations.is_empty() || !report.violations.iter().all(|v| v.repair_hint == RepairHint::ApproveAssumption)
    {
        return None;
    }
    Some(
        doc.nodes
            .iter()
            .filter(|n| n.kind == "Assumption" && n.approval == Some(Approval::Pending))
            .map(|n| n.id.clone())
            .collect(),
    )
}

/// Runs the scenario; when the only obstacle is pending assumptions the
/// reviewer approves them with probability `approve_p`.
pub fn drive(rng: &mut impl Rng, s: &Scenario, approve_p: f64) -> (Workspace, Truth, RunOutcome) {
    let (mut ws, mut truth) = prepare(s);
    let opts = RunOptions { faults: s.faults.clone(), ..Default::default() };
    let mut outcome = ws.run_case(&s.case, &s.policy, &opts);
    if let RunOutcome::Escalated { graph_id, .. } = &outcome {
        if let Some(pending) = pending_only(&ws, graph_id).filter(|_| rng.random_bool(approve_p)) {
            let mut gid = graph_id.clone();
            for a in pending {
                outcome = ws.approve_assumption(&gid, &a, REVIEWER).unwrap();
                truth.approvals.push((REVIEWER.into(), "approve".into(), a));
                match outcome.graph_id() {
                    Some(g) if !outcome.is_accepted() => gid = g.to_owned(),
                    _ => break,
                }
            }
        }
    }
    (ws, truth, outcome)
}

/// Claims lacking SUPPORTS from evidence or UNDERPINS from an assumption the
/// policy lets count. Reads the raw document, not the graph API.
pub fn unsupported_claims(doc: &AgDocument, policy: &PolicySet) -> Vec<String> {
    let kind: BTreeMap<&str, &str> = doc.nodes.iter().map(|n| (n.id.as_str(), n.kind.as_str())).collect();
    let approval: BTreeMap<&str, Option<&Approval>> =
        doc.nodes.iter().map(|n| (n.id.as_str(), n.approval.as_ref())).collect();
    let pending_ok = policy.assumption_policy == AssumptionPolicy::AllowPending;
    doc.nodes
        .iter()
        .filter(|n| n.kind == "Claim")
        .filter(|c| {
            !doc.edges.iter().any(|e| {
                e.dst == c.id
                    && match (e.kind.as_str(), kind.get(e.src.as_str()).copied()) {
                        ("SUPPORTS", Some("Evidence")) => true,
                        ("UNDERPINS", Some("Assumption")) => match approval.get(e.src.as_str()).copied().flatten() {
                            Some(Approval::Approved { .. }) => true,
                            Some(Approval::Pending) => pending_ok,
                            _ => false,
                        },
                        _ => false,
                    }
            })
        })
        .map(|c| c.id.clone())
        .collect()
}

/// Persisted iff valid, plus the independent re-scan.
pub fn check_gate(ws: &Workspace, policy: &PolicySet, outcome: &RunOutcome) -> Vec<String> {
    let mut bad = Vec::new();
    let prov = ws.provenance();
    let persisted: BTreeSet<String> = ws.packages().map(|p| p.graph_id().to_owned()).collect();
    match outcome {
        RunOutcome::Accepted { package, .. } => {
            let gid = package.graph_id();
            let g = ws.persisted_graph(gid).expect("accepted graph is persisted");
            if !kernel::valid(g, policy, ws.store(), prov).unwrap().is_valid() {
                bad.push(format!("{gid}: persisted but not valid"));
            }
            if !ws.revalidate(gid).unwrap().is_valid() {
                bad.push(format!("{gid}: revalidation failed"));
            }
            for c in unsupported_claims(&package.document, policy) {
                bad.push(format!("{gid}: re-scan found unsupported claim {c}"));
            }
            if persisted.len() != 1 || !persisted.contains(gid) {
                bad.push(format!("{gid}: persisted set is {persisted:?}"));
            }
        }
        RunOutcome::Escalated { graph_id, report, .. } => {
            if report.valid || report.violations.is_empty() {
                bad.push(format!("{graph_id}: escalated with a clean report"));
            }
            let g = ws.graph(graph_id).expect("escalated graph is queued");
            if kernel::valid(&g, policy, ws.store(), prov).unwrap().is_valid() {
                bad.push(format!("{graph_id}: valid but escalated"));
            }
            if !persisted.is_empty() {
                bad.push(format!("escalated run persisted {persisted:?}"));
            }
        }
        RunOutcome::Failed { error, .. } => {
            if !persisted.is_empty() {
                bad.push(format!("failed run ({error}) persisted {persisted:?}"));
            }
        }
    }
    bad
}

/// All three audits over a persisted decision against the harness truth.
pub fn check_audits(ws: &Workspace, truth: &Truth, graph_id: &str) -> Vec<String> {
    let mut bad = Vec::new();
    let doc = &ws.package(graph_id).expect("persisted").document;
    let meta = DrafterMeta::reference();
    let by_id: BTreeMap<&str, _> = doc.nodes.iter().map(|n| (n.id.as_str(), n)).collect();

    for claim in doc.nodes.iter().filter(|n| n.kind == "Claim") {
        let mut want_ev = BTreeSet::new();
        let mut want_as = BTreeSet::new();
        for e in doc.edges.iter().filter(|e| e.dst == claim.id) {
            let src = by_id[e.src.as_str()];
            match e.kind.as_str() {
                "SUPPORTS" => {
                    let h = src.evidence_hash.clone().unwrap();
                    match truth.ingested.get(&h) {
                        Some(class) => {
                            want_ev.insert((h, class.clone()));
                        }
                        None => bad.push(format!("{graph_id}: {} cites evidence the harness never ingested", claim.id)),
                    }
                }
                "UNDERPINS" => {
                    want_as.insert(src.id.clone());
                }
                _ => {}
            }
        }
        match ws.audit_evidence_for_claim(&format!("{}@{graph_id}", claim.id)) {
            Ok(a) => {
                let got_ev: BTreeSet<_> = a.evidence.iter().map(|r| (r.evidence_hash.clone(), r.source_class.clone())).collect();
                let got_as: BTreeSet<_> = a.assumptions.iter().map(|r| r.node_id.as_str().to_owned()).collect();
                if got_ev != want_ev || got_as != want_as {
                    bad.push(format!("{graph_id}: evidence-for-claim {} mismatch", claim.id));
                }
            }
            Err(e) => bad.push(format!("{graph_id}: evidence-for-claim {} failed: {e}", claim.id)),
        }
    }

    for n in doc.nodes.iter().filter(|n| n.generator == Generator::Ai) {
        match ws.audit_generation_context(&format!("{}@{graph_id}", n.id)) {
            Ok(c) => {
                let ok = Some(&c.activity_id) == n.generation_ref.as_ref()
                    && c.model_id == meta.model_id
                    && c.model_version == meta.model_version
                    && c.prompt_template_id == meta.prompt_template_id
                    && c.prompt_template_version == meta.prompt_template_version
                    && c.retrieval_set_id == truth.retrieval_set_id;
                if !ok {
                    bad.push(format!("{graph_id}: generation-context {} mismatch: {c:?}", n.id));
                }
            }
            Err(e) => bad.push(format!("{graph_id}: generation-context {} failed: {e}", n.id)),
        }
    }

    match ws.audit_approvals(graph_id) {
        Ok(list) => {
            let got: Vec<_> =
                list.iter().map(|a| (a.agent.clone(), a.action.clone(), a.node_id.clone().unwrap_or_default())).collect();
            if got != truth.approvals {
                bad.push(format!("{graph_id}: approvals {got:?} != {:?}", truth.approvals));
            }
        }
        Err(e) => bad.push(format!("{graph_id}: approvals failed: {e}")),
    }
    bad
}

/// The randomized gating campaign; audits every persisted decision too.
pub fn campaign(rng: &mut impl Rng, runs: usize) -> Tally {
    let mut t = Tally::default();
    for n in 0..runs {
        let s = super::gen::scenario(rng, n);
        let (ws, truth, outcome) = drive(rng, &s, 0.5);
        t.runs += 1;
        t.approvals += truth.approvals.len();
        match &outcome {
            RunOutcome::Accepted { package, .. } => {
                t.accepted += 1;
                t.audited_decisions += 1;
                t.audit_mismatches.extend(check_audits(&ws, &truth, package.graph_id()));
            }
            RunOutcome::Escalated { .. } => t.escalated += 1,
            RunOutcome::Failed { .. } => t.failed += 1,
        }
        t.counterexamples
            .extend(check_gate(&ws, &s.policy, &outcome).into_iter().map(|m| format!("run {n} ({}): {m}", s.faults.0.len())));
    }
    t
}
