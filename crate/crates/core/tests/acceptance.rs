//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use arggate::canonical::to_canonical_bytes;
use arggate::drafter::{Fault, FaultSpec};
use arggate::kernel::{ConstraintId, RepairHint};
use arggate::knowledge::CaseDocument;
use arggate::ledger::{ChainStatus, Ledger};
use arggate::model::{canonical_serialize, parse_and_normalize, ArgumentGraph};
use arggate::pipeline::{GraphView, RunOptions, RunOutcome, Workspace};
use arggate::policy::load_policy;
use common::harness::{self, Tally};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CAMPAIGN_RUNS: usize = 1000;
const CAMPAIGN_BUDGET: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

/// Persisted decisions from criteria 1, 3 and 4, audited as they happen.
#[derive(Default)]
struct AuditLog {
    decisions: usize,
    mismatches: Vec<String>,
}

impl AuditLog {
    fn audit(&mut self, ws: &Workspace, truth: &harness::Truth, graph_id: &str) {
        self.decisions += 1;
        self.mismatches.extend(harness::check_audits(ws, truth, graph_id));
    }
}

fn first(v: &[String]) -> String {
    v.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
}

fn gating(log: &mut AuditLog) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a7e);
    let started = Instant::now();
    let t: Tally = harness::campaign(&mut rng, CAMPAIGN_RUNS);
    let took = started.elapsed();
    log.decisions += t.audited_decisions;
    log.mismatches.extend(t.audit_mismatches.iter().cloned());
    let summary = format!(
        "{} runs in {:.1}s: {} persisted, {} escalated, {} failed, {} approvals",
        t.runs,
        took.as_secs_f64(),
        t.accepted,
        t.escalated,
        t.failed,
        t.approvals
    );
    if !t.counterexamples.is_empty() {
        return Err(format!("{summary}; {} counterexamples: {}", t.counterexamples.len(), first(&t.counterexamples)));
    }
    if t.runs < CAMPAIGN_RUNS || took >= CAMPAIGN_BUDGET {
        return Err(format!("{summary}; needs {CAMPAIGN_RUNS} runs within {CAMPAIGN_BUDGET:?}"));
    }
    if t.accepted == 0 || t.escalated == 0 {
        return Err(format!("{summary}; campaign did not exercise both outcomes"));
    }
    Ok(summary)
}

fn faults() -> Vec<(Fault, ConstraintId)> {
    vec![
        (Fault::DropEvidenceLink, ConstraintId::C1EvidenceCompleteness),
        (Fault::OmitRequiredSubclaim { class: "identity_verified".into() }, ConstraintId::C3RuleCoverage),
        (Fault::FabricateEvidenceId, ConstraintId::C2EvidenceAdmissibility),
        (Fault::OmitGenerationRef, ConstraintId::C5ProvenanceCompleteness),
        (Fault::InjectContradiction, ConstraintId::C4NonContradiction),
    ]
}

fn bijection() -> Outcome {
    // One round only, so each outcome carries the first-round report.
    let first_round = |faults: FaultSpec| {
        let mut s = common::fixture_scenario("benefits-direct", faults);
        s.policy.max_repair_rounds = 1;
        harness::drive(&mut ChaCha8Rng::seed_from_u64(0), &s, 0.0).2
    };
    if !matches!(first_round(FaultSpec::none()), RunOutcome::Accepted { rounds_used: 1, .. }) {
        return Err("fault-free baseline does not pass in round 1".into());
    }
    let mut seen = Vec::new();
    for (f, want) in faults() {
        match first_round(FaultSpec::single(f.clone())) {
            RunOutcome::Escalated { report, rounds_used: 1, .. } => {
                let got: Vec<_> = report.violations.iter().map(|v| v.constraint).collect();
                if got != [want] {
                    return Err(format!("{f}: expected exactly one {}, got {got:?}", want.short()));
                }
                seen.push(format!("{f}->{}", want.short()));
            }
            other => return Err(format!("{f}: expected a round-1 escalation, got {}", other.to_json())),
        }
    }
    Ok(seen.join(", "))
}

fn convergence(log: &mut AuditLog) -> Outcome {
    let cases = [
        ("DROP_EVIDENCE_LINK", Some(2)),
        ("OMIT_REQUIRED_SUBCLAIM:criteria_evaluated", Some(2)),
        ("OMIT_REQUIRED_SUBCLAIM:identity_verified", Some(2)),
        ("OMIT_REQUIRED_SUBCLAIM:rationale_documented", Some(2)),
        ("FABRICATE_EVIDENCE_ID", None),
    ];
    let mut notes = Vec::new();
    for (fault, rounds) in cases {
        let s = common::fixture_scenario("benefits-direct", FaultSpec::single(fault.parse().unwrap()));
        let (ws, truth, outcome) = harness::drive(&mut ChaCha8Rng::seed_from_u64(0), &s, 0.0);
        match (rounds, &outcome) {
            (Some(n), RunOutcome::Accepted { rounds_used, package, .. }) if *rounds_used == n => {
                log.audit(&ws, &truth, package.graph_id());
                notes.push(format!("{fault} accepted in {n}"));
            }
            (None, RunOutcome::Escalated { report, rounds_used: 1, .. })
                if !report.violations.is_empty()
                    && report.violations.iter().all(|v| v.constraint == ConstraintId::C2EvidenceAdmissibility) =>
            {
                notes.push(format!("{fault} escalated in 1 with {} C2", report.violations.len()));
            }
            _ => return Err(format!("{fault}: expected {rounds:?} rounds, got {}", outcome.to_json())),
        }
    }
    Ok(notes.join(", "))
}

fn golden(log: &mut AuditLog) -> Outcome {
    let s = common::fixture_scenario("benefits", FaultSpec::none());
    let (mut ws, mut truth) = harness::prepare(&s);
    let first = ws.run_case(&s.case, &s.policy, &RunOptions::default());
    let RunOutcome::Escalated { graph_id, report, .. } = &first else {
        return Err(format!("expected escalation on the pending assumption, got {}", first.to_json()));
    };
    let hints: Vec<_> = report.violations.iter().map(|v| (v.constraint, v.repair_hint.clone())).collect();
    if hints != [(ConstraintId::C1EvidenceCompleteness, RepairHint::ApproveAssumption)] {
        return Err(format!("unexpected first-round report {hints:?}"));
    }
    let g = ws.graph(graph_id).unwrap();
    let shape = golden_shape(&g);
    if shape != "goal=1 claims=2 subclaims=2 evidence=E1,E2,E7 assumptions=1" {
        return Err(format!("unexpected graph shape: {shape}"));
    }
    let assumption = g.nodes_of(arggate::model::NodeKind::Assumption).next().unwrap().id.as_str().to_owned();
    let accepted = ws.approve_assumption(graph_id, &assumption, common::REVIEWER).map_err(|e| e.to_string())?;
    truth.approvals.push((common::REVIEWER.into(), "approve".into(), assumption.clone()));
    let RunOutcome::Accepted { package, .. } = &accepted else {
        return Err(format!("approval did not lead to acceptance: {}", accepted.to_json()));
    };
    let gid = package.graph_id().to_owned();
    if !ws.revalidate(&gid).map_err(|e| e.to_string())?.is_valid() {
        return Err("persisted eligibility graph does not revalidate".into());
    }
    let golden = std::fs::read(common::fixtures().join("hb-0173.accepted.ag.json")).unwrap();
    if ws.render(&gid, GraphView::Document).unwrap() != golden {
        return Err("accepted document differs from fixtures/hb-0173.accepted.ag.json".into());
    }
    let dot = String::from_utf8(ws.render(&gid, GraphView::GsnDot).unwrap()).unwrap();
    let dashed = dot.lines().filter(|l| l.contains("style=dashed")).count();
    if dashed != 1 {
        return Err(format!("gsn dot has {dashed} dashed nodes"));
    }
    log.audit(&ws, &truth, &gid);
    Ok(format!("{shape}; golden matches; 1 dashed node"))
}

/// Summary of the eligibility graph structure, with evidence labelled by the fixture
/// item it cites.
fn golden_shape(g: &ArgumentGraph) -> String {
    use arggate::model::{EdgeKind, NodeKind};
    let goals: Vec<_> = g.top_level().iter().collect();
    let children = |id: &arggate::model::NodeId| {
        g.incoming(id)
            .filter(|e| e.kind == EdgeKind::Decomposes)
            .map(|e| e.src.clone())
            .collect::<Vec<_>>()
    };
    let claims = goals.first().map(|g| children(g)).unwrap_or_default();
    let subclaims: usize = claims.iter().map(|c| children(c).len()).sum();
    let labels: BTreeMap<&str, &str> =
        [("5511bc7b2ffe", "E1"), ("2be3cea37b99", "E2"), ("84d1a17a1e94", "E7")].into_iter().collect();
    let evidence: Vec<&str> = g
        .nodes_of(NodeKind::Evidence)
        .map(|n| labels.get(&n.evidence_hash().unwrap()[..12]).copied().unwrap_or("?"))
        .collect();
    let assumptions = g.nodes_of(NodeKind::Assumption).count();
    format!(
        "goal={} claims={} subclaims={} evidence={} assumptions={}",
        goals.len(),
        claims.len(),
        subclaims,
        {
            let mut e = evidence;
            e.sort();
            e.join(",")
        },
        assumptions
    )
}

fn audits(log: &AuditLog) -> Outcome {
    if log.decisions == 0 {
        return Err("no persisted decisions were audited".into());
    }
    if !log.mismatches.is_empty() {
        return Err(format!("{} mismatches over {} decisions: {}", log.mismatches.len(), log.decisions, first(&log.mismatches)));
    }
    Ok(format!("{} persisted decisions, 3 queries each, 0 mismatches", log.decisions))
}

fn tamper() -> Outcome {
    let (mut ws, _) = common::seeded_memory();
    let s = common::fixture_scenario("benefits-direct", FaultSpec::none());
    while ws.ledger().len() < 100 {
        ws.run_case(&s.case, &s.policy, &RunOptions::default());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prov.ndjson");
    std::fs::write(&path, ws.ledger().to_bytes()).unwrap();
    let mut ledger = Ledger::open(&path, common::fixed_clock()).map_err(|e| e.to_string())?;
    if !ledger.verify_chain().is_ok() {
        return Err("untampered ledger does not verify".into());
    }
    let bytes = ledger.to_bytes();
    let lens: Vec<usize> = bytes.split(|b| *b == b'\n').take(ledger.entries().len()).map(<[u8]>::len).collect();
    let mut flips = 0usize;
    for (seq, len) in lens.iter().enumerate() {
        for i in 0..*len {
            ledger.tamper_line(seq, |l| l[i] ^= 0x01);
            let status = ledger.verify_chain();
            ledger.tamper_line(seq, |l| l[i] ^= 0x01);
            flips += 1;
            match status {
                ChainStatus::Broken { first_bad_seq, .. } if first_bad_seq == seq as u64 => {}
                other => return Err(format!("flip of byte {i} in seq {seq} reported {other:?}")),
            }
        }
    }
    Ok(format!("{} entries, {flips} single-byte flips, each reported at its seq", lens.len()))
}

/// Everything one full fixed-clock pass produces, keyed by artifact name.
fn full_pass() -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut keep = |ws: &Workspace, label: &str, gid: &str| {
        for (v, name) in [
            (GraphView::Document, "ag"),
            (GraphView::Report, "report"),
            (GraphView::GsnDot, "gsn.dot"),
            (GraphView::GsnJson, "gsn.json"),
        ] {
            out.insert(format!("{label}.{name}"), ws.render(gid, v).unwrap());
        }
    };
    let fixture = common::fixture_scenario("benefits", FaultSpec::none());
    let (mut ws, _) = harness::prepare(&fixture);
    let o = ws.run_case(&fixture.case, &fixture.policy, &RunOptions::default());
    let gid = o.graph_id().unwrap().to_owned();
    keep(&ws, "hb-0173.escalated", &gid);
    let a = ws.graph(&gid).unwrap().nodes_of(arggate::model::NodeKind::Assumption).next().unwrap().id.as_str().to_owned();
    let o = ws.approve_assumption(&gid, &a, common::REVIEWER).unwrap();
    keep(&ws, "hb-0173.accepted", o.graph_id().unwrap());
    let mut ledgers = vec![ws.ledger().to_bytes()];
    for (f, _) in faults() {
        let s = common::fixture_scenario("benefits-direct", FaultSpec::single(f.clone()));
        let (ws, _, o) = harness::drive(&mut ChaCha8Rng::seed_from_u64(1), &s, 0.0);
        keep(&ws, &f.to_string(), o.graph_id().unwrap());
        ledgers.push(ws.ledger().to_bytes());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xde7);
    for n in 0..25 {
        let s = common::gen::scenario(&mut rng, n);
        let (ws, _, o) = harness::drive(&mut rng, &s, 0.5);
        if let Some(gid) = o.graph_id() {
            keep(&ws, &format!("random-{n}"), gid);
        }
        ledgers.push(ws.ledger().to_bytes());
    }
    for (i, l) in ledgers.into_iter().enumerate() {
        out.insert(format!("ledger-{i}"), l);
    }
    out
}

fn determinism() -> Outcome {
    let a = full_pass();
    let b = full_pass();
    if a.keys().ne(b.keys()) {
        return Err("the two passes produced different artifact sets".into());
    }
    let differing: Vec<String> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k.clone()).collect();
    if !differing.is_empty() {
        return Err(format!("artifacts differ: {}", first(&differing)));
    }
    Ok(format!("{} artifacts byte-identical across two passes", a.len()))
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7217);
    for i in 0..500 {
        let g = ArgumentGraph::from_document(common::gen::random_doc(&mut rng)).map_err(|e| format!("graph {i}: {e}"))?;
        let bytes = canonical_serialize(&g);
        let back = parse_and_normalize(&bytes).map_err(|e| format!("graph {i}: reparse failed: {e}"))?;
        if back != g || canonical_serialize(&back) != bytes {
            return Err(format!("graph {i} changed across a round trip"));
        }
    }
    let fx = common::fixtures();
    let golden = std::fs::read(fx.join("hb-0173.accepted.ag.json")).unwrap();
    let g = parse_and_normalize(&golden).map_err(|e| e.to_string())?;
    if [canonical_serialize(&g), b"\n".to_vec()].concat() != golden {
        return Err("hb-0173.accepted.ag.json does not round-trip byte for byte".into());
    }
    let mut fixtures = 1;
    for name in ["benefits.policy.json", "benefits-direct.policy.json"] {
        let p = load_policy(std::fs::read(fx.join(name)).unwrap()).map_err(|e| e.to_string())?;
        if load_policy(p.to_canonical_bytes()).map_err(|e| e.to_string())? != p {
            return Err(format!("{name} does not round-trip"));
        }
        fixtures += 1;
    }
    let case = CaseDocument::from_bytes(std::fs::read(fx.join("hb-0173.case.json")).unwrap()).unwrap();
    if CaseDocument::from_bytes(to_canonical_bytes(&case)).unwrap() != case {
        return Err("hb-0173.case.json does not round-trip".into());
    }
    fixtures += 1;
    Ok(format!("500 random graphs and {fixtures} fixtures round-trip"))
}

fn main() {
    let mut log = AuditLog::default();
    let results: Vec<(&str, Outcome)> = vec![
        ("gating invariant", gating(&mut log)),
        ("fault/constraint bijection", bijection()),
        ("repair-loop convergence", convergence(&mut log)),
        ("golden eligibility graph", golden(&mut log)),
        ("audit reconstruction", audits(&log)),
        ("ledger tamper evidence", tamper()),
        ("determinism", determinism()),
        ("round-trip", round_trip()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
