#![allow(dead_code)]

pub mod gen;
pub mod harness;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use arggate::clock::FixedClock;
use arggate::knowledge::CaseDocument;
use arggate::ledger::{AgentKind, ProvAgent};
use arggate::pipeline::Workspace;
use arggate::policy::{load_policy, PolicySet};
use serde::Deserialize;

pub const REVIEWER: &str = "human:reviewer-1";
pub const CLERK: &str = "human:records-clerk";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn policy(name: &str) -> PolicySet {
    load_policy(std::fs::read(fixtures().join(format!("{name}.policy.json"))).unwrap()).unwrap()
}

pub fn case() -> CaseDocument {
    CaseDocument::from_bytes(std::fs::read(fixtures().join("hb-0173.case.json")).unwrap()).unwrap()
}

#[derive(Deserialize)]
struct ManifestEntry {
    file: String,
    title: String,
    source_class: String,
    corpus_id: String,
}

/// The packaged eligibility case with its evidence, under `policy_name`.
pub fn fixture_scenario(policy_name: &str, faults: arggate::drafter::FaultSpec) -> gen::Scenario {
    let dir = fixtures().join("evidence");
    let manifest: Vec<ManifestEntry> =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let p = policy(policy_name);
    let required = p.required_classes(&case().decision_class).into_iter().collect();
    gen::Scenario {
        case: case(),
        policy: p,
        evidence: manifest
            .into_iter()
            .map(|m| gen::EvidenceSpec {
                content: std::fs::read_to_string(dir.join(&m.file)).unwrap(),
                corpus_id: m.corpus_id,
                source_class: m.source_class,
                title: m.title,
            })
            .collect(),
        faults,
        required,
    }
}

pub fn human(id: &str) -> ProvAgent {
    ProvAgent { id: id.into(), kind: AgentKind::Human, display_name: id.trim_start_matches("human:").into() }
}

/// Registers the standard agents and ingests E1, E2 and E7. Returns the
/// evidence hashes keyed by their short label.
pub fn seed(ws: &mut Workspace) -> Vec<(String, String)> {
    ws.register_agent(human(REVIEWER)).unwrap();
    ws.register_agent(human(CLERK)).unwrap();
    let dir = fixtures().join("evidence");
    let manifest: Vec<ManifestEntry> =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let clerk = human(CLERK);
    manifest
        .iter()
        .map(|m| {
            let content = std::fs::read_to_string(dir.join(&m.file)).unwrap();
            let item = ws.ingest_evidence(&content, &m.corpus_id, &m.source_class, &m.title, &clerk).unwrap();
            (m.title.split_whitespace().next().unwrap().to_owned(), item.hash)
        })
        .collect()
}

pub fn fixed_clock() -> Arc<FixedClock> {
    Arc::new(FixedClock::epoch())
}

pub fn seeded_memory() -> (Workspace, Vec<(String, String)>) {
    let mut ws = Workspace::in_memory(fixed_clock());
    let ev = seed(&mut ws);
    (ws, ev)
}
