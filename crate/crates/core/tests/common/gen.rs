//! Random cases, policies, corpora and fault specs.

use arggate::drafter::{Fault, FaultSpec};
use arggate::knowledge::CaseDocument;
use arggate::model::AgDocument;
use arggate::policy::{load_policy, PolicySet};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde_json::json;

const TOPICS: &[&str] = &["permit", "harbor", "tariff", "license", "grant", "pension", "zoning", "visa", "subsidy", "levy"];
const STEPS: &[&str] =
    &["audit", "notice", "signature", "hearing", "payment", "inspection", "consent", "appeal", "deadline", "residency"];

pub struct EvidenceSpec {
    pub content: String,
    pub corpus_id: String,
    pub source_class: String,
    pub title: String,
}

pub struct Scenario {
    pub case: CaseDocument,
    pub policy: PolicySet,
    pub evidence: Vec<EvidenceSpec>,
    pub faults: FaultSpec,
    pub required: Vec<String>,
}

pub fn scenario(rng: &mut impl Rng, n: usize) -> Scenario {
    let topic = *TOPICS.choose(rng).unwrap();
    let decision = format!("{topic}_decision");
    let mut steps: Vec<&str> = STEPS.to_vec();
    steps.shuffle(rng);
    let count = rng.random_range(1..=4);
    let required: Vec<String> = steps[..count].iter().map(|s| format!("{s}_checked")).collect();

    let mut template = json!({"top_claim_class": decision, "required_child_classes": required});
    if count >= 2 && rng.random_bool(0.4) {
        template["groups"] = json!([{
            "class": format!("{}_steps", steps[0]),
            "text": "Grouped steps",
            "members": [required[0], required[1]],
        }]);
    }
    let mut consistency = Vec::new();
    if rng.random_bool(0.8) {
        consistency.push(json!("polarity"));
    }
    if rng.random_bool(0.3) {
        consistency.push(json!({"mutex_pair": [decision, format!("{topic}_refusal")]}));
    }
    let policy = json!({
        "id": format!("P-{n}"),
        "version": rng.random_range(1..=3),
        "source_classes": [
            {"id": "record", "scope": ["case-files"]},
            {"id": "statute", "scope": ["statutes"]},
        ],
        "coverage": [template],
        "consistency": consistency,
        "assumption_policy": if rng.random_bool(0.7) { "block_pending" } else { "allow_pending" },
        "retrieval_k": rng.random_range(2..=6),
        "max_repair_rounds": rng.random_range(1..=3),
    });
    let policy = load_policy(serde_json::to_vec(&policy).unwrap()).unwrap();

    let case = json!({
        "case_id": format!("case-{n}"),
        "decision_class": decision,
        "entities": [
            {"id": "party", "kind": "person", "attributes": {"program": topic, "name": format!("Party {n}")}},
            {"id": "agency", "kind": "org", "attributes": {"name": format!("{topic} agency")}},
        ],
        "events": [{"id": "e1", "label": format!("{topic} request filed"), "timestamp": "2025-06-01T10:00:00Z", "participants": ["party", "agency"]}],
        "relations": [{"src": "party", "label": "filed_with", "dst": "agency"}],
    });
    let case = CaseDocument::from_bytes(serde_json::to_vec(&case).unwrap()).unwrap();

    let mut evidence = Vec::new();
    let mut item = |content: String, class: &str, corpus: &str| {
        let title = format!("doc {}", evidence.len() + 1);
        evidence.push(EvidenceSpec { content, corpus_id: corpus.into(), source_class: class.into(), title });
    };
    if rng.random_bool(0.8) {
        item(format!("The {topic} decision rule applies to every request."), "statute", "statutes");
    }
    for (i, r) in required.iter().enumerate() {
        let step = steps[i];
        if rng.random_bool(0.8) {
            item(format!("File note {n}-{i}: {topic} {step} checked and recorded."), "record", "case-files");
        }
        if rng.random_bool(0.2) {
            // Right words, wrong corpus: never retrievable.
            item(format!("Draft memo on {topic} {step} {r}."), "record", "scratch");
        }
    }
    for j in 0..rng.random_range(0..3) {
        item(format!("General {topic} correspondence number {n}-{j}."), "record", "case-files");
    }

    let faults = match rng.random_range(0..8) {
        0 => FaultSpec::single(Fault::DropEvidenceLink),
        1 => FaultSpec::single(Fault::OmitRequiredSubclaim { class: required.choose(rng).unwrap().clone() }),
        2 => FaultSpec::single(Fault::FabricateEvidenceId),
        3 => FaultSpec::single(Fault::OmitGenerationRef),
        4 => FaultSpec::single(Fault::InjectContradiction),
        5 => FaultSpec(vec![Fault::DropEvidenceLink, Fault::OmitGenerationRef]),
        _ => FaultSpec::none(),
    };
    Scenario { case, policy, evidence, faults, required }
}

/// A random well-formed AG document. Every new node attaches to what already
/// exists, so refinement stays acyclic and everything is reachable.
pub fn random_doc(rng: &mut impl Rng) -> AgDocument {
    use arggate::canonical::sha256_hex;
    use arggate::model::{Approval, DocEdge, DocNode, EdgeKind, Generator, GraphMeta, NodeKind, Polarity, Qualifier, Resolution};

    let mut nodes: Vec<DocNode> = Vec::new();
    let mut edges: Vec<DocEdge> = Vec::new();
    let mut claims: Vec<String> = Vec::new();
    let generator = |rng: &mut dyn rand::RngCore| match rng.random_range(0..3) {
        0 => Generator::Ai,
        1 => Generator::Human,
        _ => Generator::System,
    };
    let text = |rng: &mut dyn rand::RngCore| {
        let words = ["alpha", "beta", "\"quoted\"", "ünïcode", "tab\there", "line\nbreak", "plain"];
        (0..rng.random_range(1..4)).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let mut node = |rng: &mut dyn rand::RngCore, id: String, kind: NodeKind| {
        let mut n = DocNode::bare(id, kind, text(rng), generator(rng));
        if n.generator == Generator::Ai || rng.random_bool(0.2) {
            n.generation_ref = Some(format!("draft:run-{}:r1", rng.random_range(0..5)));
        }
        match kind {
            NodeKind::Claim => {
                n.claim_class = Some(STEPS.choose(rng).unwrap().to_string());
                if rng.random_bool(0.5) {
                    n.polarity = Some(if rng.random_bool(0.5) { Polarity::Affirms } else { Polarity::Negates });
                }
                if rng.random_bool(0.5) {
                    n.subject = Some(TOPICS.choose(rng).unwrap().to_string());
                }
            }
            NodeKind::Evidence => {
                n.source_class = Some(if rng.random_bool(0.5) { "record" } else { "statute" }.into());
                n.evidence_hash = Some(sha256_hex(rng.random::<u64>().to_le_bytes()));
            }
            NodeKind::Assumption => {
                n.approval = Some(match rng.random_range(0..4) {
                    0 => Approval::None,
                    1 => Approval::Pending,
                    2 => Approval::Approved { agent: "human:reviewer-1".into(), timestamp: "2026-01-01T00:00:00.000Z".into() },
                    _ => return n,
                });
            }
            NodeKind::Uncertainty => {
                let lo: f64 = rng.random();
                let hi = lo + (1.0 - lo) * rng.random::<f64>();
                n.qualifier = Some(Qualifier {
                    label: "moderate".into(),
                    lower: rng.random_bool(0.7).then_some(lo),
                    upper: rng.random_bool(0.7).then_some(hi),
                });
            }
            _ => {}
        }
        n
    };

    for g in 0..rng.random_range(1..=2) {
        let id = format!("goal-{g}");
        nodes.push(node(rng, id.clone(), NodeKind::Claim));
        claims.push(id);
    }
    for c in 0..rng.random_range(0..8) {
        let id = format!("claim-{c}");
        let parent = claims.choose(rng).unwrap().clone();
        nodes.push(node(rng, id.clone(), NodeKind::Claim));
        if rng.random_bool(0.7) {
            edges.push(DocEdge::new(EdgeKind::Decomposes, &id, &parent));
        } else {
            let s = format!("strategy-{c}");
            nodes.push(node(rng, s.clone(), NodeKind::Strategy));
            edges.push(DocEdge::new(EdgeKind::InferredBy, &id, &s));
            edges.push(DocEdge::new(EdgeKind::Premise, &s, &parent));
        }
        claims.push(id);
    }
    let attach = |rng: &mut dyn rand::RngCore, prefix: &str, kind: NodeKind, edge: EdgeKind, max: usize,
                  nodes: &mut Vec<DocNode>, edges: &mut Vec<DocEdge>, node: &mut dyn FnMut(&mut dyn rand::RngCore, String, NodeKind) -> DocNode| {
        for i in 0..rng.random_range(0..=max) {
            let id = format!("{prefix}-{i}");
            nodes.push(node(rng, id.clone(), kind));
            let mut targets = claims.clone();
            targets.shuffle(rng);
            for t in targets.iter().take(rng.random_range(1..=2)) {
                edges.push(DocEdge::new(edge, &id, t));
            }
        }
    };
    attach(rng, "ev", NodeKind::Evidence, EdgeKind::Supports, 5, &mut nodes, &mut edges, &mut node);
    attach(rng, "as", NodeKind::Assumption, EdgeKind::Underpins, 2, &mut nodes, &mut edges, &mut node);
    attach(rng, "rule", NodeKind::Rule, EdgeKind::Governs, 2, &mut nodes, &mut edges, &mut node);
    attach(rng, "unc", NodeKind::Uncertainty, EdgeKind::Qualifies, 1, &mut nodes, &mut edges, &mut node);
    if claims.len() >= 2 && rng.random_bool(0.4) {
        let pair: Vec<&String> = claims.choose_multiple(rng, 2).collect();
        let mut e = DocEdge::new(EdgeKind::Attacks, pair[0], pair[1]);
        if rng.random_bool(0.5) {
            e.resolution = Some(Resolution::Prevailing(arggate::model::NodeId::new(pair[0].as_str())));
        }
        edges.push(e);
    }
    if rng.random_bool(0.2) {
        // Duplicate triple under another id; normalization collapses it.
        if let Some(e) = edges.first().cloned() {
            edges.push(DocEdge { id: format!("{}~dup", e.id), ..e });
        }
    }
    nodes.shuffle(rng);
    edges.shuffle(rng);
    AgDocument {
        nodes,
        edges,
        meta: GraphMeta {
            case_id: format!("case-{}", rng.random_range(0..100)),
            policy_id: "P-rand".into(),
            policy_version: rng.random_range(1..4),
            round: rng.random_range(1..4),
        },
    }
}
