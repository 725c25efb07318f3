use std::collections::BTreeSet;

use super::{Fault, FaultSpec};
use crate::canonical::sha256_hex;
use crate::model::{AgDocument, DocEdge, EdgeKind, NodeKind};

fn is(e: &DocEdge, k: EdgeKind) -> bool {
    e.kind == k.as_str()
}

fn top_level(doc: &AgDocument) -> BTreeSet<String> {
    doc.nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Claim.as_str())
        .filter(|n| {
            !doc.edges
                .iter()
                .any(|e| e.src == n.id && (is(e, EdgeKind::Decomposes) || is(e, EdgeKind::InferredBy)))
        })
        .map(|n| n.id.clone())
        .collect()
}

/// Non-top-level claims in id order.
fn subclaims(doc: &AgDocument) -> Vec<String> {
    let top = top_level(doc);
    let mut v: Vec<String> = doc
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Claim.as_str() && !top.contains(&n.id))
        .map(|n| n.id.clone())
        .collect();
    v.sort();
    v
}

/// Drops evidence and assumption nodes that no longer point at anything.
fn prune_orphans(doc: &mut AgDocument) {
    loop {
        let orphan = doc.nodes.iter().position(|n| {
            (n.kind == NodeKind::Evidence.as_str() || n.kind == NodeKind::Assumption.as_str())
                && !doc.edges.iter().any(|e| e.src == n.id)
        });
        match orphan {
            Some(i) => {
                doc.nodes.remove(i);
            }
            None => break,
        }
    }
}

fn apply_one(doc: &mut AgDocument, fault: &Fault) {
    match fault {
        Fault::DropEvidenceLink => {
            let target = subclaims(doc).into_iter().find(|c| {
                let inc = |k| doc.edges.iter().filter(|e| &e.dst == c && is(e, k)).count();
                inc(EdgeKind::Supports) == 1 && inc(EdgeKind::Underpins) == 0
            });
            if let Some(c) = target {
                doc.edges.retain(|e| !(e.dst == c && is(e, EdgeKind::Supports)));
                prune_orphans(doc);
            }
        }
        Fault::OmitRequiredSubclaim { class } => {
            let top = top_level(doc);
            let victim = doc
                .nodes
                .iter()
                .find(|n| n.claim_class.as_deref() == Some(class.as_str()) && !top.contains(&n.id))
                .map(|n| n.id.clone());
            if let Some(v) = victim {
                doc.nodes.retain(|n| n.id != v);
                doc.edges.retain(|e| e.src != v && e.dst != v);
                prune_orphans(doc);
            }
        }
        Fault::FabricateEvidenceId => {
            let mut ev: Vec<_> =
                doc.nodes.iter_mut().filter(|n| n.kind == NodeKind::Evidence.as_str()).collect();
            ev.sort_by(|a, b| a.id.cmp(&b.id));
            if let Some(n) = ev.into_iter().next() {
                let old = n.evidence_hash.clone().unwrap_or_default();
                n.evidence_hash = Some(sha256_hex(format!("fabricated:{old}")));
            }
        }
        Fault::OmitGenerationRef => {
            if let Some(goal) = top_level(doc).into_iter().next() {
                if let Some(n) = doc.nodes.iter_mut().find(|n| n.id == goal) {
                    n.generation_ref = None;
                }
            }
        }
        Fault::InjectContradiction => {
            let source = subclaims(doc)
                .into_iter()
                .find_map(|id| doc.nodes.iter().find(|n| n.id == id && n.subject.is_some()).cloned());
            if let Some(orig) = source {
                let mut neg = orig.clone();
                neg.id = format!("{}:negated", orig.id);
                neg.text = format!("Not: {}", orig.text);
                neg.polarity = Some(orig.polarity.unwrap_or_default().opposite());
                let copies: Vec<DocEdge> = doc
                    .edges
                    .iter()
                    .filter(|e| e.src == orig.id || e.dst == orig.id)
                    .filter(|e| !is(e, EdgeKind::Attacks))
                    .map(|e| {
                        let kind = EdgeKind::parse(&e.kind).expect("drafted edge kind");
                        let src = if e.src == orig.id { neg.id.clone() } else { e.src.clone() };
                        let dst = if e.dst == orig.id { neg.id.clone() } else { e.dst.clone() };
                        DocEdge::new(kind, src, dst)
                    })
                    .collect();
                doc.nodes.push(neg);
                doc.edges.extend(copies);
            }
        }
    }
}

/// Mutates a first-round document as described by each fault, in order. A
/// fault with nothing to act on leaves the document unchanged.
pub fn apply_faults(doc: &mut AgDocument, faults: &FaultSpec) {
    for f in &faults.0 {
        apply_one(doc, f);
    }
}
