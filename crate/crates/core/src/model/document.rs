use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Approval, ArgEdge, ArgNode, ArgumentGraph, EdgeId, EdgeKind, Generator, GraphMeta, NodeBody,
    NodeId, NodeKind, Polarity, Qualifier, Resolution,
};
use crate::canonical::{is_sha256_hex, to_canonical_bytes};

/// Raw drafter output plus who produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftDocument {
    pub body: String,
    pub drafter_id: String,
    pub round: u32,
}

impl AsRef<[u8]> for DraftDocument {
    fn as_ref(&self) -> &[u8] {
        self.body.as_bytes()
    }
}

/// Wire form of an argument graph. Freely editable; it becomes an
/// [`ArgumentGraph`] only by passing [`parse_and_normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgDocument {
    pub nodes: Vec<DocNode>,
    pub edges: Vec<DocEdge>,
    pub meta: GraphMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocNode {
    pub id: String,
    pub kind: String,
    pub text: String,
    pub generator: Generator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval: Option<Approval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<Qualifier>,
}

impl DocNode {
    /// A node with only the unconditional fields set.
    pub fn bare(id: impl Into<String>, kind: NodeKind, text: impl Into<String>, generator: Generator) -> Self {
        Self {
            id: id.into(),
            kind: kind.as_str().to_owned(),
            text: text.into(),
            generator,
            generation_ref: None,
            claim_class: None,
            polarity: None,
            subject: None,
            approval: None,
            source_class: None,
            evidence_hash: None,
            qualifier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocEdge {
    pub id: String,
    pub kind: String,
    pub src: String,
    pub dst: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
}

impl DocEdge {
    pub fn new(kind: EdgeKind, src: impl Into<String>, dst: impl Into<String>) -> Self {
        let (src, dst) = (src.into(), dst.into());
        Self {
            id: format!("{}:{}>{}", kind.as_str().to_ascii_lowercase(), src, dst),
            kind: kind.as_str().to_owned(),
            src,
            dst,
            resolution: (kind == EdgeKind::Attacks).then_some(Resolution::Unresolved),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("document contains no nodes")]
    EmptyDocument,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("{element}: unknown kind `{kind}`")]
    UnknownKind { element: String, kind: String },
    #[error("{element}: missing field `{field}` required for its kind")]
    MissingConditionalField { element: String, field: &'static str },
    #[error("{element}: field `{field}` {reason}")]
    InvalidField { element: String, field: &'static str, reason: String },
    #[error("edge {edge}: endpoint `{endpoint}` does not exist")]
    DanglingEdgeEndpoint { edge: String, endpoint: String },
    #[error("edge {edge}: {reason}")]
    KindSignatureViolation { edge: String, reason: String },
    #[error("refinement cycle through `{0}`")]
    CyclicRefinement(String),
    #[error("node `{0}` is not reachable from any top-level claim")]
    UnreachableNode(String),
}

impl ParseError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Malformed(_) => "Malformed",
            ParseError::EmptyDocument => "EmptyDocument",
            ParseError::DuplicateId(_) => "DuplicateId",
            ParseError::UnknownKind { .. } => "UnknownKind",
            ParseError::MissingConditionalField { .. } => "MissingConditionalField",
            ParseError::InvalidField { .. } => "InvalidField",
            ParseError::DanglingEdgeEndpoint { .. } => "DanglingEdgeEndpoint",
            ParseError::KindSignatureViolation { .. } => "KindSignatureViolation",
            ParseError::CyclicRefinement(_) => "CyclicRefinement",
            ParseError::UnreachableNode(_) => "UnreachableNode",
        }
    }
}

/// Parses document bytes and normalizes them into a well-formed graph, or
/// reports the first offending element in canonical order.
pub fn parse_and_normalize(bytes: impl AsRef<[u8]>) -> Result<ArgumentGraph, ParseError> {
    let doc: AgDocument = serde_json::from_slice(bytes.as_ref())
        .map_err(|e| ParseError::Malformed(e.to_string()))?;
    ArgumentGraph::from_document(doc)
}

pub fn canonical_serialize(g: &ArgumentGraph) -> Vec<u8> {
    to_canonical_bytes(&to_document(g))
}

pub(super) fn to_document(g: &ArgumentGraph) -> AgDocument {
    let nodes = g.nodes.values().map(node_to_doc).collect();
    let edges = g
        .edges
        .values()
        .map(|e| DocEdge {
            id: e.id.0.clone(),
            kind: e.kind.as_str().to_owned(),
            src: e.src.0.clone(),
            dst: e.dst.0.clone(),
            resolution: e.resolution.clone(),
        })
        .collect();
    AgDocument { nodes, edges, meta: g.meta.clone() }
}

fn node_to_doc(n: &ArgNode) -> DocNode {
    let mut d = DocNode::bare(n.id.0.clone(), n.kind(), n.text.clone(), n.generator);
    d.generation_ref = n.generation_ref.clone();
    match &n.body {
        NodeBody::Claim { claim_class, polarity, subject } => {
            d.claim_class = Some(claim_class.clone());
            d.polarity = Some(*polarity);
            d.subject = subject.clone();
        }
        NodeBody::Evidence { source_class, evidence_hash } => {
            d.source_class = Some(source_class.clone());
            d.evidence_hash = Some(evidence_hash.clone());
        }
        NodeBody::Assumption { approval } => d.approval = Some(approval.clone()),
        NodeBody::Uncertainty { qualifier } => d.qualifier = Some(qualifier.clone()),
        NodeBody::Rule | NodeBody::Strategy => {}
    }
    d
}

impl ArgumentGraph {
    pub fn from_document(doc: AgDocument) -> Result<Self, ParseError> {
        if doc.nodes.is_empty() {
            return Err(ParseError::EmptyDocument);
        }

        let mut raw_nodes = doc.nodes;
        raw_nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut nodes = BTreeMap::new();
        for raw in raw_nodes {
            let node = node_from_doc(raw)?;
            if nodes.contains_key(&node.id) {
                return Err(ParseError::DuplicateId(node.id.0));
            }
            nodes.insert(node.id.clone(), node);
        }

        let mut raw_edges = doc.edges;
        raw_edges.sort_by(|a, b| a.id.cmp(&b.id));
        let mut edges: BTreeMap<EdgeId, ArgEdge> = BTreeMap::new();
        let mut seen_triples = HashSet::new();
        for raw in raw_edges {
            if raw.id.is_empty() {
                return Err(ParseError::InvalidField {
                    element: "edge".into(),
                    field: "id",
                    reason: "must be non-empty".into(),
                });
            }
            if edges.contains_key(raw.id.as_str()) || nodes.contains_key(raw.id.as_str()) {
                return Err(ParseError::DuplicateId(raw.id));
            }
            let edge = edge_from_doc(raw, &nodes)?;
            // Duplicate (kind, src, dst) triples collapse onto the first id.
            if seen_triples.insert((edge.kind, edge.src.clone(), edge.dst.clone())) {
                edges.insert(edge.id.clone(), edge);
            }
        }

        check_acyclic(&nodes, &edges)?;

        let top_level: BTreeSet<NodeId> = nodes
            .values()
            .filter(|n| n.kind() == NodeKind::Claim)
            .filter(|n| {
                !edges.values().any(|e| {
                    e.src == n.id && matches!(e.kind, EdgeKind::Decomposes | EdgeKind::InferredBy)
                })
            })
            .map(|n| n.id.clone())
            .collect();

        check_reachable(&nodes, &edges, &top_level)?;

        Ok(ArgumentGraph { nodes, edges, top_level, meta: doc.meta })
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl std::borrow::Borrow<str> for EdgeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

fn node_from_doc(raw: DocNode) -> Result<ArgNode, ParseError> {
    if raw.id.is_empty() {
        return Err(ParseError::InvalidField {
            element: "node".into(),
            field: "id",
            reason: "must be non-empty".into(),
        });
    }
    let element = raw.id.clone();
    let kind = NodeKind::parse(&raw.kind)
        .ok_or_else(|| ParseError::UnknownKind { element: element.clone(), kind: raw.kind.clone() })?;

    let missing = |field| ParseError::MissingConditionalField { element: element.clone(), field };
    let unexpected = |field| ParseError::InvalidField {
        element: element.clone(),
        field,
        reason: format!("is not allowed on {} nodes", kind.as_str()),
    };

    let claim_only = [
        ("claim_class", raw.claim_class.is_some()),
        ("polarity", raw.polarity.is_some()),
        ("subject", raw.subject.is_some()),
    ];
    let evidence_only =
        [("source_class", raw.source_class.is_some()), ("evidence_hash", raw.evidence_hash.is_some())];
    let assumption_only = [("approval", raw.approval.is_some())];
    let uncertainty_only = [("qualifier", raw.qualifier.is_some())];
    let mut forbidden: Vec<(&'static str, bool)> = Vec::new();
    if kind != NodeKind::Claim {
        forbidden.extend(claim_only);
    }
    if kind != NodeKind::Evidence {
        forbidden.extend(evidence_only);
    }
    if kind != NodeKind::Assumption {
        forbidden.extend(assumption_only);
    }
    if kind != NodeKind::Uncertainty {
        forbidden.extend(uncertainty_only);
    }
    if let Some((field, _)) = forbidden.into_iter().find(|(_, present)| *present) {
        return Err(unexpected(field));
    }

    let body = match kind {
        NodeKind::Claim => {
            let claim_class = raw.claim_class.ok_or_else(|| missing("claim_class"))?;
            if claim_class.is_empty() {
                return Err(ParseError::InvalidField {
                    element,
                    field: "claim_class",
                    reason: "must be non-empty".into(),
                });
            }
            NodeBody::Claim {
                claim_class,
                polarity: raw.polarity.unwrap_or_default(),
                subject: raw.subject,
            }
        }
        NodeKind::Rule => NodeBody::Rule,
        NodeKind::Evidence => {
            let source_class = raw.source_class.ok_or_else(|| missing("source_class"))?;
            let evidence_hash = raw.evidence_hash.ok_or_else(|| missing("evidence_hash"))?;
            if !is_sha256_hex(&evidence_hash) {
                return Err(ParseError::InvalidField {
                    element,
                    field: "evidence_hash",
                    reason: "must be 64 lowercase hex characters".into(),
                });
            }
            NodeBody::Evidence { source_class, evidence_hash }
        }
        NodeKind::Assumption => NodeBody::Assumption { approval: raw.approval.unwrap_or_default() },
        NodeKind::Strategy => NodeBody::Strategy,
        NodeKind::Uncertainty => {
            let qualifier = raw.qualifier.ok_or_else(|| missing("qualifier"))?;
            let in_unit = |b: Option<f64>| b.is_none_or(|v| (0.0..=1.0).contains(&v));
            let ordered = match (qualifier.lower, qualifier.upper) {
                (Some(l), Some(u)) => l <= u,
                _ => true,
            };
            if !in_unit(qualifier.lower) || !in_unit(qualifier.upper) || !ordered {
                return Err(ParseError::InvalidField {
                    element,
                    field: "qualifier",
                    reason: "bounds must satisfy 0 <= lower <= upper <= 1".into(),
                });
            }
            NodeBody::Uncertainty { qualifier }
        }
    };

    Ok(ArgNode {
        id: NodeId(raw.id),
        text: raw.text,
        generator: raw.generator,
        generation_ref: raw.generation_ref,
        body,
    })
}

fn edge_from_doc(raw: DocEdge, nodes: &BTreeMap<NodeId, ArgNode>) -> Result<ArgEdge, ParseError> {
    let kind = EdgeKind::parse(&raw.kind)
        .ok_or_else(|| ParseError::UnknownKind { element: raw.id.clone(), kind: raw.kind.clone() })?;
    let endpoint = |id: &str| {
        nodes.get(id).ok_or_else(|| ParseError::DanglingEdgeEndpoint {
            edge: raw.id.clone(),
            endpoint: id.to_owned(),
        })
    };
    let src = endpoint(&raw.src)?;
    let dst = endpoint(&raw.dst)?;
    let (want_src, want_dst) = kind.signature();
    if src.kind() != want_src || dst.kind() != want_dst {
        return Err(ParseError::KindSignatureViolation {
            edge: raw.id.clone(),
            reason: format!(
                "{} must connect {} -> {}, found {} -> {}",
                kind.as_str(),
                want_src.as_str(),
                want_dst.as_str(),
                src.kind().as_str(),
                dst.kind().as_str()
            ),
        });
    }
    let resolution = match (kind, raw.resolution) {
        (EdgeKind::Attacks, None) => Some(Resolution::Unresolved),
        (EdgeKind::Attacks, Some(Resolution::Prevailing(p))) => {
            if p.0 != raw.src && p.0 != raw.dst {
                return Err(ParseError::KindSignatureViolation {
                    edge: raw.id.clone(),
                    reason: format!("prevailing side `{p}` is not an endpoint of the attack"),
                });
            }
            Some(Resolution::Prevailing(p))
        }
        (EdgeKind::Attacks, Some(r)) => Some(r),
        (_, Some(_)) => {
            return Err(ParseError::InvalidField {
                element: raw.id.clone(),
                field: "resolution",
                reason: "is only allowed on ATTACKS edges".into(),
            })
        }
        (_, None) => None,
    };
    Ok(ArgEdge { id: EdgeId(raw.id), kind, src: NodeId(raw.src), dst: NodeId(raw.dst), resolution })
}

fn check_acyclic(
    nodes: &BTreeMap<NodeId, ArgNode>,
    edges: &BTreeMap<EdgeId, ArgEdge>,
) -> Result<(), ParseError> {
    let mut succ: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for e in edges.values().filter(|e| e.kind.is_refinement()) {
        succ.entry(&e.src).or_default().push(&e.dst);
    }
    // Kahn's algorithm; whatever survives lies on or behind a cycle. Report
    // the smallest id that can reach itself.
    let mut indeg: BTreeMap<&NodeId, usize> = nodes.keys().map(|k| (k, 0)).collect();
    for targets in succ.values() {
        for t in targets {
            *indeg.get_mut(t).expect("endpoints checked") += 1;
        }
    }
    let mut queue: VecDeque<&NodeId> =
        indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    while let Some(n) = queue.pop_front() {
        indeg.remove(n);
        for t in succ.get(n).into_iter().flatten() {
            if let Some(d) = indeg.get_mut(t) {
                *d -= 1;
                if *d == 0 {
                    queue.push_back(t);
                }
            }
        }
    }
    if indeg.is_empty() {
        return Ok(());
    }
    let on_cycle = indeg.keys().find(|start| {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&NodeId> = succ.get(*start).cloned().unwrap_or_default();
        while let Some(n) = stack.pop() {
            if n == **start {
                return true;
            }
            if seen.insert(n) {
                stack.extend(succ.get(n).into_iter().flatten());
            }
        }
        false
    });
    let at = on_cycle.or_else(|| indeg.keys().next()).expect("nonempty");
    Err(ParseError::CyclicRefinement(at.0.clone()))
}

fn check_reachable(
    nodes: &BTreeMap<NodeId, ArgNode>,
    edges: &BTreeMap<EdgeId, ArgEdge>,
    top_level: &BTreeSet<NodeId>,
) -> Result<(), ParseError> {
    let mut adj: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for e in edges.values() {
        adj.entry(&e.src).or_default().push(&e.dst);
        adj.entry(&e.dst).or_default().push(&e.src);
    }
    let mut seen: BTreeSet<&NodeId> = top_level.iter().collect();
    let mut stack: Vec<&NodeId> = top_level.iter().collect();
    while let Some(n) = stack.pop() {
        for m in adj.get(n).into_iter().flatten() {
            if seen.insert(m) {
                stack.push(m);
            }
        }
    }
    match nodes.keys().find(|k| !seen.contains(k)) {
        Some(k) => Err(ParseError::UnreachableNode(k.0.clone())),
        None => Ok(()),
    }
}
