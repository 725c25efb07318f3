//! Typed argument graphs.
//!
//! An [`ArgumentGraph`] is only ever produced by [`parse_and_normalize`], so
//! holding one means the endpoint-kind signatures, conditional fields,
//! acyclic refinement and reachability rules all hold. Whether the graph is
//! *admissible* is a separate question answered by the validation kernel.

mod document;
mod gsn;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canonical::sha256_hex;

pub use document::{
    canonical_serialize, parse_and_normalize, AgDocument, DocEdge, DocNode, DraftDocument,
    ParseError,
};
pub use gsn::{export_gsn, GsnFormat};

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_newtype!(NodeId);
id_newtype!(EdgeId);
id_newtype!(GraphId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Claim,
    Rule,
    Evidence,
    Assumption,
    Strategy,
    Uncertainty,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::Claim,
        NodeKind::Rule,
        NodeKind::Evidence,
        NodeKind::Assumption,
        NodeKind::Strategy,
        NodeKind::Uncertainty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Claim => "Claim",
            NodeKind::Rule => "Rule",
            NodeKind::Evidence => "Evidence",
            NodeKind::Assumption => "Assumption",
            NodeKind::Strategy => "Strategy",
            NodeKind::Uncertainty => "Uncertainty",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    Supports,
    Underpins,
    InferredBy,
    Premise,
    Decomposes,
    Governs,
    Qualifies,
    Attacks,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 8] = [
        EdgeKind::Supports,
        EdgeKind::Underpins,
        EdgeKind::InferredBy,
        EdgeKind::Premise,
        EdgeKind::Decomposes,
        EdgeKind::Governs,
        EdgeKind::Qualifies,
        EdgeKind::Attacks,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Supports => "SUPPORTS",
            EdgeKind::Underpins => "UNDERPINS",
            EdgeKind::InferredBy => "INFERRED_BY",
            EdgeKind::Premise => "PREMISE",
            EdgeKind::Decomposes => "DECOMPOSES",
            EdgeKind::Governs => "GOVERNS",
            EdgeKind::Qualifies => "QUALIFIES",
            EdgeKind::Attacks => "ATTACKS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Required (src, dst) node kinds.
    pub fn signature(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            EdgeKind::Supports => (Evidence, Claim),
            EdgeKind::Underpins => (Assumption, Claim),
            EdgeKind::InferredBy => (Claim, Strategy),
            EdgeKind::Premise => (Strategy, Claim),
            EdgeKind::Decomposes => (Claim, Claim),
            EdgeKind::Governs => (Rule, Claim),
            EdgeKind::Qualifies => (Uncertainty, Claim),
            EdgeKind::Attacks => (Claim, Claim),
        }
    }

    /// Edges that make up the claim refinement structure. All of them point
    /// from the refining element towards the claim being refined.
    pub fn is_refinement(self) -> bool {
        matches!(self, EdgeKind::Decomposes | EdgeKind::InferredBy | EdgeKind::Premise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Affirms,
    Negates,
}

impl Polarity {
    pub fn opposite(self) -> Self {
        match self {
            Polarity::Affirms => Polarity::Negates,
            Polarity::Negates => Polarity::Affirms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Ai,
    Human,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Approval {
    #[default]
    None,
    Pending,
    Approved { agent: String, timestamp: String },
}

impl Approval {
    pub fn is_approved(&self) -> bool {
        matches!(self, Approval::Approved { .. })
    }
}

/// Confidence label with optional bounds in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Qualifier {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

/// Kind-specific payload of a node. The variant is the node's kind, so a
/// conditional field can only exist on the kind it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeBody {
    Claim { claim_class: String, polarity: Polarity, subject: Option<String> },
    Rule,
    Evidence { source_class: String, evidence_hash: String },
    Assumption { approval: Approval },
    Strategy,
    Uncertainty { qualifier: Qualifier },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArgNode {
    pub id: NodeId,
    pub text: String,
    pub generator: Generator,
    pub generation_ref: Option<String>,
    pub body: NodeBody,
}

impl ArgNode {
    pub fn kind(&self) -> NodeKind {
        match self.body {
            NodeBody::Claim { .. } => NodeKind::Claim,
            NodeBody::Rule => NodeKind::Rule,
            NodeBody::Evidence { .. } => NodeKind::Evidence,
            NodeBody::Assumption { .. } => NodeKind::Assumption,
            NodeBody::Strategy => NodeKind::Strategy,
            NodeBody::Uncertainty { .. } => NodeKind::Uncertainty,
        }
    }

    pub fn claim_class(&self) -> Option<&str> {
        match &self.body {
            NodeBody::Claim { claim_class, .. } => Some(claim_class),
            _ => None,
        }
    }

    pub fn evidence_hash(&self) -> Option<&str> {
        match &self.body {
            NodeBody::Evidence { evidence_hash, .. } => Some(evidence_hash),
            _ => None,
        }
    }

    pub fn approval(&self) -> Option<&Approval> {
        match &self.body {
            NodeBody::Assumption { approval } => Some(approval),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Unresolved,
    Prevailing(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgEdge {
    pub id: EdgeId,
    pub kind: EdgeKind,
    pub src: NodeId,
    pub dst: NodeId,
    /// `Some` exactly for ATTACKS edges.
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub case_id: String,
    pub policy_id: String,
    pub policy_version: u64,
    pub round: u32,
}

/// A well-formed argument graph. Nodes and edges are keyed (and therefore
/// iterated) in canonical id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgumentGraph {
    nodes: BTreeMap<NodeId, ArgNode>,
    edges: BTreeMap<EdgeId, ArgEdge>,
    top_level: BTreeSet<NodeId>,
    meta: GraphMeta,
}

impl ArgumentGraph {
    pub fn nodes(&self) -> impl Iterator<Item = &ArgNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &ArgEdge> {
        self.edges.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&ArgNode> {
        self.nodes.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn top_level(&self) -> &BTreeSet<NodeId> {
        &self.top_level
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &ArgNode> {
        self.nodes.values().filter(move |n| n.kind() == kind)
    }

    pub fn incoming<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a ArgEdge> {
        self.edges.values().filter(move |e| &e.dst == id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a ArgEdge> {
        self.edges.values().filter(move |e| &e.src == id)
    }

    /// Claims reachable from `root` by walking refinement edges downwards,
    /// `root` included.
    pub fn refinement_descendants(&self, root: &NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![root.clone()];
        while let Some(n) = stack.pop() {
            if !seen.insert(n.clone()) {
                continue;
            }
            for e in self.incoming(&n).filter(|e| e.kind.is_refinement()) {
                stack.push(e.src.clone());
            }
        }
        seen.retain(|n| self.nodes.get(n).is_some_and(|n| n.kind() == NodeKind::Claim));
        seen
    }

    pub fn to_document(&self) -> AgDocument {
        document::to_document(self)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_serialize(self)
    }

    /// SHA-256 of the canonical serialization.
    pub fn id(&self) -> GraphId {
        GraphId(sha256_hex(self.canonical_bytes()))
    }
}
