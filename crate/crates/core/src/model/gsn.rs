use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::{ArgumentGraph, EdgeKind, NodeBody, NodeKind};
use crate::canonical::to_canonical_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsnFormat {
    Json,
    Dot,
}

impl FromStr for GsnFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gsn-json" | "json" => Ok(GsnFormat::Json),
            "gsn-dot" | "dot" => Ok(GsnFormat::Dot),
            other => Err(format!("unknown GSN format `{other}`")),
        }
    }
}

#[derive(Serialize)]
struct GsnElement<'a> {
    id: &'a str,
    #[serde(rename = "type")]
    element_type: &'static str,
    text: &'a str,
}

#[derive(Serialize)]
struct GsnLink<'a> {
    id: &'a str,
    from: &'a str,
    to: &'a str,
    #[serde(rename = "type")]
    link_type: &'static str,
}

#[derive(Serialize)]
struct GsnDocument<'a> {
    elements: Vec<GsnElement<'a>>,
    links: Vec<GsnLink<'a>>,
}

fn element_type(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Claim => "Goal",
        NodeKind::Strategy => "Strategy",
        NodeKind::Evidence => "Solution",
        NodeKind::Assumption => "Assumption",
        NodeKind::Rule => "Context",
        NodeKind::Uncertainty => "Justification",
    }
}

fn link_type(kind: EdgeKind) -> &'static str {
    match kind {
        EdgeKind::Supports | EdgeKind::Decomposes | EdgeKind::Premise | EdgeKind::InferredBy => {
            "SupportedBy"
        }
        EdgeKind::Underpins | EdgeKind::Governs | EdgeKind::Qualifies => "InContextOf",
        EdgeKind::Attacks => "Counters",
    }
}

/// GSN links read top-down, from the supported element to its support,
/// which is the reverse of every edge kind except ATTACKS.
fn gsn_direction(kind: EdgeKind) -> bool {
    kind != EdgeKind::Attacks
}

/// Renders a GSN-style view: goals as rounded boxes, solutions as plain
/// boxes, assumptions dashed.
pub fn export_gsn(g: &ArgumentGraph, format: GsnFormat) -> Vec<u8> {
    match format {
        GsnFormat::Json => {
            let doc = GsnDocument {
                elements: g
                    .nodes()
                    .map(|n| GsnElement { id: n.id.as_str(), element_type: element_type(n.kind()), text: &n.text })
                    .collect(),
                links: g
                    .edges()
                    .map(|e| {
                        let (from, to) = if gsn_direction(e.kind) { (&e.dst, &e.src) } else { (&e.src, &e.dst) };
                        GsnLink { id: e.id.as_str(), from: from.as_str(), to: to.as_str(), link_type: link_type(e.kind) }
                    })
                    .collect(),
            };
            to_canonical_bytes(&doc)
        }
        GsnFormat::Dot => render_dot(g).into_bytes(),
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn render_dot(g: &ArgumentGraph) -> String {
    let mut out = String::from("digraph gsn {\n  rankdir=TB;\n  node [fontsize=10];\n");
    for n in g.nodes() {
        let (label, shape, style) = match &n.body {
            NodeBody::Claim { .. } if g.top_level().contains(&n.id) => ("Goal", "box", "rounded"),
            NodeBody::Claim { .. } => ("Claim", "box", "rounded"),
            NodeBody::Evidence { .. } => ("Evidence", "box", "solid"),
            NodeBody::Assumption { .. } => ("Assumption", "box", "dashed"),
            NodeBody::Strategy => ("Strategy", "parallelogram", "solid"),
            NodeBody::Rule => ("Rule", "note", "solid"),
            NodeBody::Uncertainty { .. } => ("Uncertainty", "ellipse", "solid"),
        };
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}\\n{}\", shape={}, style={}];",
            dot_escape(n.id.as_str()),
            label,
            dot_escape(&n.text),
            shape,
            style
        );
    }
    for e in g.edges() {
        let (from, to) = if gsn_direction(e.kind) { (&e.dst, &e.src) } else { (&e.src, &e.dst) };
        let attrs = match e.kind {
            EdgeKind::Attacks => format!("label=\"{}\", color=red, arrowhead=tee", e.kind.as_str()),
            EdgeKind::Underpins | EdgeKind::Governs | EdgeKind::Qualifies => {
                format!("label=\"{}\", arrowhead=empty", e.kind.as_str())
            }
            _ => format!("label=\"{}\"", e.kind.as_str()),
        };
        let _ = writeln!(out, "  \"{}\" -> \"{}\" [{}];", dot_escape(from.as_str()), dot_escape(to.as_str()), attrs);
    }
    out.push_str("}\n");
    out
}
