use serde_json::{json, Value};

use super::Workspace;
use crate::canonical::to_canonical_bytes;
use crate::model::{export_gsn, GsnFormat};

/// Renderings of a graph shared by `arggate export` and the HTTP reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphView {
    /// Document, violation report and GSN export in one JSON object.
    Bundle,
    Document,
    Report,
    GsnJson,
    GsnDot,
}

impl Workspace {
    pub fn graph_status(&self, graph_id: &str) -> Option<&'static str> {
        if self.persisted.contains_key(graph_id) {
            Some("persisted")
        } else if self.queued_run(graph_id).is_some() {
            Some("escalated")
        } else {
            None
        }
    }

    /// Bytes for `view` of a persisted or escalated graph. JSON views are
    /// canonical and newline-terminated.
    pub fn render(&self, graph_id: &str, view: GraphView) -> Option<Vec<u8>> {
        let line = |mut b: Vec<u8>| {
            b.push(b'\n');
            b
        };
        let bytes = match view {
            GraphView::Document => line(to_canonical_bytes(&self.graph_view(graph_id)?.0)),
            GraphView::Report => line(to_canonical_bytes(&self.graph_view(graph_id)?.1)),
            GraphView::GsnJson => export_gsn(&self.graph(graph_id)?, GsnFormat::Json),
            GraphView::GsnDot => export_gsn(&self.graph(graph_id)?, GsnFormat::Dot),
            GraphView::Bundle => {
                let (document, report) = self.graph_view(graph_id)?;
                let g = self.graph(graph_id)?;
                let gsn: Value = serde_json::from_slice(&export_gsn(&g, GsnFormat::Json)).expect("gsn json");
                let dot = String::from_utf8(export_gsn(&g, GsnFormat::Dot)).expect("dot is utf8");
                line(to_canonical_bytes(&json!({
                    "graph_id": graph_id,
                    "status": self.graph_status(graph_id)?,
                    "document": document,
                    "report": report,
                    "gsn": gsn,
                    "gsn_dot": dot,
                })))
            }
        };
        Some(bytes)
    }
}
