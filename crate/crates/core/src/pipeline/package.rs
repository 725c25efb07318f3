use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical::{sha256_hex, to_canonical_bytes};
use crate::kernel::ViolationReport;
use crate::model::{export_gsn, AgDocument, ArgumentGraph, GsnFormat, NodeKind};

pub const AG_FILE: &str = "ag.json";
pub const REPORT_FILE: &str = "report.json";
pub const GSN_DOT_FILE: &str = "gsn.dot";
pub const GSN_JSON_FILE: &str = "gsn.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "package.json";
pub const OVERRIDES_FILE: &str = "overrides.ndjson";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqRange {
    pub first: u64,
    pub last: u64,
}

/// Append-only disposition recorded against a persisted decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub graph_id: String,
    pub disposition: String,
    pub rationale: String,
    pub agent: String,
    pub timestamp: String,
    pub activity_id: String,
}

/// Everything about a package except the artifacts stored beside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageManifest {
    pub graph_id: String,
    pub case_id: String,
    pub run_id: String,
    pub policy_id: String,
    pub policy_version: u64,
    pub policy_fingerprint: String,
    pub rounds_used: u32,
    pub provenance: SeqRange,
    /// SHA-256 of each artifact file.
    pub files: BTreeMap<String, String>,
}

/// An accepted graph with its report, provenance range and GSN views.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionPackage {
    pub manifest: PackageManifest,
    pub document: AgDocument,
    pub report: ViolationReport,
    pub gsn_dot: String,
    pub gsn_json: String,
    pub summary: String,
    pub overrides: Vec<OverrideRecord>,
}

impl DecisionPackage {
    pub(crate) fn assemble(
        g: &ArgumentGraph,
        report: ViolationReport,
        run_id: &str,
        policy_fingerprint: &str,
        rounds_used: u32,
        provenance: SeqRange,
    ) -> Self {
        let gsn_dot = String::from_utf8(export_gsn(g, GsnFormat::Dot)).expect("utf8 dot");
        let gsn_json = String::from_utf8(export_gsn(g, GsnFormat::Json)).expect("utf8 json");
        let meta = g.meta();
        let mut manifest = PackageManifest {
            graph_id: g.id().0,
            case_id: meta.case_id.clone(),
            run_id: run_id.to_owned(),
            policy_id: meta.policy_id.clone(),
            policy_version: meta.policy_version,
            policy_fingerprint: policy_fingerprint.to_owned(),
            rounds_used,
            provenance,
            files: BTreeMap::new(),
        };
        let summary = summarize(g, &manifest);
        let mut pkg = DecisionPackage {
            manifest: manifest.clone(),
            document: g.to_document(),
            report,
            gsn_dot,
            gsn_json,
            summary,
            overrides: Vec::new(),
        };
        for (name, bytes) in pkg.artifacts() {
            manifest.files.insert(name.to_owned(), sha256_hex(bytes));
        }
        pkg.manifest = manifest;
        pkg
    }

    pub fn graph_id(&self) -> &str {
        &self.manifest.graph_id
    }

    pub fn ag_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(&self.document)
    }

    pub fn report_bytes(&self) -> Vec<u8> {
        self.report.to_canonical_bytes()
    }

    fn artifacts(&self) -> Vec<(&'static str, Vec<u8>)> {
        vec![
            (AG_FILE, self.ag_bytes()),
            (REPORT_FILE, self.report_bytes()),
            (GSN_DOT_FILE, self.gsn_dot.clone().into_bytes()),
            (GSN_JSON_FILE, self.gsn_json.clone().into_bytes()),
            (SUMMARY_FILE, self.summary.clone().into_bytes()),
        ]
    }

    pub(crate) fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.artifacts() {
            fs::write(dir.join(name), bytes)?;
        }
        fs::write(dir.join(MANIFEST_FILE), to_canonical_bytes(&self.manifest))?;
        let overrides = dir.join(OVERRIDES_FILE);
        if !overrides.exists() {
            fs::write(overrides, b"")?;
        }
        Ok(())
    }

    pub(crate) fn read_from(dir: &Path) -> Result<Self, String> {
        let read = |name: &str| fs::read(dir.join(name)).map_err(|e| format!("{}: {e}", dir.join(name).display()));
        let manifest: PackageManifest =
            serde_json::from_slice(&read(MANIFEST_FILE)?).map_err(|e| format!("{MANIFEST_FILE}: {e}"))?;
        for (name, hash) in &manifest.files {
            if sha256_hex(read(name)?) != *hash {
                return Err(format!("{} does not match its recorded hash", dir.join(name).display()));
            }
        }
        let text = |name: &str| read(name).and_then(|b| String::from_utf8(b).map_err(|e| e.to_string()));
        let overrides = text(OVERRIDES_FILE)
            .unwrap_or_default()
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| format!("{OVERRIDES_FILE}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DecisionPackage {
            document: serde_json::from_slice(&read(AG_FILE)?).map_err(|e| format!("{AG_FILE}: {e}"))?,
            report: serde_json::from_slice(&read(REPORT_FILE)?).map_err(|e| format!("{REPORT_FILE}: {e}"))?,
            gsn_dot: text(GSN_DOT_FILE)?,
            gsn_json: text(GSN_JSON_FILE)?,
            summary: text(SUMMARY_FILE)?,
            overrides,
            manifest,
        })
    }
}

fn summarize(g: &ArgumentGraph, m: &PackageManifest) -> String {
    let count = |k| g.nodes_of(k).count();
    let approved = g.nodes_of(NodeKind::Assumption).filter(|n| n.approval().is_some_and(|a| a.is_approved())).count();
    let mut s = String::new();
    s.push_str(&format!("decision package {}\n", m.graph_id));
    s.push_str(&format!("case: {}\n", m.case_id));
    s.push_str(&format!("policy: {} v{} ({})\n", m.policy_id, m.policy_version, m.policy_fingerprint));
    s.push_str(&format!("run: {} in {} round(s)\n", m.run_id, m.rounds_used));
    s.push_str(&format!("top-level claims: {}\n", g.top_level().len()));
    s.push_str(&format!("claims: {}\n", count(NodeKind::Claim)));
    s.push_str(&format!("evidence: {}\n", count(NodeKind::Evidence)));
    s.push_str(&format!("assumptions: {} ({approved} approved)\n", count(NodeKind::Assumption)));
    s.push_str("validation: valid, 0 violations\n");
    s.push_str(&format!("provenance: ledger seq {}..={}\n", m.provenance.first, m.provenance.last));
    s
}
