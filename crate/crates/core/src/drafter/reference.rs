use std::collections::BTreeSet;

use super::{apply_faults, faults_allowed, to_draft, DraftError, DraftRequest, Drafter, DrafterMeta, FaultSpec};
use crate::evidence::EvidenceItem;
use crate::kernel::RepairHint;
use crate::knowledge::token_set;
use crate::model::{AgDocument, Approval, DocEdge, DocNode, DraftDocument, EdgeKind, Generator, GraphMeta, NodeKind, Polarity};

pub fn claim_node_id(case: &str, class: &str) -> String {
    format!("{case}:claim:{class}")
}

pub fn evidence_node_id(case: &str, hash: &str) -> String {
    format!("{case}:ev:{}", &hash[..hash.len().min(12)])
}

pub fn assumption_node_id(case: &str) -> String {
    format!("{case}:assumption:evidence-set-complete")
}

/// `identity_verified` -> `Identity verified`.
pub fn humanize(class: &str) -> String {
    let spaced = class.replace(['_', '-'], " ");
    let mut chars = spaced.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Deterministic drafter that instantiates the policy's coverage templates
/// and grounds each claim in the retrieval item that best matches its class.
#[derive(Debug, Clone)]
pub struct ReferenceDrafter {
    meta: DrafterMeta,
    allow_faults: bool,
}

impl Default for ReferenceDrafter {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceDrafter {
    pub fn new() -> Self {
        Self { meta: DrafterMeta::reference(), allow_faults: faults_allowed() }
    }

    pub fn with_faults_allowed(mut self, allow: bool) -> Self {
        self.allow_faults = allow;
        self
    }
}

/// Item with the largest token overlap with the class label; ties go to the
/// earlier (higher-scored) retrieval position.
fn best_item<'a>(items: &'a [EvidenceItem], class: &str, exclude: &BTreeSet<&str>) -> Option<&'a EvidenceItem> {
    let label = token_set(class);
    let mut best: Option<(usize, &EvidenceItem)> = None;
    for it in items.iter().filter(|it| !exclude.contains(it.hash.as_str())) {
        let score = token_set(&it.content).intersection(&label).count();
        if score > 0 && best.is_none_or(|(s, _)| score > s) {
            best = Some((score, it));
        }
    }
    best.map(|(_, it)| it)
}

struct Builder<'a> {
    doc: AgDocument,
    gen_ref: &'a str,
}

impl<'a> Builder<'a> {
    fn case(&self) -> String {
        self.doc.meta.case_id.clone()
    }

    fn has_node(&self, id: &str) -> bool {
        self.doc.nodes.iter().any(|n| n.id == id)
    }

    fn node_mut(&mut self, id: &str) -> Option<&mut DocNode> {
        self.doc.nodes.iter_mut().find(|n| n.id == id)
    }

    fn edge(&mut self, kind: EdgeKind, src: &str, dst: &str) {
        let e = DocEdge::new(kind, src, dst);
        if !self.doc.edges.iter().any(|x| x.id == e.id) {
            self.doc.edges.push(e);
        }
    }

    fn claim(&mut self, class: &str, text: String, parent: Option<&str>) -> String {
        let id = claim_node_id(&self.case(), class);
        if !self.has_node(&id) {
            let mut n = DocNode::bare(id.clone(), NodeKind::Claim, text, Generator::Ai);
            n.generation_ref = Some(self.gen_ref.to_owned());
            n.claim_class = Some(class.to_owned());
            n.polarity = Some(Polarity::Affirms);
            n.subject = Some(class.to_owned());
            self.doc.nodes.push(n);
        }
        if let Some(p) = parent {
            self.edge(EdgeKind::Decomposes, &id, p);
        }
        id
    }

    fn attach(&mut self, claim: &str, item: &EvidenceItem) {
        let id = evidence_node_id(&self.case(), &item.hash);
        if !self.has_node(&id) {
            let mut n = DocNode::bare(id.clone(), NodeKind::Evidence, item.title.clone(), Generator::Ai);
            n.generation_ref = Some(self.gen_ref.to_owned());
            n.source_class = Some(item.source_class.clone());
            n.evidence_hash = Some(item.hash.clone());
            self.doc.nodes.push(n);
        }
        self.edge(EdgeKind::Supports, &id, claim);
    }

    fn underpin(&mut self, claim: &str) {
        let id = assumption_node_id(&self.case());
        if !self.has_node(&id) {
            let mut n = DocNode::bare(id.clone(), NodeKind::Assumption, "Evidence set complete", Generator::Ai);
            n.generation_ref = Some(self.gen_ref.to_owned());
            n.approval = Some(Approval::Pending);
            self.doc.nodes.push(n);
        }
        self.edge(EdgeKind::Underpins, &id, claim);
    }

    /// Hashes of items already supporting `claim`.
    fn attached_to(&self, claim: &str) -> BTreeSet<String> {
        self.doc
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Supports.as_str() && e.dst == claim)
            .filter_map(|e| self.doc.nodes.iter().find(|n| n.id == e.src))
            .filter_map(|n| n.evidence_hash.clone())
            .collect()
    }

    fn ground(&mut self, claim: &str, class: &str, items: &[EvidenceItem]) {
        let used = self.attached_to(claim);
        let exclude: BTreeSet<&str> = used.iter().map(String::as_str).collect();
        match best_item(items, class, &exclude) {
            Some(it) => self.attach(claim, it),
            None => self.underpin(claim),
        }
    }

    /// Places a required class under its group claim (created on demand) or
    /// directly under `top`.
    fn subclaim(&mut self, req: &DraftRequest<'_>, top_class: &str, top: &str, class: &str) -> String {
        let groups = req.policy.group_layout(top_class);
        let parent = match groups.get(class) {
            Some(g) => {
                let gid = claim_node_id(&self.case(), &g.class);
                if !self.has_node(&gid) {
                    self.claim(&g.class, g.text.clone(), Some(top));
                    self.ground(&gid, &g.class, req.items);
                }
                gid
            }
            None => top.to_owned(),
        };
        self.claim(class, humanize(class), Some(&parent))
    }
}

pub(super) fn instantiate(req: &DraftRequest<'_>) -> Result<AgDocument, DraftError> {
    let kg = req.kg;
    let p = req.policy;
    let class = kg.decision_class.as_str();
    if p.templates_for(class).next().is_none() {
        return Err(DraftError::NoMatchingTemplate(class.to_owned()));
    }
    let mut b = Builder {
        doc: AgDocument {
            nodes: vec![],
            edges: vec![],
            meta: GraphMeta {
                case_id: kg.case_id.clone(),
                policy_id: p.id.clone(),
                policy_version: p.version,
                round: req.round,
            },
        },
        gen_ref: req.generation_ref,
    };
    let goal = b.claim(class, format!("Complies with policy {}", p.id), None);
    b.ground(&goal, class, req.items);
    for c in p.required_classes(class) {
        let id = b.subclaim(req, class, &goal, &c);
        b.ground(&id, &c, req.items);
    }
    Ok(b.doc)
}

pub(super) fn revise(req: &DraftRequest<'_>) -> Result<AgDocument, DraftError> {
    let (Some(prev), Some(feedback)) = (req.previous, req.feedback) else {
        return Err(DraftError::InvalidRequest("repair needs a previous document and feedback".into()));
    };
    let mut b = Builder { doc: prev.clone(), gen_ref: req.generation_ref };
    b.doc.meta.round = req.round;
    let class_of = |doc: &AgDocument, id: &str| {
        doc.nodes.iter().find(|n| n.id == id).and_then(|n| n.claim_class.clone())
    };
    for v in &feedback.violations {
        let Some(first) = v.node_ids.first().map(|n| n.as_str().to_owned()) else { continue };
        match &v.repair_hint {
            RepairHint::AddEvidence => {
                if let Some(class) = class_of(&b.doc, &first) {
                    b.ground(&first, &class, req.items);
                }
            }
            RepairHint::AddSubclaim { class } => {
                if let Some(top_class) = class_of(&b.doc, &first) {
                    let id = b.subclaim(req, &top_class, &first, class);
                    b.ground(&id, class, req.items);
                }
            }
            RepairHint::AttachGenerationRef => {
                for id in &v.node_ids {
                    let gen_ref = req.generation_ref.to_owned();
                    if let Some(n) = b.node_mut(id.as_str()).filter(|n| n.generator == Generator::Ai) {
                        n.generation_ref = Some(gen_ref);
                    }
                }
            }
            _ => {}
        }
    }
    Ok(b.doc)
}

impl Drafter for ReferenceDrafter {
    fn meta(&self) -> &DrafterMeta {
        &self.meta
    }

    fn draft(&self, req: &DraftRequest<'_>, faults: &FaultSpec) -> Result<DraftDocument, DraftError> {
        req.check()?;
        if !faults.is_empty() && !self.allow_faults {
            return Err(DraftError::FaultsRefused);
        }
        let mut doc = instantiate(req)?;
        apply_faults(&mut doc, faults);
        Ok(to_draft(&doc, &self.meta.drafter_id, req.round))
    }

    fn repair(&self, req: &DraftRequest<'_>) -> Result<DraftDocument, DraftError> {
        req.check()?;
        let doc = revise(req)?;
        Ok(to_draft(&doc, &self.meta.drafter_id, req.round))
    }
}
