use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;

use super::package::OVERRIDES_FILE;
use super::{OverrideRecord, PersistRequest, PipelineError, RunOutcome, RunStatus, Workspace};
use crate::kernel;
use crate::knowledge::build_case_knowledge_graph;
use crate::ledger::{attr, graph_entity_id, ActivityKind, Attributes, HumanEdit, ANNOTATE_ACTION};
use crate::model::{parse_and_normalize, AgDocument, Approval, ArgumentGraph, DocNode, Generator, NodeKind};

impl Workspace {
    fn escalated_run_id(&self, graph_id: &str) -> Result<String, PipelineError> {
        self.queued_run(graph_id)
            .map(|r| r.run_id.clone())
            .ok_or_else(|| PipelineError::UnknownGraph(graph_id.to_owned()))
    }

    /// Approves a pending assumption of an escalated graph, then validates
    /// the approved graph and persists it if the kernel accepts it.
    pub fn approve_assumption(
        &mut self,
        graph_id: &str,
        assumption_id: &str,
        agent_id: &str,
    ) -> Result<RunOutcome, PipelineError> {
        let run_id = match self.escalated_run_id(graph_id) {
            Ok(r) => r,
            Err(e) => {
                // Assumptions of a persisted graph have nothing left to approve.
                let persisted = self.persisted_graph(graph_id).and_then(|g| {
                    g.nodes_of(NodeKind::Assumption).find(|n| n.id.as_str() == assumption_id).map(|n| n.approval().cloned())
                });
                return match persisted {
                    Some(Some(a)) if a.is_approved() => Err(PipelineError::AlreadyApproved(assumption_id.to_owned())),
                    Some(_) => Err(PipelineError::GatingViolation(format!("graph {graph_id} is already persisted"))),
                    None if self.persisted_graph(graph_id).is_some() => {
                        Err(PipelineError::UnknownAssumption(assumption_id.to_owned()))
                    }
                    None => Err(e),
                };
            }
        };
        let mut doc = self.runs[&run_id].document.clone().ok_or_else(|| PipelineError::UnknownGraph(graph_id.to_owned()))?;
        let node = doc
            .nodes
            .iter_mut()
            .find(|n| n.id == assumption_id && n.kind == NodeKind::Assumption.as_str())
            .ok_or_else(|| PipelineError::UnknownAssumption(assumption_id.to_owned()))?;
        if node.approval.as_ref().is_some_and(Approval::is_approved) {
            return Err(PipelineError::AlreadyApproved(assumption_id.to_owned()));
        }
        self.human_agent(agent_id)?;

        let now = self.ledger.now();
        let mut a = Attributes::new();
        a.insert(attr::NODE_ID.into(), assumption_id.to_owned());
        a.insert(attr::GRAPH_ID.into(), graph_id.to_owned());
        a.insert(attr::RUN_ID.into(), run_id.clone());
        a.insert(attr::ACTION.into(), "approve".into());
        let id = format!("approve:{graph_id}:{assumption_id}");
        self.simple_activity(id, ActivityKind::Approve, vec![graph_entity_id(graph_id)], vec![], a, agent_id)?;
        node.approval = Some(Approval::Approved { agent: agent_id.to_owned(), timestamp: now });

        self.revalidate_human(&run_id, graph_id, doc, Vec::new())
    }

    /// Replaces an escalated graph with a human revision. Every added or
    /// changed node must be marked human-generated; an edit activity is
    /// recorded for each before the kernel sees the revision.
    pub fn submit_revision(&mut self, graph_id: &str, bytes: &[u8], agent_id: &str) -> Result<RunOutcome, PipelineError> {
        let run_id = self.escalated_run_id(graph_id)?;
        self.human_agent(agent_id)?;
        let old = self.runs[&run_id].document.clone().ok_or_else(|| PipelineError::UnknownGraph(graph_id.to_owned()))?;
        let revised = parse_and_normalize(bytes)?.to_document();

        let before: BTreeMap<&str, &DocNode> = old.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
        let after: BTreeMap<&str, &DocNode> = revised.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
        let mut edits = Vec::new();
        for (id, n) in &after {
            if before.get(id) != Some(n) {
                edits.push(HumanEdit { node_id: (*id).to_owned(), agent_id: agent_id.to_owned(), action: "revise".into() });
            }
        }
        for id in before.keys().filter(|id| !after.contains_key(*id)) {
            edits.push(HumanEdit { node_id: (*id).to_owned(), agent_id: agent_id.to_owned(), action: "remove".into() });
        }
        for (i, e) in edits.iter().enumerate() {
            let mut a = Attributes::new();
            a.insert(attr::NODE_ID.into(), e.node_id.clone());
            a.insert(attr::GRAPH_ID.into(), graph_id.to_owned());
            a.insert(attr::RUN_ID.into(), run_id.clone());
            a.insert(attr::ACTION.into(), e.action.clone());
            let id = format!("edit:{run_id}:{graph_id}:rev{}:{i}", self.ledger.len());
            self.simple_activity(id, ActivityKind::Edit, vec![graph_entity_id(graph_id)], vec![], a, agent_id)?;
        }
        self.revalidate_human(&run_id, graph_id, revised, edits)
    }

    fn revalidate_human(
        &mut self,
        run_id: &str,
        old_graph_id: &str,
        doc: AgDocument,
        new_edits: Vec<HumanEdit>,
    ) -> Result<RunOutcome, PipelineError> {
        let g = ArgumentGraph::from_document(doc)?;
        let gid = self.record_graph(&g, &graph_entity_id(old_graph_id))?;
        let state = self.runs[run_id].clone();
        let mut human_edits = state.human_edits.clone();
        human_edits.extend(new_edits);
        let verdict = kernel::valid(&g, &state.policy, &self.store, self.ledger.record())?;
        if let Some(s) = self.runs.get_mut(run_id) {
            s.graph_id = Some(gid.clone());
            s.document = Some(g.to_document());
            s.human_edits = human_edits.clone();
        }
        if verdict.is_valid() {
            let kg = build_case_knowledge_graph(&state.case)?;
            let package = self.persist(PersistRequest {
                run_id,
                graph: &g,
                verdict: &verdict,
                policy: &state.policy,
                kg: &kg,
                retrieval: &state.retrieval,
                drafter: &state.drafter,
                human_edits: &human_edits,
                rounds_used: state.rounds_used,
            })?;
            return Ok(RunOutcome::Accepted {
                run_id: run_id.to_owned(),
                rounds_used: state.rounds_used,
                package: Box::new(package),
            });
        }
        let report = verdict.into_report();
        self.record_invalid(run_id, state.rounds_used, &state.policy, &report)?;
        self.escalate(run_id, state.rounds_used, report)
    }

    /// Attaches a reviewer note to `node@graph` (or `node` in the latest
    /// graph holding it). Notes live in the ledger only.
    pub fn annotate(&mut self, node_ref: &str, text: &str, agent_id: &str) -> Result<String, PipelineError> {
        if text.trim().is_empty() {
            return Err(PipelineError::MissingField("text"));
        }
        self.human_agent(agent_id)?;
        let (node, graph) = match node_ref.rsplit_once('@') {
            Some((n, g)) => (n.to_owned(), g.to_owned()),
            None => {
                let gid = self
                    .graphs()
                    .into_iter()
                    .filter_map(|s| self.graph(&s.graph_id).map(|g| (s.graph_id, g)))
                    .filter(|(_, g)| g.node(&crate::model::NodeId::new(node_ref)).is_some())
                    .map(|(id, _)| id)
                    .next_back()
                    .ok_or_else(|| PipelineError::UnknownNode(node_ref.to_owned()))?;
                (node_ref.to_owned(), gid)
            }
        };
        let g = self.graph(&graph).ok_or_else(|| PipelineError::UnknownGraph(graph.clone()))?;
        if g.node(&crate::model::NodeId::new(&node)).is_none() {
            return Err(PipelineError::UnknownNode(node));
        }
        let mut a = Attributes::new();
        a.insert(attr::NODE_ID.into(), node.clone());
        a.insert(attr::GRAPH_ID.into(), graph.clone());
        a.insert(attr::ACTION.into(), ANNOTATE_ACTION.into());
        a.insert(attr::ANNOTATION.into(), text.to_owned());
        let id = format!("annotate:{graph}:{node}:{}", self.ledger.len());
        self.simple_activity(id.clone(), ActivityKind::Edit, vec![graph_entity_id(&graph)], vec![], a, agent_id)?;
        Ok(id)
    }

    /// Records a human disposition that departs from (or confirms) a
    /// persisted decision. The graph itself is never changed.
    pub fn override_decision(
        &mut self,
        graph_id: &str,
        disposition: &str,
        rationale: &str,
        agent_id: &str,
    ) -> Result<OverrideRecord, PipelineError> {
        if disposition.trim().is_empty() {
            return Err(PipelineError::MissingField("disposition"));
        }
        if rationale.trim().is_empty() {
            return Err(PipelineError::MissingField("rationale"));
        }
        if !self.persisted.contains_key(graph_id) && self.queued_run(graph_id).is_none() {
            return Err(PipelineError::UnknownGraph(graph_id.to_owned()));
        }
        self.human_agent(agent_id)?;
        let mut a = Attributes::new();
        a.insert(attr::GRAPH_ID.into(), graph_id.to_owned());
        a.insert(attr::DISPOSITION.into(), disposition.to_owned());
        a.insert(attr::RATIONALE.into(), rationale.to_owned());
        let id = format!("override:{graph_id}:{}", self.ledger.len());
        let timestamp = self.ledger.now();
        self.simple_activity(id.clone(), ActivityKind::Override, vec![graph_entity_id(graph_id)], vec![], a, agent_id)?;
        let rec = OverrideRecord {
            graph_id: graph_id.to_owned(),
            disposition: disposition.to_owned(),
            rationale: rationale.to_owned(),
            agent: agent_id.to_owned(),
            timestamp,
            activity_id: id,
        };
        if let Some(p) = self.persisted.get_mut(graph_id) {
            p.package.overrides.push(rec.clone());
        }
        if let Some(dir) = self.package_dir(graph_id).filter(|d| d.is_dir()) {
            let mut f = OpenOptions::new().create(true).append(true).open(dir.join(OVERRIDES_FILE))?;
            let mut line = serde_json::to_vec(&rec).expect("override serializes");
            line.push(b'\n');
            f.write_all(&line)?;
        }
        Ok(rec)
    }

    pub fn run_status(&self, run_id: &str) -> Option<RunStatus> {
        self.runs.get(run_id).map(|r| r.status)
    }

    /// Human-generated node suitable for [`Workspace::submit_revision`].
    pub fn human_node(id: &str, kind: NodeKind, text: &str) -> DocNode {
        DocNode::bare(id, kind, text, Generator::Human)
    }
}
