use std::collections::BTreeMap;

use serde::Serialize;

use super::{
    attr, ActivityKind, AgentKind, LedgerEntry, Payload, ProvActivity, ProvAgent, ProvEntity,
    ProvRelation,
};

/// Materialized PROV view over a run of ledger entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProvenanceRecord {
    pub entities: BTreeMap<String, ProvEntity>,
    pub activities: BTreeMap<String, ProvActivity>,
    pub agents: BTreeMap<String, ProvAgent>,
    pub relations: Vec<ProvRelation>,
    /// Seq of the entry that recorded each activity.
    pub activity_seq: BTreeMap<String, u64>,
    /// Inclusive seq range covered by this record.
    pub seq_range: Option<(u64, u64)>,
}

impl ProvenanceRecord {
    pub(crate) fn apply(&mut self, entry: &LedgerEntry) {
        match &entry.payload {
            Payload::Entity(e) => {
                self.entities.insert(e.id.clone(), e.clone());
            }
            Payload::Activity(a) => {
                self.activity_seq.insert(a.id.clone(), entry.seq);
                self.activities.insert(a.id.clone(), a.clone());
            }
            Payload::Agent(a) => {
                self.agents.insert(a.id.clone(), a.clone());
            }
            Payload::Relation(r) => self.relations.push(r.clone()),
        }
        self.seq_range = Some(match self.seq_range {
            None => (entry.seq, entry.seq),
            Some((lo, _)) => (lo, entry.seq),
        });
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = &'a LedgerEntry>) -> Self {
        let mut r = Self::default();
        for e in entries {
            r.apply(e);
        }
        r
    }

    pub fn activity(&self, id: &str) -> Option<&ProvActivity> {
        self.activities.get(id)
    }

    pub fn associated_agents<'a>(&'a self, activity: &'a str) -> impl Iterator<Item = &'a ProvAgent> + 'a {
        self.relations.iter().filter_map(move |r| match r {
            ProvRelation::WasAssociatedWith { activity: a, agent } if a == activity => self.agents.get(agent),
            _ => None,
        })
    }

    pub fn is_human_associated(&self, activity: &str) -> bool {
        self.associated_agents(activity).any(|a| a.kind == AgentKind::Human)
    }

    /// Activities of `kind` whose `node_id` attribute is `node`, in seq order.
    pub fn activities_for_node<'a>(
        &'a self,
        kind: ActivityKind,
        node: &'a str,
    ) -> impl Iterator<Item = &'a ProvActivity> + 'a {
        let mut v: Vec<&ProvActivity> = self
            .activities
            .values()
            .filter(|a| a.kind == kind && a.attr(attr::NODE_ID) == Some(node))
            .collect();
        v.sort_by_key(|a| self.activity_seq.get(&a.id).copied().unwrap_or(u64::MAX));
        v.into_iter()
    }

    /// Entities `entity` was derived from (direct parents).
    pub fn derived_from<'a>(&'a self, entity: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.relations.iter().filter_map(move |r| match r {
            ProvRelation::WasDerivedFrom { generated, used } if generated == entity => Some(used.as_str()),
            _ => None,
        })
    }

    pub fn activities_in_seq_order(&self) -> Vec<&ProvActivity> {
        let mut v: Vec<&ProvActivity> = self.activities.values().collect();
        v.sort_by_key(|a| self.activity_seq.get(&a.id).copied().unwrap_or(u64::MAX));
        v
    }
}
