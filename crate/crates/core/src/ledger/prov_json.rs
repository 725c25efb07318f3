//! PROV-JSON rendering of a provenance record.

use serde_json::{json, Map, Value};

use super::{ProvRelation, ProvenanceRecord};

fn qualify(id: &str) -> String {
    format!("arggate:{id}")
}

/// Maps entities, activities, agents and the five relation kinds onto the
/// PROV-JSON layout. Relation ids are positional (`_:r<n>`).
pub fn to_prov_json(record: &ProvenanceRecord) -> Value {
    let mut entity = Map::new();
    for e in record.entities.values() {
        let mut o = Map::new();
        o.insert("prov:type".into(), json!(format!("arggate:{}", kind_str(&e.kind))));
        o.insert("arggate:content_hash".into(), json!(e.content_hash));
        for (k, v) in &e.attributes {
            o.insert(format!("arggate:{k}"), json!(v));
        }
        entity.insert(qualify(&e.id), Value::Object(o));
    }

    let mut activity = Map::new();
    for a in record.activities.values() {
        let mut o = Map::new();
        o.insert("prov:type".into(), json!(format!("arggate:{}", a.kind.as_str())));
        o.insert("prov:startTime".into(), json!(a.started_at));
        o.insert("prov:endTime".into(), json!(a.ended_at));
        for (k, v) in &a.attributes {
            o.insert(format!("arggate:{k}"), json!(v));
        }
        activity.insert(qualify(&a.id), Value::Object(o));
    }

    let mut agent = Map::new();
    for a in record.agents.values() {
        let prov_type = match a.kind {
            super::AgentKind::Human => "prov:Person",
            super::AgentKind::Model | super::AgentKind::Software => "prov:SoftwareAgent",
        };
        agent.insert(
            qualify(&a.id),
            json!({ "prov:type": prov_type, "prov:label": a.display_name }),
        );
    }

    let mut rel: [Map<String, Value>; 5] = Default::default();
    for (i, r) in record.relations.iter().enumerate() {
        let key = format!("_:r{i}");
        let (slot, body) = match r {
            ProvRelation::WasGeneratedBy { entity, activity } => {
                (0, json!({ "prov:entity": qualify(entity), "prov:activity": qualify(activity) }))
            }
            ProvRelation::Used { activity, entity } => {
                (1, json!({ "prov:activity": qualify(activity), "prov:entity": qualify(entity) }))
            }
            ProvRelation::WasAssociatedWith { activity, agent } => {
                (2, json!({ "prov:activity": qualify(activity), "prov:agent": qualify(agent) }))
            }
            ProvRelation::WasAttributedTo { entity, agent } => {
                (3, json!({ "prov:entity": qualify(entity), "prov:agent": qualify(agent) }))
            }
            ProvRelation::WasDerivedFrom { generated, used } => (
                4,
                json!({ "prov:generatedEntity": qualify(generated), "prov:usedEntity": qualify(used) }),
            ),
        };
        rel[slot].insert(key, body);
    }
    let [wgb, used, waw, wat, wdf] = rel;

    let mut doc = Map::new();
    doc.insert("prefix".into(), json!({ "arggate": "urn:arggate:", "prov": "http://www.w3.org/ns/prov#" }));
    for (name, m) in [
        ("entity", entity),
        ("activity", activity),
        ("agent", agent),
        ("wasGeneratedBy", wgb),
        ("used", used),
        ("wasAssociatedWith", waw),
        ("wasAttributedTo", wat),
        ("wasDerivedFrom", wdf),
    ] {
        if !m.is_empty() {
            doc.insert(name.into(), Value::Object(m));
        }
    }
    Value::Object(doc)
}

fn kind_str(k: &super::EntityKind) -> String {
    serde_json::to_value(k).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}
