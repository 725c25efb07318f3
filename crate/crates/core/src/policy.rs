//! The active constraint set consumed by retrieval, drafting and validation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{canonical_hash, to_canonical_bytes};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceClass {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Allowed corpus ids; empty means any corpus.
    #[serde(default)]
    pub scope: BTreeSet<String>,
}

impl SourceClass {
    pub fn admits_corpus(&self, corpus_id: &str) -> bool {
        self.scope.is_empty() || self.scope.contains(corpus_id)
    }
}

/// Drafting layout hint: required classes listed in `members` are placed
/// under an intermediate claim of class `class` instead of directly under
/// the top claim. Does not change what coverage requires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimGroup {
    pub class: String,
    pub text: String,
    pub members: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageTemplate {
    pub top_claim_class: String,
    pub required_child_classes: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<ClaimGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyRule {
    /// Two claim classes that may not both hold. Stored sorted.
    MutexPair([String; 2]),
    /// Same subject with opposite polarity is a contradiction.
    Polarity,
}

impl ConsistencyRule {
    pub fn mutex(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            ConsistencyRule::MutexPair([a, b])
        } else {
            ConsistencyRule::MutexPair([b, a])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionPolicy {
    #[default]
    BlockPending,
    AllowPending,
}

fn default_retrieval_k() -> u32 {
    5
}

fn default_max_repair_rounds() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySet {
    pub id: String,
    pub version: u64,
    pub source_classes: Vec<SourceClass>,
    pub coverage: Vec<CoverageTemplate>,
    #[serde(default)]
    pub consistency: Vec<ConsistencyRule>,
    #[serde(default)]
    pub assumption_policy: AssumptionPolicy,
    #[serde(default = "default_retrieval_k")]
    pub retrieval_k: u32,
    #[serde(default = "default_max_repair_rounds")]
    pub max_repair_rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("malformed policy document: {0}")]
    Malformed(String),
    #[error("policy version must be a positive integer, got {0}")]
    BadVersion(u64),
    #[error("source class `{0}` declared more than once")]
    DuplicateSourceClass(String),
    #[error("coverage template for `{0}` requires no child classes")]
    EmptyCoverageTemplate(String),
    #[error("mutex pair pairs `{0}` with itself")]
    ReflexiveMutex(String),
    #[error("{field} must be at least 1")]
    InvalidParameter { field: &'static str },
    #[error("group `{group}` of template `{template}`: {reason}")]
    InvalidGroup { template: String, group: String, reason: String },
}

/// Parses and validates a policy document. The returned set is in canonical
/// order so that equal policies compare and hash equal.
pub fn load_policy(bytes: impl AsRef<[u8]>) -> Result<PolicySet, PolicyError> {
    let raw: PolicySet =
        serde_json::from_slice(bytes.as_ref()).map_err(|e| PolicyError::Malformed(e.to_string()))?;
    raw.validated()
}

impl PolicySet {
    pub fn validated(mut self) -> Result<Self, PolicyError> {
        if self.id.is_empty() {
            return Err(PolicyError::Malformed("policy id must be non-empty".into()));
        }
        if self.version == 0 {
            return Err(PolicyError::BadVersion(self.version));
        }
        self.source_classes.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = self.source_classes.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(PolicyError::DuplicateSourceClass(w[0].id.clone()));
        }
        self.coverage.sort_by(|a, b| {
            (&a.top_claim_class, &a.required_child_classes).cmp(&(&b.top_claim_class, &b.required_child_classes))
        });
        for t in &mut self.coverage {
            if t.required_child_classes.is_empty() {
                return Err(PolicyError::EmptyCoverageTemplate(t.top_claim_class.clone()));
            }
            t.groups.sort_by(|a, b| a.class.cmp(&b.class));
            let mut grouped = BTreeSet::new();
            for g in &t.groups {
                let bad = |reason: &str| PolicyError::InvalidGroup {
                    template: t.top_claim_class.clone(),
                    group: g.class.clone(),
                    reason: reason.to_owned(),
                };
                if g.members.is_empty() {
                    return Err(bad("has no members"));
                }
                if !g.members.is_subset(&t.required_child_classes) {
                    return Err(bad("lists a member that is not a required class"));
                }
                if g.members.iter().any(|m| !grouped.insert(m.clone())) {
                    return Err(bad("shares a member with another group"));
                }
                if t.required_child_classes.contains(&g.class) || g.class == t.top_claim_class {
                    return Err(bad("reuses a required or top-level class name"));
                }
            }
        }
        for rule in &mut self.consistency {
            if let ConsistencyRule::MutexPair([a, b]) = rule {
                if a == b {
                    return Err(PolicyError::ReflexiveMutex(a.clone()));
                }
                if a > b {
                    std::mem::swap(a, b);
                }
            }
        }
        self.consistency.sort();
        self.consistency.dedup();
        if self.retrieval_k == 0 {
            return Err(PolicyError::InvalidParameter { field: "retrieval_k" });
        }
        if self.max_repair_rounds == 0 {
            return Err(PolicyError::InvalidParameter { field: "max_repair_rounds" });
        }
        Ok(self)
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self)
    }

    /// SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        canonical_hash(self)
    }

    pub fn source_class(&self, id: &str) -> Option<&SourceClass> {
        self.source_classes.iter().find(|c| c.id == id)
    }

    pub fn has_polarity_rule(&self) -> bool {
        self.consistency.contains(&ConsistencyRule::Polarity)
    }

    pub fn is_mutex(&self, a: &str, b: &str) -> bool {
        let probe = ConsistencyRule::mutex(a, b);
        a != b && self.consistency.contains(&probe)
    }

    /// Templates whose top claim class is `class`.
    pub fn templates_for<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a CoverageTemplate> {
        self.coverage.iter().filter(move |t| t.top_claim_class == class)
    }

    /// Union of required classes over all templates for `class`.
    pub fn required_classes(&self, class: &str) -> BTreeSet<String> {
        self.templates_for(class).flat_map(|t| t.required_child_classes.iter().cloned()).collect()
    }

    /// Group placement for required classes of `class` (member -> group).
    pub fn group_layout(&self, class: &str) -> BTreeMap<String, ClaimGroup> {
        let mut out = BTreeMap::new();
        for t in self.templates_for(class) {
            for g in &t.groups {
                for m in &g.members {
                    out.entry(m.clone()).or_insert_with(|| g.clone());
                }
            }
        }
        out
    }
}

/// Same as [`PolicySet::fingerprint`].
pub fn policy_fingerprint(p: &PolicySet) -> String {
    p.fingerprint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn benefits() -> serde_json::Value {
        json!({
            "id": "benefits",
            "version": 1,
            "source_classes": [
                {"id": "statute", "description": "statutory corpus"},
                {"id": "case_records", "description": "agency case files", "scope": ["agency-records"]}
            ],
            "coverage": [{
                "top_claim_class": "eligibility_decision",
                "required_child_classes": ["identity_verified", "criteria_evaluated", "rationale_documented"]
            }],
            "consistency": ["polarity", {"mutex_pair": ["eligible", "ineligible"]}]
        })
    }

    #[test]
    fn loads_benefits_policy_with_defaults() {
        let p = load_policy(serde_json::to_vec(&benefits()).unwrap()).unwrap();
        assert_eq!(p.retrieval_k, 5);
        assert_eq!(p.max_repair_rounds, 3);
        assert_eq!(p.assumption_policy, AssumptionPolicy::BlockPending);
        assert_eq!(p.required_classes("eligibility_decision").len(), 3);
        assert!(p.is_mutex("ineligible", "eligible"));
        assert!(p.has_polarity_rule());
    }

    #[test]
    fn reflexive_mutex_rejected() {
        let mut v = benefits();
        v["consistency"] = json!([{"mutex_pair": ["x", "x"]}]);
        assert_eq!(
            load_policy(serde_json::to_vec(&v).unwrap()),
            Err(PolicyError::ReflexiveMutex("x".into()))
        );
    }

    #[test]
    fn error_paths() {
        let mut v = benefits();
        v["source_classes"] = json!([{"id": "a"}, {"id": "a"}]);
        assert_eq!(
            load_policy(serde_json::to_vec(&v).unwrap()),
            Err(PolicyError::DuplicateSourceClass("a".into()))
        );
        let mut v = benefits();
        v["coverage"][0]["required_child_classes"] = json!([]);
        assert!(matches!(
            load_policy(serde_json::to_vec(&v).unwrap()),
            Err(PolicyError::EmptyCoverageTemplate(_))
        ));
        let mut v = benefits();
        v["version"] = json!(0);
        assert_eq!(load_policy(serde_json::to_vec(&v).unwrap()), Err(PolicyError::BadVersion(0)));
        let mut v = benefits();
        v["version"] = json!(-3);
        assert!(matches!(load_policy(serde_json::to_vec(&v).unwrap()), Err(PolicyError::Malformed(_))));
        let mut v = benefits();
        v["retrieval_k"] = json!(0);
        assert!(matches!(
            load_policy(serde_json::to_vec(&v).unwrap()),
            Err(PolicyError::InvalidParameter { field: "retrieval_k" })
        ));
        assert!(matches!(load_policy(b"not json"), Err(PolicyError::Malformed(_))));
    }

    #[test]
    fn fingerprint_ignores_field_and_element_order() {
        let a = load_policy(serde_json::to_vec(&benefits()).unwrap()).unwrap();
        let shuffled = r#"{"consistency":[{"mutex_pair":["ineligible","eligible"]},"polarity"],
            "coverage":[{"required_child_classes":["rationale_documented","identity_verified","criteria_evaluated"],
            "top_claim_class":"eligibility_decision"}],
            "source_classes":[{"scope":["agency-records"],"id":"case_records","description":"agency case files"},
            {"description":"statutory corpus","id":"statute"}],"version":1,"id":"benefits"}"#;
        let b = load_policy(shuffled).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn every_single_field_edit_changes_fingerprint() {
        let base = load_policy(serde_json::to_vec(&benefits()).unwrap()).unwrap();
        let fp = base.fingerprint();
        let mut edits: Vec<PolicySet> = Vec::new();
        let mut p = base.clone();
        p.id.push('x');
        edits.push(p);
        let mut p = base.clone();
        p.version += 1;
        edits.push(p);
        let mut p = base.clone();
        p.source_classes[0].description.push('x');
        edits.push(p);
        let mut p = base.clone();
        p.source_classes[0].scope.insert("extra".into());
        edits.push(p);
        let mut p = base.clone();
        p.source_classes[1].id.push('x');
        edits.push(p);
        let mut p = base.clone();
        p.coverage[0].top_claim_class.push('x');
        edits.push(p);
        let mut p = base.clone();
        p.coverage[0].required_child_classes.insert("appeal_notice".into());
        edits.push(p);
        let mut p = base.clone();
        p.consistency.pop();
        edits.push(p);
        let mut p = base.clone();
        p.assumption_policy = AssumptionPolicy::AllowPending;
        edits.push(p);
        let mut p = base.clone();
        p.retrieval_k += 1;
        edits.push(p);
        let mut p = base.clone();
        p.max_repair_rounds += 1;
        edits.push(p);
        let mut fps = BTreeSet::new();
        for e in &edits {
            assert_ne!(e.fingerprint(), fp);
            fps.insert(e.fingerprint());
        }
        assert_eq!(fps.len(), edits.len());
    }
}
