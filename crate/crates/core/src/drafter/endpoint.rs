use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{DraftError, DraftRequest, Drafter, DrafterMeta, FaultSpec};
use crate::kernel::ViolationReport;
use crate::model::{AgDocument, DraftDocument, GraphMeta};

pub const DEFAULT_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// What the endpoint declares itself to be; recorded on every
    /// generation activity it performs.
    pub meta: DrafterMeta,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgSummary {
    pub case_id: String,
    pub decision_class: String,
    pub kg_hash: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalExcerpt {
    pub hash: String,
    pub title: String,
    pub source_class: String,
    pub excerpt: String,
}

/// Body POSTed to a generation endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointRequest {
    pub kg_summary: KgSummary,
    pub retrieval_items: Vec<RetrievalExcerpt>,
    pub coverage_classes: Vec<String>,
    pub schema_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<ViolationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<AgDocument>,
    pub generation_ref: String,
    pub meta: GraphMeta,
}

impl EndpointRequest {
    pub fn from_draft_request(req: &DraftRequest<'_>) -> Self {
        let kg = req.kg;
        let mut keywords = kg.keywords.clone();
        keywords.dedup();
        Self {
            kg_summary: KgSummary {
                case_id: kg.case_id.clone(),
                decision_class: kg.decision_class.clone(),
                kg_hash: kg.hash(),
                keywords,
            },
            retrieval_items: req
                .items
                .iter()
                .map(|i| RetrievalExcerpt {
                    hash: i.hash.clone(),
                    title: i.title.clone(),
                    source_class: i.source_class.clone(),
                    excerpt: i.content.clone(),
                })
                .collect(),
            coverage_classes: req.policy.required_classes(&kg.decision_class).into_iter().collect(),
            schema_version: req.schema_version.to_owned(),
            feedback: req.feedback.cloned(),
            previous: req.previous.cloned(),
            generation_ref: req.generation_ref.to_owned(),
            meta: GraphMeta {
                case_id: kg.case_id.clone(),
                policy_id: req.policy.id.clone(),
                policy_version: req.policy.version,
                round: req.round,
            },
        }
    }
}

/// Drafts by POSTing to an external generation service. The response is
/// only checked for being an AG document; everything else is left to the
/// parser and the kernel.
#[derive(Debug, Clone)]
pub struct EndpointDrafter {
    config: EndpointConfig,
}

impl EndpointDrafter {
    pub fn new(config: EndpointConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn call(&self, req: &DraftRequest<'_>) -> Result<DraftDocument, DraftError> {
        req.check()?;
        let body = crate::canonical::to_canonical_bytes(&EndpointRequest::from_draft_request(req));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(self.config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(&self.config.url)
            .header("content-type", "application/json")
            .send(&body[..])
            .map_err(|e| DraftError::EndpointUnreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(DraftError::MalformedResponse(format!("endpoint answered HTTP {}", status.as_u16())));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| DraftError::MalformedResponse(e.to_string()))?;
        serde_json::from_str::<AgDocument>(&text)
            .map_err(|e| DraftError::MalformedResponse(format!("not an AG document: {e}")))?;
        Ok(DraftDocument { body: text, drafter_id: self.config.meta.drafter_id.clone(), round: req.round })
    }
}

impl Drafter for EndpointDrafter {
    fn meta(&self) -> &DrafterMeta {
        &self.config.meta
    }

    fn draft(&self, req: &DraftRequest<'_>, faults: &FaultSpec) -> Result<DraftDocument, DraftError> {
        if !faults.is_empty() {
            return Err(DraftError::InvalidRequest("faults apply to the reference drafter only".into()));
        }
        self.call(req)
    }

    fn repair(&self, req: &DraftRequest<'_>) -> Result<DraftDocument, DraftError> {
        self.call(req)
    }
}
