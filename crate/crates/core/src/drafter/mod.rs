//! Bounded drafting: a request/response contract that yields AG documents,
//! a deterministic reference drafter, test-only fault injection and an
//! adapter for external generation endpoints.

mod endpoint;
mod faults;
mod reference;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::sha256_hex;
use crate::evidence::{EvidenceItem, RetrievalSet};
use crate::kernel::ViolationReport;
use crate::knowledge::CaseKnowledgeGraph;
use crate::ledger::{attr, AgentKind, Attributes, EntityKind, ProvAgent, ProvEntity};
use crate::model::{AgDocument, DraftDocument};
use crate::policy::PolicySet;

pub use endpoint::{EndpointConfig, EndpointDrafter, EndpointRequest, DEFAULT_TIMEOUT_SECS};
pub use faults::apply_faults;
pub use reference::ReferenceDrafter;

pub const SCHEMA_VERSION: &str = "ag-document/1";
pub const REFERENCE_PROMPT: &str = include_str!("../../prompts/reference-draft.v1.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrafterMeta {
    pub drafter_id: String,
    pub model_id: String,
    pub model_version: String,
    pub prompt_template_id: String,
    pub prompt_template_version: String,
    /// SHA-256 of the prompt template text.
    pub prompt_template_hash: String,
}

impl DrafterMeta {
    pub fn reference() -> Self {
        Self {
            drafter_id: "reference-drafter".into(),
            model_id: "arggate-reference".into(),
            model_version: env!("CARGO_PKG_VERSION").into(),
            prompt_template_id: "reference-draft".into(),
            prompt_template_version: "v1".into(),
            prompt_template_hash: sha256_hex(REFERENCE_PROMPT),
        }
    }

    pub fn agent_id(&self) -> String {
        format!("model:{}@{}", self.model_id, self.model_version)
    }

    pub fn agent(&self) -> ProvAgent {
        ProvAgent { id: self.agent_id(), kind: AgentKind::Model, display_name: self.drafter_id.clone() }
    }

    pub fn prompt_entity_id(&self) -> String {
        format!("prompt:{}@{}", self.prompt_template_id, self.prompt_template_version)
    }

    pub fn model_card_entity_id(&self) -> String {
        format!("model-card:{}@{}", self.model_id, self.model_version)
    }

    pub fn prompt_entity(&self) -> ProvEntity {
        ProvEntity {
            id: self.prompt_entity_id(),
            kind: EntityKind::PromptTemplate,
            content_hash: self.prompt_template_hash.clone(),
            attributes: Attributes::new(),
        }
    }

    pub fn model_card_entity(&self) -> ProvEntity {
        let card = crate::canonical::canonical_hash(&(&self.model_id, &self.model_version, &self.drafter_id));
        ProvEntity { id: self.model_card_entity_id(), kind: EntityKind::ModelCard, content_hash: card, attributes: Attributes::new() }
    }

    /// The attributes a generation activity by this drafter must carry.
    pub fn generation_attributes(&self, retrieval_set_id: &str) -> Attributes {
        let mut a = Attributes::new();
        a.insert(attr::DRAFTER_ID.into(), self.drafter_id.clone());
        a.insert(attr::MODEL_ID.into(), self.model_id.clone());
        a.insert(attr::MODEL_VERSION.into(), self.model_version.clone());
        a.insert(attr::PROMPT_TEMPLATE_ID.into(), self.prompt_template_id.clone());
        a.insert(attr::PROMPT_TEMPLATE_VERSION.into(), self.prompt_template_version.clone());
        a.insert(attr::RETRIEVAL_SET_ID.into(), retrieval_set_id.to_owned());
        a
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fault {
    DropEvidenceLink,
    OmitRequiredSubclaim { class: String },
    FabricateEvidenceId,
    OmitGenerationRef,
    InjectContradiction,
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::DropEvidenceLink => f.write_str("DROP_EVIDENCE_LINK"),
            Fault::OmitRequiredSubclaim { class } => write!(f, "OMIT_REQUIRED_SUBCLAIM:{class}"),
            Fault::FabricateEvidenceId => f.write_str("FABRICATE_EVIDENCE_ID"),
            Fault::OmitGenerationRef => f.write_str("OMIT_GENERATION_REF"),
            Fault::InjectContradiction => f.write_str("INJECT_CONTRADICTION"),
        }
    }
}

impl FromStr for Fault {
    type Err = String;

    /// Accepts `OMIT_REQUIRED_SUBCLAIM:<class>` and `OMIT_REQUIRED_SUBCLAIM{<class>}`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("OMIT_REQUIRED_SUBCLAIM") {
            let class = rest
                .strip_prefix(':')
                .or_else(|| rest.strip_prefix('{').and_then(|r| r.strip_suffix('}')))
                .filter(|c| !c.is_empty())
                .ok_or_else(|| format!("`{s}` needs a class, e.g. OMIT_REQUIRED_SUBCLAIM:identity_verified"))?;
            return Ok(Fault::OmitRequiredSubclaim { class: class.to_owned() });
        }
        match s {
            "DROP_EVIDENCE_LINK" => Ok(Fault::DropEvidenceLink),
            "FABRICATE_EVIDENCE_ID" => Ok(Fault::FabricateEvidenceId),
            "OMIT_GENERATION_REF" => Ok(Fault::OmitGenerationRef),
            "INJECT_CONTRADICTION" => Ok(Fault::InjectContradiction),
            other => Err(format!("unknown fault `{other}`")),
        }
    }
}

/// Faults to inject into a first-round draft. Test-only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultSpec(pub Vec<Fault>);

impl FaultSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(f: Fault) -> Self {
        Self(vec![f])
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fault injection is available in debug builds, or when the process runs
/// with `ARGGATE_TEST_MODE=1`.
pub fn faults_allowed() -> bool {
    cfg!(debug_assertions) || std::env::var("ARGGATE_TEST_MODE").is_ok_and(|v| v == "1")
}

/// Everything a drafter sees for one round.
#[derive(Debug, Clone)]
pub struct DraftRequest<'a> {
    pub kg: &'a CaseKnowledgeGraph,
    pub retrieval: &'a RetrievalSet,
    /// Retrieval items resolved from the store, in retrieval order.
    pub items: &'a [EvidenceItem],
    pub policy: &'a PolicySet,
    pub schema_version: &'a str,
    pub round: u32,
    pub feedback: Option<&'a ViolationReport>,
    /// The document being repaired; present exactly when `feedback` is.
    pub previous: Option<&'a AgDocument>,
    /// Id of the generation activity the pipeline records for this round.
    pub generation_ref: &'a str,
}

impl DraftRequest<'_> {
    pub fn kg_hash(&self) -> String {
        self.kg.hash()
    }

    pub fn policy_fingerprint(&self) -> String {
        self.policy.fingerprint()
    }

    fn check(&self) -> Result<(), DraftError> {
        if self.round == 0 {
            return Err(DraftError::InvalidRequest("round must be at least 1".into()));
        }
        let repairing = self.round > 1;
        if self.feedback.is_some() != repairing || self.previous.is_some() != repairing {
            return Err(DraftError::InvalidRequest(
                "feedback and previous document are required exactly on repair rounds".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DraftError {
    #[error("no coverage template matches decision class `{0}`")]
    NoMatchingTemplate(String),
    #[error("fault injection is disabled outside test mode")]
    FaultsRefused,
    #[error("generation endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("invalid draft request: {0}")]
    InvalidRequest(String),
}

impl DraftError {
    pub fn code(&self) -> &'static str {
        match self {
            DraftError::NoMatchingTemplate(_) => "NoMatchingTemplate",
            DraftError::FaultsRefused => "FaultsRefused",
            DraftError::EndpointUnreachable(_) => "EndpointUnreachable",
            DraftError::MalformedResponse(_) => "MalformedResponse",
            DraftError::InvalidRequest(_) => "InvalidRequest",
        }
    }
}

pub trait Drafter {
    fn meta(&self) -> &DrafterMeta;

    /// First-round draft. `faults` are applied after generation.
    fn draft(&self, req: &DraftRequest<'_>, faults: &FaultSpec) -> Result<DraftDocument, DraftError>;

    /// Later rounds: revise `req.previous` in response to `req.feedback`.
    fn repair(&self, req: &DraftRequest<'_>) -> Result<DraftDocument, DraftError>;
}

pub(crate) fn to_draft(doc: &AgDocument, drafter_id: &str, round: u32) -> DraftDocument {
    DraftDocument {
        body: crate::canonical::to_canonical_string(doc),
        drafter_id: drafter_id.to_owned(),
        round,
    }
}
