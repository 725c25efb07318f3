//! C ABI over an arggate workspace.
//!
//! Every call returns an [`ArggateStatus`]. On anything other than
//! `ARGGATE_STATUS_OK`, `ARGGATE_STATUS_INVALID` or `ARGGATE_STATUS_ESCALATED`
//! a message is available from [`arggate_last_error`] on the same thread.
//! Strings handed out through `out` parameters belong to the caller and are
//! released with [`arggate_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use arggate::clock::{Clock, FixedClock, SystemClock};
use arggate::kernel;
use arggate::knowledge::CaseDocument;
use arggate::ledger::{AgentKind, ProvAgent};
use arggate::model::{export_gsn, parse_and_normalize, GsnFormat};
use arggate::pipeline::{PipelineError, RunOptions, RunOutcome, Workspace};
use arggate::policy::load_policy;

/// Result of every exported call. Values match the `arggate` CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArggateStatus {
    Ok = 0,
    Invalid = 1,
    /// Bad argument: null pointer, non-UTF-8 text, malformed JSON, unknown id.
    Usage = 2,
    Escalated = 3,
    Failure = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArggateGsnFormat {
    Dot = 0,
    Json = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArggateAudit {
    EvidenceForClaim = 0,
    GenerationContext = 1,
    Approvals = 2,
}

/// Opaque workspace handle.
pub struct ArggateWorkspace {
    inner: Workspace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(ArggateStatus, String);

impl From<PipelineError> for Fail {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::GatingViolation(_) => ArggateStatus::Invalid,
            PipelineError::Io(_)
            | PipelineError::Ledger(_)
            | PipelineError::Store(_)
            | PipelineError::Kernel(_)
            | PipelineError::Draft(_)
            | PipelineError::Busy(_) => ArggateStatus::Failure,
            _ => ArggateStatus::Usage,
        };
        Fail(status, format!("{}: {e}", e.code()))
    }
}

fn usage(msg: impl Into<String>) -> Fail {
    Fail(ArggateStatus::Usage, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error.
fn guard(f: impl FnOnce() -> Result<ArggateStatus, Fail>) -> ArggateStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            ArggateStatus::Failure
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(usage(format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| usage(format!("`{name}` is not UTF-8")))
}

unsafe fn workspace<'a>(ws: *mut ArggateWorkspace) -> Result<&'a mut Workspace, Fail> {
    ws.as_mut().map(|w| &mut w.inner).ok_or_else(|| usage("workspace handle is null"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(usage("output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| Fail(ArggateStatus::Failure, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn outcome_status(o: &RunOutcome) -> ArggateStatus {
    match o {
        RunOutcome::Accepted { .. } => ArggateStatus::Ok,
        RunOutcome::Escalated { .. } => ArggateStatus::Escalated,
        RunOutcome::Failed { error, .. } => {
            set_error(error.clone());
            ArggateStatus::Failure
        }
    }
}

fn clock(fixed: bool) -> Arc<dyn Clock> {
    if fixed {
        Arc::new(FixedClock::epoch())
    } else {
        Arc::new(SystemClock)
    }
}

/// Opens (creating if needed) the workspace at `home` and locks it until
/// [`arggate_workspace_free`].
///
/// # Safety
/// `home` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn arggate_workspace_open(
    home: *const c_char,
    fixed_clock: bool,
    out: *mut *mut ArggateWorkspace,
) -> ArggateStatus {
    guard(|| {
        let home = text(home, "home")?;
        if out.is_null() {
            return Err(usage("output pointer is null"));
        }
        let inner = Workspace::open(home, clock(fixed_clock))?;
        *out = Box::into_raw(Box::new(ArggateWorkspace { inner }));
        Ok(ArggateStatus::Ok)
    })
}

/// Workspace that lives only in memory.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn arggate_workspace_open_memory(
    fixed_clock: bool,
    out: *mut *mut ArggateWorkspace,
) -> ArggateStatus {
    guard(|| {
        if out.is_null() {
            return Err(usage("output pointer is null"));
        }
        *out = Box::into_raw(Box::new(ArggateWorkspace { inner: Workspace::in_memory(clock(fixed_clock)) }));
        Ok(ArggateStatus::Ok)
    })
}

/// # Safety
/// `ws` must come from an open call and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn arggate_workspace_free(ws: *mut ArggateWorkspace) {
    if !ws.is_null() {
        drop(Box::from_raw(ws));
    }
}

/// # Safety
/// Pointer arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn arggate_register_human(
    ws: *mut ArggateWorkspace,
    agent_id: *const c_char,
    display_name: *const c_char,
) -> ArggateStatus {
    guard(|| {
        let ws = workspace(ws)?;
        let id = text(agent_id, "agent_id")?;
        let name = if display_name.is_null() { id } else { text(display_name, "display_name")? };
        ws.register_agent(ProvAgent { id: id.to_owned(), kind: AgentKind::Human, display_name: name.to_owned() })?;
        Ok(ArggateStatus::Ok)
    })
}

/// Stores an evidence item and writes its SHA-256 hex digest to `out_hash`.
///
/// # Safety
/// Pointer arguments must be valid NUL-terminated strings; `out_hash` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn arggate_ingest_evidence(
    ws: *mut ArggateWorkspace,
    content: *const c_char,
    corpus_id: *const c_char,
    source_class: *const c_char,
    title: *const c_char,
    agent_id: *const c_char,
    out_hash: *mut *mut c_char,
) -> ArggateStatus {
    guard(|| {
        let ws = workspace(ws)?;
        let agent_id = text(agent_id, "agent_id")?;
        let agent = ws.agent(agent_id).cloned().unwrap_or(ProvAgent {
            id: agent_id.to_owned(),
            kind: AgentKind::Human,
            display_name: agent_id.to_owned(),
        });
        let item = ws.ingest_evidence(
            text(content, "content")?,
            text(corpus_id, "corpus_id")?,
            text(source_class, "source_class")?,
            text(title, "title")?,
            &agent,
        )?;
        put_string(out_hash, item.hash)?;
        Ok(ArggateStatus::Ok)
    })
}

/// Runs a case with the reference drafter. Writes the outcome JSON to
/// `out_json` and returns OK (accepted), ESCALATED or FAILURE.
///
/// # Safety
/// Pointer arguments must be valid NUL-terminated strings; `out_json` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn arggate_run_case(
    ws: *mut ArggateWorkspace,
    case_json: *const c_char,
    policy_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ArggateStatus {
    guard(|| {
        let ws = workspace(ws)?;
        let case = CaseDocument::from_bytes(text(case_json, "case_json")?).map_err(|e| usage(e.to_string()))?;
        let policy = load_policy(text(policy_json, "policy_json")?).map_err(|e| usage(e.to_string()))?;
        let outcome = ws.run_case(&case, &policy, &RunOptions::default());
        put_string(out_json, outcome.to_json().to_string())?;
        Ok(outcome_status(&outcome))
    })
}

/// # Safety
/// Pointer arguments must be valid NUL-terminated strings; `out_json` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn arggate_approve_assumption(
    ws: *mut ArggateWorkspace,
    graph_id: *const c_char,
    assumption_id: *const c_char,
    agent_id: *const c_char,
    out_json: *mut *mut c_char,
) -> ArggateStatus {
    guard(|| {
        let ws = workspace(ws)?;
        let outcome = ws.approve_assumption(
            text(graph_id, "graph_id")?,
            text(assumption_id, "assumption_id")?,
            text(agent_id, "agent_id")?,
        )?;
        put_string(out_json, outcome.to_json().to_string())?;
        Ok(outcome_status(&outcome))
    })
}

/// Validates an AG document against a policy and the workspace's store and
/// ledger. Returns OK, INVALID (report in `out_report`) or USAGE when the
/// document does not parse.
///
/// # Safety
/// Pointer arguments must be valid NUL-terminated strings; `out_report`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn arggate_validate(
    ws: *mut ArggateWorkspace,
    ag_json: *const c_char,
    policy_json: *const c_char,
    out_report: *mut *mut c_char,
) -> ArggateStatus {
    guard(|| {
        let ws = workspace(ws)?;
        let policy = load_policy(text(policy_json, "policy_json")?).map_err(|e| usage(e.to_string()))?;
        let g = parse_and_normalize(text(ag_json, "ag_json")?).map_err(|e| usage(format!("{}: {e}", e.code())))?;
        let verdict = kernel::valid(&g, &policy, ws.store(), ws.provenance())
            .map_err(|e| Fail(ArggateStatus::Failure, e.to_string()))?;
        let report = String::from_utf8(verdict.report().to_canonical_bytes()).expect("utf8 json");
        put_string(out_report, report)?;
        Ok(if verdict.is_valid() { ArggateStatus::Ok } else { ArggateStatus::Invalid })
    })
}

/// OK when the ledger hash chain verifies, INVALID otherwise.
///
/// # Safety
/// `ws` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn arggate_verify_ledger(ws: *mut ArggateWorkspace) -> ArggateStatus {
    guard(|| {
        let ws = workspace(ws)?;
        match ws.verify_ledger() {
            arggate::ledger::ChainStatus::Ok { .. } => Ok(ArggateStatus::Ok),
            arggate::ledger::ChainStatus::Broken { first_bad_seq, reason } => {
                set_error(format!("chain broken at seq {first_bad_seq}: {reason}"));
                Ok(ArggateStatus::Invalid)
            }
        }
    })
}

/// Runs one audit query. `id` is a claim or node id (optionally
/// `node@graph`) or, for approvals, a graph id.
///
/// # Safety
/// Pointer arguments must be valid NUL-terminated strings; `out_json` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn arggate_audit(
    ws: *mut ArggateWorkspace,
    query: ArggateAudit,
    id: *const c_char,
    out_json: *mut *mut c_char,
) -> ArggateStatus {
    guard(|| {
        let ws = workspace(ws)?;
        let id = text(id, "id")?;
        let json = match query {
            ArggateAudit::EvidenceForClaim => serde_json::to_string(&ws.audit_evidence_for_claim(id)?),
            ArggateAudit::GenerationContext => serde_json::to_string(&ws.audit_generation_context(id)?),
            ArggateAudit::Approvals => serde_json::to_string(&ws.audit_approvals(id)?),
        }
        .expect("audit results serialize");
        put_string(out_json, json)?;
        Ok(ArggateStatus::Ok)
    })
}

/// # Safety
/// Pointer arguments must be valid NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn arggate_export_gsn(
    ws: *mut ArggateWorkspace,
    graph_id: *const c_char,
    format: ArggateGsnFormat,
    out: *mut *mut c_char,
) -> ArggateStatus {
    guard(|| {
        let ws = workspace(ws)?;
        let id = text(graph_id, "graph_id")?;
        let g = ws.graph(id).ok_or_else(|| usage(format!("unknown graph `{id}`")))?;
        let f = match format {
            ArggateGsnFormat::Dot => GsnFormat::Dot,
            ArggateGsnFormat::Json => GsnFormat::Json,
        };
        put_string(out, String::from_utf8(export_gsn(&g, f)).expect("utf8 gsn"))?;
        Ok(ArggateStatus::Ok)
    })
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on this thread; do not free.
#[no_mangle]
pub extern "C" fn arggate_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned through an `out` parameter. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn arggate_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn arggate_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
