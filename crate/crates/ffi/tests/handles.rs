use std::ffi::{c_char, CStr, CString};
use std::ptr;

use arggate_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { arggate_string_free(p) };
    s
}

fn last_error() -> String {
    let p = arggate_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn null_arguments_are_usage_errors() {
    let mut out = ptr::null_mut();
    let st = unsafe { arggate_run_case(ptr::null_mut(), c("{}").as_ptr(), c("{}").as_ptr(), &mut out) };
    assert_eq!(st, ArggateStatus::Usage);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { arggate_workspace_open_memory(false, ptr::null_mut()) }, ArggateStatus::Usage);
    unsafe { arggate_workspace_free(ptr::null_mut()) };
    unsafe { arggate_string_free(ptr::null_mut()) };
}

#[test]
fn malformed_inputs_and_unknown_ids() {
    let mut ws = ptr::null_mut();
    assert_eq!(unsafe { arggate_workspace_open_memory(true, &mut ws) }, ArggateStatus::Ok);
    let mut out = ptr::null_mut();
    let st = unsafe { arggate_run_case(ws, c("not json").as_ptr(), c("{}").as_ptr(), &mut out) };
    assert_eq!(st, ArggateStatus::Usage);
    assert!(out.is_null());

    let st = unsafe { arggate_audit(ws, ArggateAudit::Approvals, c("no-such-graph").as_ptr(), &mut out) };
    assert_eq!(st, ArggateStatus::Usage);
    assert!(last_error().contains("UnknownGraph"));

    let st = unsafe { arggate_export_gsn(ws, c("nope").as_ptr(), ArggateGsnFormat::Dot, &mut out) };
    assert_eq!(st, ArggateStatus::Usage);

    let st = unsafe { arggate_validate(ws, c("{\"nodes\":[]}").as_ptr(), c("{}").as_ptr(), &mut out) };
    assert_eq!(st, ArggateStatus::Usage);

    assert_eq!(unsafe { arggate_verify_ledger(ws) }, ArggateStatus::Ok);
    unsafe { arggate_workspace_free(ws) };
}

#[test]
fn ingest_returns_the_content_hash() {
    let mut ws = ptr::null_mut();
    assert_eq!(unsafe { arggate_workspace_open_memory(true, &mut ws) }, ArggateStatus::Ok);
    assert_eq!(
        unsafe { arggate_register_human(ws, c("human:a").as_ptr(), ptr::null()) },
        ArggateStatus::Ok
    );
    let mut hash = ptr::null_mut();
    let st = unsafe {
        arggate_ingest_evidence(
            ws,
            c("housing benefit rules").as_ptr(),
            c("statutes").as_ptr(),
            c("statute").as_ptr(),
            c("rules").as_ptr(),
            c("human:a").as_ptr(),
            &mut hash,
        )
    };
    assert_eq!(st, ArggateStatus::Ok);
    let hash = take(hash);
    assert_eq!(hash, arggate::canonical::sha256_hex("housing benefit rules"));

    let mut out = ptr::null_mut();
    let st = unsafe {
        arggate_ingest_evidence(
            ws,
            c("").as_ptr(),
            c("statutes").as_ptr(),
            c("statute").as_ptr(),
            c("empty").as_ptr(),
            c("human:a").as_ptr(),
            &mut out,
        )
    };
    assert_eq!(st, ArggateStatus::Failure);
    unsafe { arggate_workspace_free(ws) };
}

#[test]
fn on_disk_workspace_is_locked_while_open() {
    let dir = tempfile::tempdir().unwrap();
    let home = c(dir.path().to_str().unwrap());
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { arggate_workspace_open(home.as_ptr(), true, &mut a) }, ArggateStatus::Ok);
    assert!(dir.path().join(".lock").exists());
    unsafe { arggate_workspace_free(a) };
    assert!(!dir.path().join(".lock").exists());
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { arggate_workspace_open(home.as_ptr(), true, &mut b) }, ArggateStatus::Ok);
    unsafe { arggate_workspace_free(b) };
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(arggate_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
