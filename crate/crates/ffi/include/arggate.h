#ifndef ARGGATE_H
#define ARGGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every exported call. Values match the `arggate` CLI exit codes.
 */
typedef enum ArggateStatus {
  ARGGATE_STATUS_OK = 0,
  ARGGATE_STATUS_INVALID = 1,
  /**
   * Bad argument: null pointer, non-UTF-8 text, malformed JSON, unknown id.
   */
  ARGGATE_STATUS_USAGE = 2,
  ARGGATE_STATUS_ESCALATED = 3,
  ARGGATE_STATUS_FAILURE = 4,
} ArggateStatus;

typedef enum ArggateAudit {
  ARGGATE_AUDIT_EVIDENCE_FOR_CLAIM = 0,
  ARGGATE_AUDIT_GENERATION_CONTEXT = 1,
  ARGGATE_AUDIT_APPROVALS = 2,
} ArggateAudit;

typedef enum ArggateGsnFormat {
  ARGGATE_GSN_FORMAT_DOT = 0,
  ARGGATE_GSN_FORMAT_JSON = 1,
} ArggateGsnFormat;

/**
 * Opaque workspace handle.
 */
typedef struct ArggateWorkspace ArggateWorkspace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens (creating if needed) the workspace at `home` and locks it until
 * [`arggate_workspace_free`].
 *
 * # Safety
 * `home` must be a NUL-terminated string; `out` must be writable.
 */
enum ArggateStatus arggate_workspace_open(const char *home,
                                          bool fixed_clock,
                                          struct ArggateWorkspace **out);

/**
 * Workspace that lives only in memory.
 *
 * # Safety
 * `out` must be writable.
 */
enum ArggateStatus arggate_workspace_open_memory(bool fixed_clock, struct ArggateWorkspace **out);

/**
 * # Safety
 * `ws` must come from an open call and not be used afterwards. Null is
 * ignored.
 */
void arggate_workspace_free(struct ArggateWorkspace *ws);

/**
 * # Safety
 * Pointer arguments must be valid NUL-terminated strings.
 */
enum ArggateStatus arggate_register_human(struct ArggateWorkspace *ws,
                                          const char *agent_id,
                                          const char *display_name);

/**
 * Stores an evidence item and writes its SHA-256 hex digest to `out_hash`.
 *
 * # Safety
 * Pointer arguments must be valid NUL-terminated strings; `out_hash` must
 * be writable.
 */
enum ArggateStatus arggate_ingest_evidence(struct ArggateWorkspace *ws,
                                           const char *content,
                                           const char *corpus_id,
                                           const char *source_class,
                                           const char *title,
                                           const char *agent_id,
                                           char **out_hash);

/**
 * Runs a case with the reference drafter. Writes the outcome JSON to
 * `out_json` and returns OK (accepted), ESCALATED or FAILURE.
 *
 * # Safety
 * Pointer arguments must be valid NUL-terminated strings; `out_json` must
 * be writable.
 */
enum ArggateStatus arggate_run_case(struct ArggateWorkspace *ws,
                                    const char *case_json,
                                    const char *policy_json,
                                    char **out_json);

/**
 * # Safety
 * Pointer arguments must be valid NUL-terminated strings; `out_json` must
 * be writable.
 */
enum ArggateStatus arggate_approve_assumption(struct ArggateWorkspace *ws,
                                              const char *graph_id,
                                              const char *assumption_id,
                                              const char *agent_id,
                                              char **out_json);

/**
 * Validates an AG document against a policy and the workspace's store and
 * ledger. Returns OK, INVALID (report in `out_report`) or USAGE when the
 * document does not parse.
 *
 * # Safety
 * Pointer arguments must be valid NUL-terminated strings; `out_report`
 * must be writable.
 */
enum ArggateStatus arggate_validate(struct ArggateWorkspace *ws,
                                    const char *ag_json,
                                    const char *policy_json,
                                    char **out_report);

/**
 * OK when the ledger hash chain verifies, INVALID otherwise.
 *
 * # Safety
 * `ws` must be a live handle.
 */
enum ArggateStatus arggate_verify_ledger(struct ArggateWorkspace *ws);

/**
 * Runs one audit query. `id` is a claim or node id (optionally
 * `node@graph`) or, for approvals, a graph id.
 *
 * # Safety
 * Pointer arguments must be valid NUL-terminated strings; `out_json` must
 * be writable.
 */
enum ArggateStatus arggate_audit(struct ArggateWorkspace *ws,
                                 enum ArggateAudit query,
                                 const char *id,
                                 char **out_json);

/**
 * # Safety
 * Pointer arguments must be valid NUL-terminated strings; `out` must be
 * writable.
 */
enum ArggateStatus arggate_export_gsn(struct ArggateWorkspace *ws,
                                      const char *graph_id,
                                      enum ArggateGsnFormat format,
                                      char **out);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on this thread; do not free.
 */
const char *arggate_last_error(void);

/**
 * Frees a string returned through an `out` parameter. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void arggate_string_free(char *s);

/**
 * Library version, static storage.
 */
const char *arggate_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARGGATE_H */
