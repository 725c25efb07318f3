#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include "arggate.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = malloc((size_t)n + 1);
    if (fread(buf, 1, (size_t)n, f) != (size_t)n) { fclose(f); free(buf); return NULL; }
    buf[n] = '\0';
    fclose(f);
    return buf;
}

static int fail(const char *what) {
    const char *e = arggate_last_error();
    fprintf(stderr, "%s failed: %s\n", what, e ? e : "(no message)");
    return 1;
}

/* argv: fixtures dir */
int main(int argc, char **argv) {
    if (argc < 2) return 2;
    char path[4096];
    const char *ev[3][4] = {
        {"E1.txt", "E1 Housing benefit statute s.4", "statute", "statutes"},
        {"E2.txt", "E2 Caseworker assessment", "case_record", "case-files"},
        {"E7.txt", "E7 Identity check record", "case_record", "case-files"},
    };
    ArggateWorkspace *ws = NULL;
    if (arggate_workspace_open_memory(true, &ws) != ARGGATE_STATUS_OK) return fail("open");
    if (arggate_register_human(ws, "human:c-reviewer", "C reviewer") != ARGGATE_STATUS_OK) return fail("register");
    for (int i = 0; i < 3; i++) {
        snprintf(path, sizeof path, "%s/evidence/%s", argv[1], ev[i][0]);
        char *content = slurp(path);
        if (!content) return 3;
        char *hash = NULL;
        if (arggate_ingest_evidence(ws, content, ev[i][3], ev[i][2], ev[i][1], "human:c-reviewer", &hash) != ARGGATE_STATUS_OK)
            return fail("ingest");
        arggate_string_free(hash);
        free(content);
    }
    snprintf(path, sizeof path, "%s/hb-0173.case.json", argv[1]);
    char *c = slurp(path);
    snprintf(path, sizeof path, "%s/benefits.policy.json", argv[1]);
    char *p = slurp(path);
    if (!c || !p) return 3;

    char *out = NULL;
    if (arggate_run_case(ws, c, p, &out) != ARGGATE_STATUS_ESCALATED) return fail("run");
    /* Pull the graph id out of {"graph_id":"<64 hex>",...}. */
    char *g = strstr(out, "\"graph_id\":\"");
    if (!g) return 4;
    char graph[65];
    memcpy(graph, g + 12, 64);
    graph[64] = '\0';
    arggate_string_free(out);

    out = NULL;
    if (arggate_approve_assumption(ws, graph, "hb-0173:assumption:evidence-set-complete", "human:c-reviewer", &out)
        != ARGGATE_STATUS_OK)
        return fail("approve");
    arggate_string_free(out);

    if (arggate_approve_assumption(ws, graph, "hb-0173:assumption:evidence-set-complete", "human:c-reviewer", &out)
        != ARGGATE_STATUS_USAGE)
        return 5;
    if (arggate_verify_ledger(ws) != ARGGATE_STATUS_OK) return fail("verify");
    if (arggate_run_case(NULL, c, p, &out) != ARGGATE_STATUS_USAGE || arggate_last_error() == NULL) return 6;

    printf("ok %s\n", arggate_version());
    free(c);
    free(p);
    arggate_workspace_free(ws);
    return 0;
}
