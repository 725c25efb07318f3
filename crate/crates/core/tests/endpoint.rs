mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;

use arggate::drafter::{DrafterMeta, EndpointConfig, EndpointRequest};
use arggate::ledger::ActivityKind;
use arggate::model::AgDocument;
use arggate::pipeline::{DrafterChoice, RunOptions, RunOutcome, Workspace};
use common::{case, policy, seeded_memory};

type Handler = Arc<dyn Fn(&[u8]) -> (u16, String) + Send + Sync>;

/// A one-thread HTTP server answering every POST with `handler`.
fn serve(handler: Handler) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let (status, text) = handler(&body);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
        }
    });
    format!("http://{addr}/draft")
}

fn endpoint_meta() -> DrafterMeta {
    DrafterMeta { drafter_id: "endpoint:mock".into(), model_id: "mock-model".into(), model_version: "7".into(), ..DrafterMeta::reference() }
}

fn opts(url: String, fallback: bool) -> RunOptions {
    RunOptions {
        drafter: DrafterChoice::Endpoint { config: EndpointConfig { url, timeout_secs: 5, meta: endpoint_meta() }, fallback },
        ..Default::default()
    }
}

fn fail_count(ws: &Workspace) -> usize {
    ws.provenance().activities.values().filter(|a| a.kind == ActivityKind::Fail).count()
}

fn generator_model(ws: &Workspace, package: &arggate::pipeline::DecisionPackage) -> String {
    let ai = package.document.nodes.iter().find(|n| n.generation_ref.is_some()).unwrap();
    ws.audit_generation_context(&format!("{}@{}", ai.id, package.graph_id())).unwrap().model_id
}

fn closed_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/draft")
}

#[test]
fn unreachable_endpoint_fails_the_run_and_is_ledgered() {
    let (mut ws, _) = seeded_memory();
    let out = ws.run_case(&case(), &policy("benefits-direct"), &opts(closed_port(), false));
    assert!(matches!(out, RunOutcome::Failed { .. }), "{}", out.to_json());
    // One for the endpoint call, one for the run it ended.
    assert_eq!(fail_count(&ws), 2);
    assert_eq!(ws.packages().count(), 0);
    assert!(ws.verify_ledger().is_ok());
}

#[test]
fn fallback_uses_the_reference_drafter() {
    let (mut ws, _) = seeded_memory();
    let out = ws.run_case(&case(), &policy("benefits-direct"), &opts(closed_port(), true));
    let RunOutcome::Accepted { package, .. } = &out else { panic!("{}", out.to_json()) };
    assert_eq!(fail_count(&ws), 1);
    assert_eq!(generator_model(&ws, package), DrafterMeta::reference().model_id);
}

#[test]
fn malformed_responses_count_as_failures() {
    for (status, body) in [(200, "not json"), (200, r#"{"nodes": 3}"#), (500, "{}")] {
        let url = serve(Arc::new(move |_| (status, body.to_owned())));
        let (mut ws, _) = seeded_memory();
        let out = ws.run_case(&case(), &policy("benefits-direct"), &opts(url.clone(), false));
        assert!(matches!(out, RunOutcome::Failed { .. }), "{status} {body}: {}", out.to_json());
        assert_eq!(fail_count(&ws), 2);

        let out = ws.run_case(&case(), &policy("benefits-direct"), &opts(url, true));
        assert!(out.is_accepted(), "{}", out.to_json());
        assert_eq!(fail_count(&ws), 3);
    }
}

#[test]
fn a_working_endpoint_is_recorded_as_the_generator() {
    // The mock replays a reference draft, retargeted to the generation
    // activity named in each request.
    let (mut reference_ws, _) = seeded_memory();
    let template = reference_ws.run_case(&case(), &policy("benefits-direct"), &RunOptions::default());
    let template = match template {
        RunOutcome::Accepted { package, .. } => package.document,
        other => panic!("{}", other.to_json()),
    };
    let seen = Arc::new(std::sync::Mutex::new(Vec::<EndpointRequest>::new()));
    let log = seen.clone();
    let url = serve(Arc::new(move |body| {
        let req: EndpointRequest = serde_json::from_slice(body).unwrap();
        let mut doc: AgDocument = template.clone();
        for n in &mut doc.nodes {
            if n.generation_ref.is_some() {
                n.generation_ref = Some(req.generation_ref.clone());
            }
        }
        doc.meta = req.meta.clone();
        log.lock().unwrap().push(req);
        (200, serde_json::to_string(&doc).unwrap())
    }));

    let (mut ws, _) = seeded_memory();
    let out = ws.run_case(&case(), &policy("benefits-direct"), &opts(url, false));
    let RunOutcome::Accepted { package, .. } = &out else { panic!("{}", out.to_json()) };
    assert_eq!(fail_count(&ws), 0);

    let requests = seen.lock().unwrap();
    assert_eq!(requests.len(), 1);
    assert_eq!(requests[0].kg_summary.case_id, "hb-0173");
    assert!(!requests[0].retrieval_items.is_empty());

    let gid = package.graph_id().to_owned();
    let ai = package.document.nodes.iter().find(|n| n.generation_ref.is_some()).unwrap();
    let ctx = ws.audit_generation_context(&format!("{}@{gid}", ai.id)).unwrap();
    assert_eq!(ctx.model_id, "mock-model");
    assert_eq!(ctx.model_version, "7");
}
