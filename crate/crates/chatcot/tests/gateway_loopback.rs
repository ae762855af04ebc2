//! Live-backend behavior against a loopback stub server: wire format,
//! retry with backoff, context-length surfacing, and trace parity between
//! the live and scripted backends under the same reply script.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chatcot::{
    init_memory, ChatBackend, ChatMessage, Engine, EngineConfig, GatewayError, LiveBackend,
    LiveConfig, MemoryConfig, ModelRequest, Phase, ProblemRecord, Role, ScriptRule,
    ScriptedBackend, ScriptedPolicy, ToolRegistry, ToolSpec,
};

fn read_http_request(stream: &mut TcpStream) -> Option<String> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    Some(String::from_utf8_lossy(&buf[header_end..header_end + content_length]).to_string())
}

fn write_http_response(stream: &mut TcpStream, status: &str, body: &str) {
    let resp = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(resp.as_bytes());
    let _ = stream.flush();
}

fn chat_response_body(content: &str) -> String {
    let tokens = content.split_whitespace().count();
    serde_json::json!({
        "choices": [{"message": {"content": content}}],
        "usage": {"completion_tokens": tokens}
    })
    .to_string()
}

/// Serves the scripted policy over HTTP. Message contents arrive without
/// phase tags, so the stub rebuilds requests with a neutral phase; parity
/// scripts therefore use pattern-only rules.
fn spawn_policy_stub(policy: ScriptedPolicy) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let backend = ScriptedBackend::new(policy);
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(body) = read_http_request(&mut stream) else {
                continue;
            };
            let parsed: serde_json::Value = match serde_json::from_str(&body) {
                Ok(v) => v,
                Err(_) => {
                    write_http_response(&mut stream, "400 Bad Request", "{}");
                    continue;
                }
            };
            let messages: Vec<ChatMessage> = parsed["messages"]
                .as_array()
                .map(|arr| {
                    arr.iter()
                        .enumerate()
                        .map(|(i, m)| {
                            let role = if m["role"] == "assistant" {
                                Role::Model
                            } else {
                                Role::Agent
                            };
                            ChatMessage::new(
                                role,
                                Phase::Reasoning,
                                m["content"].as_str().unwrap_or_default(),
                                i,
                            )
                        })
                        .collect()
                })
                .unwrap_or_default();
            let req = ModelRequest::single(messages, 0.0, 256);
            match backend.complete(&req) {
                Ok(resp) => {
                    write_http_response(&mut stream, "200 OK", &chat_response_body(&resp.completions[0]));
                }
                Err(e) => {
                    write_http_response(
                        &mut stream,
                        "400 Bad Request",
                        &format!("{{\"error\": \"{e}\"}}"),
                    );
                }
            }
        }
    });
    addr
}

fn live_backend(addr: SocketAddr) -> LiveBackend {
    let mut cfg = LiveConfig::new(format!("http://{addr}/v1/chat/completions"), "stub-model");
    cfg.initial_backoff = Duration::from_millis(5);
    LiveBackend::new(cfg)
}

fn single_request(content: &str) -> ModelRequest {
    ModelRequest::single(
        vec![ChatMessage::new(Role::Agent, Phase::Reasoning, content, 0)],
        0.0,
        256,
    )
}

#[test]
fn live_backend_parses_completion_and_usage() {
    let addr = spawn_policy_stub(ScriptedPolicy {
        rules: vec![],
        default: Some("four plus one is five".into()),
    });
    let backend = live_backend(addr);
    let resp = backend.complete(&single_request("what is 4+1?")).unwrap();
    assert_eq!(resp.completions, vec!["four plus one is five"]);
    assert_eq!(resp.generated_tokens, 5);
}

#[test]
fn transient_failures_are_retried_then_succeed() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let attempts = Arc::new(AtomicUsize::new(0));
    let served = attempts.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(_body) = read_http_request(&mut stream) else {
                continue;
            };
            let n = served.fetch_add(1, Ordering::SeqCst);
            if n < 2 {
                write_http_response(&mut stream, "500 Internal Server Error", "{}");
            } else {
                write_http_response(&mut stream, "200 OK", &chat_response_body("recovered"));
            }
        }
    });
    let backend = live_backend(addr);
    let resp = backend.complete(&single_request("hello")).unwrap();
    assert_eq!(resp.completions, vec!["recovered"]);
    assert_eq!(attempts.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_stop_after_three_attempts() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let attempts = Arc::new(AtomicUsize::new(0));
    let served = attempts.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(_body) = read_http_request(&mut stream) else {
                continue;
            };
            served.fetch_add(1, Ordering::SeqCst);
            write_http_response(&mut stream, "500 Internal Server Error", "{}");
        }
    });
    let backend = live_backend(addr);
    let err = backend.complete(&single_request("hello")).unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)));
    assert_eq!(attempts.load(Ordering::SeqCst), 3);
}

#[test]
fn context_overflow_is_surfaced_not_retried() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let attempts = Arc::new(AtomicUsize::new(0));
    let served = attempts.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(_body) = read_http_request(&mut stream) else {
                continue;
            };
            served.fetch_add(1, Ordering::SeqCst);
            write_http_response(
                &mut stream,
                "400 Bad Request",
                "{\"error\": \"this model's maximum context length is 4096 tokens\"}",
            );
        }
    });
    let backend = live_backend(addr);
    let err = backend.complete(&single_request("hello")).unwrap_err();
    assert_eq!(err, GatewayError::ContextTooLong);
    assert_eq!(attempts.load(Ordering::SeqCst), 1);
}

/// The engine produces the identical trace whether the script runs behind
/// the scripted backend or behind the live client talking to a loopback
/// stub serving the same script.
#[test]
fn engine_trace_is_identical_across_backends() {
    // pattern-only rules: the wire carries no phase tags
    let policy = ScriptedPolicy {
        rules: vec![
            ScriptRule::on_pattern(None, "which tool can we use", "Calculator"),
            ScriptRule::on_pattern(None, "Give me the equation", "6*7"),
            ScriptRule::on_pattern(None, "Results: 42.", "The product is \\boxed{42}"),
        ],
        default: Some("I multiply the two numbers.".into()),
    };
    let registry = ToolRegistry::math_tools();
    let memory = init_memory(
        &MemoryConfig {
            n_r: 0,
            n_a: 0,
            fix_typos: false,
        },
        &registry.specs(),
        &[],
        &[],
    )
    .unwrap();
    let problem = ProblemRecord::math("p", "What is 6*7?", None, None, "Arithmetic").unwrap();
    let config = EngineConfig::default();

    let scripted = ScriptedBackend::new(policy.clone());
    let scripted_outcome = Engine::new(&config, &registry, &scripted)
        .run(&problem, &memory)
        .unwrap();

    let addr = spawn_policy_stub(policy);
    let live = live_backend(addr);
    let live_outcome = Engine::new(&config, &registry, &live)
        .run(&problem, &memory)
        .unwrap();

    assert_eq!(scripted_outcome.trace, live_outcome.trace);
    assert_eq!(scripted_outcome.answer, live_outcome.answer);
    assert_eq!(
        scripted_outcome.generated_tokens,
        live_outcome.generated_tokens
    );
    assert_eq!(scripted_outcome.tool_calls, live_outcome.tool_calls);
}

/// Rules with phase matchers still select on patterns when phases are
/// unavailable on the wire, so selection ordering matters; keep the spec
/// constructors exercised.
#[test]
fn tool_spec_defaults_have_distinct_names() {
    let names: Vec<String> = [
        ToolSpec::calculator(),
        ToolSpec::equation_solver(),
        ToolSpec::retriever(),
    ]
    .iter()
    .map(|t| t.name.clone())
    .collect();
    let mut dedup = names.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), names.len());
}
