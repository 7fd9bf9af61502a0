//! The HTTP completion backend against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use docprobe_core::llm::{complete, render_prompt, BackendConfig, LlmError, PromptContext, TemplateId};

struct Recorded {
    headers: Vec<String>,
    body: String,
}

/// Serve the given (status, body) responses in order, one per connection.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let seen2 = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            seen2.lock().unwrap().push(Recorded {
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1/chat/completions"), seen)
}

fn prompt() -> docprobe_core::llm::PromptBundle {
    let ctx: PromptContext = [
        ("comment".to_string(), "Returns the sum.".to_string()),
        ("signature".to_string(), "int add(int a, int b)".to_string()),
    ]
    .into();
    render_prompt(TemplateId::PropertyExtract, &ctx).unwrap()
}

fn config(endpoint: &str, key_env: &str) -> BackendConfig {
    let mut cfg = BackendConfig::http(endpoint, "test-model");
    cfg.api_key_env = key_env.to_string();
    cfg.retry_base_ms = 1;
    cfg.timeout_s = 5;
    cfg
}

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"WHEN a = 1, THEN the method returns 1 + b"}}]}"#;

#[test]
fn success_sends_chat_request_with_bearer() {
    std::env::set_var("DOCPROBE_TEST_KEY_A", "sekrit");
    let (url, seen) = serve(vec![(200, OK_BODY.to_string())]);
    let text = complete(&config(&url, "DOCPROBE_TEST_KEY_A"), &prompt()).unwrap();
    assert_eq!(text, "WHEN a = 1, THEN the method returns 1 + b");
    let seen = seen.lock().unwrap();
    assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sekrit")));
    let req: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(req["model"], "test-model");
    assert_eq!(req["messages"][0]["role"], "system");
    assert_eq!(req["messages"][1]["role"], "user");
    assert!(req["messages"][1]["content"].as_str().unwrap().contains("Returns the sum."));
}

#[test]
fn transient_failures_are_retried() {
    std::env::set_var("DOCPROBE_TEST_KEY_B", "k");
    let (url, seen) = serve(vec![(429, "{}".into()), (503, "{}".into()), (200, OK_BODY.to_string())]);
    let text = complete(&config(&url, "DOCPROBE_TEST_KEY_B"), &prompt()).unwrap();
    assert!(text.starts_with("WHEN"));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn rate_limit_surfaces_after_retries() {
    std::env::set_var("DOCPROBE_TEST_KEY_C", "k");
    let (url, seen) = serve(vec![(429, "{}".into()); 3]);
    let mut cfg = config(&url, "DOCPROBE_TEST_KEY_C");
    cfg.max_retries = 2;
    assert!(matches!(complete(&cfg, &prompt()), Err(LlmError::RateLimited)));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    std::env::set_var("DOCPROBE_TEST_KEY_D", "k");
    let (url, seen) = serve(vec![(401, "{}".into())]);
    assert!(matches!(
        complete(&config(&url, "DOCPROBE_TEST_KEY_D"), &prompt()),
        Err(LlmError::BackendUnavailable(_))
    ));
    assert_eq!(seen.lock().unwrap().len(), 1);
}
