//! Wire-protocol tests for the HTTP backends against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use cpig_core::providers::http::{EmbedResponse, ScoreResponse};
use cpig_core::providers::{
    embed_texts, score_originality, Embedder, GenerationRequest, HttpEmbedder, HttpScorer, OpenAiChatGenerator,
    OriginalityScorer, ProviderError, RetryPolicy, ScoreScale, TextGenerator,
};
use serde_json::{json, Value};

struct Recorded {
    body: Value,
    authorization: Option<String>,
}

/// Serves `script` in order, one response per connection; the last entry
/// repeats once the script is exhausted.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (n, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    match k.to_ascii_lowercase().as_str() {
                        "content-length" => len = v.trim().parse().unwrap(),
                        "authorization" => authorization = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Recorded {
                body: serde_json::from_slice(&body).unwrap_or(Value::Null),
                authorization,
            });
            let (status, payload) = &script[n.min(script.len() - 1)];
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (url, seen)
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 4,
        base_delay_ms: 5,
    }
}

fn chat_ok(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn request() -> GenerationRequest {
    GenerationRequest {
        prompt: "Write a scenario.".into(),
        max_tokens: 768,
        temperature: 1.0,
        seed: 9,
        backend_id: "remote".into(),
    }
}

#[test]
fn chat_retries_through_three_503s() {
    let unavailable = (503, "{\"error\":\"busy\"}".to_string());
    let (url, seen) = serve(vec![unavailable.clone(), unavailable.clone(), unavailable, (200, chat_ok("A dilemma."))]);
    let gen = OpenAiChatGenerator::new("remote", url, "some-model", Some("sk-test".into()), fast_retry());
    let out = gen.generate(&request()).unwrap();
    assert_eq!(out.text, "A dilemma.");
    assert_eq!(out.attempt_metadata["http_attempts"], "4");

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 4);
    let body = &seen[0].body;
    assert_eq!(body["model"], "some-model");
    assert_eq!(body["max_tokens"], 768);
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "Write a scenario.");
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer sk-test"));
}

#[test]
fn chat_gives_up_after_configured_attempts() {
    let (url, seen) = serve(vec![(503, "{}".into())]);
    let retry = RetryPolicy {
        attempts: 3,
        base_delay_ms: 5,
    };
    let gen = OpenAiChatGenerator::new("remote", url, "m", None, retry);
    match gen.generate(&request()) {
        Err(ProviderError::BackendUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected BackendUnavailable, got {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert!(seen.lock().unwrap()[0].authorization.is_none());
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "{\"error\":\"bad\"}".into())]);
    let gen = OpenAiChatGenerator::new("remote", url, "m", None, fast_retry());
    assert!(matches!(gen.generate(&request()), Err(ProviderError::Rejected { status: 400, .. })));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn chat_without_content_is_malformed() {
    let (url, _) = serve(vec![(200, "{\"choices\": []}".into())]);
    let gen = OpenAiChatGenerator::new("remote", url, "m", None, fast_retry());
    assert!(matches!(gen.generate(&request()), Err(ProviderError::MalformedResponse { .. })));
}

#[test]
fn embed_protocol_preserves_order() {
    let reply = EmbedResponse {
        vectors: vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![1.0, 0.0, 0.0]],
        dim: 3,
    };
    let (url, seen) = serve(vec![(200, serde_json::to_string(&reply).unwrap())]);
    let emb = HttpEmbedder::new("remote", url, None, fast_retry());
    let texts: Vec<String> = ["abc", "xyz", "abc"].map(String::from).to_vec();
    let v = embed_texts(&emb, &texts).unwrap();
    assert_eq!(v.len(), 3);
    assert_eq!(v[1].values(), &[0.0, 2.0, 0.0]);
    assert!((v[0].cosine(&v[2]).unwrap() - 1.0).abs() < 1e-9);
    assert!(v[0].cosine(&v[1]).unwrap().abs() < 1e-9);
    assert_eq!(seen.lock().unwrap()[0].body, json!({"texts": ["abc", "xyz", "abc"]}));
}

#[test]
fn embed_dimension_change_is_rejected() {
    let first = json!({"vectors": [[1.0, 0.0]], "dim": 2}).to_string();
    let second = json!({"vectors": [[1.0, 0.0, 0.0]], "dim": 3}).to_string();
    let (url, _) = serve(vec![(200, first), (200, second)]);
    let emb = HttpEmbedder::new("remote", url, None, fast_retry());
    let texts = vec!["a".to_string()];
    emb.embed(&texts).unwrap();
    assert_eq!(
        emb.embed(&texts),
        Err(ProviderError::DimensionMismatch { expected: 2, actual: 3 })
    );
}

#[test]
fn embed_arity_mismatch_is_malformed() {
    let (url, _) = serve(vec![(200, json!({"vectors": [[1.0]], "dim": 1}).to_string())]);
    let emb = HttpEmbedder::new("remote", url, None, fast_retry());
    let texts = vec!["a".to_string(), "b".to_string()];
    assert!(matches!(emb.embed(&texts), Err(ProviderError::MalformedResponse { .. })));
}

#[test]
fn score_protocol_round_trip() {
    let reply = ScoreResponse {
        scores: vec![1.5, 4.25, 3.0],
        scorer_id: "roberta-originality".into(),
    };
    let (url, seen) = serve(vec![(500, "{}".into()), (200, serde_json::to_string(&reply).unwrap())]);
    let scorer = HttpScorer::new("remote", url, None, fast_retry(), ScoreScale::LIKERT_5);
    let responses: Vec<String> = ["one", "two", "three"].map(String::from).to_vec();
    let s = score_originality(&scorer, "The item.", &responses).unwrap();
    assert_eq!(s.iter().map(|x| x.value).collect::<Vec<_>>(), vec![1.5, 4.25, 3.0]);
    assert!(s.iter().all(|x| x.scorer_id == "roberta-originality"));
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[1].body, json!({"item": "The item.", "responses": ["one", "two", "three"]}));
}

#[test]
fn score_outside_declared_scale_is_rejected() {
    let (url, _) = serve(vec![(200, json!({"scores": [6.0], "scorer_id": "x"}).to_string())]);
    let scorer = HttpScorer::new("remote", url, None, fast_retry(), ScoreScale::LIKERT_5);
    assert!(matches!(
        scorer.score("i", &["r".to_string()]),
        Err(ProviderError::ScaleViolation { .. })
    ));
}

#[test]
fn unreachable_backend_is_unavailable() {
    // Bind then drop to get a port with nothing listening.
    let addr = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let retry = RetryPolicy {
        attempts: 2,
        base_delay_ms: 1,
    };
    let scorer = HttpScorer::new("remote", format!("http://{addr}/score"), None, retry, ScoreScale::LIKERT_5);
    let err = scorer.score("i", &["r".to_string()]).unwrap_err();
    assert!(err.is_unavailable(), "{err:?}");
}
