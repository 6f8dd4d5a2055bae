mod support;

use std::time::{Duration, Instant};

use agent_radar::harness::chat::{ChatClient, ChatConfig, ChatError, ChatMessage, ChatRequest};
use agent_radar::select::{EmbedError, EmbeddingProvider, RemoteEncoder, RemoteEncoderConfig};
use agent_radar::transport::{EndpointConfig, JsonClient, RetryPolicy, TransportError};
use serde_json::json;

use support::mock::{chat_body, MockServer, Reply};

fn endpoint(server: &MockServer, max_retries: u32, timeout_secs: f64) -> EndpointConfig {
    EndpointConfig {
        base_url: server.base_url.clone(),
        timeout_secs,
        retry: RetryPolicy {
            max_retries,
            base_delay_ms: 5,
            max_delay_ms: 20,
        },
    }
}

fn chat_config(server: &MockServer, max_retries: u32) -> ChatConfig {
    ChatConfig {
        endpoint: endpoint(server, max_retries, 5.0),
        model: "test-model".into(),
        temperature: 1.0,
    }
}

fn hello() -> ChatRequest {
    ChatRequest {
        messages: vec![ChatMessage::user("hello")],
        steering: None,
        seed: Some(7),
    }
}

#[test]
fn chat_returns_message_content() {
    let server = MockServer::start(vec![Reply::Json(200, chat_body("fixed reply"))], 1);
    let mut client = ChatClient::new(chat_config(&server, 0), Some("k".into())).unwrap();
    assert_eq!(client.chat(&hello()).unwrap(), "fixed reply");
    let sent: serde_json::Value = serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["model"], "test-model");
    assert_eq!(sent["seed"], 7);
    assert_eq!(sent["messages"][0]["content"], "hello");
    assert_eq!(client.exchanges().len(), 1);
    assert_eq!(client.exchanges()[0].attempts, 1);
}

#[test]
fn two_transient_failures_then_success() {
    let server = MockServer::start(
        vec![
            Reply::Json(503, "{}".into()),
            Reply::Json(429, "{}".into()),
            Reply::Json(200, chat_body("third time")),
        ],
        3,
    );
    let mut client = ChatClient::new(chat_config(&server, 3), None).unwrap();
    assert_eq!(client.chat(&hello()).unwrap(), "third time");
    assert_eq!(server.request_count(), 3);
    assert_eq!(client.exchanges()[0].attempts, 3);
}

#[test]
fn persistent_failure_exhausts_retries() {
    let server = MockServer::start(vec![Reply::Json(500, "{\"error\":\"down\"}".into())], 3);
    let mut client = ChatClient::new(chat_config(&server, 2), None).unwrap();
    let err = client.chat(&hello()).unwrap_err();
    match err {
        ChatError::Transport(TransportError::RetriesExhausted { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert!(matches!(*last, TransportError::Status { status: 500, .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.request_count(), 3);
    assert!(client.exchanges()[0].error.is_some());
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![Reply::Json(401, "{\"error\":\"bad key\"}".into())], 1);
    let mut client = ChatClient::new(chat_config(&server, 3), None).unwrap();
    let err = client.chat(&hello()).unwrap_err();
    assert!(matches!(err, ChatError::Transport(TransportError::Status { status: 401, .. })));
    assert_eq!(server.request_count(), 1);
}

#[test]
fn missing_content_is_malformed() {
    let server = MockServer::start(vec![Reply::Json(200, "{\"choices\": []}".into())], 1);
    let mut client = ChatClient::new(chat_config(&server, 3), None).unwrap();
    assert!(matches!(client.chat(&hello()), Err(ChatError::MalformedResponse(_))));
    assert_eq!(server.request_count(), 1);
}

#[test]
fn non_json_body_is_malformed() {
    let server = MockServer::start(vec![Reply::Json(200, "not json".into())], 1);
    let client = JsonClient::new(&endpoint(&server, 3, 5.0), None).unwrap();
    assert!(matches!(client.post("x", &json!({})), Err(TransportError::Malformed(_))));
}

#[test]
fn stalled_server_times_out() {
    let server = MockServer::start(vec![Reply::Stall(Duration::from_secs(3))], 2);
    let client = JsonClient::new(&endpoint(&server, 1, 0.2), None).unwrap();
    let start = Instant::now();
    let err = client.post("x", &json!({})).unwrap_err();
    assert!(start.elapsed() < Duration::from_secs(3));
    match err {
        TransportError::RetriesExhausted { attempts, last } => {
            assert_eq!(attempts, 2);
            assert!(matches!(*last, TransportError::Timeout(_)), "{last:?}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_is_a_connect_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = EndpointConfig {
        base_url: format!("http://127.0.0.1:{port}"),
        timeout_secs: 1.0,
        retry: RetryPolicy {
            max_retries: 1,
            base_delay_ms: 1,
            max_delay_ms: 1,
        },
    };
    let err = JsonClient::new(&cfg, None).unwrap().post("x", &json!({})).unwrap_err();
    assert_eq!(err.attempts(), 2);
}

fn encoder(server: &MockServer, dim: usize) -> RemoteEncoder {
    RemoteEncoder::new(
        &RemoteEncoderConfig {
            endpoint: endpoint(server, 0, 5.0),
            model: "embed-test".into(),
            dim,
        },
        None,
    )
    .unwrap()
}

#[test]
fn remote_encoder_orders_by_index() {
    let body = json!({"data": [
        {"index": 1, "embedding": [0.0, 1.0]},
        {"index": 0, "embedding": [1.0, 0.0]}
    ]});
    let server = MockServer::start(vec![Reply::Json(200, body.to_string())], 1);
    let enc = encoder(&server, 2);
    let out = enc.embed_batch(&["a", "b"]).unwrap();
    assert_eq!(out[0].values(), &[1.0, 0.0]);
    assert_eq!(out[1].values(), &[0.0, 1.0]);
    let sent: serde_json::Value = serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["input"], json!(["a", "b"]));
}

#[test]
fn remote_encoder_rejects_bad_payloads() {
    let wrong_dim = json!({"data": [{"index": 0, "embedding": [1.0, 0.0, 0.0]}]});
    let server = MockServer::start(vec![Reply::Json(200, wrong_dim.to_string())], 1);
    assert!(matches!(encoder(&server, 2).embed("a"), Err(EmbedError::DimensionMismatch { .. })));

    let server = MockServer::start(vec![Reply::Json(200, "{\"data\": []}".into())], 1);
    assert!(matches!(encoder(&server, 2).embed("a"), Err(EmbedError::Malformed(_))));

    let server = MockServer::start(vec![Reply::Json(502, "{}".into())], 1);
    let err = encoder(&server, 2).embed("a").unwrap_err();
    assert_eq!(err.retry_info(), Some((false, 1)));
}
