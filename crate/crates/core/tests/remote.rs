//! Remote backends against a minimal in-process HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use stockchain::gateway::{ChatBackend, Embedder, GatewayError, RemoteBackend, RemoteConfig, RemoteEmbedder};

struct Mock {
    url: String,
    bodies: Arc<Mutex<Vec<String>>>,
}

/// Serves one scripted (status, body) per connection, in order.
fn mock(replies: Vec<(u16, String)>) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = bodies.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    Mock { url, bodies }
}

fn config(url: &str) -> RemoteConfig {
    RemoteConfig::new(url).with_retries(2, 1).with_timeout_ms(5_000)
}

#[test]
fn chat_completion_round_trip() {
    let m = mock(vec![(200, r#"{"output":"up, probability: large"}"#.into())]);
    let b = RemoteBackend::new("remote", config(&m.url));
    assert_eq!(b.complete_text("hello").unwrap(), "up, probability: large");
    let sent: serde_json::Value = serde_json::from_str(&m.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["input"], "hello");
    assert_eq!(sent["temperature"], 0.0);
}

#[test]
fn server_errors_are_retried() {
    let m = mock(vec![
        (503, "{}".into()),
        (500, "{}".into()),
        (200, r#"{"output":"ok"}"#.into()),
    ]);
    let b = RemoteBackend::new("remote", config(&m.url));
    assert_eq!(b.complete_text("x").unwrap(), "ok");
    assert_eq!(m.bodies.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let m = mock(vec![(400, "{}".into())]);
    let b = RemoteBackend::new("remote", config(&m.url));
    assert!(matches!(b.complete_text("x"), Err(GatewayError::Protocol { .. })));
}

#[test]
fn malformed_payload_is_protocol_error() {
    let m = mock(vec![(200, r#"{"text":"x"}"#.into())]);
    let b = RemoteBackend::new("remote", config(&m.url));
    assert!(matches!(b.complete_text("x"), Err(GatewayError::Protocol { .. })));
}

#[test]
fn unreachable_endpoint_exhausts_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = RemoteBackend::new("remote", config(&format!("http://127.0.0.1:{port}/v1")));
    match b.complete_text("x").unwrap_err() {
        GatewayError::Transport { attempts, .. } => assert_eq!(attempts, 3),
        e => panic!("unexpected {e:?}"),
    }
    assert!(!b.healthy());
}

#[test]
fn remote_embedder_checks_dimension() {
    let m = mock(vec![
        (200, r#"{"embedding":[3.0,4.0]}"#.into()),
        (200, r#"{"embedding":[1.0,0.0,0.0]}"#.into()),
    ]);
    let e = RemoteEmbedder::new("remote-embed", 2, config(&m.url));
    assert_eq!(e.embed("a").unwrap(), vec![3.0, 4.0]);
    assert!(e.embed("b").is_err());
}
