//! The HTTP generator adapter against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use emoji_predict::augmentation::{tag_prompt, GeneratorAdapter, RemoteAdapter};
use emoji_predict::corpus::EmojiId;

struct Seen {
    auth: Option<String>,
    body: String,
}

/// Serves `replies` in order, one connection each, recording requests.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut auth = None;
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { auth, body: String::from_utf8(buf).unwrap() });
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

#[test]
fn posts_prompt_and_parses_text() {
    let (url, seen) = serve(vec![(200, r#"{"text": "pizza, Cheese, hot dog"}"#.into())]);
    let adapter = RemoteAdapter::new(url, Some("s3cret".into()), Duration::from_secs(5), 0);
    let tags = adapter.generate_tags(&EmojiId::new("🍕").unwrap()).unwrap();
    assert_eq!(tags, vec!["pizza", "cheese"]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer s3cret"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["prompt"], tag_prompt(&EmojiId::new("🍕").unwrap()));
}

#[test]
fn retries_after_server_error() {
    let (url, seen) = serve(vec![(500, "{}".into()), (200, r#"{"text": "love the pizza"}"#.into())]);
    let adapter = RemoteAdapter::new(url, None, Duration::from_secs(5), 1);
    assert_eq!(adapter.generate_sentence("pizza", 0).unwrap(), "love the pizza");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[0].auth.is_none());
}

#[test]
fn gives_up_after_max_retries() {
    let (url, _) = serve(vec![(503, "{}".into()), (503, "{}".into())]);
    let adapter = RemoteAdapter::new(url, None, Duration::from_secs(5), 1);
    assert!(adapter.generate_sentence("pizza", 0).is_err());
}
