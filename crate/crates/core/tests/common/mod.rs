//! Minimal OpenAI-compatible HTTP stub for live-adapter tests.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

#[derive(Clone)]
pub enum Reply {
    /// 200 with the given assistant message content.
    Content(String),
    Status(u16),
    /// Sleep before answering, long enough to trip a client timeout.
    Stall(Duration),
}

pub struct Stub {
    pub endpoint: String,
    /// Request bodies in arrival order.
    pub requests: Arc<Mutex<Vec<String>>>,
}

/// Serves `replies` in order, one connection each; the last reply repeats.
pub fn serve(replies: Vec<Reply>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    thread::spawn(move || {
        for (k, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { continue };
            let reply = replies[k.min(replies.len() - 1)].clone();
            let log = log.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                let _ = reader.read_exact(&mut body);
                log.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
                let (status, payload) = match reply {
                    Reply::Content(text) => (
                        200,
                        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
                            .to_string(),
                    ),
                    Reply::Status(code) => (code, "{\"error\":\"stub\"}".to_string()),
                    Reply::Stall(d) => {
                        thread::sleep(d);
                        (200, "{}".to_string())
                    }
                };
                let head = format!(
                    "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    payload.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(payload.as_bytes());
            });
        }
    });
    Stub { endpoint, requests }
}
