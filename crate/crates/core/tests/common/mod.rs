//! Scripted HTTP inference stub and shared fixtures.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use prompt_elites::tasks::{load_task, TaskDataset};

pub fn even_numbers() -> TaskDataset {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/even_numbers.json");
    load_task(path).expect("sample task loads")
}

/// The number asked about in the last "Is N an even number?" line; the
/// task entry always follows the examples.
pub fn asked_number(prompt: &str) -> Option<u64> {
    prompt
        .rmatch_indices("Is ")
        .find_map(|(i, _)| prompt[i + 3..].split_whitespace().next()?.parse().ok())
}

pub enum Reply {
    /// Hold the connection open without answering, then drop it.
    Stall(Duration),
    Status(u16),
    /// Answer the question, deliberately wrong for multiples of three.
    Answer,
}

pub struct Stub {
    pub url: String,
    hits: Arc<AtomicUsize>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
}

impl Stub {
    /// Serves each request with `script(request_number, prompt)`.
    pub fn start(script: impl Fn(usize, &str) -> Reply + Send + Sync + 'static) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/generate", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let auth = Arc::new(Mutex::new(Vec::new()));
        let script = Arc::new(script);
        let (h, a) = (hits.clone(), auth.clone());
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (h, a, script) = (h.clone(), a.clone(), script.clone());
                thread::spawn(move || serve(stream, &h, &a, script.as_ref()));
            }
        });
        Stub { url, hits, auth }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn auth_headers(&self) -> Vec<Option<String>> {
        self.auth.lock().unwrap().clone()
    }
}

/// The stub's answer: right unless `n` is a multiple of three.
pub fn expected_answer(n: u64) -> &'static str {
    let even = n % 2 == 0;
    let flipped = n % 3 == 0;
    if even != flipped {
        "Yes"
    } else {
        "No"
    }
}

/// Whether the stub answers the question about `n` correctly.
pub fn stub_is_right(n: u64) -> bool {
    n % 3 != 0
}

fn serve(stream: TcpStream, hits: &AtomicUsize, auth: &Mutex<Vec<Option<String>>>, script: &(dyn Fn(usize, &str) -> Reply + Send + Sync)) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    let mut authorization = None;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((name, value)) = trimmed.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let n = hits.fetch_add(1, Ordering::SeqCst);
    auth.lock().unwrap().push(authorization);
    let prompt = serde_json::from_slice::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| v["inputs"].as_str().map(str::to_string))
        .unwrap_or_default();

    let mut stream = stream;
    let (status, payload) = match script(n, &prompt) {
        Reply::Stall(d) => {
            thread::sleep(d);
            return;
        }
        Reply::Status(code) => (code, "{\"error\": \"scripted\"}".to_string()),
        Reply::Answer => {
            let answer = asked_number(&prompt).map(expected_answer).unwrap_or("unsure");
            (200, serde_json::json!([{ "generated_text": format!("{answer} it is") }]).to_string())
        }
    };
    let response = format!(
        "HTTP/1.1 {status} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}
