#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use promptmcts_core::landscape::{synthetic_dataset, KeywordLandscape};
use serde_json::{json, Value};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_promptmcts"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("RUST_LOG").output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

pub fn landscape_dataset(dir: &Path, per_keyword: usize) -> PathBuf {
    let land = KeywordLandscape::default();
    write(dir, "data.jsonl", &synthetic_dataset(&land.keywords, per_keyword).to_jsonl())
}

pub fn dataset_with_labels(dir: &Path, name: &str, labels: &[&str]) -> PathBuf {
    let lines: String = labels
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}\n", json!({"id": format!("n{i}"), "text": format!("Story number {i} about the harbor."), "label": l})))
        .collect();
    write(dir, name, &lines)
}

pub fn scripted_role(script: Value) -> Value {
    json!({"backend": "scripted", "script": script})
}

pub fn replay_role(fixtures: &str) -> Value {
    json!({"backend": "replay", "fixtures": fixtures})
}

/// Config whose three roles all use the same role spec.
pub fn config_all(dir: &Path, name: &str, role: Value, extra: Value) -> PathBuf {
    let mut cfg = json!({
        "search": {"epochs": 3, "validation_fraction": 1.0, "rng_seed": 11},
        "roles": {"base": role, "actor": role, "optimizer": role},
        "dataset_path": "data.jsonl",
        "output_dir": "out",
    });
    merge(&mut cfg, extra);
    write(dir, name, &serde_json::to_string_pretty(&cfg).unwrap())
}

fn merge(base: &mut Value, extra: Value) {
    match (base, extra) {
        (Value::Object(b), Value::Object(e)) => {
            for (k, v) in e {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, e) => *b = e,
    }
}

pub fn landscape_role() -> Value {
    scripted_role(json!({"kind": "keyword_landscape"}))
}

/// Minimal HTTP server answering each connection with the next status in
/// `statuses` (the last one repeats). Returns the base URL and a hit counter.
pub fn http_stub(statuses: Vec<u16>) -> (String, std::sync::Arc<std::sync::atomic::AtomicUsize>) {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"stub reply"}}]}"#;
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; length];
            let _ = reader.read_exact(&mut body);
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let status = statuses[n.min(statuses.len() - 1)];
            let payload = if status == 200 { OK_BODY } else { "{}" };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    (format!("http://{addr}/v1"), hits)
}
