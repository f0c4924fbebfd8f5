use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value as Json};

const EXE: &str = env!("CARGO_BIN_EXE_exposition");

struct Files {
    dir: tempfile::TempDir,
}

impl Files {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("x1,x2,g,y\n");
        for i in 0..60 {
            let x1 = (i as f64 * 0.37) % 5.0;
            let x2 = ((i * 7) % 11) as f64 / 10.0;
            let g = ["a", "b"][i % 2];
            let y = u8::from(x1 + x2 > 2.8);
            csv.push_str(&format!("{x1},{x2},{g},{y}\n"));
        }
        std::fs::write(dir.path().join("data.csv"), csv).unwrap();
        std::fs::write(dir.path().join("logistic.json"), r#"{"type": "logistic"}"#).unwrap();
        std::fs::write(dir.path().join("tree.json"), r#"{"type": "tree", "max_depth": 2}"#).unwrap();
        Files { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(EXE).args(args).output().unwrap()
}

fn explain(files: &Files, extra: &[&str]) -> Output {
    let data = files.s("data.csv");
    let model = files.s("logistic.json");
    let mut args = vec!["explain", "--data", &data, "--target", "y", "--model", &model];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn unknown_kind_is_a_usage_error() {
    let files = Files::new();
    let out = explain(&files, &["--kind", "lime"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lime"));
}

#[test]
fn predict_level_kind_requires_instance() {
    let files = Files::new();
    let out = explain(&files, &["--kind", "breakdown"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--instance"));
}

#[test]
fn missing_model_file_exits_one() {
    let files = Files::new();
    let data = files.s("data.csv");
    let out = run(&[
        "explain",
        "--data",
        &data,
        "--target",
        "y",
        "--model",
        "/nonexistent/m.json",
        "--kind",
        "performance",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn bad_data_exits_one() {
    let files = Files::new();
    std::fs::write(files.path("bad.csv"), "x1,y\n1,0\nfoo\n").unwrap();
    let data = files.s("bad.csv");
    let model = files.s("logistic.json");
    let out = run(&[
        "explain",
        "--data",
        &data,
        "--target",
        "y",
        "--model",
        &model,
        "--kind",
        "performance",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_target_exits_one() {
    let files = Files::new();
    let data = files.s("data.csv");
    let model = files.s("logistic.json");
    let out = run(&[
        "explain",
        "--data",
        &data,
        "--target",
        "nope",
        "--model",
        &model,
        "--kind",
        "performance",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn every_kind_emits_a_valid_payload() {
    let files = Files::new();
    let cases: [(&str, &[&str]); 9] = [
        ("performance", &[]),
        ("breakdown", &["--instance", "3"]),
        ("shapley", &["--instance", "3", "--b", "5"]),
        ("cp", &["--instance", "3", "--variables", "x1,g"]),
        ("importance", &["--b", "3"]),
        ("profile", &["--profile-kind", "ice", "--no-center-ice"]),
        ("residuals", &[]),
        ("surrogate", &["--max-depth", "2"]),
        (
            "fairness",
            &["--protected", "g", "--privileged", "a", "--epsilon", "0.75"],
        ),
    ];
    for (kind, extra) in cases {
        let mut args = vec!["--kind", kind];
        args.extend_from_slice(extra);
        let out = explain(&files, &args);
        assert!(out.status.success(), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        let doc: Json = serde_json::from_slice(&out.stdout).unwrap();
        exposition::validate_payload(&doc).unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert_eq!(doc["kind"], json!(kind));
        assert_eq!(doc["meta"]["seed"], json!(42));
    }
}

#[test]
fn overrides_are_applied_to_the_instance() {
    let files = Files::new();
    let plain = explain(&files, &["--kind", "breakdown", "--instance", "3"]);
    let moved = explain(
        &files,
        &[
            "--kind",
            "breakdown",
            "--instance",
            "3",
            "--override",
            "x1=4.5",
            "--override",
            "g=b",
        ],
    );
    assert!(moved.status.success(), "{}", String::from_utf8_lossy(&moved.stderr));
    let a: Json = serde_json::from_slice(&plain.stdout).unwrap();
    let b: Json = serde_json::from_slice(&moved.stdout).unwrap();
    assert_ne!(a["result"], b["result"]);
    assert_eq!(b["meta"]["overrides"]["x1"], json!(4.5));
    assert_eq!(b["meta"]["overrides"]["g"], json!("b"));
}

#[test]
fn two_models_share_the_grid() {
    let files = Files::new();
    let data = files.s("data.csv");
    let logit = format!("{}:logit", files.s("logistic.json"));
    let tree = format!("{}:tree", files.s("tree.json"));
    let out = run(&[
        "explain",
        "--data",
        &data,
        "--target",
        "y",
        "--model",
        &logit,
        "--model",
        &tree,
        "--kind",
        "profile",
        "--grid-size",
        "7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Json = serde_json::from_slice(&out.stdout).unwrap();
    let docs = doc.as_array().unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0]["model_label"], json!("logit"));
    assert_eq!(docs[1]["model_label"], json!("tree"));
    let grid = |d: &Json| {
        d["result"]["values"][d["result"]["columns"]
            .as_array()
            .unwrap()
            .iter()
            .position(|c| c == "x")
            .unwrap()]
        .clone()
    };
    assert_eq!(grid(&docs[0]), grid(&docs[1]));
}

#[test]
fn duplicate_labels_are_a_usage_error() {
    let files = Files::new();
    let data = files.s("data.csv");
    let a = format!("{}:m", files.s("logistic.json"));
    let b = format!("{}:m", files.s("tree.json"));
    let out = run(&[
        "explain",
        "--data",
        &data,
        "--target",
        "y",
        "--model",
        &a,
        "--model",
        &b,
        "--kind",
        "performance",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let files = Files::new();
    let out_path = files.s("out.json");
    let written = explain(&files, &["--kind", "importance", "--out", &out_path]);
    assert!(written.status.success());
    assert!(written.stdout.is_empty());
    let printed = explain(&files, &["--kind", "importance"]);
    let mut expected = std::fs::read(&out_path).unwrap();
    expected.push(b'\n');
    assert_eq!(printed.stdout, expected);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, method: &str, path: &str, body: Option<&str>) -> Option<(u16, String)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(30))).ok()?;
    let body = body.unwrap_or("");
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(req.as_bytes()).ok()?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).ok()?;
    let status = raw.split_whitespace().nth(1)?.parse().ok()?;
    let body = raw
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or_default();
    Some((status, body))
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(files: &Files, port: u16, extra: &[&str]) -> Server {
    let data = files.s("data.csv");
    let model = format!("{}:logit", files.s("logistic.json"));
    let port = port.to_string();
    let mut args = vec![
        "serve", "--data", &data, "--target", "y", "--model", &model, "--port", &port,
    ];
    args.extend_from_slice(extra);
    let child = Command::new(EXE)
        .args(&args)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    Server(child)
}

fn wait_ready(port: u16) -> (u16, String) {
    let start = Instant::now();
    loop {
        if let Some(resp) = http(port, "GET", "/api/info", None) {
            return resp;
        }
        assert!(start.elapsed() < Duration::from_secs(30), "service did not come up");
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[test]
fn serve_answers_and_restores_state() {
    let files = Files::new();
    let state = json!({
        "version": "1",
        "charts": [{"kind": "importance", "models": ["logit"], "params": {"b": 2}, "seed": 5}],
        "pinned": [{"row": 2}],
        "layout": []
    });
    std::fs::write(files.path("state.json"), state.to_string()).unwrap();
    let port = free_port();
    let state_path = files.s("state.json");
    let _server = serve(&files, port, &["--state", &state_path]);
    let (status, body) = wait_ready(port);
    assert_eq!(status, 200);
    let info: Json = serde_json::from_str(&body).unwrap();
    assert_eq!(info["models"], json!(["logit"]));

    let (status, body) = http(port, "GET", "/api/state", None).unwrap();
    assert_eq!(status, 200);
    let restored: Json = serde_json::from_str(&body).unwrap();
    assert_eq!(restored["charts"], state["charts"]);

    let req = json!({"kind": "importance", "model": "logit", "params": {"b": 2}, "seed": 5}).to_string();
    let (status, body) = http(port, "POST", "/api/compute", Some(&req)).unwrap();
    assert_eq!(status, 200);
    let doc: Json = serde_json::from_str(&body).unwrap();
    assert_eq!(doc["kind"], json!("importance"));
}

#[test]
fn serve_with_unresolvable_state_exits_before_binding() {
    let files = Files::new();
    let state = json!({"version": "1", "charts": [{"kind": "performance", "models": ["ghost"], "seed": 1}]});
    std::fs::write(files.path("state.json"), state.to_string()).unwrap();
    let data = files.s("data.csv");
    let model = format!("{}:logit", files.s("logistic.json"));
    let state_path = files.s("state.json");
    let port = free_port().to_string();
    let out = run(&[
        "serve",
        "--data",
        &data,
        "--target",
        "y",
        "--model",
        &model,
        "--port",
        &port,
        "--state",
        &state_path,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost"));
}

#[test]
fn serve_with_missing_model_exits_one() {
    let files = Files::new();
    let data = files.s("data.csv");
    let port = free_port().to_string();
    let out = run(&[
        "serve",
        "--data",
        &data,
        "--target",
        "y",
        "--model",
        "/nonexistent.json",
        "--port",
        &port,
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_on_a_busy_port_exits_one() {
    let files = Files::new();
    let holder = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port().to_string();
    let data = files.s("data.csv");
    let model = files.s("logistic.json");
    let out = run(&[
        "serve", "--data", &data, "--target", "y", "--model", &model, "--port", &port,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot listen"));
}

#[test]
fn worker_answers_prediction_requests() {
    let files = Files::new();
    let data = files.s("data.csv");
    let model = files.s("logistic.json");
    let mut child = Command::new(EXE)
        .args(["worker", "--data", &data, "--target", "y", "--model", &model])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let request = json!({"columns": ["x1", "x2", "g"], "rows": [[1.0, 0.5, "a"], [4.0, 0.9, "b"]]});
    {
        let mut stdin = child.stdin.take().unwrap();
        writeln!(stdin, "{request}").unwrap();
    }
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    let resp: Json = serde_json::from_str(line.trim()).unwrap();
    let preds = resp["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 2);
    assert!(preds[0].as_f64().unwrap() < preds[1].as_f64().unwrap());
}
