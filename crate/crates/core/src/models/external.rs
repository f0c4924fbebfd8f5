//! Line protocol for out-of-process predictors.
//!
//! Each call writes one request line `{"columns": [...], "rows": [[...], ...]}`
//! to the child's stdin and reads one response line `{"predictions": [...]}`
//! from its stdout. Numbers travel as decimal literals with 17 significant
//! digits, so 64-bit floats survive the round trip unchanged. Categorical
//! cells travel as their level names.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value as Json;

use crate::data::{ColumnData, ColumnKind, ColumnSchema, Table, Value};
use crate::error::{ExplainError, Result};
use crate::predictor::Predictor;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Formats `x` with 17 significant digits.
pub fn wire_number(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Encodes `rows` as one request line (without the trailing newline).
pub fn encode_request(rows: &Table) -> String {
    let mut out = String::from("{\"columns\":[");
    for (i, s) in rows.schema().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&json_string(&s.name));
    }
    out.push_str("],\"rows\":[");
    for r in 0..rows.n_rows() {
        if r > 0 {
            out.push(',');
        }
        out.push('[');
        for (c, s) in rows.schema().iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            match rows.get(r, c) {
                Value::Num(x) => out.push_str(&wire_number(x)),
                Value::Level(l) => out.push_str(&json_string(&s.levels[l as usize])),
            }
        }
        out.push(']');
    }
    out.push_str("]}");
    out
}

/// Encodes scores as one response line (without the trailing newline).
pub fn encode_response(predictions: &[f64]) -> String {
    let body: Vec<String> = predictions.iter().map(|p| wire_number(*p)).collect();
    format!("{{\"predictions\":[{}]}}", body.join(","))
}

#[derive(Deserialize)]
struct Response {
    predictions: Vec<f64>,
}

#[derive(Deserialize)]
struct Request {
    columns: Vec<String>,
    rows: Vec<Vec<Json>>,
}

/// Parses a request line into a table laid out as `schema`.
pub fn decode_request(line: &str, schema: &[ColumnSchema]) -> Result<Table> {
    let req: Request =
        serde_json::from_str(line).map_err(|e| ExplainError::Protocol(format!("malformed request: {e}")))?;
    let positions: Vec<usize> = schema
        .iter()
        .map(|s| {
            req.columns
                .iter()
                .position(|c| *c == s.name)
                .ok_or_else(|| ExplainError::Protocol(format!("request lacks column '{}'", s.name)))
        })
        .collect::<Result<_>>()?;
    if let Some(r) = req.rows.iter().position(|row| row.len() != req.columns.len()) {
        return Err(ExplainError::Protocol(format!("request row {r} has the wrong length")));
    }
    let columns = schema
        .iter()
        .zip(&positions)
        .map(|(s, &p)| match s.kind {
            ColumnKind::Numeric => req
                .rows
                .iter()
                .map(|row| {
                    row[p]
                        .as_f64()
                        .ok_or_else(|| ExplainError::Protocol(format!("column '{}' expects numbers", s.name)))
                })
                .collect::<Result<Vec<_>>>()
                .map(ColumnData::Numeric),
            ColumnKind::Categorical => req
                .rows
                .iter()
                .map(|row| {
                    let text = row[p]
                        .as_str()
                        .ok_or_else(|| ExplainError::Protocol(format!("column '{}' expects strings", s.name)))?;
                    s.level_index(text).ok_or_else(|| ExplainError::Level {
                        column: s.name.clone(),
                        level: text.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(ColumnData::Categorical),
        })
        .collect::<Result<Vec<_>>>()?;
    Table::new(schema.to_vec(), columns)
}

/// Answers protocol requests from `input` until EOF.
///
/// Used by worker processes; any error ends the loop and is returned.
pub fn serve_predictor<R: BufRead, W: Write>(
    predictor: &dyn Predictor,
    schema: &[ColumnSchema],
    input: R,
    mut output: W,
) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rows = decode_request(&line, schema)?;
        let scores = predictor.score(&rows)?;
        writeln!(output, "{}", encode_response(&scores))?;
        output.flush()?;
    }
    Ok(())
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
    stderr_reader: Option<JoinHandle<()>>,
}

impl Process {
    fn spawn(command: &[String]) -> Result<Self> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                ExplainError::Io(std::io::Error::new(
                    e.kind(),
                    format!("cannot spawn '{}': {e}", command[0]),
                ))
            })?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let mut err_pipe = child.stderr.take().expect("piped");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let stderr_reader = std::thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(k) = err_pipe.read(&mut buf) {
                if k == 0 {
                    break;
                }
                sink.lock().unwrap().push_str(&String::from_utf8_lossy(&buf[..k]));
            }
        });
        Ok(Process {
            child,
            stdin,
            lines,
            stderr,
            stderr_reader: Some(stderr_reader),
        })
    }

    /// Collects the exit status and everything written to stderr.
    fn post_mortem(&mut self) -> String {
        let status = self
            .child
            .wait()
            .map(|s| s.to_string())
            .unwrap_or_else(|e| e.to_string());
        if let Some(h) = self.stderr_reader.take() {
            let _ = h.join();
        }
        let stderr = self.stderr.lock().unwrap();
        format!("process exited ({status}); stderr: {}", stderr.trim_end())
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A predictor backed by a long-lived child process.
///
/// Calls are serialized: one request is in flight at a time. After a timeout
/// or protocol failure the child is discarded and later calls fail.
pub struct ExternalPredictor {
    command: Vec<String>,
    timeout: Duration,
    process: Mutex<Option<Process>>,
}

impl fmt::Debug for ExternalPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalPredictor")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalPredictor {
    pub fn spawn(command: Vec<String>, timeout: Duration) -> Result<Self> {
        if command.is_empty() {
            return Err(ExplainError::param("command", "must name a program"));
        }
        if timeout.is_zero() {
            return Err(ExplainError::param("timeout", "must be positive"));
        }
        let process = Process::spawn(&command)?;
        Ok(ExternalPredictor {
            command,
            timeout,
            process: Mutex::new(Some(process)),
        })
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    fn exchange(&self, process: &mut Process, rows: &Table) -> Result<Vec<f64>> {
        let request = encode_request(rows);
        let sent = writeln!(process.stdin, "{request}").and_then(|_| process.stdin.flush());
        if sent.is_err() {
            return Err(ExplainError::Protocol(process.post_mortem()));
        }
        let line = match process.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(ExplainError::Protocol(format!("reading response: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(ExplainError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(ExplainError::Protocol(process.post_mortem())),
        };
        let response: Response = serde_json::from_str(&line).map_err(|e| {
            let shown: String = line.chars().take(200).collect();
            ExplainError::Protocol(format!("malformed response line ({e}): {shown}"))
        })?;
        if response.predictions.len() != rows.n_rows() {
            return Err(ExplainError::Protocol(format!(
                "expected {} predictions, received {}",
                rows.n_rows(),
                response.predictions.len()
            )));
        }
        Ok(response.predictions)
    }
}

impl Predictor for ExternalPredictor {
    fn score(&self, rows: &Table) -> Result<Vec<f64>> {
        let mut guard = self.process.lock().unwrap_or_else(|p| p.into_inner());
        let process = guard
            .as_mut()
            .ok_or_else(|| ExplainError::Protocol("external process is no longer running".into()))?;
        let out = self.exchange(process, rows);
        if out.is_err() {
            if let Some(mut p) = guard.take() {
                p.kill();
            }
        }
        out
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        if let Some(mut p) = self.process.get_mut().unwrap_or_else(|p| p.into_inner()).take() {
            p.kill();
        }
    }
}
