//! Subprocess predictor speaking line-delimited JSON over stdio.
//!
//! Request:  `{"id": k, "instances": [[...], ...]}`
//! Response: `{"id": k, "probabilities": [...]}`
//!
//! One request is in flight at a time. A timeout or an id mismatch leaves the
//! stream out of sync, so the child is killed and later calls fail fast.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PredictError, Predictor};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    instances: &'a [Vec<f64>],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    probabilities: Vec<f64>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    broken: Option<String>,
}

impl Channel {
    fn poison(&mut self, why: String) {
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.broken = Some(why);
    }
}

pub struct ExternalPredictor {
    command: Vec<String>,
    timeout: Duration,
    width: Option<usize>,
    channel: Mutex<Channel>,
}

impl ExternalPredictor {
    /// Spawns `program args..`. The child's stderr is inherited.
    pub fn spawn<S: AsRef<str>>(command: &[S], timeout: Duration) -> Result<Self, PredictError> {
        let command: Vec<String> = command.iter().map(|s| s.as_ref().to_string()).collect();
        let (program, args) = command
            .split_first()
            .ok_or_else(|| PredictError::Process("empty predictor command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PredictError::Process(format!("cannot start {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("predictor-stdout".into())
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            })
            .map_err(|e| PredictError::Process(e.to_string()))?;
        Ok(Self {
            command,
            timeout,
            width: None,
            channel: Mutex::new(Channel {
                child,
                stdin,
                lines: rx,
                next_id: 0,
                broken: None,
            }),
        })
    }

    /// Declares the expected input width so batches are checked before they
    /// are sent.
    pub fn with_width(mut self, width: usize) -> Self {
        self.width = Some(width);
        self
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn call(&self, batch: &[Vec<f64>]) -> Result<Vec<f64>, PredictError> {
        let mut channel = self.channel.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(why) = &channel.broken {
            return Err(PredictError::Process(format!("predictor unusable: {why}")));
        }
        let id = channel.next_id;
        channel.next_id += 1;

        let mut line = serde_json::to_string(&Request {
            id,
            instances: batch,
        })
        .map_err(|e| PredictError::Process(e.to_string()))?;
        line.push('\n');
        if let Err(e) = channel
            .stdin
            .write_all(line.as_bytes())
            .and_then(|()| channel.stdin.flush())
        {
            let msg = format!("write failed: {e}");
            channel.poison(msg.clone());
            return Err(PredictError::Process(msg));
        }

        let reply = match channel.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => {
                let msg = format!("read failed: {e}");
                channel.poison(msg.clone());
                return Err(PredictError::Process(msg));
            }
            Err(RecvTimeoutError::Timeout) => {
                let ms = self.timeout.as_millis() as u64;
                channel.poison(format!("timed out after {ms} ms"));
                return Err(PredictError::Timeout(ms));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let msg = "process closed its output".to_string();
                channel.poison(msg.clone());
                return Err(PredictError::Process(msg));
            }
        };

        let response: Response = serde_json::from_str(&reply)
            .map_err(|e| PredictError::Malformed(format!("{e}: {}", truncate(&reply))))?;
        if response.id != id {
            channel.poison(format!("expected id {id}, got {}", response.id));
            return Err(PredictError::IdMismatch {
                expected: id,
                found: response.id,
            });
        }
        if response.probabilities.len() != batch.len() {
            return Err(PredictError::LengthMismatch {
                expected: batch.len(),
                found: response.probabilities.len(),
            });
        }
        if let Some((index, &value)) = response
            .probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(PredictError::OutOfRange { index, value });
        }
        Ok(response.probabilities)
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 120;
    if s.len() <= MAX {
        return s.to_string();
    }
    let mut end = MAX;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}

impl Predictor for ExternalPredictor {
    fn predict_proba(&self, batch: &[Vec<f64>]) -> Result<Vec<f64>, PredictError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(expected) = self.width {
            if let Some((index, x)) = batch.iter().enumerate().find(|(_, x)| x.len() != expected) {
                return Err(PredictError::WidthMismatch {
                    index,
                    expected,
                    found: x.len(),
                });
            }
        }
        self.call(batch)
    }

    fn n_features(&self) -> Option<usize> {
        self.width
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        let channel = self.channel.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = channel.child.kill();
        let _ = channel.child.wait();
    }
}
