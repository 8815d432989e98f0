//! External models driven over a line-delimited JSON pipe.
//!
//! The adapter command is started with `sh -c`. On startup it writes one
//! handshake line, `{"arity": n, "transfer": "identity"|"logistic",
//! "supports_g": bool}`. Each request is one line,
//! `{"id": k, "op": "predict"|"g", "X": [[...], ...]}`, answered by
//! `{"id": k, "values": [...]}` with one value per row in order. Requests
//! are serialized: one in flight per adapter process.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

use super::{Model, Transfer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub arity: usize,
    pub transfer: Transfer,
    #[serde(default)]
    pub supports_g: bool,
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    op: &'a str,
    #[serde(rename = "X")]
    x: Vec<&'a [f64]>,
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    values: Vec<Option<f64>>,
}

struct Pipe {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

pub struct ExternalModel {
    command: String,
    handshake: Handshake,
    pipe: Mutex<Pipe>,
}

fn protocol(request: Option<u64>, message: impl Into<String>) -> Error {
    Error::Protocol {
        request,
        message: message.into(),
    }
}

impl Pipe {
    fn read_line(&mut self, request: Option<u64>) -> Result<String> {
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| protocol(request, format!("reading adapter output: {e}")))?;
        if n == 0 {
            let status = self
                .child
                .wait()
                .map(|s| s.to_string())
                .unwrap_or_else(|e| format!("unknown status ({e})"));
            return Err(protocol(request, format!("adapter closed its output ({status})")));
        }
        Ok(line)
    }
}

impl ExternalModel {
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut pipe = Pipe {
            child,
            stdin: Some(stdin),
            stdout,
            next_id: 0,
        };
        let line = pipe.read_line(None)?;
        let handshake: Handshake = serde_json::from_str(line.trim())
            .map_err(|e| protocol(None, format!("malformed handshake `{}`: {e}", line.trim())))?;
        log::info!(
            "adapter `{command}` ready: arity {}, {:?} transfer, g {}",
            handshake.arity,
            handshake.transfer,
            if handshake.supports_g { "available" } else { "unavailable" }
        );
        Ok(ExternalModel {
            command: command.to_string(),
            handshake,
            pipe: Mutex::new(pipe),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    fn request(&self, op: &str, x: &Matrix) -> Result<Vec<f64>> {
        let mut pipe = self
            .pipe
            .lock()
            .map_err(|_| Error::Internal("adapter pipe poisoned".into()))?;
        let id = pipe.next_id;
        pipe.next_id += 1;

        let req = Request {
            id,
            op,
            x: x.row_iter().collect(),
        };
        let mut line = serde_json::to_vec(&req)?;
        line.push(b'\n');
        let stdin = pipe
            .stdin
            .as_mut()
            .ok_or_else(|| protocol(Some(id), "adapter input already closed"))?;
        stdin
            .write_all(&line)
            .and_then(|_| stdin.flush())
            .map_err(|e| protocol(Some(id), format!("writing request: {e}")))?;

        let reply = pipe.read_line(Some(id))?;
        let resp: Response = serde_json::from_str(reply.trim())
            .map_err(|e| protocol(Some(id), format!("malformed response: {e}")))?;
        if resp.id != id {
            return Err(protocol(Some(id), format!("response carries id {}", resp.id)));
        }
        if resp.values.len() != x.rows() {
            return Err(protocol(
                Some(id),
                format!("{} values for {} rows", resp.values.len(), x.rows()),
            ));
        }
        resp.values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.filter(|v| v.is_finite())
                    .ok_or_else(|| protocol(Some(id), format!("value {i} is not a finite number")))
            })
            .collect()
    }
}

impl Model for ExternalModel {
    fn arity(&self) -> usize {
        self.handshake.arity
    }

    fn transfer(&self) -> Transfer {
        self.handshake.transfer
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        self.request("predict", x)
    }

    fn supports_pre_transfer(&self) -> bool {
        self.handshake.supports_g || self.handshake.transfer == Transfer::Identity
    }

    fn pre_transfer(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        if self.handshake.supports_g {
            self.request("g", x)
        } else if self.handshake.transfer == Transfer::Identity {
            self.request("predict", x)
        } else {
            Err(Error::Capability(format!(
                "adapter `{}` has a logistic transfer and does not serve g",
                self.command
            )))
        }
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            // closing stdin asks the adapter to exit
            pipe.stdin.take();
            let deadline = Instant::now() + Duration::from_millis(500);
            loop {
                match pipe.child.try_wait() {
                    Ok(Some(_)) => return,
                    Ok(None) if Instant::now() < deadline => {
                        std::thread::sleep(Duration::from_millis(10))
                    }
                    _ => break,
                }
            }
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}
