//! The `subsel-oracle` protocol (version 1): newline-delimited JSON requests
//! and responses over a child process's standard streams.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::oracle::{Capabilities, RewardOracle, Split};
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Hello,
    EvalLoss,
    EvalAcc,
    PointLosses,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_ids: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_ids: Option<Vec<usize>>,
}

impl Request {
    pub fn new(id: u64, op: Op) -> Self {
        Self {
            id,
            op,
            split: None,
            train_ids: None,
            val_ids: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub losses: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn with_id(id: u64) -> Self {
        Self {
            id,
            ..Self::default()
        }
    }
}

/// Answers one request from an in-process oracle.
pub fn handle(oracle: &dyn RewardOracle, req: &Request) -> Response {
    let mut resp = Response::with_id(req.id);
    let empty = Vec::new();
    let ids = req.train_ids.as_ref().unwrap_or(&empty);
    let outcome = match req.op {
        Op::Hello => {
            resp.protocol = Some(PROTOCOL_VERSION);
            resp.capabilities = Some(oracle.capabilities().names().into_iter().map(String::from).collect());
            Ok(())
        }
        Op::EvalLoss => oracle
            .eval_loss(req.split.unwrap_or(Split::Val), ids)
            .map(|l| resp.loss = Some(l)),
        Op::EvalAcc => oracle.eval_acc(ids).map(|a| resp.acc = Some(a)),
        Op::PointLosses => oracle.point_losses().map(|l| resp.losses = Some(l)),
        Op::Shutdown => {
            resp.ok = Some(true);
            Ok(())
        }
    };
    if let Err(e) = outcome {
        resp = Response::with_id(req.id);
        resp.error = Some(e.to_string());
    }
    resp
}

/// Serves the protocol until `shutdown` or end of input.
pub fn serve<R: BufRead, W: Write>(oracle: &dyn RewardOracle, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                let resp = handle(oracle, &req);
                serde_json::to_writer(&mut output, &resp)?;
                output.write_all(b"\n")?;
                output.flush()?;
                if req.op == Op::Shutdown {
                    return Ok(());
                }
                continue;
            }
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_u64()))
                    .unwrap_or(0);
                let mut r = Response::with_id(id);
                r.error = Some(format!("malformed request: {e}"));
                r
            }
        };
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

struct Channel {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// Oracle backed by a child process speaking the protocol. One request is in
/// flight at a time.
pub struct ExternalOracle {
    inner: Mutex<Channel>,
    stderr_tail: Arc<Mutex<Vec<String>>>,
    capabilities: Capabilities,
    timeout: Duration,
}

impl ExternalOracle {
    /// Launches `command` through `sh -c` and performs the `hello` handshake.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::OracleFailure(format!("cannot launch `{command}`: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let stderr_tail = Arc::new(Mutex::new(Vec::new()));
        let tail = Arc::clone(&stderr_tail);
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(|l| l.ok()) {
                let mut t = tail.lock().expect("stderr lock");
                t.push(line);
                if t.len() > 20 {
                    t.remove(0);
                }
            }
        });
        let mut oracle = Self {
            inner: Mutex::new(Channel {
                stdin: child.stdin.take(),
                child,
                lines: rx,
                next_id: 1,
            }),
            stderr_tail,
            capabilities: Capabilities::default(),
            timeout,
        };
        let hello = oracle.call(Request::new(0, Op::Hello))?;
        if hello.protocol != Some(PROTOCOL_VERSION) {
            return Err(Error::OracleFailure(format!(
                "unsupported protocol version {:?}",
                hello.protocol
            )));
        }
        oracle.capabilities =
            Capabilities::from_names(hello.capabilities.iter().flatten().map(String::as_str));
        Ok(oracle)
    }

    fn diagnostic(&self, ch: &mut Channel, what: &str) -> Error {
        let status = match ch.child.try_wait() {
            Ok(Some(s)) => format!("; child exited with {s}"),
            _ => String::new(),
        };
        let tail = self.stderr_tail.lock().expect("stderr lock").join("\n");
        let tail = if tail.is_empty() {
            String::new()
        } else {
            format!("; stderr: {tail}")
        };
        Error::OracleFailure(format!("{what}{status}{tail}"))
    }

    /// Sends one request and waits for the response with the same id. The
    /// request id is assigned here.
    pub fn call(&self, mut req: Request) -> Result<Response> {
        let mut ch = self.inner.lock().expect("oracle lock");
        let id = ch.next_id;
        ch.next_id += 1;
        req.id = id;
        let mut line = serde_json::to_string(&req)?;
        line.push('\n');
        let write = match ch.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::Error::other("stdin closed")),
        };
        if let Err(e) = write {
            thread::sleep(Duration::from_millis(20));
            return Err(self.diagnostic(&mut ch, &format!("write to oracle failed: {e}")));
        }
        loop {
            let raw = match ch.lines.recv_timeout(self.timeout) {
                Ok(Ok(raw)) => raw,
                Ok(Err(e)) => return Err(self.diagnostic(&mut ch, &format!("read failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(self.diagnostic(&mut ch, &format!("request {id} timed out after {:?}", self.timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    thread::sleep(Duration::from_millis(20));
                    return Err(self.diagnostic(&mut ch, "oracle closed its output"));
                }
            };
            let resp: Response = serde_json::from_str(&raw).map_err(|e| {
                Error::OracleFailure(format!("malformed response `{raw}`: {e}"))
            })?;
            // late answers to timed-out requests are discarded
            if resp.id < id {
                continue;
            }
            if resp.id != id {
                return Err(Error::OracleFailure(format!(
                    "response id {} does not match request {id}",
                    resp.id
                )));
            }
            if let Some(err) = resp.error {
                return Err(Error::OracleFailure(format!("oracle error for request {id}: {err}")));
            }
            return Ok(resp);
        }
    }

    /// Sends `shutdown` and waits for the child to exit.
    pub fn shutdown(&self) -> Result<()> {
        let resp = self.call(Request::new(0, Op::Shutdown))?;
        let mut ch = self.inner.lock().expect("oracle lock");
        ch.stdin.take();
        let status = ch.child.wait()?;
        if resp.ok != Some(true) || !status.success() {
            return Err(Error::OracleFailure(format!("unclean shutdown ({status})")));
        }
        Ok(())
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        if let Ok(ch) = self.inner.get_mut() {
            if let Ok(None) = ch.child.try_wait() {
                ch.stdin.take();
                let _ = ch.child.kill();
                let _ = ch.child.wait();
            }
        }
    }
}

impl RewardOracle for ExternalOracle {
    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn eval_loss(&self, split: Split, train_ids: &[usize]) -> Result<f64> {
        let mut req = Request::new(0, Op::EvalLoss);
        req.split = Some(split);
        req.train_ids = Some(train_ids.to_vec());
        self.call(req)?
            .loss
            .ok_or_else(|| Error::OracleFailure("eval_loss response lacks `loss`".into()))
    }

    fn eval_acc(&self, train_ids: &[usize]) -> Result<f64> {
        if !self.capabilities.eval_val_acc {
            return Err(Error::Capability("eval_acc"));
        }
        let mut req = Request::new(0, Op::EvalAcc);
        req.split = Some(Split::Val);
        req.train_ids = Some(train_ids.to_vec());
        self.call(req)?
            .acc
            .ok_or_else(|| Error::OracleFailure("eval_acc response lacks `acc`".into()))
    }

    fn point_losses(&self) -> Result<Vec<f64>> {
        if !self.capabilities.point_losses {
            return Err(Error::Capability("point_losses"));
        }
        self.call(Request::new(0, Op::PointLosses))?
            .losses
            .ok_or_else(|| Error::OracleFailure("point_losses response lacks `losses`".into()))
    }
}
