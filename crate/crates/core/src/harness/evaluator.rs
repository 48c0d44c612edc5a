//! Model evaluators: the in-process synthetic suite and external programs
//! speaking newline-delimited JSON over stdin/stdout.
//!
//! Request: `{"model": 2, "input": [0.1, -0.3]}` (1-based model id).
//! Reply: `{"values": [1.5, null]}` with one entry per output (null where the
//! model has no value), or `{"error": "message"}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::suite::SyntheticSuite;
use crate::error::{Error, Result};

pub trait Evaluator: Send + Sync {
    fn input_dim(&self) -> usize;
    fn num_outputs(&self) -> usize;
    /// Per-output values of `model` (0-based) at `input`.
    fn evaluate(&self, model: usize, input: &[f64]) -> std::result::Result<Vec<Option<f64>>, String>;
}

pub struct SyntheticEvaluator {
    suite: SyntheticSuite,
    /// `produces[i][s]`
    produces: Option<Vec<Vec<bool>>>,
}

impl SyntheticEvaluator {
    pub fn new(suite: SyntheticSuite) -> Self {
        Self { suite, produces: None }
    }

    /// Only report values for the (model, output) pairs in `produces`.
    pub fn with_availability(mut self, produces: Vec<Vec<bool>>) -> Self {
        self.produces = Some(produces);
        self
    }

    pub fn suite(&self) -> &SyntheticSuite {
        &self.suite
    }
}

impl Evaluator for SyntheticEvaluator {
    fn input_dim(&self) -> usize {
        self.suite.input_dim()
    }

    fn num_outputs(&self) -> usize {
        self.suite.num_outputs()
    }

    fn evaluate(&self, model: usize, input: &[f64]) -> std::result::Result<Vec<Option<f64>>, String> {
        if model >= self.suite.num_models() {
            return Err(format!("unknown model {}", model + 1));
        }
        if input.len() != self.input_dim() {
            return Err(format!("input has length {}, expected {}", input.len(), self.input_dim()));
        }
        Ok((0..self.suite.num_outputs())
            .map(|s| {
                let on = self.produces.as_ref().is_none_or(|p| p[model][s]);
                on.then(|| self.suite.value(s, model, input))
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub model: usize,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply {
    Values(Vec<Option<f64>>),
    Error(String),
}

pub fn parse_request(line: &str) -> Result<Request> {
    let req: Request = serde_json::from_str(line.trim()).map_err(|e| Error::Protocol(format!("bad request: {e}")))?;
    if req.model == 0 {
        return Err(Error::Protocol("model ids are 1-based".into()));
    }
    Ok(req)
}

/// Parses one reply line into per-output values.
pub fn parse_reply(line: &str, num_outputs: usize) -> Result<std::result::Result<Vec<Option<f64>>, String>> {
    let reply: Reply = serde_json::from_str(line.trim()).map_err(|e| Error::Protocol(format!("bad reply: {e}")))?;
    match reply {
        Reply::Error(msg) => Ok(Err(msg)),
        Reply::Values(v) => {
            if v.len() != num_outputs {
                return Err(Error::Protocol(format!(
                    "reply has {} values, expected {num_outputs}",
                    v.len()
                )));
            }
            Ok(Ok(v))
        }
    }
}

fn reply_line(reply: &Reply) -> String {
    serde_json::to_string(reply).expect("reply serializes")
}

/// Answers requests from `input` until EOF. Malformed requests get an error
/// reply rather than ending the session.
pub fn serve(evaluator: &dyn Evaluator, input: impl BufRead, mut output: impl Write) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match parse_request(&line) {
            Ok(req) => match evaluator.evaluate(req.model - 1, &req.input) {
                Ok(v) => Reply::Values(v),
                Err(e) => Reply::Error(e),
            },
            Err(e) => Reply::Error(e.to_string()),
        };
        writeln!(output, "{}", reply_line(&reply))?;
        output.flush()?;
    }
    Ok(())
}

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// External evaluator process. Requests are serialized through one pipe.
pub struct CommandEvaluator {
    child: Mutex<Child>,
    pipe: Mutex<Option<Pipe>>,
    input_dim: usize,
    num_outputs: usize,
}

impl CommandEvaluator {
    pub fn spawn(program: &str, args: &[String], input_dim: usize, num_outputs: usize) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot start evaluator `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child: Mutex::new(child),
            pipe: Mutex::new(Some(Pipe { stdin, stdout })),
            input_dim,
            num_outputs,
        })
    }

    fn round_trip(&self, model: usize, input: &[f64]) -> Result<std::result::Result<Vec<Option<f64>>, String>> {
        let req = serde_json::to_string(&Request {
            model: model + 1,
            input: input.to_vec(),
        })?;
        let mut guard = self.pipe.lock().unwrap_or_else(|e| e.into_inner());
        let pipe = guard.as_mut().ok_or_else(|| Error::Protocol("evaluator is closed".into()))?;
        writeln!(pipe.stdin, "{req}")?;
        pipe.stdin.flush()?;
        let mut line = String::new();
        if pipe.stdout.read_line(&mut line)? == 0 {
            return Err(Error::Protocol("evaluator closed its output".into()));
        }
        parse_reply(&line, self.num_outputs)
    }
}

impl Evaluator for CommandEvaluator {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    fn evaluate(&self, model: usize, input: &[f64]) -> std::result::Result<Vec<Option<f64>>, String> {
        self.round_trip(model, input).map_err(|e| e.to_string())?
    }
}

impl Drop for CommandEvaluator {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved evaluator exit on EOF
        drop(self.pipe.get_mut().unwrap_or_else(|e| e.into_inner()).take());
        let child = self.child.get_mut().unwrap_or_else(|e| e.into_inner());
        for _ in 0..100 {
            if let Ok(Some(_)) = child.try_wait() {
                return;
            }
            std::thread::sleep(std::time::Duration::from_millis(10));
        }
        let _ = child.kill();
        let _ = child.wait();
    }
}
