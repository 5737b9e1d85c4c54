//! External objective: a child process per evaluation.
//!
//! The process receives `{"task": {...}, "config": {...}}` as one JSON line
//! on stdin and must print the measured value as the first token on stdout.
//! A nonzero exit, unparsable output or a timeout is an evaluation failure.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::spaces::Configuration;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandObjective {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Whether repeated runs give identical values.
    #[serde(default)]
    pub deterministic: bool,
    /// Whether values are strictly positive (runtimes).
    #[serde(default = "yes")]
    pub positive: bool,
}

fn default_timeout() -> f64 {
    600.0
}

fn yes() -> bool {
    true
}

impl CommandObjective {
    pub fn new(program: &str, args: &[&str]) -> Self {
        CommandObjective {
            program: program.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
            timeout_secs: default_timeout(),
            deterministic: false,
            positive: true,
        }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Objective {
            objective: self.program.clone(),
            message: message.into(),
        }
    }
}

impl Objective for CommandObjective {
    fn id(&self) -> &str {
        &self.program
    }

    fn evaluate(&self, task: &Configuration, x: &Configuration, _rng: &mut PortableRng) -> Result<f64> {
        let input = serde_json::json!({ "task": task, "config": x }).to_string();
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| self.fail(format!("spawn failed: {e}")))?;
        if let Some(mut stdin) = child.stdin.take() {
            // a child that exits without reading stdin is not an error by itself
            let _ = stdin.write_all(input.as_bytes()).and_then(|_| stdin.write_all(b"\n"));
        }
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_secs.max(0.0));
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(self.fail(format!("timed out after {} s", self.timeout_secs)));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let out = reader
            .join()
            .map_err(|_| self.fail("stdout reader panicked"))?
            .map_err(|e| self.fail(format!("reading stdout: {e}")))?;
        if !status.success() {
            return Err(self.fail(format!("exited with {status}")));
        }
        let token = out.split_whitespace().next().ok_or_else(|| self.fail("no output"))?;
        let v: f64 = token.parse().map_err(|_| self.fail(format!("output `{token}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.fail(format!("non-finite value {v}")));
        }
        Ok(v)
    }

    fn deterministic(&self) -> bool {
        self.deterministic
    }

    fn positive(&self) -> bool {
        self.positive
    }

    fn reentrant(&self) -> bool {
        false
    }
}
