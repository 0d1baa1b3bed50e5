//! Host side of the foreign-code runner protocol.
//!
//! The runner is any command that reads one JSON object
//! `{"code", "timeout_s", "mem_bytes"}` on stdin and answers with one JSON
//! object `{"status", "output"?, "stderr"?}` on stdout, where status is one
//! of `ok`, `exception`, `timeout`, `no-output`, `bad-type`. A fresh process
//! is spawned per request; the host enforces its own wall-clock limit as
//! well, killing runners that overstay.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Exception,
    Timeout,
    NoOutput,
    BadType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<String>,
}

#[derive(Serialize)]
struct RunRequest<'a> {
    code: &'a str,
    timeout_s: f64,
    mem_bytes: u64,
}

/// Outcome of asking a runner to execute code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Finished(RunResult),
    /// The runner could not be started or broke the protocol.
    Unavailable(String),
}

pub trait PythonRunner: Sync {
    fn run(&self, code: &str, timeout: Duration) -> RunOutcome;
}

/// Counting semaphore capping concurrent runner processes.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Spawns `command` once per request.
pub struct ProcessRunner {
    command: Vec<String>,
    mem_bytes: u64,
    /// Extra wall-clock allowance beyond the guest timeout before the host kills the runner.
    grace: Duration,
    slots: Slots,
}

pub const DEFAULT_MEM_BYTES: u64 = 512 << 20;

impl ProcessRunner {
    /// `command[0]` is the program, the rest its arguments.
    pub fn new(command: Vec<String>, concurrency: usize) -> Self {
        assert!(!command.is_empty(), "runner command must not be empty");
        ProcessRunner {
            command,
            mem_bytes: DEFAULT_MEM_BYTES,
            grace: Duration::from_secs(1),
            slots: Slots {
                free: Mutex::new(concurrency.max(1)),
                cv: Condvar::new(),
            },
        }
    }

    pub fn with_mem_bytes(mut self, mem_bytes: u64) -> Self {
        self.mem_bytes = mem_bytes;
        self
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }
}

impl PythonRunner for ProcessRunner {
    fn run(&self, code: &str, timeout: Duration) -> RunOutcome {
        let _slot = self.slots.acquire();
        let mut command = Command::new(&self.command[0]);
        command
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        // Own process group, so a timeout also takes down anything the runner spawned.
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut command, 0);
        let mut child = match command.spawn() {
            Ok(c) => c,
            Err(e) => {
                return RunOutcome::Unavailable(format!(
                    "cannot start runner `{}`: {e}",
                    self.command[0]
                ))
            }
        };
        let request = RunRequest {
            code,
            timeout_s: timeout.as_secs_f64(),
            mem_bytes: self.mem_bytes,
        };
        let mut line = serde_json::to_vec(&request).expect("plain data");
        line.push(b'\n');
        if let Some(mut stdin) = child.stdin.take() {
            // A runner that exits without reading is reported through its reply.
            let _ = stdin.write_all(&line);
        }
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout.read_to_string(&mut buf);
            buf
        });
        match child.wait_timeout(timeout + self.grace) {
            Ok(Some(_)) => {}
            Ok(None) => {
                kill_tree(&mut child);
                // Not joining the reader: a surviving descendant may still hold the pipe.
                drop(reader);
                return RunOutcome::Finished(RunResult {
                    status: RunStatus::Timeout,
                    output: None,
                    stderr: Some("killed by host after the time limit".into()),
                });
            }
            Err(e) => return RunOutcome::Unavailable(format!("waiting for runner: {e}")),
        }
        let text = reader.join().unwrap_or_default();
        let Some(reply) = text.lines().find(|l| !l.trim().is_empty()) else {
            return RunOutcome::Unavailable("runner produced no reply".into());
        };
        match serde_json::from_str::<RunResult>(reply) {
            Ok(r) => RunOutcome::Finished(r),
            Err(e) => RunOutcome::Unavailable(format!("malformed runner reply: {e}")),
        }
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
        // The child leads its own group (see `process_group(0)`), so this
        // reaches its descendants and nothing else.
        if pgid > 1 {
            unsafe {
                libc::kill(-pgid, libc::SIGKILL);
            }
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Runner used when none is configured: every request is unavailable.
pub struct NoRunner;

impl PythonRunner for NoRunner {
    fn run(&self, _code: &str, _timeout: Duration) -> RunOutcome {
        RunOutcome::Unavailable("no foreign-code runner configured".into())
    }
}
