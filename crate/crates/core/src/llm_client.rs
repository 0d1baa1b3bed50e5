//! Collecting candidate programs from chat-completion endpoints.
//!
//! Requests use the OpenAI-compatible `/chat/completions` wire format. The
//! network sits behind [`Transport`], so everything above it is testable
//! without a server. The API key is read from an environment variable at
//! request time and never leaves the `Authorization` header.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::Chunk;
use crate::harness::{Candidate, Payload};

pub const SEQ_PLACEHOLDER: &str = "#SEQ#";

pub const SYSTEM_PROMPT: &str =
    "Generate a Python program that, when executed, reproduces a specified input sequence. \
The program should be as concise as possible.";

const INSTRUCTIONS_HEAD: &str = "Instructions:
- Write a multi-line Python program. Each line should either assign a new variable or define a new function.
- These variables and functions can be reused throughout the program.
- Identify and utilize patterns in the input sequence to minimize the length of the program.
- Assign the final output of the sequence to the variable output. This output will be used to verify the correctness of the program.
- Do not include print statements or return statements.
- Ensure that the generated code is executable in a Python interpreter without modifications.
- Do not include the python code block syntax in your response.
- End your response with ###.
";

const INSTRUCTIONS_COT_EXTRA: &str = "- Before the program, you can use the Thought field to generate how you think the task should be solved. \
After the thought, generate \"The Python program that generates the sequence is:\", followed by the program.
";

const INSTRUCTIONS_TAIL: &str = "
### Input Sequence:
#SEQ#

### Expected Output:
The Python program that generates the sequence is:";

/// The line both templates end with; CoT answers repeat it before the code.
pub const ANSWER_MARKER: &str = "The Python program that generates the sequence is:";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    #[default]
    Plain,
    Cot,
}

impl PromptVariant {
    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::Plain => "plain",
            PromptVariant::Cot => "cot",
        }
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(PromptVariant::Plain),
            "cot" => Ok(PromptVariant::Cot),
            _ => Err(format!(
                "unknown prompt variant `{s}` (expected plain or cot)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    /// User message with [`SEQ_PLACEHOLDER`] where the sequence goes.
    pub instructions: String,
    pub variant: PromptVariant,
}

impl PromptTemplate {
    pub fn new(variant: PromptVariant) -> Self {
        let extra = match variant {
            PromptVariant::Plain => "",
            PromptVariant::Cot => INSTRUCTIONS_COT_EXTRA,
        };
        PromptTemplate {
            system: SYSTEM_PROMPT.to_string(),
            instructions: format!("{INSTRUCTIONS_HEAD}{extra}{INSTRUCTIONS_TAIL}"),
            variant,
        }
    }

    pub fn render(&self, data: &[u8]) -> Prompt {
        Prompt {
            system: self.system.clone(),
            user: self
                .instructions
                .replace(SEQ_PLACEHOLDER, &format_sequence(data)),
        }
    }
}

/// A rendered system/user message pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// `[v1, v2, ...]` in decimal.
pub fn format_sequence(data: &[u8]) -> String {
    let parts: Vec<String> = data.iter().map(u8::to_string).collect();
    format!("[{}]", parts.join(", "))
}

pub fn render_prompt(chunk: &Chunk, variant: PromptVariant) -> Prompt {
    PromptTemplate::new(variant).render(&chunk.data)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseFailure {
    #[error("response contains no code")]
    NoCode,
}

/// Extract program text from a model response.
///
/// Keeps what follows the last answer marker (if any), cuts at the first
/// `###`, and unwraps a fenced block when the model used one anyway.
/// Applying it to its own output is a no-op.
pub fn parse_response(text: &str) -> Result<String, ParseFailure> {
    let mut body = match text.rfind(ANSWER_MARKER) {
        Some(i) => &text[i + ANSWER_MARKER.len()..],
        None => text,
    };
    if let Some(i) = body.find("###") {
        body = &body[..i];
    }
    let code = unfence(body);
    let code = code.trim();
    if code.is_empty() {
        Err(ParseFailure::NoCode)
    } else {
        Ok(code.to_string())
    }
}

fn unfence(text: &str) -> String {
    let is_fence = |l: &str| l.trim_start().starts_with("```");
    let lines: Vec<&str> = text.lines().collect();
    let Some(open) = lines.iter().position(|l| is_fence(l)) else {
        return text.to_string();
    };
    let rest = &lines[open + 1..];
    let close = rest.iter().position(|l| is_fence(l)).unwrap_or(rest.len());
    rest[..close].join("\n")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): doubling from the base, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(32))
            .min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key. Unset means no auth.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_s: f64,
    pub retry: RetryPolicy,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: String::new(),
            api_key_env: "KCOMP_API_KEY".into(),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_s: 60.0,
            retry: RetryPolicy::default(),
        }
    }
}

impl EndpointConfig {
    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s.max(0.001))
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
    }
}

/// Status and body of an HTTP exchange.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

/// Failure to complete an exchange at all (connection, timeout, ...).
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait Transport: Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
    ) -> Result<HttpReply, TransportError>;
}

/// Blocking HTTP(S) transport.
#[cfg(feature = "http")]
pub struct UreqTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        UreqTransport {
            agent: config.into(),
        }
    }
}

#[cfg(feature = "http")]
impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
    ) -> Result<HttpReply, TransportError> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpReply {
            status,
            body,
            retry_after,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("endpoint: {0}")]
    Endpoint(String),
}

fn redact(msg: String, key: Option<&str>) -> String {
    match key {
        Some(k) if msg.contains(k) => msg.replace(k, "<redacted>"),
        _ => msg,
    }
}

/// One chat completion with retries on 429, 5xx and transport errors.
/// Returns the message content and the number of attempts made.
pub fn complete(
    transport: &dyn Transport,
    endpoint: &EndpointConfig,
    prompt: &Prompt,
) -> Result<(String, u32), LlmError> {
    let body = json!({
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
    })
    .to_string();
    let key = endpoint.api_key();
    let url = endpoint.url();
    let mut attempt = 0u32;
    loop {
        let (retryable, hint, msg) = match transport.post_json(&url, key.as_deref(), &body) {
            Ok(r) if (200..300).contains(&r.status) => {
                return extract_content(&r.body).map(|c| (c, attempt + 1));
            }
            Ok(r) => {
                let retryable = r.status == 429 || r.status >= 500;
                (
                    retryable,
                    r.retry_after,
                    format!("HTTP {}: {}", r.status, truncate(&r.body, 200)),
                )
            }
            Err(e) => (true, None, e.0),
        };
        if !retryable || attempt >= endpoint.retry.max_retries {
            return Err(LlmError::Endpoint(redact(msg, key.as_deref())));
        }
        let delay = hint
            .unwrap_or_else(|| endpoint.retry.delay(attempt))
            .min(Duration::from_millis(endpoint.retry.max_delay_ms));
        log::debug!("retrying after {delay:?}: {}", redact(msg, key.as_deref()));
        std::thread::sleep(delay);
        attempt += 1;
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn extract_content(body: &str) -> Result<String, LlmError> {
    let v: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| LlmError::Endpoint(format!("malformed response: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| LlmError::Endpoint("response has no choices[0].message.content".into()))
}

/// Turn a response into a candidate for `chunk`.
pub fn to_candidate(chunk: &Chunk, response: &str, provenance: serde_json::Value) -> Candidate {
    let payload = match parse_response(response) {
        Ok(code) => Payload::Python { code },
        Err(e) => Payload::Unparsed {
            reason: e.to_string(),
        },
    };
    Candidate {
        origin: chunk.origin.clone(),
        offset: chunk.offset,
        payload,
        provenance,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FetchSummary {
    /// Chunks already present in the output file.
    pub skipped: usize,
    pub written: usize,
    /// Chunks whose request failed: (origin, offset, message). They are not
    /// written, so a later run retries them.
    pub failed: Vec<(String, usize, String)>,
}

/// Keys already answered in an existing candidate file. Unreadable lines
/// (e.g. one cut short by a kill) are ignored.
fn answered_keys(path: &Path) -> Result<HashSet<(String, usize)>, LlmError> {
    let mut keys = HashSet::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(keys),
        Err(e) => return Err(e.into()),
    };
    for line in BufReader::new(file).lines() {
        let line = line?;
        match serde_json::from_str::<Candidate>(&line) {
            Ok(c) => {
                keys.insert((c.origin, c.offset));
            }
            Err(_) if line.trim().is_empty() => {}
            Err(e) => log::warn!("ignoring unreadable line in {}: {e}", path.display()),
        }
    }
    Ok(keys)
}

/// Open for append, first terminating a partial last line if there is one.
fn open_append(path: &Path) -> Result<File, LlmError> {
    let mut f = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)?;
    let len = f.metadata()?.len();
    if len > 0 {
        let mut last = [0u8];
        f.seek(SeekFrom::Start(len - 1))?;
        f.read_exact(&mut last)?;
        if last[0] != b'\n' {
            f.write_all(b"\n")?;
        }
    }
    Ok(f)
}

/// Request a candidate for every chunk not yet in `out`, appending each
/// answer as one JSON line as soon as it arrives.
///
/// Up to `concurrency` requests are in flight; only the calling thread
/// writes. Endpoint failures are collected in the summary and never abort
/// the batch.
pub fn fetch_candidates(
    chunks: &[Chunk],
    endpoint: &EndpointConfig,
    variant: PromptVariant,
    concurrency: usize,
    transport: &dyn Transport,
    out: &Path,
) -> Result<FetchSummary, LlmError> {
    let done = answered_keys(out)?;
    let todo: Vec<&Chunk> = chunks
        .iter()
        .filter(|c| !done.contains(&(c.origin.clone(), c.offset)))
        .collect();
    let mut summary = FetchSummary {
        skipped: chunks.len() - todo.len(),
        ..Default::default()
    };
    if todo.is_empty() {
        return Ok(summary);
    }
    let mut file = open_append(out)?;
    let template = PromptTemplate::new(variant);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<(String, u32), LlmError>)>();
    std::thread::scope(|s| -> Result<(), LlmError> {
        for _ in 0..concurrency.clamp(1, todo.len()) {
            let tx = tx.clone();
            let (next, todo, template) = (&next, &todo, &template);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(chunk) = todo.get(i) else { break };
                let result = complete(transport, endpoint, &template.render(&chunk.data));
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            let chunk = todo[i];
            match result {
                Ok((text, attempts)) => {
                    let provenance = json!({
                        "model": endpoint.model,
                        "variant": variant.name(),
                        "temperature": endpoint.temperature,
                        "max_tokens": endpoint.max_tokens,
                        "attempts": attempts,
                    });
                    let cand = to_candidate(chunk, &text, provenance);
                    let mut line = serde_json::to_vec(&cand).map_err(std::io::Error::from)?;
                    line.push(b'\n');
                    file.write_all(&line)?;
                    file.flush()?;
                    summary.written += 1;
                }
                Err(e) => {
                    log::warn!("{}@{}: {e}", chunk.origin, chunk.offset);
                    summary
                        .failed
                        .push((chunk.origin.clone(), chunk.offset, e.to_string()));
                }
            }
        }
        Ok(())
    })?;
    Ok(summary)
}
