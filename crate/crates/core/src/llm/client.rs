//! Chat-completion transport, plus offline record/replay doubles.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "EPERM_API_KEY";

pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Hex SHA-256 of the prompt bytes; the key for traces and replay files.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    /// Base URL; requests go to `{url}/chat/completions`.
    pub url: String,
    pub model: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub concurrency: usize,
    pub seed: u64,
    pub trace: Option<PathBuf>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            timeout: Duration::from_secs(60),
            retries: 2,
            backoff: Duration::from_millis(500),
            concurrency: 4,
            seed: 0,
            trace: None,
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    prompt_sha256: &'a str,
    latency_ms: u128,
    status: Option<u16>,
    attempts: u32,
    ok: bool,
}

enum Attempt {
    Done(String),
    Retry(Error),
    Fail(Error),
}

pub struct HttpChatClient {
    config: EndpointConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    gate: Semaphore,
    trace: Option<Mutex<File>>,
}

impl HttpChatClient {
    /// Reads the credential from `EPERM_API_KEY` when set.
    pub fn new(config: EndpointConfig) -> Result<Self> {
        Self::with_api_key(config, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_api_key(config: EndpointConfig, api_key: Option<String>) -> Result<Self> {
        if config.url.trim().is_empty() {
            return Err(Error::Config("endpoint.url is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let trace = match &config.trace {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?,
            )),
            None => None,
        };
        Ok(Self {
            gate: Semaphore::new(config.concurrency),
            config,
            api_key,
            http,
            trace,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.url.trim_end_matches('/'))
    }

    fn attempt(&self, prompt: &str, status: &mut Option<u16>) -> Attempt {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "seed": self.config.seed,
        });
        let mut req = self.http.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(Error::Transport(e.to_string())),
        };
        let code = resp.status().as_u16();
        *status = Some(code);
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(Error::Transport(e.to_string())),
        };
        if code == 429 || (500..600).contains(&code) {
            return Attempt::Retry(Error::Status {
                status: code,
                body: text,
            });
        }
        if !(200..300).contains(&code) {
            return Attempt::Fail(Error::Status {
                status: code,
                body: text,
            });
        }
        match extract_content(&text) {
            Some(reply) => Attempt::Done(reply),
            None => Attempt::Fail(Error::Reply("response has no choices[0].message.content".into())),
        }
    }

    fn log(&self, line: &TraceLine<'_>) {
        let Some(trace) = &self.trace else { return };
        let Ok(mut text) = serde_json::to_string(line) else {
            return;
        };
        text.push('\n');
        let mut file = trace.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = file.write_all(text.as_bytes()) {
            log::warn!("could not write trace line: {e}");
        }
    }
}

fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let msg = v.get("choices")?.get(0)?;
    msg.get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| msg.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let _permit = self.gate.acquire();
        let hash = prompt_hash(prompt);
        let started = Instant::now();
        let mut delay = self.config.backoff;
        let mut status = None;
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match self.attempt(prompt, &mut status) {
                Attempt::Done(reply) => break Ok(reply),
                Attempt::Fail(e) => break Err(e),
                Attempt::Retry(e) if attempts > self.config.retries => break Err(e),
                Attempt::Retry(e) => {
                    log::warn!("attempt {attempts} failed ({e}); retrying in {delay:?}");
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        };
        self.log(&TraceLine {
            prompt_sha256: &hash,
            latency_ms: started.elapsed().as_millis(),
            status,
            attempts,
            ok: outcome.is_ok(),
        });
        outcome
    }
}

/// One line of a replay file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub prompt_sha256: String,
    pub reply: String,
}

/// Answers from a JSONL file of recorded replies keyed by prompt hash.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    replies: HashMap<String, String>,
    fallback: Option<String>,
}

impl ReplayClient {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut replies = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            replies.insert(entry.prompt_sha256, entry.reply);
        }
        Ok(Self {
            replies,
            fallback: None,
        })
    }

    pub fn from_pairs<I, P, R>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, R)>,
        P: AsRef<str>,
        R: Into<String>,
    {
        Self {
            replies: pairs
                .into_iter()
                .map(|(p, r)| (prompt_hash(p.as_ref()), r.into()))
                .collect(),
            fallback: None,
        }
    }

    /// Reply used for prompts with no recording.
    pub fn with_fallback(mut self, reply: impl Into<String>) -> Self {
        self.fallback = Some(reply.into());
        self
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let hash = prompt_hash(prompt);
        self.replies
            .get(&hash)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| Error::Transport(format!("no recorded reply for prompt {hash}")))
    }
}

/// Forwards to an inner client and appends every exchange to a replay file.
pub struct RecordingClient<C> {
    inner: C,
    out: Mutex<File>,
}

impl<C: ChatClient> RecordingClient<C> {
    pub fn new(inner: C, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner,
            out: Mutex::new(out),
        })
    }
}

impl<C: ChatClient> ChatClient for RecordingClient<C> {
    fn complete(&self, prompt: &str) -> Result<String> {
        let reply = self.inner.complete(prompt)?;
        let mut line = serde_json::to_string(&ReplayEntry {
            prompt_sha256: prompt_hash(prompt),
            reply: reply.clone(),
        })?;
        line.push('\n');
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        out.write_all(line.as_bytes())
            .map_err(|e| Error::Transport(format!("recording failed: {e}")))?;
        Ok(reply)
    }
}

impl<T: ChatClient + ?Sized> ChatClient for Box<T> {
    fn complete(&self, prompt: &str) -> Result<String> {
        (**self).complete(prompt)
    }
}

impl<T: ChatClient + ?Sized> ChatClient for std::sync::Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String> {
        (**self).complete(prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves canned `(status, body)` responses in order, one per connection.
    fn mock(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handle = thread::spawn(move || {
            for (status, body) in responses {
                let Ok((stream, _)) = listener.accept() else { return };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut buf = vec![0; len];
                let _ = reader.read_exact(&mut buf);
                let mut stream = reader.into_inner();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
            }
        });
        (url, hits, handle)
    }

    fn ok_body(reply: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}).to_string()
    }

    fn config(url: String, retries: u32) -> EndpointConfig {
        EndpointConfig {
            url,
            retries,
            backoff: Duration::from_millis(1),
            timeout: Duration::from_secs(5),
            ..EndpointConfig::default()
        }
    }

    #[test]
    fn returns_the_reply_and_traces_the_call() {
        let (url, _, handle) = mock(vec![(200, ok_body("The answer is B"))]);
        let dir = tempfile::tempdir().unwrap();
        let trace = dir.path().join("trace.jsonl");
        let client = HttpChatClient::with_api_key(
            EndpointConfig {
                trace: Some(trace.clone()),
                ..config(url, 0)
            },
            None,
        )
        .unwrap();
        assert_eq!(client.complete("hello").unwrap(), "The answer is B");
        handle.join().unwrap();
        let text = fs::read_to_string(trace).unwrap();
        assert_eq!(text.lines().count(), 1);
        let v: Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(v["prompt_sha256"], prompt_hash("hello"));
        assert!(v["latency_ms"].is_u64());
    }

    #[test]
    fn server_errors_exhaust_retries() {
        let fail = (500, "{}".to_string());
        let (url, hits, handle) = mock(vec![fail.clone(), fail.clone(), fail]);
        let client = HttpChatClient::with_api_key(config(url, 2), None).unwrap();
        let err = client.complete("q").unwrap_err();
        handle.join().unwrap();
        assert!(matches!(err, Error::Status { status: 500, .. }), "{err}");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, hits, handle) = mock(vec![(401, "denied".into())]);
        let client = HttpChatClient::with_api_key(config(url, 3), None).unwrap();
        let err = client.complete("q").unwrap_err();
        handle.join().unwrap();
        assert!(matches!(err, Error::Status { status: 401, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn recovers_after_a_transient_failure() {
        let (url, _, handle) = mock(vec![(503, "{}".into()), (200, ok_body("ok"))]);
        let client = HttpChatClient::with_api_key(config(url, 1), None).unwrap();
        assert_eq!(client.complete("q").unwrap(), "ok");
        handle.join().unwrap();
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("replies.jsonl");
        let source = ReplayClient::from_pairs([("p1", "r1"), ("p2", "r2")]);
        let rec = RecordingClient::new(source, &file).unwrap();
        assert_eq!(rec.complete("p2").unwrap(), "r2");
        assert_eq!(rec.complete("p1").unwrap(), "r1");
        let replay = ReplayClient::load(&file).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(replay.complete("p1").unwrap(), "r1");
        assert!(replay.complete("p3").is_err());
        assert_eq!(replay.with_fallback("x").complete("p3").unwrap(), "x");
    }
}
