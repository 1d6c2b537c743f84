use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use base64::Engine;
use serde_json::{json, Value};

use super::{VlmBackend, VlmError, VlmRequest};
use crate::imaging::encode_png;

pub const DEFAULT_API_KEY_ENV: &str = "WMNAV_API_KEY";

const REDACTED: &str = "[REDACTED]";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after a network error, 429 or 5xx.
    pub max_retries: usize,
    pub initial_backoff: Duration,
    /// Minimum spacing between request starts, shared by all callers.
    pub min_interval: Duration,
    pub max_tokens: u32,
    pub log_path: Option<PathBuf>,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            min_interval: Duration::ZERO,
            max_tokens: 512,
            log_path: None,
        }
    }

    /// Reads the API key from `var` when set.
    pub fn with_key_from_env(mut self, var: &str) -> Self {
        self.api_key = std::env::var(var).ok().filter(|k| !k.is_empty());
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Chat-completions client. Images are attached as PNG data URLs.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    next_slot: Mutex<Instant>,
    log: Option<Mutex<File>>,
}

enum Attempt {
    Done(String),
    Retry(VlmError),
    Fail(VlmError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, VlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| VlmError::BackendUnavailable(e.to_string()))?;
        let log = match &config.log_path {
            Some(p) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| VlmError::Io(format!("{}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(Self {
            config,
            client,
            next_slot: Mutex::new(Instant::now()),
            log,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn body(&self, request: &VlmRequest<'_>, inline_images: bool) -> Value {
        let mut content = vec![json!({"type": "text", "text": request.prompt.text})];
        for img in &request.prompt.images {
            let png = encode_png(&img.image);
            let url = if inline_images {
                format!(
                    "data:image/png;base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(&png)
                )
            } else {
                format!("<{} png, {} bytes>", img.label, png.len())
            };
            content.push(json!({"type": "image_url", "image_url": {"url": url}}));
        }
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": self.config.max_tokens,
            "temperature": 0,
        })
    }

    fn wait_for_slot(&self) {
        if self.config.min_interval.is_zero() {
            return;
        }
        let start = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + self.config.min_interval;
            start
        };
        let now = Instant::now();
        if start > now {
            thread::sleep(start - now);
        }
    }

    fn redact(&self, text: &str) -> String {
        match &self.config.api_key {
            Some(k) if !k.is_empty() => text.replace(k.as_str(), REDACTED),
            _ => text.to_string(),
        }
    }

    fn log_exchange(&self, request: &VlmRequest<'_>, attempt: usize, status: Option<u16>, outcome: &Result<String, String>) {
        let Some(log) = &self.log else { return };
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let mut record = json!({
            "ts_ms": ts as u64,
            "episode": request.tag.episode,
            "step": request.tag.step,
            "role": request.prompt.role,
            "attempt": attempt,
            "url": self.config.endpoint(),
            "authorization": self.config.api_key.as_ref().map(|_| format!("Bearer {REDACTED}")),
            "request": self.body(request, false),
            "status": status,
        });
        match outcome {
            Ok(text) => record["response"] = json!(text),
            Err(e) => record["error"] = json!(e),
        }
        let line = self.redact(&record.to_string());
        if let Ok(mut f) = log.lock() {
            let _ = writeln!(f, "{line}");
        }
    }

    fn attempt(&self, request: &VlmRequest<'_>, body: &Value, attempt: usize) -> Attempt {
        self.wait_for_slot();
        let mut req = self.client.post(self.config.endpoint()).json(body);
        if let Some(k) = &self.config.api_key {
            req = req.bearer_auth(k);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => {
                let msg = self.redact(&e.to_string());
                self.log_exchange(request, attempt, None, &Err(msg.clone()));
                return Attempt::Retry(VlmError::BackendUnavailable(msg));
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => {
                let msg = self.redact(&e.to_string());
                self.log_exchange(request, attempt, Some(status), &Err(msg.clone()));
                return Attempt::Retry(VlmError::BackendUnavailable(msg));
            }
        };
        if !(200..300).contains(&status) {
            let body = self.redact(&text);
            self.log_exchange(request, attempt, Some(status), &Err(body.clone()));
            let err = VlmError::BackendError { status, body };
            return if status == 429 || status >= 500 {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        let outcome = extract_content(&text);
        self.log_exchange(request, attempt, Some(status), &outcome);
        match outcome {
            Ok(content) => Attempt::Done(content),
            Err(msg) => Attempt::Fail(VlmError::BackendError { status, body: msg }),
        }
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions response.
fn extract_content(text: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("malformed response body: {e}"))?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| "response has no choices[0].message.content".to_string())?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(format!("unexpected content type: {other}")),
    }
}

impl VlmBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &VlmRequest<'_>) -> Result<String, VlmError> {
        let body = self.body(request, true);
        let mut backoff = self.config.initial_backoff;
        let mut last = VlmError::BackendUnavailable("no attempt made".into());
        for attempt in 1..=self.config.max_retries + 1 {
            match self.attempt(request, &body, attempt) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("VLM call failed (attempt {attempt}): {e}");
                    last = e;
                    if attempt <= self.config.max_retries {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlm::{CallTag, PromptBundle, PromptImage, Role};
    use image::RgbImage;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves canned `(status, body, delay)` replies in order, one per connection.
    fn serve(replies: Vec<(u16, String, Duration)>) -> (String, Arc<AtomicUsize>, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let h = hits.clone();
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body, delay) in replies {
                let Ok((mut stream, _)) = listener.accept() else { break };
                h.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut headers = String::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0u8; len];
                let _ = reader.read_exact(&mut buf);
                bodies.push(format!("{headers}\n{}", String::from_utf8_lossy(&buf)));
                thread::sleep(delay);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
            bodies
        });
        (format!("http://{addr}/v1"), hits, handle)
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn config(url: &str) -> HttpConfig {
        let mut c = HttpConfig::new(url, "test-model");
        c.timeout = Duration::from_millis(500);
        c.initial_backoff = Duration::from_millis(10);
        c
    }

    fn with_request<T>(f: impl FnOnce(&VlmRequest<'_>) -> T) -> T {
        let p = PromptBundle {
            role: Role::Predict,
            text: "score the views".into(),
            images: vec![PromptImage {
                label: "panorama".into(),
                image: Arc::new(RgbImage::new(4, 4)),
            }],
        };
        let tag = CallTag { episode: "ep".into(), step: 2 };
        f(&VlmRequest { prompt: &p, grounding: None, tag: &tag })
    }

    #[test]
    fn success_passes_text_through() {
        let (url, _, handle) = serve(vec![(200, ok_body("30:1 90:2"), Duration::ZERO)]);
        let mut cfg = config(&url);
        cfg.api_key = Some("sk-secret".into());
        let b = HttpBackend::new(cfg).unwrap();
        assert_eq!(with_request(|r| b.complete(r)).unwrap(), "30:1 90:2");
        let seen = handle.join().unwrap();
        assert!(seen[0].contains("POST /v1/chat/completions"));
        assert!(seen[0].to_ascii_lowercase().contains("authorization: bearer sk-secret"));
        assert!(seen[0].contains("data:image/png;base64,"));
        assert!(seen[0].contains("test-model"));
    }

    #[test]
    fn server_error_is_retried_then_reported() {
        let replies = vec![(500, "boom".to_string(), Duration::ZERO); 3];
        let (url, hits, _h) = serve(replies);
        let mut cfg = config(&url);
        cfg.max_retries = 2;
        let b = HttpBackend::new(cfg).unwrap();
        let err = with_request(|r| b.complete(r)).unwrap_err();
        assert_eq!(err, VlmError::BackendError { status: 500, body: "boom".into() });
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retry_recovers_after_transient_failure() {
        let (url, hits, _h) = serve(vec![
            (503, "busy".into(), Duration::ZERO),
            (200, ok_body("fine"), Duration::ZERO),
        ]);
        let b = HttpBackend::new(config(&url)).unwrap();
        assert_eq!(with_request(|r| b.complete(r)).unwrap(), "fine");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn client_error_is_not_retried() {
        let (url, hits, _h) = serve(vec![(401, "bad key".into(), Duration::ZERO); 2]);
        let b = HttpBackend::new(config(&url)).unwrap();
        let err = with_request(|r| b.complete(r)).unwrap_err();
        assert!(matches!(err, VlmError::BackendError { status: 401, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn timeout_is_unavailable() {
        let (url, _, _h) = serve(vec![(200, ok_body("late"), Duration::from_millis(1500)); 1]);
        let mut cfg = config(&url);
        cfg.timeout = Duration::from_millis(200);
        cfg.max_retries = 0;
        let b = HttpBackend::new(cfg).unwrap();
        let err = with_request(|r| b.complete(r)).unwrap_err();
        assert!(matches!(err, VlmError::BackendUnavailable(_)), "{err:?}");
    }

    #[test]
    fn log_redacts_key_and_omits_image_bytes() {
        let (url, _, _h) = serve(vec![(200, ok_body("echo sk-secret"), Duration::ZERO)]);
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("vlm.jsonl");
        let mut cfg = config(&url);
        cfg.api_key = Some("sk-secret".into());
        cfg.log_path = Some(log.clone());
        let b = HttpBackend::new(cfg).unwrap();
        with_request(|r| b.complete(r)).unwrap();
        let text = std::fs::read_to_string(&log).unwrap();
        assert!(!text.contains("sk-secret"));
        assert!(text.contains(REDACTED));
        assert!(!text.contains("base64"));
        let v: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["role"], "predict");
        assert_eq!(v["status"], 200);
    }

    #[test]
    fn content_parts_are_joined() {
        let body = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(extract_content(&body.to_string()).unwrap(), "ab");
        assert!(extract_content("{}").is_err());
    }
}
