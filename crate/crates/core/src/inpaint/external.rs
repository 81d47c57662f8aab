//! Clients for inpainters that live outside the process.
//!
//! HTTP: `POST {endpoint}/inpaint` with JSON
//! `{"image": <base64 PNG>, "mask": <base64 PNG, 255 = KEEP>, "seed": <u64>}`,
//! answered by `200 {"image": <base64 PNG>}` or a non-200 status with
//! `{"error": <string>}`.
//!
//! Subprocess: a command template with `{in}`, `{mask}`, `{out}` and
//! `{seed}` placeholders; exit status 0 and a PNG at `{out}` mean success.

use std::process::{Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, save_image, save_mask, ImageBuffer};

use super::{ExternalOptions, InpaintRequest, Inpainter};

/// Counting semaphore bounding concurrent calls to one backend.
#[derive(Debug)]
struct Inflight {
    active: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

struct InflightGuard<'a>(&'a Inflight);

impl Inflight {
    fn new(max: usize) -> Self {
        Self {
            active: Mutex::new(0),
            freed: Condvar::new(),
            max: max.max(1),
        }
    }

    fn acquire(&self) -> InflightGuard<'_> {
        let mut active = self.active.lock().expect("inflight lock poisoned");
        while *active >= self.max {
            active = self.freed.wait(active).expect("inflight lock poisoned");
        }
        *active += 1;
        InflightGuard(self)
    }
}

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("inflight lock poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

/// Retries `call` on retryable errors with exponential backoff.
fn with_retries(
    name: &str,
    retries: u32,
    backoff: Duration,
    mut call: impl FnMut() -> Result<ImageBuffer>,
) -> Result<ImageBuffer> {
    let mut attempt = 0;
    loop {
        match call() {
            Ok(img) => return Ok(img),
            Err(e) if attempt < retries && retryable(&e) => {
                let delay = backoff * 2u32.saturating_pow(attempt);
                log::warn!("{name}: attempt {} failed ({e}), retrying in {delay:?}", attempt + 1);
                thread::sleep(delay);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn retryable(e: &Error) -> bool {
    matches!(e, Error::BackendFailure(_) | Error::Timeout(_))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HttpOptions {
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_inflight: usize,
}

impl HttpOptions {
    pub fn from_options(o: &ExternalOptions, default_timeout_ms: u64) -> Self {
        Self {
            retries: o.retries,
            backoff: Duration::from_millis(o.backoff_ms),
            timeout: Duration::from_millis(o.timeout_ms.unwrap_or(default_timeout_ms)),
            max_inflight: o.max_inflight,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    image: &'a str,
    mask: &'a str,
    seed: u64,
}

#[derive(Deserialize)]
struct WireReply {
    image: Option<String>,
    error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    name: String,
    endpoint: String,
    options: HttpOptions,
    agent: ureq::Agent,
    inflight: Arc<Inflight>,
}

/// Largest reply body accepted.
const MAX_REPLY_BYTES: u64 = 512 * 1024 * 1024;

impl HttpBackend {
    pub fn new(name: impl Into<String>, url: &str, options: HttpOptions) -> Result<Self> {
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(Error::Config(format!("backend url `{url}` is not http(s)")));
        }
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(options.timeout))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            name: name.into(),
            endpoint: format!("{}/inpaint", url.trim_end_matches('/')),
            inflight: Arc::new(Inflight::new(options.max_inflight)),
            agent: ureq::Agent::new_with_config(config),
            options,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn call_once(&self, body: &WireRequest<'_>) -> Result<ImageBuffer> {
        let _slot = self.inflight.acquire();
        let fail = |e: ureq::Error| match e {
            ureq::Error::Timeout(t) => Error::Timeout(format!("{}: {t}", self.endpoint)),
            other => Error::BackendFailure(format!("{}: {other}", self.endpoint)),
        };
        let mut resp = self.agent.post(&self.endpoint).send_json(body).map_err(fail)?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_REPLY_BYTES)
            .read_to_string()
            .map_err(fail)?;
        let reply: Option<WireReply> = serde_json::from_str(&text).ok();
        if status != 200 {
            let msg = reply
                .and_then(|r| r.error)
                .unwrap_or_else(|| text.chars().take(200).collect());
            return Err(Error::BackendFailure(format!(
                "{}: HTTP {status}: {msg}",
                self.endpoint
            )));
        }
        let reply = reply.ok_or_else(|| {
            Error::BackendFailure(format!("{}: malformed reply JSON", self.endpoint))
        })?;
        let encoded = reply.image.ok_or_else(|| {
            Error::BackendFailure(format!("{}: reply has no `image`", self.endpoint))
        })?;
        let png = B64.decode(encoded.as_bytes()).map_err(|e| {
            Error::BackendFailure(format!("{}: bad base64 in reply: {e}", self.endpoint))
        })?;
        ImageBuffer::decode_png(&png)
            .map_err(|e| Error::BackendFailure(format!("{}: bad PNG in reply: {e}", self.endpoint)))
    }
}

impl Inpainter for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        let image = B64.encode(req.masked.encode_png()?);
        let mask = B64.encode(req.mask.encode_png()?);
        let body = WireRequest {
            image: &image,
            mask: &mask,
            seed: req.seed,
        };
        let out = with_retries(&self.name, self.options.retries, self.options.backoff, || {
            self.call_once(&body)
        })?;
        check_dims(&self.name, &out, req.masked)?;
        Ok(out)
    }
}

fn check_dims(name: &str, out: &ImageBuffer, input: &ImageBuffer) -> Result<()> {
    if out.dims() != input.dims() {
        return Err(Error::ProtocolViolation(format!(
            "{name}: reply is {}x{}, request was {}x{}",
            out.width(),
            out.height(),
            input.width(),
            input.height()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubprocessOptions {
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_inflight: usize,
}

impl SubprocessOptions {
    pub fn from_options(o: &ExternalOptions, default_timeout_ms: u64) -> Self {
        Self {
            retries: o.retries,
            backoff: Duration::from_millis(o.backoff_ms),
            timeout: Duration::from_millis(o.timeout_ms.unwrap_or(default_timeout_ms)),
            max_inflight: o.max_inflight,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubprocessBackend {
    name: String,
    template: Vec<String>,
    options: SubprocessOptions,
    inflight: Arc<Inflight>,
}

impl SubprocessBackend {
    pub fn new(name: impl Into<String>, command: &str, options: SubprocessOptions) -> Result<Self> {
        let template = shlex::split(command)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::Config(format!("cannot parse command `{command}`")))?;
        if !template.iter().any(|t| t.contains("{out}")) {
            return Err(Error::Config(format!(
                "command `{command}` has no {{out}} placeholder"
            )));
        }
        Ok(Self {
            name: name.into(),
            inflight: Arc::new(Inflight::new(options.max_inflight)),
            template,
            options,
        })
    }

    fn call_once(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        let _slot = self.inflight.acquire();
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let input = dir.path().join("in.png");
        let mask = dir.path().join("mask.png");
        let out = dir.path().join("out.png");
        save_image(req.masked, &input)?;
        save_mask(req.mask, &mask)?;
        let seed = req.seed.to_string();
        let args: Vec<String> = self
            .template
            .iter()
            .map(|t| {
                t.replace("{in}", &input.to_string_lossy())
                    .replace("{mask}", &mask.to_string_lossy())
                    .replace("{out}", &out.to_string_lossy())
                    .replace("{seed}", &seed)
            })
            .collect();
        let mut child = Command::new(&args[0])
            .args(&args[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::BackendFailure(format!("{}: cannot start `{}`: {e}", self.name, args[0])))?;
        let deadline = Instant::now() + self.options.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Timeout(format!(
                        "{}: no exit after {:?}",
                        self.name, self.options.timeout
                    )));
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(Error::BackendFailure(format!("{}: {e}", self.name))),
            }
        };
        if !status.success() {
            let mut stderr = String::new();
            if let Some(mut pipe) = child.stderr.take() {
                use std::io::Read;
                let _ = pipe.read_to_string(&mut stderr);
            }
            return Err(Error::BackendFailure(format!(
                "{}: exited with {status}: {}",
                self.name,
                stderr.trim()
            )));
        }
        load_image(&out).map_err(|e| match e {
            Error::Io { .. } => {
                Error::BackendFailure(format!("{}: no output written to {{out}}", self.name))
            }
            other => Error::BackendFailure(format!("{}: unreadable output: {other}", self.name)),
        })
    }
}

impl Inpainter for SubprocessBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        let out = with_retries(&self.name, self.options.retries, self.options.backoff, || {
            self.call_once(req)
        })?;
        check_dims(&self.name, &out, req.masked)?;
        Ok(out)
    }
}
