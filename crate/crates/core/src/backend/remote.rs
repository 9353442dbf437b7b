//! Chat-completions client for real answer generation.
//!
//! Speaks the de-facto serving interface: `POST {base_url}/v1/chat/completions`
//! with the image attached as a base64 PNG data URI and the question as the
//! user message. Transient statuses (429 and 5xx) are retried with
//! exponential backoff (base 500 ms, doubling, ±20% jitter) up to
//! `max_retries`; a shared permit counter caps concurrent requests at
//! `max_in_flight`.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError};
use crate::augment::AugmentationSpec;
use crate::image::ImageTensor;
use crate::types::{Sample, SampleImage};

/// Environment variable holding the bearer token, if any.
pub const API_KEY_ENV: &str = "SHAPE_API_KEY";

const BACKOFF_BASE_MS: u64 = 500;
const BACKOFF_FACTOR: f64 = 2.0;
const BACKOFF_JITTER: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.base_url.is_empty() {
            return Err(BackendError::BadRemoteConfig("base_url is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::BadRemoteConfig("timeout_ms must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::BadRemoteConfig("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

/// Assistant text plus how many attempts the round-trip took.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteReply {
    pub text: String,
    pub attempts: u32,
}

/// Counting semaphore; keeps at most `max_in_flight` requests active.
struct Permits {
    available: Mutex<usize>,
    cv: Condvar,
}

struct PermitGuard<'a>(&'a Permits);

impl Permits {
    fn new(count: usize) -> Self {
        Permits {
            available: Mutex::new(count),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.cv.wait(available).unwrap();
        }
        *available -= 1;
        PermitGuard(self)
    }
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        let mut available = self.0.available.lock().unwrap();
        *available += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteClient {
    cfg: RemoteConfig,
    http: reqwest::blocking::Client,
    permits: Arc<Permits>,
    api_key: Option<String>,
}

impl RemoteClient {
    pub fn new(cfg: RemoteConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| BackendError::BadRemoteConfig(e.to_string()))?;
        let permits = Arc::new(Permits::new(cfg.max_in_flight));
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(RemoteClient {
            cfg,
            http,
            permits,
            api_key,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    /// One image+question round-trip.
    pub fn generate(&self, image_png: &[u8], question: &str) -> Result<RemoteReply, BackendError> {
        if question.is_empty() {
            return Err(BackendError::EmptyQuestion);
        }
        let data_uri = format!("data:image/png;base64,{}", BASE64.encode(image_png));
        let messages = serde_json::json!([{
            "role": "user",
            "content": [
                {"type": "image_url", "image_url": {"url": data_uri}},
                {"type": "text", "text": question},
            ],
        }]);
        self.post_chat(messages)
    }

    /// Sends the candidates numbered `1..M`, one per line, followed by the
    /// prompt verbatim, as a single user message.
    pub fn summarize(
        &self,
        candidates: &[String],
        prompt: &str,
    ) -> Result<RemoteReply, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::EmptyCandidates);
        }
        let mut content = String::new();
        for (i, candidate) in candidates.iter().enumerate() {
            content.push_str(&format!("{}. {}\n", i + 1, candidate));
        }
        content.push_str(prompt);
        self.chat_text(&content)
    }

    /// Plain text chat round-trip (used by the judge harness as well).
    pub fn chat_text(&self, content: &str) -> Result<RemoteReply, BackendError> {
        let messages = serde_json::json!([{ "role": "user", "content": content }]);
        self.post_chat(messages)
    }

    fn post_chat(&self, messages: serde_json::Value) -> Result<RemoteReply, BackendError> {
        let _permit = self.permits.acquire();
        let url = format!(
            "{}/v1/chat/completions",
            self.cfg.base_url.trim_end_matches('/')
        );
        let body = serde_json::json!({ "model": self.cfg.model, "messages": messages });
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let mut request = self.http.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status().as_u16();
                    if status == 200 {
                        return parse_chat_response(response, attempts);
                    }
                    let retryable = status == 429 || (500..=599).contains(&status);
                    if !retryable || attempts > self.cfg.max_retries {
                        return Err(BackendError::Http {
                            status,
                            attempts,
                            message: response.text().unwrap_or_default(),
                        });
                    }
                }
                Err(e) if e.is_timeout() => {
                    return Err(BackendError::Timeout {
                        timeout_ms: self.cfg.timeout_ms,
                        attempts,
                    });
                }
                Err(e) => {
                    return Err(BackendError::Transport {
                        attempts,
                        message: e.to_string(),
                    });
                }
            }
            std::thread::sleep(backoff_delay(attempts));
        }
    }
}

fn backoff_delay(attempt: u32) -> Duration {
    let base = BACKOFF_BASE_MS as f64 * BACKOFF_FACTOR.powi(attempt.saturating_sub(1) as i32);
    let jitter = rand::rng().random_range(1.0 - BACKOFF_JITTER..=1.0 + BACKOFF_JITTER);
    Duration::from_millis((base * jitter).round() as u64)
}

fn parse_chat_response(
    response: reqwest::blocking::Response,
    attempts: u32,
) -> Result<RemoteReply, BackendError> {
    let body: serde_json::Value =
        response
            .json()
            .map_err(|e| BackendError::MalformedResponse {
                attempts,
                message: e.to_string(),
            })?;
    let text = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .ok_or_else(|| BackendError::MalformedResponse {
            attempts,
            message: format!("missing choices[0].message.content in {body}"),
        })?;
    Ok(RemoteReply {
        text: text.to_string(),
        attempts,
    })
}

/// Quantizes a tensor to 8-bit (round half to even) and encodes it as PNG.
pub fn tensor_to_png(img: &ImageTensor) -> Result<Vec<u8>, BackendError> {
    let quantize = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8;
    let (w, h) = (img.width() as u32, img.height() as u32);
    let mut out = std::io::Cursor::new(Vec::new());
    let result = if img.channels() == 3 {
        let buf = image::RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([
                quantize(img.get(y as usize, x as usize, 0)),
                quantize(img.get(y as usize, x as usize, 1)),
                quantize(img.get(y as usize, x as usize, 2)),
            ])
        });
        buf.write_to(&mut out, image::ImageFormat::Png)
    } else {
        let buf = image::GrayImage::from_fn(w, h, |x, y| {
            image::Luma([quantize(img.get(y as usize, x as usize, 0))])
        });
        buf.write_to(&mut out, image::ImageFormat::Png)
    };
    result.map_err(|e| BackendError::ImageEncode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Decodes image bytes into a 3-channel tensor with values in `[0, 1]`.
pub fn decode_to_tensor(bytes: &[u8]) -> Result<ImageTensor, BackendError> {
    let decoded = image::load_from_memory(bytes)
        .map_err(|e| BackendError::ImageEncode(e.to_string()))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    let data = decoded
        .pixels()
        .flat_map(|p| p.0.iter().map(|&v| f64::from(v) / 255.0))
        .collect();
    ImageTensor::new(h as usize, w as usize, 3, data)
        .map_err(|e| BackendError::ImageEncode(e.to_string()))
}

const PNG_MAGIC: &[u8] = &[0x89, b'P', b'N', b'G'];

/// Remote implementation of [`Backend`]: applies augmentations to pixels
/// locally, then ships PNG bytes to the serving endpoint.
pub struct RemoteBackend {
    client: RemoteClient,
}

impl RemoteBackend {
    pub fn new(client: RemoteClient) -> Self {
        RemoteBackend { client }
    }

    pub fn client(&self) -> &RemoteClient {
        &self.client
    }

    fn sample_tensor(&self, sample: &Sample) -> Result<ImageTensor, BackendError> {
        match &sample.image {
            SampleImage::Tensor(t) => Ok(t.clone()),
            SampleImage::Path(path) => {
                let bytes = std::fs::read(path).map_err(|e| {
                    BackendError::ImageEncode(format!("{path}: {e}"))
                })?;
                decode_to_tensor(&bytes)
            }
            SampleImage::ToyContext(_) => Err(BackendError::MissingImage {
                sample_id: sample.id.clone(),
            }),
        }
    }

    fn sample_png(&self, sample: &Sample) -> Result<Vec<u8>, BackendError> {
        // Original PNG files pass through untouched; everything else is
        // decoded and re-encoded so the data URI media type stays truthful.
        if let SampleImage::Path(path) = &sample.image {
            let bytes = std::fs::read(path)
                .map_err(|e| BackendError::ImageEncode(format!("{path}: {e}")))?;
            if bytes.starts_with(PNG_MAGIC) {
                return Ok(bytes);
            }
            return tensor_to_png(&decode_to_tensor(&bytes)?);
        }
        tensor_to_png(&self.sample_tensor(sample)?)
    }
}

impl Backend for RemoteBackend {
    fn answer(
        &self,
        sample: &Sample,
        augmentation: Option<(usize, &AugmentationSpec)>,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError> {
        let png = match augmentation {
            None => self.sample_png(sample)?,
            Some((_, spec)) => {
                let tensor = self.sample_tensor(sample)?;
                tensor_to_png(&spec.apply(&tensor, rng)?)?
            }
        };
        Ok(self.client.generate(&png, &sample.question)?.text)
    }

    fn summarize(
        &self,
        candidates: &[String],
        prompt: &str,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError> {
        Ok(self.client.summarize(candidates, prompt)?.text)
    }
}
