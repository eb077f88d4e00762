//! Model tokens with per-token log-probabilities, loaded from line-delimited
//! JSON files or fetched from an inference endpoint.
//!
//! Token spans are always recomputed locally from the token texts; a sample
//! is only accepted when the texts concatenate to its source exactly.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::pyparse::ByteSpan;

pub const API_TOKEN_ENV: &str = "SYNPRUNE_API_TOKEN";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelToken {
    pub index: usize,
    pub text: String,
    pub span: ByteSpan,
    /// Natural-log probability. Absent only for the first token.
    pub logprob: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedSample {
    pub sample_id: String,
    pub model_id: String,
    pub source: String,
    pub tokens: Vec<ModelToken>,
}

impl TokenizedSample {
    /// Build a sample from raw `(text, logprob)` pairs, checking alignment,
    /// logprob presence and sign.
    pub fn from_parts(
        sample_id: impl Into<String>,
        model_id: impl Into<String>,
        source: impl Into<String>,
        parts: Vec<(String, Option<f64>)>,
    ) -> Result<TokenizedSample, TokenProbError> {
        let sample_id = sample_id.into();
        let source = source.into();
        check_alignment(&sample_id, &source, parts.iter().map(|(t, _)| t.as_str()))?;
        let mut offset = 0;
        let mut tokens = Vec::with_capacity(parts.len());
        for (index, (text, logprob)) in parts.into_iter().enumerate() {
            match logprob {
                None if index > 0 => {
                    return Err(TokenProbError::ProviderContract {
                        sample_id,
                        message: format!("token {index} has no logprob"),
                    })
                }
                Some(lp) if lp.is_nan() || lp > 0.0 => {
                    return Err(TokenProbError::ProviderContract {
                        sample_id,
                        message: format!("token {index} has logprob {lp}, expected a non-positive number"),
                    })
                }
                _ => {}
            }
            let span = ByteSpan::new(offset, text.len());
            offset += text.len();
            tokens.push(ModelToken {
                index,
                text,
                span,
                logprob,
            });
        }
        Ok(TokenizedSample {
            sample_id,
            model_id: model_id.into(),
            source,
            tokens,
        })
    }

    pub fn spans(&self) -> Vec<ByteSpan> {
        self.tokens.iter().map(|t| t.span).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TokenProbError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("sample `{sample_id}`: token texts diverge from the source at byte {byte}")]
    Alignment { sample_id: String, byte: usize },
    #[error("sample `{sample_id}`: {message}")]
    ProviderContract { sample_id: String, message: String },
    #[error("sample `{sample_id}`: request failed: {message}")]
    Transport {
        sample_id: String,
        message: String,
        retryable: bool,
    },
}

impl TokenProbError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TokenProbError::Transport { retryable: true, .. })
    }
}

fn check_alignment<'a>(
    sample_id: &str,
    source: &str,
    texts: impl Iterator<Item = &'a str>,
) -> Result<(), TokenProbError> {
    let src = source.as_bytes();
    let mut pos = 0;
    let mismatch = |byte| TokenProbError::Alignment {
        sample_id: sample_id.to_string(),
        byte,
    };
    for text in texts {
        for &b in text.as_bytes() {
            if src.get(pos) != Some(&b) {
                return Err(mismatch(pos));
            }
            pos += 1;
        }
    }
    if pos != src.len() {
        return Err(mismatch(pos));
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawRecord {
    sample_id: String,
    #[serde(default)]
    model_id: String,
    source: String,
    tokens: Value,
    #[serde(default)]
    logprobs: Option<Vec<Option<f64>>>,
    #[serde(default)]
    log_base: Option<Value>,
}

#[derive(Serialize)]
struct WireToken<'a> {
    text: &'a str,
    logprob: Option<f64>,
}

#[derive(Serialize)]
struct WireRecord<'a> {
    sample_id: &'a str,
    model_id: &'a str,
    source: &'a str,
    tokens: Vec<WireToken<'a>>,
}

/// Multiplier that turns a log in the given base into a natural log.
fn base_factor(base: Option<&Value>) -> Result<f64, String> {
    match base {
        None | Some(Value::Null) => Ok(1.0),
        Some(Value::String(s)) if s == "e" => Ok(1.0),
        Some(Value::String(s)) => match s.as_str() {
            "2" => Ok(std::f64::consts::LN_2),
            "10" => Ok(std::f64::consts::LN_10),
            _ => Err(format!("unsupported log_base `{s}`")),
        },
        Some(Value::Number(n)) => match n.as_f64() {
            Some(b) if b > 1.0 => Ok(b.ln()),
            _ => Err(format!("unsupported log_base {n}")),
        },
        Some(other) => Err(format!("unsupported log_base {other}")),
    }
}

/// Token texts and logprobs from either `[{text, logprob}]` or a list of
/// strings with a parallel `logprobs` array.
fn token_parts(
    tokens: Value,
    logprobs: Option<Vec<Option<f64>>>,
    factor: f64,
) -> Result<Vec<(String, Option<f64>)>, String> {
    let Value::Array(items) = tokens else {
        return Err("`tokens` must be an array".into());
    };
    let mut parts = Vec::with_capacity(items.len());
    match logprobs {
        Some(lps) => {
            if lps.len() != items.len() {
                return Err(format!("{} tokens but {} logprobs", items.len(), lps.len()));
            }
            for (item, lp) in items.into_iter().zip(lps) {
                let Value::String(text) = item else {
                    return Err("with a `logprobs` array, `tokens` must hold strings".into());
                };
                parts.push((text, lp.map(|v| v * factor)));
            }
        }
        None => {
            for (i, item) in items.into_iter().enumerate() {
                let Value::Object(mut obj) = item else {
                    return Err(format!("token {i} is not an object"));
                };
                let text = match obj.remove("text") {
                    Some(Value::String(s)) => s,
                    _ => return Err(format!("token {i} has no string `text`")),
                };
                let logprob = match obj.remove("logprob") {
                    None | Some(Value::Null) => None,
                    Some(Value::Number(n)) => n.as_f64().map(|v| v * factor),
                    Some(other) => return Err(format!("token {i} has non-numeric logprob {other}")),
                };
                parts.push((text, logprob));
            }
        }
    }
    Ok(parts)
}

/// Parse a logprob file: one JSON record per line, blank lines ignored.
pub fn load_logprobs(file: &[u8]) -> Result<Vec<TokenizedSample>, TokenProbError> {
    let text = std::str::from_utf8(file).map_err(|e| TokenProbError::Format {
        line: file[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1,
        message: "file is not valid UTF-8".into(),
    })?;
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let format_err = |message: String| TokenProbError::Format { line, message };
        let rec: RawRecord = serde_json::from_str(raw).map_err(|e| format_err(e.to_string()))?;
        let factor = base_factor(rec.log_base.as_ref()).map_err(format_err)?;
        let parts = token_parts(rec.tokens, rec.logprobs, factor).map_err(format_err)?;
        samples.push(TokenizedSample::from_parts(
            rec.sample_id,
            rec.model_id,
            rec.source,
            parts,
        )?);
    }
    Ok(samples)
}

/// Serialize samples in the logprob file format accepted by [`load_logprobs`].
pub fn save_logprobs(samples: &[TokenizedSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let rec = WireRecord {
            sample_id: &s.sample_id,
            model_id: &s.model_id,
            source: &s.source,
            tokens: s
                .tokens
                .iter()
                .map(|t| WireToken {
                    text: &t.text,
                    logprob: t.logprob,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct FetchConfig {
    pub endpoint: String,
    pub model_id: String,
    pub api_token: Option<String>,
    /// Maximum number of requests in flight.
    pub parallelism: usize,
    /// Attempts per sample, first try included.
    pub max_attempts: u32,
    pub timeout: Duration,
    /// Delay before the first retry; doubled on each further retry.
    pub backoff: Duration,
}

impl FetchConfig {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        FetchConfig {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            api_token: std::env::var(API_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            parallelism: 4,
            max_attempts: 3,
            timeout: Duration::from_secs(120),
            backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    model_id: &'a str,
    source: &'a str,
}

#[derive(Deserialize)]
struct Response {
    tokens: Value,
    #[serde(default)]
    logprobs: Option<Vec<Option<f64>>>,
    #[serde(default)]
    log_base: Option<Value>,
}

/// Query the endpoint once per source. Results keep input order.
pub fn fetch_logprobs(
    config: &FetchConfig,
    sources: &[(String, String)],
) -> Result<Vec<TokenizedSample>, TokenProbError> {
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(config.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| TokenProbError::Transport {
            sample_id: sources[0].0.clone(),
            message: format!("cannot start worker pool: {e}"),
            retryable: false,
        })?;
    pool.install(|| {
        sources
            .par_iter()
            .map(|(id, src)| fetch_with_retry(&agent, config, id, src))
            .collect()
    })
}

fn fetch_with_retry(
    agent: &ureq::Agent,
    config: &FetchConfig,
    sample_id: &str,
    source: &str,
) -> Result<TokenizedSample, TokenProbError> {
    let mut delay = config.backoff;
    let mut attempt = 1;
    loop {
        match fetch_one(agent, config, sample_id, source) {
            Err(e) if e.is_retryable() && attempt < config.max_attempts.max(1) => {
                std::thread::sleep(delay);
                delay *= 2;
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn fetch_one(
    agent: &ureq::Agent,
    config: &FetchConfig,
    sample_id: &str,
    source: &str,
) -> Result<TokenizedSample, TokenProbError> {
    let transport = |message: String, retryable: bool| TokenProbError::Transport {
        sample_id: sample_id.to_string(),
        message,
        retryable,
    };
    let contract = |message: String| TokenProbError::ProviderContract {
        sample_id: sample_id.to_string(),
        message,
    };
    let mut req = agent.post(&config.endpoint);
    if let Some(token) = &config.api_token {
        req = req.header("Authorization", &format!("Bearer {token}"));
    }
    let mut resp = req
        .send_json(Request {
            model_id: &config.model_id,
            source,
        })
        .map_err(|e| transport(e.to_string(), true))?;
    let status = resp.status();
    if status.is_server_error() || status.as_u16() == 429 {
        return Err(transport(format!("server answered {status}"), true));
    }
    if !status.is_success() {
        return Err(transport(format!("server answered {status}"), false));
    }
    let body: Response = resp
        .body_mut()
        .read_json()
        .map_err(|e| contract(format!("malformed response: {e}")))?;
    let factor = base_factor(body.log_base.as_ref()).map_err(contract)?;
    let parts = token_parts(body.tokens, body.logprobs, factor).map_err(contract)?;
    TokenizedSample::from_parts(sample_id, config.model_id.clone(), source, parts)
}
