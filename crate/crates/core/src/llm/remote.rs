use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Completion, CompletionParams, LlmBackend, LlmError, Usage};

pub const DEFAULT_API_KEY_ENV: &str = "NBREVIVE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL of a chat-completions API; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub request_timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-5".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            request_timeout_secs: 600,
            max_attempts: 3,
            backoff_base_ms: 1000,
        }
    }
}

/// Chat-completions client with bounded retries.
pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    http: reqwest::blocking::Client,
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl RemoteBackend {
    /// Reads the key from the configured environment variable.
    pub fn from_env(config: RemoteConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| LlmError::AuthError(format!("environment variable {} is not set", config.api_key_env)))?;
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: RemoteConfig, api_key: String) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(RemoteBackend { config, api_key, http })
    }

    fn attempt(&self, body: &Value) -> Result<Completion, Attempt> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let resp = self
            .http
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Attempt::Retry(LlmError::GatewayTimeout(e.to_string()))
                } else {
                    Attempt::Retry(LlmError::Transport(e.to_string()))
                }
            })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(Attempt::Fatal(LlmError::AuthError(format!("HTTP {status}")))),
            429 => return Err(Attempt::Retry(LlmError::RateLimited { attempts: 0 })),
            408 | 504 => return Err(Attempt::Retry(LlmError::GatewayTimeout(format!("HTTP {status}")))),
            500..=599 => return Err(Attempt::Retry(LlmError::Transport(format!("HTTP {status}")))),
            _ => return Err(Attempt::Fatal(LlmError::BadResponse(format!("HTTP {status}")))),
        }
        let doc: Value = resp
            .json()
            .map_err(|e| Attempt::Fatal(LlmError::BadResponse(e.to_string())))?;
        parse_completion(&doc).map_err(Attempt::Fatal)
    }
}

fn parse_completion(doc: &Value) -> Result<Completion, LlmError> {
    let text = doc
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))?
        .to_string();
    let field = |p: &str| doc.pointer(p).and_then(Value::as_u64).unwrap_or(0);
    let prompt = field("/usage/prompt_tokens");
    let cached = field("/usage/prompt_tokens_details/cached_tokens").min(prompt);
    Ok(Completion {
        text,
        usage: Usage::new(prompt - cached, cached, field("/usage/completion_tokens")),
    })
}

impl LlmBackend for RemoteBackend {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<Completion, LlmError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
        });
        if let Some(max) = params.max_output_tokens {
            body["max_completion_tokens"] = json!(max);
        }
        let attempts = self.config.max_attempts.max(1);
        let mut last = LlmError::Transport("no attempt made".into());
        for i in 0..attempts {
            match self.attempt(&body) {
                Ok(c) => return Ok(c),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("completion attempt {} of {attempts} failed: {e}", i + 1);
                    last = e;
                    if i + 1 < attempts {
                        let base = self.config.backoff_base_ms.saturating_mul(1 << i);
                        let jitter = rand::thread_rng().gen_range(0..=base / 2 + 1);
                        std::thread::sleep(Duration::from_millis(base + jitter));
                    }
                }
            }
        }
        Err(match last {
            LlmError::RateLimited { .. } => LlmError::RateLimited { attempts },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves `responses` in order, one connection each; returns the base
    /// URL and a hit counter.
    fn stub(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((mut sock, _)) = listener.accept() else { return };
                let mut buf = vec![0u8; 65536];
                let _ = sock.read(&mut buf);
                counter.fetch_add(1, Ordering::SeqCst);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = sock.write_all(resp.as_bytes());
            }
        });
        (format!("http://{addr}"), hits)
    }

    fn config(base_url: String) -> RemoteConfig {
        RemoteConfig {
            base_url,
            backoff_base_ms: 1,
            request_timeout_secs: 5,
            ..RemoteConfig::default()
        }
    }

    #[test]
    fn rate_limited_after_three_429s() {
        let (url, hits) = stub(vec![(429, "{}".into()); 3]);
        let b = RemoteBackend::with_key(config(url), "k".into()).unwrap();
        let err = b.complete("hi", &CompletionParams::default()).unwrap_err();
        assert_eq!(err, LlmError::RateLimited { attempts: 3 });
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn success_after_retry_reports_usage() {
        let ok = r#"{"choices":[{"message":{"content":"done"}}],
            "usage":{"prompt_tokens":100,"completion_tokens":7,"prompt_tokens_details":{"cached_tokens":40}}}"#;
        let (url, hits) = stub(vec![(503, "{}".into()), (200, ok.into())]);
        let b = RemoteBackend::with_key(config(url), "k".into()).unwrap();
        let c = b.complete("hi", &CompletionParams::default()).unwrap();
        assert_eq!(c.text, "done");
        assert_eq!(c.usage, Usage::new(60, 40, 7));
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn unauthorized_is_not_retried() {
        let (url, hits) = stub(vec![(401, "{}".into()), (200, "{}".into())]);
        let b = RemoteBackend::with_key(config(url), "k".into()).unwrap();
        assert!(matches!(
            b.complete("hi", &CompletionParams::default()),
            Err(LlmError::AuthError(_))
        ));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn missing_credential_is_auth_error() {
        let cfg = RemoteConfig {
            api_key_env: "NBREVIVE_TEST_UNSET_KEY_VAR".into(),
            ..RemoteConfig::default()
        };
        assert!(matches!(RemoteBackend::from_env(cfg), Err(LlmError::AuthError(_))));
    }
}
