use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Completion, CompletionParams, LlmBackend, LlmError, Usage};
use crate::notebook::count_tokens;
use crate::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedError {
    Timeout,
    Auth,
    RateLimited,
}

/// One canned reply: either text (with optional usage) or an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedReply {
    #[serde(default)]
    pub text: Option<String>,
    /// Defaults to the prompt/response token counts, all uncached.
    #[serde(default)]
    pub usage: Option<Usage>,
    #[serde(default)]
    pub error: Option<ScriptedError>,
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedReply {
            text: Some(text.into()),
            ..Default::default()
        }
    }

    pub fn with_usage(mut self, usage: Usage) -> Self {
        self.usage = Some(usage);
        self
    }

    pub fn error(error: ScriptedError) -> Self {
        ScriptedReply {
            error: Some(error),
            ..Default::default()
        }
    }
}

/// Replies for prompts containing `contains`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub contains: String,
    pub replies: Vec<ScriptedReply>,
}

/// Mock script. Lookup order: exact prompt hash (`by_prompt`, keyed by the
/// SHA-256 of the prompt), first matching `rules` entry, then `sequence`,
/// then `default`. Each reply list is consumed in order and its last entry
/// repeats once exhausted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub by_prompt: BTreeMap<String, Vec<ScriptedReply>>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub sequence: Vec<ScriptedReply>,
    #[serde(default)]
    pub default: Option<ScriptedReply>,
}

/// Deterministic offline backend. Counters are per lookup key, so a script
/// replays identically for the same prompt order.
#[derive(Debug, Default)]
pub struct MockBackend {
    script: MockScript,
    counters: Mutex<HashMap<String, usize>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend {
            script,
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Transport(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text)
            .map_err(|e| LlmError::BadResponse(format!("mock script {}: {e}", path.display())))?;
        Ok(MockBackend::new(script))
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.counters.lock().expect("poisoned").get("__calls").copied().unwrap_or(0)
    }

    fn next<'a>(&self, key: &str, replies: &'a [ScriptedReply]) -> Option<&'a ScriptedReply> {
        let mut counters = self.counters.lock().expect("poisoned");
        let n = counters.entry(key.to_string()).or_insert(0);
        let reply = replies.get(*n).or_else(|| replies.last());
        *n += 1;
        reply
    }

    fn lookup(&self, prompt: &str) -> Option<&ScriptedReply> {
        let hash = sha256_hex(prompt.as_bytes());
        if let Some(replies) = self.script.by_prompt.get(&hash) {
            return self.next(&format!("hash:{hash}"), replies);
        }
        if let Some((i, rule)) = self
            .script
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| prompt.contains(&r.contains))
        {
            return self.next(&format!("rule:{i}"), &rule.replies);
        }
        if !self.script.sequence.is_empty() {
            let mut counters = self.counters.lock().expect("poisoned");
            let n = counters.entry("sequence".into()).or_insert(0);
            let reply = self.script.sequence.get(*n);
            *n += 1;
            if reply.is_some() {
                return reply;
            }
        }
        self.script.default.as_ref()
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, prompt: &str, _params: &CompletionParams) -> Result<Completion, LlmError> {
        *self
            .counters
            .lock()
            .expect("poisoned")
            .entry("__calls".into())
            .or_insert(0) += 1;
        let reply = self
            .lookup(prompt)
            .ok_or_else(|| LlmError::Unscripted(sha256_hex(prompt.as_bytes())))?;
        match reply.error {
            Some(ScriptedError::Timeout) => return Err(LlmError::GatewayTimeout("scripted".into())),
            Some(ScriptedError::Auth) => return Err(LlmError::AuthError("scripted".into())),
            Some(ScriptedError::RateLimited) => return Err(LlmError::RateLimited { attempts: 3 }),
            None => {}
        }
        let text = reply.text.clone().unwrap_or_default();
        let usage = reply.usage.unwrap_or_else(|| {
            Usage::new(count_tokens(prompt) as u64, 0, count_tokens(&text) as u64)
        });
        Ok(Completion { text, usage })
    }
}
