//! Completion backends and token/cost accounting.

mod mock;
mod remote;

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{MockBackend, MockScript, ScriptRule, ScriptedError, ScriptedReply};
pub use remote::{RemoteBackend, RemoteConfig, DEFAULT_API_KEY_ENV};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("gateway timed out: {0}")]
    GatewayTimeout(String),
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("no scripted reply for prompt {0}")]
    Unscripted(String),
}

/// Token counts of one or more completions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Usage {
    pub input_uncached: u64,
    pub input_cached: u64,
    pub output: u64,
}

impl Usage {
    pub fn new(input_uncached: u64, input_cached: u64, output: u64) -> Self {
        Usage {
            input_uncached,
            input_cached,
            output,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_uncached + self.input_cached + self.output
    }
}

impl Add for Usage {
    type Output = Usage;
    fn add(self, o: Usage) -> Usage {
        Usage::new(
            self.input_uncached + o.input_uncached,
            self.input_cached + o.input_cached,
            self.output + o.output,
        )
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, o: Usage) {
        *self = *self + o;
    }
}

impl Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), Add::add)
    }
}

impl<'a> Sum<&'a Usage> for Usage {
    fn sum<I: Iterator<Item = &'a Usage>>(iter: I) -> Usage {
        iter.copied().sum()
    }
}

/// USD per million tokens for each [`Usage`] field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_uncached: f64,
    pub input_cached: f64,
    pub output: f64,
}

impl PriceTable {
    /// Rates consistent with the published per-fix and per-notebook cost
    /// figures: $1.75 uncached input, $0.175 cached input, $14 output.
    pub const REFERENCE: PriceTable = PriceTable {
        input_uncached: 1.75,
        input_cached: 0.175,
        output: 14.0,
    };

    /// Cost of possibly fractional (averaged) token counts.
    pub fn cost_of(&self, input_uncached: f64, input_cached: f64, output: f64) -> f64 {
        (input_uncached * self.input_uncached + input_cached * self.input_cached + output * self.output)
            / 1e6
    }

    pub fn validate(&self) -> Result<(), String> {
        let rates = [self.input_uncached, self.input_cached, self.output];
        if rates.iter().all(|r| r.is_finite() && *r >= 0.0) {
            Ok(())
        } else {
            Err(format!("price rates must be nonnegative: {self:?}"))
        }
    }
}

impl Default for PriceTable {
    fn default() -> Self {
        PriceTable::REFERENCE
    }
}

pub fn cost(usage: &Usage, prices: &PriceTable) -> f64 {
    prices.cost_of(
        usage.input_uncached as f64,
        usage.input_cached as f64,
        usage.output as f64,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            temperature: 0.0,
            max_output_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<Completion, LlmError>;
}
