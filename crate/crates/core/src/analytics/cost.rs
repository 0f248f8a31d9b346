use serde::{Deserialize, Serialize};

use crate::agent::{FixType, SessionLog};
use crate::llm::{PriceTable, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScope {
    Notebook,
    Fix,
}

/// Mean token usage and cost over `n` units (notebooks or fixes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub scope: CostScope,
    /// A fix type, or `all`.
    pub fix_type: String,
    pub n: u64,
    pub input_uncached: f64,
    pub input_cached: f64,
    pub output: f64,
    pub cost_usd: f64,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: u64,
    usage: Usage,
}

impl Acc {
    fn add(&mut self, u: Usage) {
        self.n += 1;
        self.usage += u;
    }

    fn row(self, scope: CostScope, fix_type: &str, prices: &PriceTable) -> CostRow {
        let d = self.n.max(1) as f64;
        let (iu, ic, o) = (
            self.usage.input_uncached as f64 / d,
            self.usage.input_cached as f64 / d,
            self.usage.output as f64 / d,
        );
        CostRow {
            scope,
            fix_type: fix_type.to_string(),
            n: self.n,
            input_uncached: iu,
            input_cached: ic,
            output: o,
            cost_usd: prices.cost_of(iu, ic, o),
        }
    }
}

/// Per-notebook and per-fix-type averages. Notebook averages cover sessions
/// that made at least one LLM fix attempt; an empty input yields zero rows
/// with `n = 0`.
pub fn cost_report(logs: &[SessionLog], prices: &PriceTable) -> Vec<CostRow> {
    let mut notebooks = Acc::default();
    let mut all_fixes = Acc::default();
    let mut by_type = [Acc::default(); 3];
    for log in logs {
        if log.records().is_empty() {
            continue;
        }
        notebooks.add(log.total_usage());
        for r in log.records() {
            all_fixes.add(r.tokens);
            by_type[r.fix_type as usize].add(r.tokens);
        }
    }
    let mut rows = vec![notebooks.row(CostScope::Notebook, "all", prices)];
    for fix in FixType::ALL {
        rows.push(by_type[fix as usize].row(CostScope::Fix, fix.as_str(), prices));
    }
    rows.push(all_fixes.row(CostScope::Fix, "all", prices));
    rows
}
