//! Metric library. Predictions and ground truth arrive as aligned string
//! tables (rows x prediction columns).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Directionality;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric domain error: {0}")]
    MetricDomainError(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

fn domain(msg: impl Into<String>) -> MetricError {
    MetricError::MetricDomainError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum MetricId {
    Accuracy,
    Rmse,
    Mae,
    LogLoss,
    Auc,
    /// Resolved through a [`MetricRegistry`].
    Custom(String),
}

impl FromStr for MetricId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "accuracy" => MetricId::Accuracy,
            "rmse" => MetricId::Rmse,
            "mae" => MetricId::Mae,
            "logloss" | "log_loss" => MetricId::LogLoss,
            "auc" | "roc_auc" => MetricId::Auc,
            other => MetricId::Custom(other.to_string()),
        })
    }
}

impl From<String> for MetricId {
    fn from(s: String) -> Self {
        match s.parse() {
            Ok(id) => id,
            Err(never) => match never {},
        }
    }
}

impl From<MetricId> for String {
    fn from(m: MetricId) -> String {
        m.to_string()
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricId::Accuracy => "accuracy",
            MetricId::Rmse => "rmse",
            MetricId::Mae => "mae",
            MetricId::LogLoss => "logloss",
            MetricId::Auc => "auc",
            MetricId::Custom(name) => name,
        })
    }
}

pub trait Metric: Send + Sync {
    fn directionality(&self) -> Directionality;
    /// Whether every prediction cell must parse as a number.
    fn numeric(&self) -> bool;
    fn score(&self, pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<f64, MetricError>;
}

fn parse_num(s: &str) -> Result<f64, MetricError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| domain(format!("`{s}` is not a finite number")))
}

fn numeric_pairs(pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<Vec<(f64, f64)>, MetricError> {
    if pred.len() != truth.len() {
        return Err(domain(format!(
            "{} prediction rows vs {} truth rows",
            pred.len(),
            truth.len()
        )));
    }
    let mut out = Vec::new();
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(domain("prediction and truth column counts differ"));
        }
        for (a, b) in p.iter().zip(t) {
            out.push((parse_num(a)?, parse_num(b)?));
        }
    }
    if out.is_empty() {
        return Err(domain("no values to score"));
    }
    Ok(out)
}

fn binary_label(v: f64) -> Result<bool, MetricError> {
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(domain(format!("ground-truth label {v} is not 0 or 1")))
    }
}

struct Accuracy;
struct Rmse;
struct Mae;
struct LogLoss;
struct Auc;

impl Metric for Accuracy {
    fn directionality(&self) -> Directionality {
        Directionality::HigherBetter
    }
    fn numeric(&self) -> bool {
        false
    }
    fn score(&self, pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<f64, MetricError> {
        if pred.len() != truth.len() {
            return Err(domain("row counts differ"));
        }
        let mut total = 0usize;
        let mut hits = 0usize;
        for (p, t) in pred.iter().zip(truth) {
            if p.len() != t.len() {
                return Err(domain("prediction and truth column counts differ"));
            }
            for (a, b) in p.iter().zip(t) {
                total += 1;
                let (a, b) = (a.trim(), b.trim());
                let same = match (a.parse::<f64>(), b.parse::<f64>()) {
                    (Ok(x), Ok(y)) => x == y,
                    _ => a == b,
                };
                hits += usize::from(same);
            }
        }
        if total == 0 {
            return Err(domain("no values to score"));
        }
        Ok(hits as f64 / total as f64)
    }
}

impl Metric for Rmse {
    fn directionality(&self) -> Directionality {
        Directionality::LowerBetter
    }
    fn numeric(&self) -> bool {
        true
    }
    fn score(&self, pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<f64, MetricError> {
        let pairs = numeric_pairs(pred, truth)?;
        let mse = pairs.iter().map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pairs.len() as f64;
        Ok(mse.sqrt())
    }
}

impl Metric for Mae {
    fn directionality(&self) -> Directionality {
        Directionality::LowerBetter
    }
    fn numeric(&self) -> bool {
        true
    }
    fn score(&self, pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<f64, MetricError> {
        let pairs = numeric_pairs(pred, truth)?;
        Ok(pairs.iter().map(|(p, t)| (p - t).abs()).sum::<f64>() / pairs.len() as f64)
    }
}

const LOGLOSS_EPS: f64 = 1e-15;

impl Metric for LogLoss {
    fn directionality(&self) -> Directionality {
        Directionality::LowerBetter
    }
    fn numeric(&self) -> bool {
        true
    }
    /// Binary log loss for one column (probability of the positive class);
    /// multi-class log loss over one-hot truth for several columns, with
    /// predicted rows renormalized to sum to one.
    fn score(&self, pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<f64, MetricError> {
        numeric_pairs(pred, truth)?;
        let mut total = 0.0;
        for (p, t) in pred.iter().zip(truth) {
            let p: Vec<f64> = p.iter().map(|v| parse_num(v)).collect::<Result<_, _>>()?;
            let t: Vec<bool> = t
                .iter()
                .map(|v| parse_num(v).and_then(binary_label))
                .collect::<Result<_, _>>()?;
            if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(domain(format!("probability {bad} outside [0, 1]")));
            }
            if p.len() == 1 {
                let q = p[0].clamp(LOGLOSS_EPS, 1.0 - LOGLOSS_EPS);
                total -= if t[0] { q.ln() } else { (1.0 - q).ln() };
            } else {
                if t.iter().filter(|x| **x).count() != 1 {
                    return Err(domain("multi-class truth row is not one-hot"));
                }
                let clipped: Vec<f64> = p
                    .iter()
                    .map(|v| v.clamp(LOGLOSS_EPS, 1.0 - LOGLOSS_EPS))
                    .collect();
                let sum: f64 = clipped.iter().sum();
                let hot = t.iter().position(|x| *x).expect("checked one-hot");
                total -= (clipped[hot] / sum).ln();
            }
        }
        Ok(total / pred.len() as f64)
    }
}

impl Metric for Auc {
    fn directionality(&self) -> Directionality {
        Directionality::HigherBetter
    }
    fn numeric(&self) -> bool {
        true
    }
    /// Rank-based ROC AUC (Mann-Whitney U with midranks for ties).
    fn score(&self, pred: &[Vec<String>], truth: &[Vec<String>]) -> Result<f64, MetricError> {
        let pairs = numeric_pairs(pred, truth)?;
        if pred.iter().any(|r| r.len() != 1) {
            return Err(domain("auc expects a single prediction column"));
        }
        let mut scored: Vec<(f64, bool)> = pairs
            .iter()
            .map(|&(p, t)| binary_label(t).map(|l| (p, l)))
            .collect::<Result<_, _>>()?;
        let n_pos = scored.iter().filter(|(_, l)| *l).count();
        let n_neg = scored.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(domain("auc needs both positive and negative labels"));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut rank_sum_pos = 0.0;
        let mut i = 0;
        while i < scored.len() {
            let mut j = i;
            while j + 1 < scored.len() && scored[j + 1].0 == scored[i].0 {
                j += 1;
            }
            // ranks i+1..=j+1 share their mean
            let mid = (i + j + 2) as f64 / 2.0;
            let pos_in_group = scored[i..=j].iter().filter(|(_, l)| *l).count();
            rank_sum_pos += mid * pos_in_group as f64;
            i = j + 1;
        }
        let n_pos = n_pos as f64;
        let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
        Ok(u / (n_pos * n_neg as f64))
    }
}

/// Name-keyed metric table, pre-populated with the built-in metrics.
#[derive(Clone)]
pub struct MetricRegistry {
    metrics: HashMap<String, Arc<dyn Metric>>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut metrics: HashMap<String, Arc<dyn Metric>> = HashMap::new();
        metrics.insert(MetricId::Accuracy.to_string(), Arc::new(Accuracy));
        metrics.insert(MetricId::Rmse.to_string(), Arc::new(Rmse));
        metrics.insert(MetricId::Mae.to_string(), Arc::new(Mae));
        metrics.insert(MetricId::LogLoss.to_string(), Arc::new(LogLoss));
        metrics.insert(MetricId::Auc.to_string(), Arc::new(Auc));
        MetricRegistry { metrics }
    }
}

impl fmt::Debug for MetricRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.metrics.keys().collect();
        names.sort();
        f.debug_struct("MetricRegistry").field("metrics", &names).finish()
    }
}

impl MetricRegistry {
    pub fn register(&mut self, name: &str, metric: Arc<dyn Metric>) {
        self.metrics.insert(name.to_ascii_lowercase(), metric);
    }

    pub fn get(&self, id: &MetricId) -> Result<&Arc<dyn Metric>, MetricError> {
        let key = id.to_string();
        self.metrics
            .get(&key)
            .ok_or(MetricError::UnknownMetric(key))
    }

    pub fn directionality(&self, id: &MetricId) -> Option<Directionality> {
        self.get(id).ok().map(|m| m.directionality())
    }

    pub fn compute(
        &self,
        pred: &[Vec<String>],
        truth: &[Vec<String>],
        id: &MetricId,
    ) -> Result<f64, MetricError> {
        self.get(id)?.score(pred, truth)
    }
}

/// Scores aligned predictions with one of the built-in metrics.
pub fn compute_metric(
    pred: &[Vec<String>],
    truth: &[Vec<String>],
    metric: &MetricId,
) -> Result<f64, MetricError> {
    MetricRegistry::default().compute(pred, truth, metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[&str]) -> Vec<Vec<String>> {
        values.iter().map(|v| vec![v.to_string()]).collect()
    }

    #[test]
    fn accuracy_identity_and_partial() {
        let t = col(&["1", "2", "3", "cat"]);
        assert_eq!(compute_metric(&t, &t, &MetricId::Accuracy).unwrap(), 1.0);
        let p = col(&["1.0", "2", "4", "dog"]);
        assert_eq!(compute_metric(&p, &t, &MetricId::Accuracy).unwrap(), 0.5);
    }

    #[test]
    fn rmse_hand_oracle() {
        let v = compute_metric(&col(&["0", "0"]), &col(&["3", "4"]), &MetricId::Rmse).unwrap();
        assert!((v - (25.0f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!((v - 3.5355339059327378).abs() < 1e-12);
    }

    #[test]
    fn mae_value() {
        let v = compute_metric(&col(&["1", "-1"]), &col(&["3", "2"]), &MetricId::Mae).unwrap();
        assert_eq!(v, 2.5);
    }

    #[test]
    fn auc_perfect_and_ties() {
        let truth = col(&["0", "0", "1", "1"]);
        assert_eq!(
            compute_metric(&col(&["0.1", "0.2", "0.8", "0.9"]), &truth, &MetricId::Auc).unwrap(),
            1.0
        );
        assert_eq!(
            compute_metric(&col(&["0.5", "0.5", "0.5", "0.5"]), &truth, &MetricId::Auc).unwrap(),
            0.5
        );
        // one inversion among four pairs
        assert_eq!(
            compute_metric(&col(&["0.1", "0.7", "0.6", "0.9"]), &truth, &MetricId::Auc).unwrap(),
            0.75
        );
        assert!(compute_metric(&col(&["0.1"]), &col(&["1"]), &MetricId::Auc).is_err());
    }

    #[test]
    fn logloss_binary_and_domain() {
        let v = compute_metric(&col(&["0.5", "0.5"]), &col(&["0", "1"]), &MetricId::LogLoss).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(
            compute_metric(&col(&["1.5"]), &col(&["1"]), &MetricId::LogLoss),
            Err(MetricError::MetricDomainError(_))
        ));
    }

    #[test]
    fn logloss_multiclass_renormalizes() {
        let pred = vec![vec!["0.2".to_string(), "0.2".to_string()]];
        let truth = vec![vec!["1".to_string(), "0".to_string()]];
        let v = compute_metric(&pred, &truth, &MetricId::LogLoss).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn custom_metrics_via_registry() {
        struct Constant;
        impl Metric for Constant {
            fn directionality(&self) -> Directionality {
                Directionality::HigherBetter
            }
            fn numeric(&self) -> bool {
                false
            }
            fn score(&self, _: &[Vec<String>], _: &[Vec<String>]) -> Result<f64, MetricError> {
                Ok(42.0)
            }
        }
        let id: MetricId = "map_at_5".parse().unwrap();
        assert!(matches!(compute_metric(&[], &[], &id), Err(MetricError::UnknownMetric(_))));
        let mut reg = MetricRegistry::default();
        reg.register("map_at_5", Arc::new(Constant));
        assert_eq!(reg.compute(&[], &[], &id).unwrap(), 42.0);
    }

    #[test]
    fn metric_ids_round_trip_through_strings() {
        for name in ["accuracy", "rmse", "mae", "logloss", "auc", "custom_x"] {
            let id: MetricId = name.parse().unwrap();
            assert_eq!(id.to_string(), name);
        }
    }
}
