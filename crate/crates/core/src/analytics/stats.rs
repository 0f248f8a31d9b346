//! Rank statistics: Kendall's tau-b and Cliff's delta.

use std::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations")]
    TooShort,
    #[error("a group is empty")]
    EmptyGroup,
    #[error("one input is constant; tau-b is undefined")]
    ConstantInput,
}

fn ties(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` in place, returning the number of inversions (strict).
fn count_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_swaps(&mut v[..mid], buf) + count_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b (tie-corrected), computed in O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooShort);
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = ties(&xs);
    // pairs tied in both coordinates
    let mut n3 = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = count_swaps(&mut ys, &mut Vec::with_capacity(n));
    let n2 = ties(&ys);

    if n0 == n1 || n0 == n2 {
        return Err(StatsError::ConstantInput);
    }
    let numerator = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denom = (((n0 - n1) as u128 * (n0 - n2) as u128) as f64).sqrt();
    Ok(numerator / denom)
}

/// Cliff's delta `(#{a > b} - #{a < b}) / (|a| |b|)`, in O((m + n) log n).
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyGroup);
    }
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut score: i64 = 0;
    for &v in a {
        let below = sorted.partition_point(|&s| s.total_cmp(&v) == Ordering::Less);
        let not_above = sorted.partition_point(|&s| s.total_cmp(&v) != Ordering::Greater);
        score += below as i64 - (sorted.len() - not_above) as i64;
    }
    Ok(score as f64 / (a.len() as f64 * b.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kendall_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let t = kendall_tau(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(kendall_tau(&x, &x[..3]), Err(StatsError::LengthMismatch(4, 3)));
        assert_eq!(kendall_tau(&x, &[1.0; 4]), Err(StatsError::ConstantInput));
    }

    #[test]
    fn kendall_with_ties() {
        // concordant 4, discordant 1, x-ties 1 pair, y-ties 0: (4-1)/sqrt(5*6)
        let t = kendall_tau(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 2.5]).unwrap();
        assert!((t - 3.0 / 30f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cliff_examples() {
        assert_eq!(cliffs_delta(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cliffs_delta(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(cliffs_delta(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), -0.25);
        assert_eq!(cliffs_delta(&[], &[1.0]), Err(StatsError::EmptyGroup));
    }
}
