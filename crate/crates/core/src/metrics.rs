//! Performance measures over backtest records.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use crate::backtest::BacktestRecord;
use crate::error::{Error, Result};

/// Final accumulated portfolio value (`p₀ = 1`).
pub fn compute_fapv(records: &[BacktestRecord]) -> Result<f64> {
    records
        .last()
        .map(|r| r.p)
        .ok_or_else(|| Error::Validation("no backtest records".into()))
}

/// Per-period Sharpe ratio of `ρ - ρ_F` with the population deviation.
pub fn compute_sharpe(records: &[BacktestRecord], risk_free_rate: f64) -> Result<f64> {
    let excess: Vec<f64> = records.iter().map(|r| r.rho - risk_free_rate).collect();
    sharpe_of(&excess)
}

pub fn sharpe_of(excess: &[f64]) -> Result<f64> {
    if excess.len() < 2 {
        return Err(Error::Validation("Sharpe ratio needs at least 2 periods".into()));
    }
    let n = excess.len() as f64;
    let mean = excess.iter().sum::<f64>() / n;
    let var = excess.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(mean / var.sqrt())
}

/// Maximum drawdown of the value path, starting from `p₀ = 1`.
pub fn compute_mdd(records: &[BacktestRecord]) -> f64 {
    max_drawdown(std::iter::once(1.0).chain(records.iter().map(|r| r.p)))
}

/// `max_{t<τ} (p_t - p_τ)/p_t` in one pass.
pub fn max_drawdown(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for p in values {
        peak = peak.max(p);
        worst = worst.max((peak - p) / peak);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Period,
    Day,
    Week,
}

/// `(negatives, positives)` over buckets of summed log returns. A bucket
/// summing to exactly zero counts as positive.
pub fn count_signed_buckets(records: &[BacktestRecord], bucket: Bucket) -> (usize, usize) {
    let mut sums: BTreeMap<i64, f64> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        let key = match bucket {
            Bucket::Period => i as i64,
            Bucket::Day => rec.timestamp.div_euclid(86_400),
            Bucket::Week => {
                let date = DateTime::from_timestamp(rec.timestamp, 0)
                    .expect("timestamp in range")
                    .date_naive();
                let w = date.iso_week();
                i64::from(w.year()) * 100 + i64::from(w.week())
            }
        };
        *sums.entry(key).or_insert(0.0) += rec.r;
    }
    let neg = sums.values().filter(|s| **s < 0.0).count();
    (neg, sums.len() - neg)
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub fapv: f64,
    /// `None` when the return series has zero variance.
    pub sharpe: Option<f64>,
    pub mdd: f64,
    pub neg_days: usize,
    pub neg_periods: usize,
    pub neg_weeks: usize,
    pub pos_days: usize,
    pub pos_periods: usize,
    pub pos_weeks: usize,
}

impl PerformanceReport {
    pub fn from_records(records: &[BacktestRecord]) -> Result<Self> {
        let fapv = compute_fapv(records)?;
        let sharpe = match compute_sharpe(records, 0.0) {
            Ok(s) => Some(s),
            Err(Error::ZeroVariance) | Err(Error::Validation(_)) => None,
            Err(e) => return Err(e),
        };
        let (neg_periods, pos_periods) = count_signed_buckets(records, Bucket::Period);
        let (neg_days, pos_days) = count_signed_buckets(records, Bucket::Day);
        let (neg_weeks, pos_weeks) = count_signed_buckets(records, Bucket::Week);
        Ok(Self {
            fapv,
            sharpe,
            mdd: compute_mdd(records),
            neg_days,
            neg_periods,
            neg_weeks,
            pos_days,
            pos_periods,
            pos_weeks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(rs: &[f64], start: i64, step: i64) -> Vec<BacktestRecord> {
        let mut p = 1.0;
        rs.iter()
            .enumerate()
            .map(|(i, r)| {
                p *= r.exp();
                BacktestRecord {
                    timestamp: start + i as i64 * step,
                    period: i + 1,
                    w_target: vec![1.0],
                    w_evolved: vec![1.0],
                    mu: 1.0,
                    rho: r.exp() - 1.0,
                    r: *r,
                    p,
                }
            })
            .collect()
    }

    #[test]
    fn drawdown_hand_cases() {
        assert_eq!(max_drawdown([1.0, 1.5, 2.0]), 0.0);
        assert_eq!(max_drawdown([1.0, 0.5, 0.75]), 0.5);
        assert_eq!(max_drawdown([1.0, 2.0, 1.0]), 0.5);
    }

    #[test]
    fn sharpe_symmetric_returns_is_zero() {
        assert_eq!(sharpe_of(&[0.01, -0.01]).unwrap(), 0.0);
        assert!(matches!(sharpe_of(&[0.02, 0.02, 0.02]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn day_with_net_gain_counts_positive() {
        let r = recs(&[0.02, -0.01], 0, 1800);
        assert_eq!(count_signed_buckets(&r, Bucket::Day), (0, 1));
        assert_eq!(count_signed_buckets(&r, Bucket::Period), (1, 1));
    }

    #[test]
    fn zero_sum_bucket_is_positive() {
        let r = recs(&[0.0], 0, 1800);
        assert_eq!(count_signed_buckets(&r, Bucket::Week), (0, 1));
    }
}
