//! Portfolio arithmetic: weight drift under price moves, the transaction
//! remainder factor, and per-period / accumulated returns.
//!
//! Index 0 of every vector is the cash (quote) asset, whose price relative
//! is always 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the unit-sum constraint on portfolio vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Residual tolerance of the transaction remainder fixed point.
pub const MU_TOL: f64 = 1e-10;

/// Iteration cap of the transaction remainder fixed point.
pub const MU_MAX_ITER: usize = 100;

/// Portfolio weights over cash plus `m` assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioVector(Vec<f64>);

impl PortfolioVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights)?;
        Ok(Self(weights))
    }

    /// Wraps weights already known to be on the simplex.
    pub(crate) fn from_trusted(weights: Vec<f64>) -> Self {
        debug_assert!(check_simplex(&weights).is_ok());
        Self(weights)
    }

    /// Renormalizes nonnegative weights; rejects negative or all-zero input.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation(format!(
                "weights must be finite and nonnegative: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Validation("weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self(weights))
    }

    /// `1/(m+1)` in every slot.
    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / (m + 1) as f64; m + 1])
    }

    /// All wealth in cash, `(1, 0, ..., 0)`.
    pub fn cash(m: usize) -> Self {
        let mut w = vec![0.0; m + 1];
        w[0] = 1.0;
        Self(w)
    }

    /// All wealth in slot `i`.
    pub fn all_in(m: usize, i: usize) -> Self {
        let mut w = vec![0.0; m + 1];
        w[i] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of non-cash assets.
    pub fn assets(&self) -> usize {
        self.0.len() - 1
    }

    pub fn cash_weight(&self) -> f64 {
        self.0[0]
    }
}

impl std::ops::Index<usize> for PortfolioVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn check_simplex(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Validation("empty portfolio vector".into()));
    }
    if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Validation(format!(
            "portfolio weight {bad} is negative or non-finite"
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Validation(format!(
            "portfolio weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Price relatives `v_t / v_{t-1}` with the cash entry fixed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativePriceVector(Vec<f64>);

impl RelativePriceVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y[0] != 1.0 {
            return Err(Error::Validation(
                "price relative vector must start with cash entry 1".into(),
            ));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::Validation(format!(
                "price relative {bad} is not strictly positive"
            )));
        }
        Ok(Self(y))
    }

    /// Builds `(1, asset_relatives...)`.
    pub fn from_assets(assets: &[f64]) -> Result<Self> {
        let mut y = Vec::with_capacity(assets.len() + 1);
        y.push(1.0);
        y.extend_from_slice(assets);
        Self::new(y)
    }

    pub fn ones(m: usize) -> Self {
        Self(vec![1.0; m + 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `y · w`, the price-driven growth of a portfolio.
    pub fn dot(&self, w: &PortfolioVector) -> f64 {
        dot(&self.0, w.as_slice())
    }
}

impl std::ops::Index<usize> for RelativePriceVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Selling and purchasing commission rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommissionSchedule {
    pub sell: f64,
    pub buy: f64,
}

impl CommissionSchedule {
    pub fn new(sell: f64, buy: f64) -> Result<Self> {
        for (name, c) in [("selling", sell), ("purchasing", buy)] {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::Validation(format!(
                    "{name} commission rate {c} outside [0, 1)"
                )));
            }
        }
        Ok(Self { sell, buy })
    }

    /// The same rate on both sides.
    pub fn flat(c: f64) -> Result<Self> {
        Self::new(c, c)
    }

    pub fn free() -> Self {
        Self { sell: 0.0, buy: 0.0 }
    }

    pub fn is_free(&self) -> bool {
        self.sell == 0.0 && self.buy == 0.0
    }

    /// Single rate used by the turnover surrogate.
    pub fn mean_rate(&self) -> f64 {
        0.5 * (self.sell + self.buy)
    }
}

impl Default for CommissionSchedule {
    fn default() -> Self {
        Self {
            sell: 0.0025,
            buy: 0.0025,
        }
    }
}

/// Result of holding a portfolio over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodOutcome {
    /// Transaction remainder factor.
    pub mu: f64,
    /// Simple return.
    pub rho: f64,
    /// Log return.
    pub r: f64,
    /// Portfolio value at the end of the period.
    pub p: f64,
}

/// Weights drifted by one period of price moves: `(y ⊙ w) / (y · w)`.
pub fn evolved_weights(y: &RelativePriceVector, w_prev: &PortfolioVector) -> PortfolioVector {
    PortfolioVector(evolve_slice(y.as_slice(), w_prev.as_slice()))
}

pub(crate) fn evolve_slice(y: &[f64], w: &[f64]) -> Vec<f64> {
    let growth = dot(y, w);
    y.iter().zip(w).map(|(yi, wi)| yi * wi / growth).collect()
}

/// The map whose fixed point is the transaction remainder factor.
pub fn remainder_map(mu: f64, w_prime: &[f64], w_target: &[f64], c: CommissionSchedule) -> f64 {
    let k = c.sell + c.buy - c.sell * c.buy;
    let sold: f64 = w_prime[1..]
        .iter()
        .zip(&w_target[1..])
        .map(|(wp, w)| (wp - mu * w).max(0.0))
        .sum();
    (1.0 - c.buy * w_prime[0] - k * sold) / (1.0 - c.buy * w_target[0])
}

/// Solved transaction remainder factor together with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderSolution {
    pub mu: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Fraction of value surviving the rebalance from `w_prime` to `w_target`.
pub fn transaction_remainder(
    w_prime: &PortfolioVector,
    w_target: &PortfolioVector,
    schedule: CommissionSchedule,
) -> Result<f64> {
    solve_remainder(w_prime.as_slice(), w_target.as_slice(), schedule).map(|s| s.mu)
}

/// Fixed-point iteration for the remainder factor on raw slices.
pub fn solve_remainder(
    w_prime: &[f64],
    w_target: &[f64],
    c: CommissionSchedule,
) -> Result<RemainderSolution> {
    debug_assert_eq!(w_prime.len(), w_target.len());
    if c.is_free() {
        return Ok(RemainderSolution {
            mu: 1.0,
            residual: 0.0,
            iterations: 0,
        });
    }
    let turnover: f64 = w_prime
        .iter()
        .zip(w_target)
        .map(|(a, b)| (a - b).abs())
        .sum();
    let mut mu = (1.0 - (c.sell + c.buy) * 0.5 * turnover).clamp(f64::MIN_POSITIVE, 1.0);
    let mut residual = f64::INFINITY;
    for iteration in 0..MU_MAX_ITER {
        let next = remainder_map(mu, w_prime, w_target, c);
        residual = (next - mu).abs();
        if residual < MU_TOL {
            // a few more contractions take the error down to rounding level,
            // which keeps finite differences of μ meaningful
            let (mut mu, mut residual) = (mu, residual);
            for _ in 0..3 {
                let candidate = remainder_map(mu, w_prime, w_target, c).clamp(f64::MIN_POSITIVE, 1.0);
                let r = (remainder_map(candidate, w_prime, w_target, c) - candidate).abs();
                if r >= residual {
                    break;
                }
                (mu, residual) = (candidate, r);
            }
            return Ok(RemainderSolution {
                mu,
                residual,
                iterations: iteration,
            });
        }
        mu = next.clamp(f64::MIN_POSITIVE, 1.0);
    }
    Err(Error::NoConvergence {
        iterations: MU_MAX_ITER,
        residual,
    })
}

/// Turnover surrogate `1 - c · Σ_{i≥1} |w'_i - w_i|`, clamped to `(0, 1]`.
pub fn transaction_remainder_approx(
    w_prime: &PortfolioVector,
    w_target: &PortfolioVector,
    c: f64,
) -> f64 {
    approx_remainder(w_prime.as_slice(), w_target.as_slice(), c)
}

pub(crate) fn approx_remainder(w_prime: &[f64], w_target: &[f64], c: f64) -> f64 {
    let turnover: f64 = w_prime[1..]
        .iter()
        .zip(&w_target[1..])
        .map(|(a, b)| (a - b).abs())
        .sum();
    (1.0 - c * turnover).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Returns and value after holding `w_prev` through a move `y`, net of the
/// rebalance cost `mu` paid on entry.
pub fn period_outcome(
    y: &RelativePriceVector,
    w_prev: &PortfolioVector,
    mu: f64,
    p_prev: f64,
) -> Result<PeriodOutcome> {
    let factor = mu * y.dot(w_prev);
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-positive growth factor {factor} (mu {mu})"
        )));
    }
    let rho = factor - 1.0;
    Ok(PeriodOutcome {
        mu,
        rho,
        r: factor.ln(),
        p: p_prev * factor,
    })
}

/// `p0 · Π (1 + ρ_t)`; equals `p0` for an empty history.
pub fn final_value(outcomes: &[PeriodOutcome], p0: f64) -> f64 {
    outcomes.iter().fold(p0, |p, o| p * (1.0 + o.rho))
}
