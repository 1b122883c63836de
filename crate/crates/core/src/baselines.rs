//! Classical online portfolio selection strategies. Cash is treated as one
//! more asset with constant price 1, so every strategy trades `m + 1`
//! assets.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::backtest::{DecisionContext, Strategy};
use crate::error::{Error, Result};
use crate::marketdata::{GlobalPriceMatrix, MarketView};
use crate::portfolio::{dot, PortfolioVector};

/// Registry keys, in table order.
pub const ALGORITHMS: [&str; 12] = [
    "ubah", "best", "ucrp", "m0", "eg", "up", "ons", "anticor", "olmar", "pamr", "wmamr", "rmr",
];

/// Named in the literature but not implemented here.
pub const EXCLUDED: [&str; 4] = ["cwmr", "bk", "bnn", "cornk"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyParams {
    /// EG learning rate, `η ≥ 0`.
    pub eg_eta: f64,
    /// OLMAR moving-average window (≥ 2) and reversion threshold `ε > 0`.
    pub olmar_window: usize,
    pub olmar_epsilon: f64,
    /// PAMR and WMAMR sensitivity `ε ≥ 0`.
    pub pamr_epsilon: f64,
    pub wmamr_window: usize,
    /// ONS mixing `η ∈ [0,1]`, `β > 0`, `δ > 0`.
    pub ons_eta: f64,
    pub ons_beta: f64,
    pub ons_delta: f64,
    /// ANTICOR window (≥ 2).
    pub anticor_window: usize,
    pub rmr_window: usize,
    pub rmr_epsilon: f64,
    pub rmr_max_iter: usize,
    pub rmr_tolerance: f64,
    pub up_samples: usize,
    pub up_seed: u64,
    /// CRP target for `m0`; `None` means half cash, the rest equal.
    pub m0_target: Option<Vec<f64>>,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            eg_eta: 0.05,
            olmar_window: 5,
            olmar_epsilon: 10.0,
            pamr_epsilon: 0.5,
            wmamr_window: 5,
            ons_eta: 0.0,
            ons_beta: 1.0,
            ons_delta: 0.125,
            anticor_window: 5,
            rmr_window: 5,
            rmr_epsilon: 10.0,
            rmr_max_iter: 200,
            rmr_tolerance: 1e-9,
            up_samples: 10_000,
            up_seed: 0,
            m0_target: None,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("baseline parameter out of range: {what}")));
        if !(self.eg_eta >= 0.0) {
            return bad("eg_eta");
        }
        if self.olmar_window < 2 || self.wmamr_window < 1 || self.rmr_window < 2 || self.anticor_window < 2 {
            return bad("window");
        }
        if !(self.olmar_epsilon > 0.0 && self.rmr_epsilon > 0.0 && self.pamr_epsilon >= 0.0) {
            return bad("epsilon");
        }
        if !((0.0..=1.0).contains(&self.ons_eta) && self.ons_beta > 0.0 && self.ons_delta > 0.0) {
            return bad("ons");
        }
        if self.up_samples == 0 || self.rmr_max_iter == 0 || !(self.rmr_tolerance > 0.0) {
            return bad("sample or iteration count");
        }
        Ok(())
    }
}

/// Builds a strategy for `m` non-cash assets from its registry key.
pub fn create_strategy(name: &str, m: usize, params: &StrategyParams) -> Result<Box<dyn Strategy + Send>> {
    params.validate()?;
    let d = m + 1;
    let key = name.to_ascii_lowercase();
    Ok(match key.as_str() {
        "ubah" => Box::new(Ubah),
        "best" => Box::new(BestStock { pick: None }),
        "ucrp" | "crp" => Box::new(Crp::new("ucrp", vec![1.0 / d as f64; d])?),
        "m0" => {
            let target = match &params.m0_target {
                Some(t) => t.clone(),
                None => {
                    let mut t = vec![0.5 / m as f64; d];
                    t[0] = 0.5;
                    t
                }
            };
            if target.len() != d {
                return Err(Error::Config(format!("m0 target has {} weights, need {d}", target.len())));
            }
            Box::new(Crp::new("m0", target)?)
        }
        "eg" => Box::new(Eg {
            eta: params.eg_eta,
            b: None,
        }),
        "up" => Box::new(Up::new(d, params.up_samples, params.up_seed)),
        "ons" => Box::new(Ons::new(d, params.ons_eta, params.ons_beta, params.ons_delta)),
        "anticor" => Box::new(Anticor {
            window: params.anticor_window,
            b: None,
        }),
        "olmar" => Box::new(Olmar {
            window: params.olmar_window,
            epsilon: params.olmar_epsilon,
            b: None,
        }),
        "pamr" => Box::new(Pamr {
            name: "pamr",
            window: 1,
            epsilon: params.pamr_epsilon,
            b: None,
        }),
        "wmamr" => Box::new(Pamr {
            name: "wmamr",
            window: params.wmamr_window,
            epsilon: params.pamr_epsilon,
            b: None,
        }),
        "rmr" => Box::new(Rmr {
            window: params.rmr_window,
            epsilon: params.rmr_epsilon,
            max_iter: params.rmr_max_iter,
            tolerance: params.rmr_tolerance,
            b: None,
        }),
        k if EXCLUDED.contains(&k) => {
            return Err(Error::Config(format!("baseline `{k}` is not implemented")));
        }
        other => return Err(Error::Config(format!("unknown baseline `{other}`"))),
    })
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}` by the sorted-threshold rule.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // absorb rounding so the result sums to 1 to machine precision
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

fn prices(view: &MarketView<'_>, t: usize) -> Result<Vec<f64>> {
    let mut p = vec![1.0];
    p.extend(view.closes_at(t)?);
    Ok(p)
}

fn relatives(view: &MarketView<'_>, t: usize) -> Result<Vec<f64>> {
    Ok(view.relative_price(t)?.as_slice().to_vec())
}

fn uniform(d: usize) -> Vec<f64> {
    vec![1.0 / d as f64; d]
}

fn wrap(b: &[f64]) -> Result<PortfolioVector> {
    PortfolioVector::normalized(b.to_vec())
}

/// Buy uniformly once, then hold.
struct Ubah;

impl Strategy for Ubah {
    fn name(&self) -> &str {
        "ubah"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        if ctx.last_action.cash_weight() == 1.0 && ctx.holdings.cash_weight() == 1.0 {
            Ok(PortfolioVector::uniform(ctx.holdings.assets()))
        } else {
            Ok(ctx.holdings.clone())
        }
    }
}

/// All-in on the non-cash asset with the best growth over the evaluation
/// window, ties to the lowest index.
/// A hindsight benchmark: it reads the whole window up front.
struct BestStock {
    pick: Option<usize>,
}

impl Strategy for BestStock {
    fn name(&self) -> &str {
        "best"
    }

    fn prepare(&mut self, matrix: &GlobalPriceMatrix, periods: Range<usize>) -> Result<()> {
        let (from, to) = (periods.start - 1, periods.end - 1);
        let growth = |i: usize| matrix.close(i, to) / matrix.close(i, from);
        let mut best = (1, growth(0));
        for i in 1..matrix.n_assets() {
            if growth(i) > best.1 {
                best = (i + 1, growth(i));
            }
        }
        self.pick = Some(best.0);
        Ok(())
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        let pick = self
            .pick
            .ok_or_else(|| Error::Validation("best stock used without prepare".into()))?;
        Ok(PortfolioVector::all_in(ctx.holdings.assets(), pick))
    }
}

/// Constant rebalanced portfolio.
struct Crp {
    name: &'static str,
    target: PortfolioVector,
}

impl Crp {
    fn new(name: &'static str, target: Vec<f64>) -> Result<Self> {
        Ok(Self {
            name,
            target: PortfolioVector::new(target).map_err(|e| Error::Config(format!("{name} target: {e}")))?,
        })
    }
}

impl Strategy for Crp {
    fn name(&self) -> &str {
        self.name
    }

    fn decide(&mut self, _: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        Ok(self.target.clone())
    }
}

/// Exponentiated gradient: `b_i ∝ b_i exp(η x_i / (b·x))`.
struct Eg {
    eta: f64,
    b: Option<Vec<f64>>,
}

impl Strategy for Eg {
    fn name(&self) -> &str {
        "eg"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        let d = ctx.holdings.len();
        let b = match self.b.take() {
            None => uniform(d),
            Some(b) => {
                let x = relatives(ctx.view, ctx.t)?;
                let g = dot(&b, &x);
                let raw: Vec<f64> = b.iter().zip(&x).map(|(bi, xi)| bi * (self.eta * xi / g).exp()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            }
        };
        self.b = Some(b.clone());
        wrap(&b)
    }
}

/// Universal portfolio approximated by wealth-weighted Dirichlet(1) CRPs.
struct Up {
    portfolios: Vec<Vec<f64>>,
    log_wealth: Vec<f64>,
    started: bool,
}

impl Up {
    fn new(d: usize, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let portfolios = (0..samples)
            .map(|_| {
                let e: Vec<f64> = (0..d).map(|_| Exp1.sample(&mut rng)).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v: f64| v / s).collect()
            })
            .collect();
        Self {
            portfolios,
            log_wealth: vec![0.0; samples],
            started: false,
        }
    }
}

impl Strategy for Up {
    fn name(&self) -> &str {
        "up"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        if self.started {
            let x = relatives(ctx.view, ctx.t)?;
            for (lw, b) in self.log_wealth.iter_mut().zip(&self.portfolios) {
                *lw += dot(b, &x).ln();
            }
        }
        self.started = true;
        let top = self.log_wealth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d = ctx.holdings.len();
        let mut acc = vec![0.0; d];
        let mut total = 0.0;
        for (lw, b) in self.log_wealth.iter().zip(&self.portfolios) {
            let w = (lw - top).exp();
            total += w;
            acc.iter_mut().zip(b).for_each(|(a, bi)| *a += w * bi);
        }
        acc.iter_mut().for_each(|a| *a /= total);
        wrap(&acc)
    }
}

/// Online Newton step.
struct Ons {
    eta: f64,
    beta: f64,
    delta: f64,
    a: DMatrix<f64>,
    bvec: DVector<f64>,
    b: Option<Vec<f64>>,
}

impl Ons {
    fn new(d: usize, eta: f64, beta: f64, delta: f64) -> Self {
        Self {
            eta,
            beta,
            delta,
            a: DMatrix::identity(d, d),
            bvec: DVector::zeros(d),
            b: None,
        }
    }
}

/// `argmin_{w ∈ Δ} (w - p)ᵀ A (w - p)` by accelerated projected gradient.
fn project_in_norm(a: &DMatrix<f64>, p: &DVector<f64>) -> Vec<f64> {
    let lmax = a.clone().symmetric_eigen().eigenvalues.max().max(1e-12);
    let step = 1.0 / lmax;
    let mut w = DVector::from_vec(project_to_simplex(p.as_slice()));
    let mut z = w.clone();
    let mut t = 1.0f64;
    for _ in 0..5000 {
        let grad = a * (&z - p);
        let next = DVector::from_vec(project_to_simplex((&z - step * grad).as_slice()));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + ((t - 1.0) / t_next) * (&next - &w);
        let moved = (&next - &w).amax();
        w = next;
        t = t_next;
        if moved < 1e-13 {
            break;
        }
    }
    w.as_slice().to_vec()
}

impl Strategy for Ons {
    fn name(&self) -> &str {
        "ons"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        let d = ctx.holdings.len();
        let b = match self.b.take() {
            None => uniform(d),
            Some(b) => {
                let x = relatives(ctx.view, ctx.t)?;
                let g = DVector::from_iterator(d, x.iter().map(|xi| xi / dot(&b, &x)));
                self.a += &g * g.transpose();
                self.bvec += (1.0 + 1.0 / self.beta) * &g;
                let inv = self
                    .a
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("ONS matrix lost positive definiteness".into()))?;
                let p = self.delta * inv.solve(&self.bvec);
                let proj = project_in_norm(&self.a, &p);
                proj.iter().map(|v| (1.0 - self.eta) * v + self.eta / d as f64).collect()
            }
        };
        self.b = Some(b.clone());
        wrap(&b)
    }
}

/// Passive-aggressive step towards a predicted price relative `x̃` with
/// threshold `ε`: `b + λ(x̃ - x̄)` projected, `λ = max(0, ε - b·x̃)/‖x̃ - x̄‖²`.
fn reversion_step(b: &[f64], xt: &[f64], epsilon: f64) -> Vec<f64> {
    let mean = xt.iter().sum::<f64>() / xt.len() as f64;
    let denom: f64 = xt.iter().map(|x| (x - mean) * (x - mean)).sum();
    let lambda = if denom > 0.0 {
        ((epsilon - dot(b, xt)) / denom).max(0.0)
    } else {
        0.0
    };
    let raw: Vec<f64> = b.iter().zip(xt).map(|(bi, xi)| bi + lambda * (xi - mean)).collect();
    project_to_simplex(&raw)
}

/// Online moving-average reversion.
struct Olmar {
    window: usize,
    epsilon: f64,
    b: Option<Vec<f64>>,
}

impl Strategy for Olmar {
    fn name(&self) -> &str {
        "olmar"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        let d = ctx.holdings.len();
        let Some(b) = self.b.take() else {
            self.b = Some(uniform(d));
            return wrap(&uniform(d));
        };
        if ctx.t + 1 < self.window {
            self.b = Some(ctx.holdings.as_slice().to_vec());
            return Ok(ctx.holdings.clone());
        }
        let now = prices(ctx.view, ctx.t)?;
        let mut xt = vec![0.0; d];
        for k in 0..self.window {
            let p = prices(ctx.view, ctx.t - k)?;
            xt.iter_mut().zip(p.iter().zip(&now)).for_each(|(x, (pk, pt))| *x += pk / pt);
        }
        xt.iter_mut().for_each(|x| *x /= self.window as f64);
        let next = reversion_step(&b, &xt, self.epsilon);
        self.b = Some(next.clone());
        wrap(&next)
    }
}

/// Passive-aggressive mean reversion on the last relative (`window = 1`)
/// or on the mean of the last `window` relatives.
struct Pamr {
    name: &'static str,
    window: usize,
    epsilon: f64,
    b: Option<Vec<f64>>,
}

impl Strategy for Pamr {
    fn name(&self) -> &str {
        self.name
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        let d = ctx.holdings.len();
        let Some(b) = self.b.take() else {
            self.b = Some(uniform(d));
            return wrap(&uniform(d));
        };
        if ctx.t < self.window {
            self.b = Some(ctx.holdings.as_slice().to_vec());
            return Ok(ctx.holdings.clone());
        }
        let mut x = vec![0.0; d];
        for k in 0..self.window {
            let r = relatives(ctx.view, ctx.t - k)?;
            x.iter_mut().zip(&r).for_each(|(a, v)| *a += v);
        }
        x.iter_mut().for_each(|a| *a /= self.window as f64);
        let mean = x.iter().sum::<f64>() / d as f64;
        let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
        let loss = (dot(&b, &x) - self.epsilon).max(0.0);
        let next = if denom > 0.0 && loss > 0.0 {
            let tau = loss / denom;
            let raw: Vec<f64> = b.iter().zip(&x).map(|(bi, xi)| bi - tau * (xi - mean)).collect();
            project_to_simplex(&raw)
        } else {
            b
        };
        self.b = Some(next.clone());
        wrap(&next)
    }
}

/// Robust median reversion: the L1 median of the recent price window
/// predicts the next prices.
struct Rmr {
    window: usize,
    epsilon: f64,
    max_iter: usize,
    tolerance: f64,
    b: Option<Vec<f64>>,
}

/// Weiszfeld iteration for the point minimizing the sum of Euclidean
/// distances to `points`.
pub fn l1_median(points: &[Vec<f64>], max_iter: usize, tolerance: f64) -> Vec<f64> {
    let d = points[0].len();
    let mut y: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / points.len() as f64).collect();
    for _ in 0..max_iter {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for p in points {
            let dist = p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dist < 1e-15 {
                continue;
            }
            num.iter_mut().zip(p).for_each(|(n, v)| *n += v / dist);
            den += 1.0 / dist;
        }
        if den == 0.0 {
            break;
        }
        let next: Vec<f64> = num.into_iter().map(|v| v / den).collect();
        let change: f64 = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
        let scale: f64 = y.iter().map(|v| v.abs()).sum();
        y = next;
        if change <= tolerance * scale {
            break;
        }
    }
    y
}

impl Strategy for Rmr {
    fn name(&self) -> &str {
        "rmr"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        let d = ctx.holdings.len();
        let Some(b) = self.b.take() else {
            self.b = Some(uniform(d));
            return wrap(&uniform(d));
        };
        if ctx.t + 1 < self.window {
            self.b = Some(ctx.holdings.as_slice().to_vec());
            return Ok(ctx.holdings.clone());
        }
        let now = prices(ctx.view, ctx.t)?;
        let window: Vec<Vec<f64>> = (0..self.window)
            .map(|k| prices(ctx.view, ctx.t - k).map(|p| p.iter().zip(&now).map(|(a, b)| a / b).collect()))
            .collect::<Result<_>>()?;
        let xt = l1_median(&window, self.max_iter, self.tolerance);
        let next = reversion_step(&b, &xt, self.epsilon);
        self.b = Some(next.clone());
        wrap(&next)
    }
}

/// Anti-correlation wealth transfer between consecutive windows.
struct Anticor {
    window: usize,
    b: Option<Vec<f64>>,
}

impl Strategy for Anticor {
    fn name(&self) -> &str {
        "anticor"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        let d = ctx.holdings.len();
        let w = self.window;
        let Some(prev) = self.b.take() else {
            self.b = Some(uniform(d));
            return wrap(&uniform(d));
        };
        // the previous action after this period's move
        let x_now = relatives(ctx.view, ctx.t)?;
        let growth = dot(&prev, &x_now);
        let mut b: Vec<f64> = prev.iter().zip(&x_now).map(|(bi, xi)| bi * xi / growth).collect();
        if ctx.t < 2 * w {
            self.b = Some(b.clone());
            return wrap(&b);
        }
        let logs = |from: usize| -> Result<Vec<Vec<f64>>> {
            (from..from + w)
                .map(|t| relatives(ctx.view, t).map(|r| r.iter().map(|v| v.ln()).collect()))
                .collect()
        };
        let lx1 = logs(ctx.t + 1 - 2 * w)?;
        let lx2 = logs(ctx.t + 1 - w)?;
        let mean = |lx: &[Vec<f64>]| -> Vec<f64> { (0..d).map(|j| lx.iter().map(|r| r[j]).sum::<f64>() / w as f64).collect() };
        let (mu1, mu2) = (mean(&lx1), mean(&lx2));
        let sd = |lx: &[Vec<f64>], mu: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|j| (lx.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / (w - 1) as f64).sqrt())
                .collect()
        };
        let (s1, s2) = (sd(&lx1, &mu1), sd(&lx2, &mu2));
        let mut corr = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let cov: f64 = (0..w).map(|k| (lx1[k][i] - mu1[i]) * (lx2[k][j] - mu2[j])).sum::<f64>() / (w - 1) as f64;
                if s1[i] > 0.0 && s2[j] > 0.0 {
                    corr[i][j] = cov / (s1[i] * s2[j]);
                }
            }
        }
        let mut claims = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                if i != j && mu2[i] > mu2[j] && corr[i][j] > 0.0 {
                    claims[i][j] = corr[i][j] + (-corr[i][i]).max(0.0) + (-corr[j][j]).max(0.0);
                }
            }
        }
        let mut transfer = vec![vec![0.0; d]; d];
        for i in 0..d {
            let total: f64 = claims[i].iter().sum();
            if total > 0.0 {
                for j in 0..d {
                    transfer[i][j] = b[i] * claims[i][j] / total;
                }
            }
        }
        let moved: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| transfer[j][i] - transfer[i][j]).sum())
            .collect();
        b.iter_mut().zip(&moved).for_each(|(bi, mi)| *bi += mi);
        let b = project_to_simplex(&b);
        self.b = Some(b.clone());
        wrap(&b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_hand_cases() {
        assert_eq!(project_to_simplex(&[1.0, 1.0]), vec![0.5, 0.5]);
        assert_eq!(project_to_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let on = [0.2, 0.3, 0.5];
        let p = project_to_simplex(&on);
        assert!(p.iter().zip(&on).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn registry_knows_every_key() {
        for name in ALGORITHMS {
            assert_eq!(create_strategy(name, 3, &StrategyParams::default()).unwrap().name(), name);
        }
        for name in EXCLUDED {
            assert!(matches!(create_strategy(name, 3, &StrategyParams::default()), Err(Error::Config(m)) if m.contains("not implemented")));
        }
    }

    #[test]
    fn weiszfeld_median_of_collinear_points() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 0.0]];
        let m = l1_median(&pts, 1000, 1e-12);
        assert!((m[0] - 1.0).abs() < 1e-6 && m[1].abs() < 1e-12, "{m:?}");
    }
}
