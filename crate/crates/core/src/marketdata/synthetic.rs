//! Seeded synthetic markets for tests and demos.

use std::collections::HashSet;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::candle::Candle;
use super::matrix::GlobalPriceMatrix;
use crate::error::{Error, Result};

/// Log-price dynamics of one synthetic asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `ln p_t = ln p_{t-1} + drift - σ²/2 + σ z_t`.
    RandomWalk,
    /// `ln p_t = ln p_0 + drift·t + A sin(2π t / P + φ) + σ z_t`: noise
    /// around a deterministic cycle, so deviations revert.
    Sinusoidal {
        period: f64,
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub id: String,
    pub initial_price: f64,
    #[serde(default)]
    pub drift: f64,
    pub volatility: f64,
    pub regime: Regime,
    /// Mean quote volume per period.
    #[serde(default = "default_volume")]
    pub volume: f64,
}

fn default_volume() -> f64 {
    1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    /// Unix seconds of the first period; must be a multiple of `period`.
    pub start: i64,
    pub period: i64,
    pub periods: usize,
    pub seed: u64,
    pub assets: Vec<AssetSpec>,
}

impl MarketSpec {
    pub fn validate(&self) -> Result<()> {
        if self.period <= 0 || self.start.rem_euclid(self.period) != 0 {
            return Err(Error::Validation(format!(
                "start {} must be a multiple of a positive period {}",
                self.start, self.period
            )));
        }
        if self.periods < 2 {
            return Err(Error::Validation("need at least 2 periods".into()));
        }
        if self.assets.is_empty() {
            return Err(Error::Validation("no assets".into()));
        }
        let mut seen = HashSet::new();
        for a in &self.assets {
            if a.id.is_empty() || !seen.insert(a.id.as_str()) {
                return Err(Error::Validation(format!("duplicate or empty asset id `{}`", a.id)));
            }
            if !(a.initial_price > 0.0 && a.initial_price.is_finite()) {
                return Err(Error::Validation(format!("{}: initial price must be positive", a.id)));
            }
            if !(a.volatility >= 0.0 && a.volatility.is_finite()) {
                return Err(Error::Validation(format!(
                    "{}: volatility {} must be nonnegative",
                    a.id, a.volatility
                )));
            }
            if !a.drift.is_finite() || !(a.volume >= 0.0 && a.volume.is_finite()) {
                return Err(Error::Validation(format!("{}: bad drift or volume", a.id)));
            }
            if let Regime::Sinusoidal {
                period, amplitude, ..
            } = a.regime
            {
                if !(period > 0.0 && amplitude >= 0.0) {
                    return Err(Error::Validation(format!(
                        "{}: sinusoid needs positive period and nonnegative amplitude",
                        a.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Candles for every asset and period, deterministic in the seed.
pub fn synthetic_candles(spec: &MarketSpec) -> Result<Vec<Candle>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.periods * spec.assets.len());
    for (i, asset) in spec.assets.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        let sigma = asset.volatility;
        let base = asset.initial_price.ln();
        let mut log_close = base;
        let mut prev_close = None;
        for t in 0..spec.periods {
            let z: f64 = normal();
            log_close = match asset.regime {
                Regime::RandomWalk if t == 0 => base,
                Regime::RandomWalk => log_close + asset.drift - 0.5 * sigma * sigma + sigma * z,
                Regime::Sinusoidal {
                    period,
                    amplitude,
                    phase,
                } => {
                    let tf = t as f64;
                    base + asset.drift * tf + amplitude * (TAU * tf / period + phase).sin()
                        + sigma * z
                }
            };
            let close = log_close.exp();
            let open = prev_close.unwrap_or(close);
            let wick = 0.5 * sigma;
            let up: f64 = normal();
            let down: f64 = normal();
            let vol_noise: f64 = normal();
            let high = open.max(close) * (wick * up.abs()).exp();
            let low = open.min(close) * (-wick * down.abs()).exp();
            let quote_volume = asset.volume * (0.25 * vol_noise - 0.03125).exp();
            out.push(Candle {
                period_start: spec.start + t as i64 * spec.period,
                asset: asset.id.clone(),
                open,
                high,
                low,
                close,
                base_volume: quote_volume / close,
                quote_volume,
            });
            prev_close = Some(close);
        }
    }
    Ok(out)
}

/// The synthetic market as an aligned price matrix (no gaps).
pub fn generate_synthetic_market(spec: &MarketSpec) -> Result<GlobalPriceMatrix> {
    let candles = synthetic_candles(spec)?;
    let t_len = spec.periods;
    let rows = |f: fn(&Candle) -> f64| -> Vec<Vec<f64>> {
        candles.chunks(t_len).map(|c| c.iter().map(f).collect()).collect()
    };
    GlobalPriceMatrix::from_parts(
        spec.assets.iter().map(|a| a.id.clone()).collect(),
        spec.start,
        spec.period,
        rows(|c| c.close),
        rows(|c| c.high),
        rows(|c| c.low),
        None,
    )
}

/// Two assets oscillating in anti-phase around flat means, a standard
/// mean-reversion playground.
pub fn sinusoidal_pair(periods: usize, cycle: f64, amplitude: f64, noise: f64, seed: u64) -> MarketSpec {
    let asset = |id: &str, phase: f64, price: f64| AssetSpec {
        id: id.into(),
        initial_price: price,
        drift: 0.0,
        volatility: noise,
        regime: Regime::Sinusoidal {
            period: cycle,
            amplitude,
            phase,
        },
        volume: 1000.0,
    };
    MarketSpec {
        start: 1_500_000_000 - 1_500_000_000 % 1800,
        period: 1800,
        periods,
        seed,
        assets: vec![
            asset("SINA", 0.0, 0.05),
            asset("SINB", std::f64::consts::PI, 0.02),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk(vol: f64, drift: f64) -> MarketSpec {
        MarketSpec {
            start: 0,
            period: 1800,
            periods: 50,
            seed: 7,
            assets: vec![AssetSpec {
                id: "W".into(),
                initial_price: 2.0,
                drift,
                volatility: vol,
                regime: Regime::RandomWalk,
                volume: 10.0,
            }],
        }
    }

    #[test]
    fn zero_volatility_is_constant() {
        let m = generate_synthetic_market(&walk(0.0, 0.0)).unwrap();
        assert!(m.close_row(0).iter().all(|p| *p == 2.0));
        assert!((0..50).all(|t| m.high(0, t) == 2.0 && m.low(0, t) == 2.0));
    }

    #[test]
    fn negative_volatility_rejected() {
        assert!(matches!(
            generate_synthetic_market(&walk(-0.1, 0.0)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn same_seed_same_market() {
        let a = generate_synthetic_market(&walk(0.02, 0.001)).unwrap();
        let b = generate_synthetic_market(&walk(0.02, 0.001)).unwrap();
        assert_eq!(a, b);
        let mut other = walk(0.02, 0.001);
        other.seed = 8;
        assert_ne!(a, generate_synthetic_market(&other).unwrap());
    }

    #[test]
    fn candles_satisfy_invariants() {
        let spec = sinusoidal_pair(300, 20.0, 0.1, 0.01, 3);
        for c in synthetic_candles(&spec).unwrap() {
            c.validate(Some(spec.period)).unwrap();
        }
    }

    #[test]
    fn sinusoid_crosses_its_mean() {
        let (t_len, cycle) = (400usize, 25.0);
        let spec = sinusoidal_pair(t_len, cycle, 0.08, 0.01, 11);
        let m = generate_synthetic_market(&spec).unwrap();
        for i in 0..2 {
            let row = m.close_row(i);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let crossings = row
                .windows(2)
                .filter(|w| (w[0] - mean).signum() != (w[1] - mean).signum())
                .count();
            assert!(crossings as f64 >= 2.0 * t_len as f64 / cycle, "{crossings}");
        }
    }
}
