use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::candle::{Candle, TimeRange};
use super::selection::AssetSelection;
use super::store::CandleStore;
use crate::error::{Error, Result};
use crate::portfolio::RelativePriceVector;

/// Aligned close/high/low history of `m` assets over `T` evenly spaced
/// periods. Matrices are stored asset-major: entry `(i, t)` lives at
/// `i * T + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPriceMatrix {
    assets: Vec<String>,
    periods: Vec<i64>,
    global_period: i64,
    close: Vec<f64>,
    high: Vec<f64>,
    low: Vec<f64>,
    fill_mask: Vec<bool>,
}

/// Normalized network input: `(features, assets, window)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTensor {
    pub values: Vec<f64>,
    pub features: usize,
    pub assets: usize,
    pub window: usize,
    /// Period index the tensor describes (its last column).
    pub t: usize,
}

impl PriceTensor {
    pub fn get(&self, feature: usize, asset: usize, j: usize) -> f64 {
        self.values[(feature * self.assets + asset) * self.window + j]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.features, self.assets, self.window]
    }
}

impl GlobalPriceMatrix {
    /// Assembles a matrix from dense parts. Rows of `close`, `high`, `low`
    /// are per asset.
    pub fn from_parts(
        assets: Vec<String>,
        start: i64,
        global_period: i64,
        close: Vec<Vec<f64>>,
        high: Vec<Vec<f64>>,
        low: Vec<Vec<f64>>,
        fill_mask: Option<Vec<Vec<bool>>>,
    ) -> Result<Self> {
        let m = assets.len();
        if m == 0 || close.len() != m || high.len() != m || low.len() != m {
            return Err(Error::Validation("asset count mismatch".into()));
        }
        let t_len = close[0].len();
        if t_len == 0 {
            return Err(Error::Validation("empty price history".into()));
        }
        if global_period <= 0 {
            return Err(Error::Validation("global period must be positive".into()));
        }
        let flat = |rows: Vec<Vec<f64>>, name: &str| -> Result<Vec<f64>> {
            if rows.iter().any(|r| r.len() != t_len) {
                return Err(Error::Validation(format!("ragged {name} rows")));
            }
            let v: Vec<f64> = rows.into_iter().flatten().collect();
            if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return Err(Error::Validation(format!("non-positive {name} price")));
            }
            Ok(v)
        };
        let close = flat(close, "close")?;
        let high = flat(high, "high")?;
        let low = flat(low, "low")?;
        let fill_mask = match fill_mask {
            Some(mask) => {
                if mask.len() != m || mask.iter().any(|r| r.len() != t_len) {
                    return Err(Error::Validation("fill mask shape mismatch".into()));
                }
                mask.into_iter().flatten().collect()
            }
            None => vec![false; m * t_len],
        };
        Ok(Self {
            assets,
            periods: (0..t_len as i64).map(|k| start + k * global_period).collect(),
            global_period,
            close,
            high,
            low,
            fill_mask,
        })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn global_period(&self) -> i64 {
        self.global_period
    }

    pub fn close(&self, asset: usize, t: usize) -> f64 {
        self.close[asset * self.n_periods() + t]
    }

    pub fn high(&self, asset: usize, t: usize) -> f64 {
        self.high[asset * self.n_periods() + t]
    }

    pub fn low(&self, asset: usize, t: usize) -> f64 {
        self.low[asset * self.n_periods() + t]
    }

    pub fn is_filled(&self, asset: usize, t: usize) -> bool {
        self.fill_mask[asset * self.n_periods() + t]
    }

    /// Close series of one asset.
    pub fn close_row(&self, asset: usize) -> &[f64] {
        let t = self.n_periods();
        &self.close[asset * t..(asset + 1) * t]
    }

    /// Closes of every asset at `t`.
    pub fn closes_at(&self, t: usize) -> Vec<f64> {
        (0..self.n_assets()).map(|i| self.close(i, t)).collect()
    }

    pub fn fill_count(&self) -> usize {
        self.fill_mask.iter().filter(|b| **b).count()
    }

    /// Price relatives for period `t`: `(1, v_t / v_{t-1})`.
    pub fn relative_price(&self, t: usize) -> Result<RelativePriceVector> {
        if t == 0 || t >= self.n_periods() {
            return Err(Error::Range(format!(
                "relative price needs 1 <= t < {}, got {t}",
                self.n_periods()
            )));
        }
        let assets: Vec<f64> = (0..self.n_assets())
            .map(|i| self.close(i, t) / self.close(i, t - 1))
            .collect();
        RelativePriceVector::from_assets(&assets)
    }

    /// Window of `n` periods ending at `t`, normalized by the closes at `t`.
    /// Feature planes are close, high, low; `features < 3` keeps the first
    /// planes only.
    pub fn price_tensor(&self, t: usize, n: usize, features: usize) -> Result<PriceTensor> {
        if n == 0 || !(1..=3).contains(&features) {
            return Err(Error::Validation(format!(
                "window {n} and feature count {features} must be positive (features <= 3)"
            )));
        }
        if t + 1 < n || t >= self.n_periods() {
            return Err(Error::Range(format!(
                "price tensor at t={t} needs {n} periods of history within {}",
                self.n_periods()
            )));
        }
        let m = self.n_assets();
        let mut values = Vec::with_capacity(features * m * n);
        let planes: [&[f64]; 3] = [&self.close, &self.high, &self.low];
        let t_len = self.n_periods();
        for plane in planes.iter().take(features) {
            for i in 0..m {
                let latest = self.close[i * t_len + t];
                let row = &plane[i * t_len + t + 1 - n..=i * t_len + t];
                values.extend(row.iter().map(|v| v / latest));
            }
        }
        // exact self-normalization of the last close column
        for i in 0..m {
            values[i * n + n - 1] = 1.0;
        }
        Ok(PriceTensor {
            values,
            features,
            assets: m,
            window: n,
            t,
        })
    }

    /// Candles for every real (non-synthesized) cell, with `open = close`
    /// and zero volumes. Re-importing and rebuilding reproduces the matrix.
    pub fn to_candles(&self) -> Vec<Candle> {
        let mut out = Vec::new();
        for (i, asset) in self.assets.iter().enumerate() {
            for (t, ts) in self.periods.iter().enumerate() {
                if self.is_filled(i, t) {
                    continue;
                }
                out.push(Candle {
                    period_start: *ts,
                    asset: asset.clone(),
                    open: self.close(i, t),
                    high: self.high(i, t),
                    low: self.low(i, t),
                    close: self.close(i, t),
                    base_volume: 0.0,
                    quote_volume: 0.0,
                });
            }
        }
        out
    }

    /// Time range covered by the matrix.
    pub fn range(&self) -> TimeRange {
        TimeRange {
            start: self.periods[0],
            end: self.periods[self.n_periods() - 1] + self.global_period,
        }
    }

    /// The same market with one asset's prices scaled by `k`.
    pub fn scaled_asset(&self, asset: usize, k: f64) -> Self {
        let mut out = self.clone();
        let t_len = self.n_periods();
        for plane in [&mut out.close, &mut out.high, &mut out.low] {
            for v in &mut plane[asset * t_len..(asset + 1) * t_len] {
                *v *= k;
            }
        }
        out
    }

    /// Same market with assets reordered: new asset `j` is old `perm[j]`.
    pub fn permuted_assets(&self, perm: &[usize]) -> Self {
        let t_len = self.n_periods();
        let gather = |plane: &[f64]| -> Vec<f64> {
            perm.iter()
                .flat_map(|&i| plane[i * t_len..(i + 1) * t_len].iter().copied())
                .collect()
        };
        Self {
            assets: perm.iter().map(|&i| self.assets[i].clone()).collect(),
            periods: self.periods.clone(),
            global_period: self.global_period,
            close: gather(&self.close),
            high: gather(&self.high),
            low: gather(&self.low),
            fill_mask: perm
                .iter()
                .flat_map(|&i| self.fill_mask[i * t_len..(i + 1) * t_len].iter().copied())
                .collect(),
        }
    }
}

/// Aligns the selected assets on a common time grid over `range`.
///
/// Missing bars carry the previous close forward (high = low = close);
/// bars before an asset's first real candle take that first close. Every
/// synthesized cell is flagged in the fill mask.
pub fn build_global_matrix(
    store: &CandleStore,
    selection: &AssetSelection,
    period: i64,
    range: TimeRange,
) -> Result<GlobalPriceMatrix> {
    if selection.assets.is_empty() {
        return Err(Error::Config("empty asset selection".into()));
    }
    if period <= 0 || !range.is_aligned(period) {
        return Err(Error::Range(format!(
            "range [{}, {}) not aligned to period {period}",
            range.start, range.end
        )));
    }
    let t_len = range.periods(period);
    let mut close = Vec::new();
    let mut high = Vec::new();
    let mut low = Vec::new();
    let mut mask = Vec::new();
    for asset in &selection.assets {
        let mut slots: Vec<Option<(f64, f64, f64)>> = vec![None; t_len];
        for c in store.candles(asset, range)? {
            if (c.period_start - range.start) % period != 0 {
                continue;
            }
            let k = ((c.period_start - range.start) / period) as usize;
            slots[k] = Some((c.close, c.high, c.low));
        }
        let first = slots.iter().flatten().next().copied().ok_or_else(|| {
            Error::Validation(format!("asset {asset} has no candles in the range"))
        })?;
        let (mut c_row, mut h_row, mut l_row, mut m_row) = (
            Vec::with_capacity(t_len),
            Vec::with_capacity(t_len),
            Vec::with_capacity(t_len),
            Vec::with_capacity(t_len),
        );
        let mut last_close = first.0;
        for slot in slots {
            match slot {
                Some((c, h, l)) => {
                    last_close = c;
                    c_row.push(c);
                    h_row.push(h);
                    l_row.push(l);
                    m_row.push(false);
                }
                None => {
                    c_row.push(last_close);
                    h_row.push(last_close);
                    l_row.push(last_close);
                    m_row.push(true);
                }
            }
        }
        close.push(c_row);
        high.push(h_row);
        low.push(l_row);
        mask.push(m_row);
    }
    GlobalPriceMatrix::from_parts(
        selection.assets.clone(),
        range.start,
        period,
        close,
        high,
        low,
        Some(mask),
    )
}

/// Read access to a matrix up to a horizon period. Requests beyond the
/// horizon fail, and the largest period touched is recorded so callers can
/// audit that no future data was read.
#[derive(Debug)]
pub struct MarketView<'a> {
    matrix: &'a GlobalPriceMatrix,
    horizon: usize,
    max_touched: AtomicUsize,
}

impl<'a> MarketView<'a> {
    pub fn new(matrix: &'a GlobalPriceMatrix, horizon: usize) -> Self {
        Self {
            matrix,
            horizon: horizon.min(matrix.n_periods() - 1),
            max_touched: AtomicUsize::new(0),
        }
    }

    /// View over the full matrix.
    pub fn full(matrix: &'a GlobalPriceMatrix) -> Self {
        Self::new(matrix, matrix.n_periods() - 1)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_assets(&self) -> usize {
        self.matrix.n_assets()
    }

    pub fn timestamp(&self, t: usize) -> Result<i64> {
        self.touch(t)?;
        Ok(self.matrix.periods()[t])
    }

    /// Largest period index read through this view.
    pub fn max_touched(&self) -> usize {
        self.max_touched.load(Ordering::Relaxed)
    }

    fn touch(&self, t: usize) -> Result<()> {
        if t > self.horizon {
            return Err(Error::Lookahead {
                requested: t,
                horizon: self.horizon,
            });
        }
        self.max_touched.fetch_max(t, Ordering::Relaxed);
        Ok(())
    }

    pub fn price_tensor(&self, t: usize, n: usize, features: usize) -> Result<PriceTensor> {
        self.touch(t)?;
        self.matrix.price_tensor(t, n, features)
    }

    pub fn relative_price(&self, t: usize) -> Result<RelativePriceVector> {
        self.touch(t)?;
        self.matrix.relative_price(t)
    }

    pub fn close(&self, asset: usize, t: usize) -> Result<f64> {
        self.touch(t)?;
        Ok(self.matrix.close(asset, t))
    }

    pub fn closes_at(&self, t: usize) -> Result<Vec<f64>> {
        self.touch(t)?;
        Ok(self.matrix.closes_at(t))
    }

    /// Underlying matrix, bypassing the horizon guard.
    pub fn unguarded(&self) -> &'a GlobalPriceMatrix {
        self.matrix
    }
}
