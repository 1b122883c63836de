//! Exact-cost backtests for any [`Strategy`].

use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{GlobalPriceMatrix, MarketView};
use crate::portfolio::{
    check_simplex, evolved_weights, period_outcome, transaction_remainder, CommissionSchedule,
    PortfolioVector,
};

/// What a strategy may look at when choosing `w_t`. The view ends at `t`.
pub struct DecisionContext<'a, 'm> {
    pub view: &'a MarketView<'m>,
    pub t: usize,
    /// Current holdings, the previous action drifted by the last move.
    pub holdings: &'a PortfolioVector,
    /// The previous action itself (all cash before the first decision).
    pub last_action: &'a PortfolioVector,
}

pub trait Strategy {
    fn name(&self) -> &str;

    /// Called once before the first decision with the reward periods of
    /// the run. Only hindsight benchmarks should look at it.
    fn prepare(&mut self, _matrix: &GlobalPriceMatrix, _periods: Range<usize>) -> Result<()> {
        Ok(())
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector>;

    /// Online learning hook, run after the move into period `t_now` is
    /// known. The view ends at `t_now`.
    fn online_update(&mut self, _view: &MarketView<'_>, _t_now: usize) -> Result<()> {
        Ok(())
    }
}

impl<S: Strategy + ?Sized> Strategy for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn prepare(&mut self, matrix: &GlobalPriceMatrix, periods: Range<usize>) -> Result<()> {
        (**self).prepare(matrix, periods)
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        (**self).decide(ctx)
    }

    fn online_update(&mut self, view: &MarketView<'_>, t_now: usize) -> Result<()> {
        (**self).online_update(view, t_now)
    }
}

/// One rebalance-and-hold step. `period` is the index of the period whose
/// price move the record accounts for; the decision was made at `period - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub timestamp: i64,
    pub period: usize,
    pub w_target: Vec<f64>,
    pub w_evolved: Vec<f64>,
    pub mu: f64,
    pub rho: f64,
    pub r: f64,
    pub p: f64,
}

/// Runs `strategy` over the reward periods `periods` starting from all cash
/// and `p₀ = 1`. With `online` set, the strategy's online hook runs after
/// every step.
pub fn run_backtest<S: Strategy + ?Sized>(
    strategy: &mut S,
    matrix: &GlobalPriceMatrix,
    periods: Range<usize>,
    schedule: CommissionSchedule,
    online: bool,
) -> Result<Vec<BacktestRecord>> {
    if periods.start == 0 || periods.end > matrix.n_periods() || periods.is_empty() {
        return Err(Error::Range(format!(
            "backtest periods {periods:?} must lie in [1, {})",
            matrix.n_periods()
        )));
    }
    let m = matrix.n_assets();
    let name = strategy.name().to_string();
    let fail = |period: usize, e: Error| Error::Strategy {
        strategy: name.clone(),
        period,
        message: e.to_string(),
    };
    strategy.prepare(matrix, periods.clone()).map_err(|e| fail(periods.start - 1, e))?;
    let mut holdings = PortfolioVector::cash(m);
    let mut last = PortfolioVector::cash(m);
    let mut p = 1.0;
    let mut records = Vec::with_capacity(periods.len());
    for period in periods {
        let t = period - 1;
        let view = MarketView::new(matrix, t);
        let ctx = DecisionContext {
            view: &view,
            t,
            holdings: &holdings,
            last_action: &last,
        };
        let w = strategy.decide(&ctx).map_err(|e| fail(t, e))?;
        if w.len() != m + 1 {
            return Err(fail(t, Error::Validation(format!("{} weights for {} assets", w.len(), m))));
        }
        check_simplex(w.as_slice()).map_err(|e| fail(t, e))?;
        let mu = transaction_remainder(&holdings, &w, schedule).map_err(|e| fail(t, e))?;
        let y = matrix.relative_price(period)?;
        let out = period_outcome(&y, &w, mu, p).map_err(|e| fail(t, e))?;
        records.push(BacktestRecord {
            timestamp: matrix.periods()[period],
            period,
            w_target: w.as_slice().to_vec(),
            w_evolved: holdings.as_slice().to_vec(),
            mu,
            rho: out.rho,
            r: out.r,
            p: out.p,
        });
        p = out.p;
        holdings = evolved_weights(&y, &w);
        last = w;
        if online {
            let view = MarketView::new(matrix, period);
            strategy.online_update(&view, period).map_err(|e| fail(t, e))?;
        }
    }
    Ok(records)
}

/// Re-runs the decisions of `records` under another commission schedule.
pub fn replay(records: &[BacktestRecord], matrix: &GlobalPriceMatrix, schedule: CommissionSchedule) -> Result<Vec<BacktestRecord>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let mut holdings = PortfolioVector::cash(first.w_target.len() - 1);
    let mut p = 1.0;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let w = PortfolioVector::new(rec.w_target.clone())?;
        let mu = transaction_remainder(&holdings, &w, schedule)?;
        let y = matrix.relative_price(rec.period)?;
        let o = period_outcome(&y, &w, mu, p)?;
        out.push(BacktestRecord {
            w_evolved: holdings.as_slice().to_vec(),
            mu,
            rho: o.rho,
            r: o.r,
            p: o.p,
            ..rec.clone()
        });
        p = o.p;
        holdings = evolved_weights(&y, &w);
    }
    Ok(out)
}

/// Writes `timestamp,period,w0..wm,mu,rho,r,p` rows.
pub fn write_records_csv<W: Write>(writer: W, records: &[BacktestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let width = records.first().map_or(0, |r| r.w_target.len());
    let mut header = vec!["timestamp".to_string(), "period".to_string()];
    header.extend((0..width).map(|i| format!("w{i}")));
    header.extend(["mu", "rho", "r", "p"].map(String::from));
    w.write_record(&header)?;
    for rec in records {
        let mut row = vec![rec.timestamp.to_string(), rec.period.to_string()];
        row.extend(rec.w_target.iter().map(f64::to_string));
        row.extend([rec.mu, rec.rho, rec.r, rec.p].map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_records_csv`]. Evolved weights are not
/// stored and come back empty.
pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<BacktestRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let width = header.len().checked_sub(6).filter(|_| header.get(0) == Some("timestamp"));
    let Some(width) = width else {
        return Err(Error::Parse {
            line: 1,
            message: "not a backtest record file".into(),
        });
    };
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let num = |k: usize| -> Result<f64> {
            row.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("bad value in column {}", k + 1),
                })
        };
        let timestamp = row.get(0).and_then(|s| s.parse().ok());
        let period = row.get(1).and_then(|s| s.parse().ok());
        let (Some(timestamp), Some(period)) = (timestamp, period) else {
            return Err(Error::Parse {
                line,
                message: "bad timestamp or period".into(),
            });
        };
        let w_target = (0..width).map(|k| num(2 + k)).collect::<Result<Vec<_>>>()?;
        out.push(BacktestRecord {
            timestamp,
            period,
            w_target,
            w_evolved: Vec::new(),
            mu: num(2 + width)?,
            rho: num(3 + width)?,
            r: num(4 + width)?,
            p: num(5 + width)?,
        });
    }
    Ok(out)
}
