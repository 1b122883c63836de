use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default candle length in seconds (half an hour).
pub const DEFAULT_PERIOD: i64 = 1800;

/// Identifier of the quote (cash) asset; never selected as a portfolio asset.
pub const CASH_ASSET: &str = "BTC";

/// Column order of the CSV interchange format.
pub const CSV_HEADER: [&str; 8] = [
    "period_start",
    "asset",
    "open",
    "high",
    "low",
    "close",
    "base_volume",
    "quote_volume",
];

/// One OHLCV bar of one asset, priced in cash units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub period_start: i64,
    pub asset: String,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub base_volume: f64,
    pub quote_volume: f64,
}

impl Candle {
    /// Checks price ordering and positivity; `period` additionally checks
    /// timestamp alignment.
    pub fn validate(&self, period: Option<i64>) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(format!("non-positive price in {prices:?}"));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} above min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        if !(self.base_volume >= 0.0 && self.quote_volume >= 0.0) {
            return Err("negative volume".into());
        }
        if let Some(period) = period {
            if self.period_start.rem_euclid(period) != 0 {
                return Err(format!(
                    "period_start {} not aligned to {period} s",
                    self.period_start
                ));
            }
        }
        Ok(())
    }
}

/// Half-open time interval `[start, end)` in unix seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: i64,
    pub end: i64,
}

impl TimeRange {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end <= start {
            return Err(Error::Range(format!("empty time range [{start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn is_aligned(&self, period: i64) -> bool {
        self.start.rem_euclid(period) == 0 && self.end.rem_euclid(period) == 0
    }

    /// Number of whole periods in the range.
    pub fn periods(&self, period: i64) -> usize {
        ((self.end - self.start) / period) as usize
    }
}

/// Reads candles in the CSV interchange format. Rows must satisfy the candle
/// invariants; duplicates on `(asset, period_start)` keep the later row.
/// Output is sorted by asset, then period start.
pub fn read_candles_csv<R: Read>(reader: R, period: Option<i64>) -> Result<Vec<Candle>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut unique = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let candle = parse_row(&row).map_err(|message| Error::Parse { line, message })?;
        candle
            .validate(period)
            .map_err(|message| Error::Parse { line, message })?;
        unique.insert((candle.asset.clone(), candle.period_start), candle);
    }
    Ok(unique.into_values().collect())
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<Candle, String> {
    if row.len() != CSV_HEADER.len() {
        return Err(format!("expected {} fields, got {}", CSV_HEADER.len(), row.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        row[i]
            .parse::<f64>()
            .map_err(|e| format!("field `{}`: {e}", CSV_HEADER[i]))
    };
    Ok(Candle {
        period_start: row[0]
            .parse::<i64>()
            .map_err(|e| format!("field `period_start`: {e}"))?,
        asset: row[1].to_string(),
        open: num(2)?,
        high: num(3)?,
        low: num(4)?,
        close: num(5)?,
        base_volume: num(6)?,
        quote_volume: num(7)?,
    })
}

/// Writes candles with shortest round-trip float formatting, so a re-read
/// yields bit-identical values.
pub fn write_candles_csv<W: Write>(writer: W, candles: &[Candle]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for c in candles {
        wtr.write_record([
            c.period_start.to_string(),
            c.asset.clone(),
            c.open.to_string(),
            c.high.to_string(),
            c.low.to_string(),
            c.close.to_string(),
            c.base_volume.to_string(),
            c.quote_volume.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
