use std::path::PathBuf;
use std::time::Duration;

use serde::Deserialize;

use super::candle::{read_candles_csv, Candle, TimeRange, CASH_ASSET};
use super::store::CandleStore;
use crate::error::{Error, Result};

/// HTTP client for chart-data endpoints returning JSON candle arrays.
///
/// Requests are `GET {base_url}?command=returnChartData&currencyPair=
/// {cash}_{asset}&start=..&end=..&period=..`. Each array element carries
/// `date, open, high, low, close, volume, quoteVolume`, where `volume` is in
/// cash units and `quoteVolume` in asset units.
#[derive(Debug, Clone)]
pub struct ExchangeClient {
    pub base_url: String,
    pub timeout: Duration,
    pub retries: usize,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ChartPoint {
    date: i64,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
    quote_volume: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ChartReply {
    Points(Vec<ChartPoint>),
    Failure { error: String },
}

impl ExchangeClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: Duration::from_secs(30),
            retries: 3,
        }
    }

    /// One request; transport failures and 5xx replies are retryable.
    fn request(&self, asset: &str, range: TimeRange, period: i64) -> Result<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let reply = agent
            .get(&self.base_url)
            .query("command", "returnChartData")
            .query("currencyPair", format!("{CASH_ASSET}_{asset}"))
            .query("start", range.start.to_string())
            .query("end", (range.end - 1).to_string())
            .query("period", period.to_string())
            .call();
        match reply {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| Error::Network(e.to_string())),
            Err(ureq::Error::StatusCode(code)) if code < 500 => Err(Error::Validation(format!(
                "exchange rejected request for {asset}: http {code}"
            ))),
            Err(e) => Err(Error::Network(e.to_string())),
        }
    }

    pub fn fetch(&self, asset: &str, range: TimeRange, period: i64) -> Result<Vec<Candle>> {
        let mut attempt = 0;
        let body = loop {
            match self.request(asset, range, period) {
                Err(e) if e.is_retryable() && attempt < self.retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(200 * attempt as u64));
                }
                other => break other?,
            }
        };
        parse_chart_json(&body, asset, period)
    }
}

/// Decodes a chart-data reply into validated candles.
pub fn parse_chart_json(body: &str, asset: &str, period: i64) -> Result<Vec<Candle>> {
    let reply: ChartReply = serde_json::from_str(body).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let points = match reply {
        ChartReply::Points(points) => points,
        ChartReply::Failure { error } => return Err(Error::Validation(error)),
    };
    points
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let candle = Candle {
                period_start: p.date,
                asset: asset.to_string(),
                open: p.open,
                high: p.high,
                low: p.low,
                close: p.close,
                base_volume: p.quote_volume,
                quote_volume: p.volume,
            };
            candle.validate(Some(period)).map_err(|message| Error::Parse {
                line: i + 1,
                message: format!("element {i}: {message}"),
            })?;
            Ok(candle)
        })
        .collect()
}

/// Where candles come from.
pub enum CandleSource<'a> {
    Exchange(&'a ExchangeClient),
    Csv(PathBuf),
    Store(&'a CandleStore),
}

/// Candles of `asset` inside `range`, sorted and deduplicated (later
/// duplicates win).
pub fn fetch_candles(
    source: &CandleSource<'_>,
    asset: &str,
    range: TimeRange,
    period: i64,
) -> Result<Vec<Candle>> {
    if period <= 0 || !range.is_aligned(period) {
        return Err(Error::Range(format!(
            "range [{}, {}) not aligned to period {period}",
            range.start, range.end
        )));
    }
    let raw = match source {
        CandleSource::Exchange(client) => client.fetch(asset, range, period)?,
        CandleSource::Csv(path) => {
            read_candles_csv(std::io::BufReader::new(std::fs::File::open(path)?), Some(period))?
        }
        CandleSource::Store(store) => store.candles(asset, range)?,
    };
    let mut out: Vec<Candle> = Vec::with_capacity(raw.len());
    for c in raw
        .into_iter()
        .filter(|c| c.asset == asset && range.contains(c.period_start))
    {
        out.push(c);
    }
    // stable sort keeps arrival order among equal timestamps; keep the last
    out.sort_by_key(|c| c.period_start);
    let mut dedup: Vec<Candle> = Vec::with_capacity(out.len());
    for c in out {
        match dedup.last_mut() {
            Some(last) if last.period_start == c.period_start => *last = c,
            _ => dedup.push(c),
        }
    }
    Ok(dedup)
}
