//! Turning a config plus a data source into a price matrix and split.

use std::path::Path;

use eiie::marketdata::{
    build_global_matrix, read_candles_csv, select_assets, synthetic_candles, CandleStore, ExchangeClient,
    GlobalPriceMatrix, MarketSpec, TimeRange,
};
use eiie::trainer::DataSplit;
use eiie::{Error, Result};

use crate::config::{parse_date, NetConfig};

/// The market a run trades on.
#[derive(Debug, Clone)]
pub struct Market {
    pub matrix: GlobalPriceMatrix,
    pub split: DataSplit,
}

/// Opens a candle source: a `.csv` interchange file, a `.json` synthetic
/// market description, or an embedded store file.
pub fn open_store(path: &Path) -> Result<CandleStore> {
    if !path.exists() {
        return Err(Error::Config(format!("data source {} does not exist", path.display())));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let file = std::fs::File::open(path)?;
            CandleStore::from_candles(&read_candles_csv(std::io::BufReader::new(file), None)?)
        }
        Some("json") => {
            let spec: MarketSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            CandleStore::from_candles(&synthetic_candles(&spec)?)
        }
        _ => CandleStore::open_read_only(path),
    }
}

/// The config's date range floored to whole periods.
pub fn config_range(config: &NetConfig) -> Result<TimeRange> {
    let period = config.input.global_period;
    let start = parse_date(&config.input.start_date)?;
    let end = parse_date(&config.input.end_date)?;
    TimeRange::new(start.div_euclid(period) * period, end.div_euclid(period) * period)
}

/// Selects assets by trailing volume before the first test period and
/// aligns them over the configured range.
pub fn load_market(config: &NetConfig, store: &CandleStore) -> Result<Market> {
    let period = config.input.global_period;
    let range = config_range(config)?;
    let periods = range.periods(period);
    let split = DataSplit::new(periods, config.input.test_portion, config.input.portion_reversed)?;
    let as_of = range.start + split.test.start as i64 * period;
    let selection = select_assets(store, config.input.coin_number, config.input.volume_average_days, as_of)?;
    let matrix = build_global_matrix(store, &selection, period, range)?;
    let needed = config.input.window_size + config.training.batch_size + 1;
    if split.train.len() < needed {
        return Err(Error::Config(format!(
            "training split has {} periods; window and batch need at least {needed}",
            split.train.len()
        )));
    }
    Ok(Market { matrix, split })
}

/// Downloads the configured range (plus the volume window before it) for
/// `assets` into the store at `path`. Returns the number of candles stored.
pub fn download(config: &NetConfig, client: &ExchangeClient, assets: &[String], path: &Path) -> Result<usize> {
    if assets.is_empty() {
        return Err(Error::Config("download needs at least one asset (--assets)".into()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let period = config.input.global_period;
    let range = config_range(config)?;
    let lead = i64::from(config.input.volume_average_days) * 86_400;
    let fetch = TimeRange::new((range.start - lead).div_euclid(period) * period, range.end)?;
    let mut store = CandleStore::open(path)?;
    let mut total = 0;
    for asset in assets {
        let candles = client.fetch(asset, fetch, period)?;
        total += store.insert(&candles)?;
    }
    Ok(total)
}
