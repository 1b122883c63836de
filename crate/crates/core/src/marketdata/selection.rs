use serde::{Deserialize, Serialize};

use super::candle::{TimeRange, CASH_ASSET};
use super::store::CandleStore;
use crate::error::{Error, Result};

const DAY: i64 = 86_400;

/// Assets chosen for a portfolio, most traded first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSelection {
    pub assets: Vec<String>,
    pub window_days: u32,
    pub as_of: i64,
}

/// Picks the `count` assets with the highest mean quote volume over the
/// `window_days` days strictly before `as_of`. Nothing at or after `as_of`
/// is read. Ties go to the lexicographically smaller id.
pub fn select_assets(
    store: &CandleStore,
    count: usize,
    window_days: u32,
    as_of: i64,
) -> Result<AssetSelection> {
    let window = TimeRange::new(as_of - window_days as i64 * DAY, as_of)?;
    let mut ranked = Vec::new();
    for asset in store.assets()? {
        if asset == CASH_ASSET {
            continue;
        }
        if let Some(volume) = store.mean_quote_volume(&asset, window)? {
            ranked.push((asset, volume));
        }
    }
    if ranked.len() < count {
        return Err(Error::Config(format!(
            "only {} assets have volume history in the {window_days} days before {as_of}; {count} requested",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(count);
    Ok(AssetSelection {
        assets: ranked.into_iter().map(|(a, _)| a).collect(),
        window_days,
        as_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::Candle;

    fn bar(asset: &str, ts: i64, qv: f64) -> Candle {
        Candle {
            period_start: ts,
            asset: asset.into(),
            open: 1.0,
            high: 1.0,
            low: 1.0,
            close: 1.0,
            base_volume: qv,
            quote_volume: qv,
        }
    }

    #[test]
    fn ranks_by_mean_volume_with_ties_and_zero_last() {
        let as_of = 10 * DAY;
        let candles = vec![
            bar("ZEC", as_of - DAY, 5.0),
            bar("ETH", as_of - DAY, 5.0),
            bar("XMR", as_of - DAY, 0.0),
            bar("LTC", as_of - 2 * DAY, 2.0),
            bar("LTC", as_of - DAY, 4.0),
            bar(CASH_ASSET, as_of - DAY, 100.0),
        ];
        let store = CandleStore::from_candles(&candles).unwrap();
        let sel = select_assets(&store, 4, 3, as_of).unwrap();
        assert_eq!(sel.assets, vec!["ETH", "ZEC", "LTC", "XMR"]);
    }

    #[test]
    fn ignores_data_at_or_after_as_of() {
        let as_of = 10 * DAY;
        let mut candles = vec![bar("A", as_of - DAY, 1.0), bar("B", as_of - DAY, 2.0)];
        let store = CandleStore::from_candles(&candles).unwrap();
        let before = select_assets(&store, 2, 5, as_of).unwrap();
        candles.push(bar("A", as_of, 1e9));
        candles.push(bar("C", as_of + DAY, 1e9));
        let store = CandleStore::from_candles(&candles).unwrap();
        assert_eq!(select_assets(&store, 2, 5, as_of).unwrap(), before);
    }

    #[test]
    fn too_few_assets_is_config_error() {
        let store = CandleStore::from_candles(&[bar("A", 0, 1.0)]).unwrap();
        assert!(matches!(
            select_assets(&store, 2, 1, DAY),
            Err(Error::Config(_))
        ));
    }
}
