//! Candle acquisition, asset selection and price tensors.

mod candle;
mod exchange;
mod matrix;
mod selection;
mod store;
pub mod synthetic;

pub use candle::{
    read_candles_csv, write_candles_csv, Candle, TimeRange, CASH_ASSET, CSV_HEADER,
    DEFAULT_PERIOD,
};
pub use exchange::{fetch_candles, parse_chart_json, CandleSource, ExchangeClient};
pub use matrix::{build_global_matrix, GlobalPriceMatrix, MarketView, PriceTensor};
pub use selection::{select_assets, AssetSelection};
pub use store::CandleStore;
pub use synthetic::{generate_synthetic_market, synthetic_candles, AssetSpec, MarketSpec, Regime};
