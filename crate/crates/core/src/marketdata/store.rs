use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rusqlite::{params, Connection, OpenFlags};

use super::candle::{read_candles_csv, write_candles_csv, Candle, TimeRange};
use crate::error::Result;

/// Single-file candle store keyed by `(asset, period_start)`.
///
/// SQLite gives concurrent readers and exclusive writers when several
/// handles open the same file; an in-memory store is private to its handle.
pub struct CandleStore {
    conn: Connection,
}

const SCHEMA: &str = "CREATE TABLE IF NOT EXISTS candles (
    asset TEXT NOT NULL,
    period_start INTEGER NOT NULL,
    open REAL NOT NULL,
    high REAL NOT NULL,
    low REAL NOT NULL,
    close REAL NOT NULL,
    base_volume REAL NOT NULL,
    quote_volume REAL NOT NULL,
    PRIMARY KEY (asset, period_start)
) WITHOUT ROWID";

impl CandleStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    /// Opens an existing store without write access.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self> {
        let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY)?;
        Ok(Self { conn })
    }

    pub fn in_memory() -> Result<Self> {
        let conn = Connection::open_in_memory()?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    /// Store holding the given candles.
    pub fn from_candles(candles: &[Candle]) -> Result<Self> {
        let mut store = Self::in_memory()?;
        store.insert(candles)?;
        Ok(store)
    }

    /// Upserts candles; an existing `(asset, period_start)` row is replaced.
    pub fn insert(&mut self, candles: &[Candle]) -> Result<usize> {
        let tx = self.conn.transaction()?;
        {
            let mut stmt = tx.prepare_cached(
                "INSERT OR REPLACE INTO candles
                 (asset, period_start, open, high, low, close, base_volume, quote_volume)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            )?;
            for c in candles {
                stmt.execute(params![
                    c.asset,
                    c.period_start,
                    c.open,
                    c.high,
                    c.low,
                    c.close,
                    c.base_volume,
                    c.quote_volume
                ])?;
            }
        }
        tx.commit()?;
        Ok(candles.len())
    }

    /// Distinct asset ids, sorted.
    pub fn assets(&self) -> Result<Vec<String>> {
        let mut stmt = self
            .conn
            .prepare_cached("SELECT DISTINCT asset FROM candles ORDER BY asset")?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
        Ok(rows.collect::<std::result::Result<_, _>>()?)
    }

    /// Candles of one asset inside `range`, sorted by time.
    pub fn candles(&self, asset: &str, range: TimeRange) -> Result<Vec<Candle>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT asset, period_start, open, high, low, close, base_volume, quote_volume
             FROM candles WHERE asset = ?1 AND period_start >= ?2 AND period_start < ?3
             ORDER BY period_start",
        )?;
        let rows = stmt.query_map(params![asset, range.start, range.end], row_to_candle)?;
        Ok(rows.collect::<std::result::Result<_, _>>()?)
    }

    /// Every stored candle, ordered by asset then time.
    pub fn all_candles(&self) -> Result<Vec<Candle>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT asset, period_start, open, high, low, close, base_volume, quote_volume
             FROM candles ORDER BY asset, period_start",
        )?;
        let rows = stmt.query_map([], row_to_candle)?;
        Ok(rows.collect::<std::result::Result<_, _>>()?)
    }

    /// Mean quote volume of `asset` over the candles present in `range`;
    /// `None` when there are none.
    pub fn mean_quote_volume(&self, asset: &str, range: TimeRange) -> Result<Option<f64>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT AVG(quote_volume) FROM candles
             WHERE asset = ?1 AND period_start >= ?2 AND period_start < ?3",
        )?;
        Ok(stmt.query_row(params![asset, range.start, range.end], |r| {
            r.get::<_, Option<f64>>(0)
        })?)
    }

    pub fn import_csv(&mut self, path: impl AsRef<Path>, period: Option<i64>) -> Result<usize> {
        let candles = read_candles_csv(BufReader::new(File::open(path)?), period)?;
        self.insert(&candles)
    }

    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let candles = self.all_candles()?;
        write_candles_csv(BufWriter::new(File::create(path)?), &candles)
    }
}

fn row_to_candle(r: &rusqlite::Row<'_>) -> rusqlite::Result<Candle> {
    Ok(Candle {
        asset: r.get(0)?,
        period_start: r.get(1)?,
        open: r.get(2)?,
        high: r.get(3)?,
        low: r.get(4)?,
        close: r.get(5)?,
        base_volume: r.get(6)?,
        quote_volume: r.get(7)?,
    })
}
