//! Run folders: generation, training, backtests and the summary file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use eiie::backtest::{read_records_csv, run_backtest, write_records_csv, BacktestRecord};
use eiie::baselines::{create_strategy, StrategyParams, EXCLUDED};
use eiie::marketdata::CandleStore;
use eiie::metrics::PerformanceReport;
use eiie::policy::{build_network, PolicyNetwork};
use eiie::pvm::PortfolioVectorMemory;
use eiie::trainer::{reward_summary, EiieAgent, Trainer};
use eiie::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, NetConfig};
use crate::data::{load_market, Market};

pub const CONFIG_FILE: &str = "net_config.json";
pub const SUMMARY_FILE: &str = "train_summary.csv";
pub const NETFILE: &str = "netfile.bin";
pub const PVM_FILE: &str = "pvm.json";
pub const BACKTEST_FILE: &str = "backtest.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LOG_FILE: &str = "programlog";

pub fn run_dir(root: &Path, index: usize) -> PathBuf {
    root.join(index.to_string())
}

/// Creates `repeat` run folders `0..repeat`, each holding a copy of the
/// config. Existing folders with those indexes are replaced.
pub fn generate(root: &Path, config: &NetConfig, repeat: usize) -> Result<Vec<PathBuf>> {
    if repeat == 0 {
        return Err(Error::Config("--repeat must be at least 1".into()));
    }
    fs::create_dir_all(root)?;
    let mut out = Vec::with_capacity(repeat);
    for i in 0..repeat {
        let dir = run_dir(root, i);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(CONFIG_FILE), config.to_pretty_json())?;
        out.push(dir);
    }
    Ok(out)
}

/// Numeric run folder indexes under `root`, ascending.
pub fn run_indexes(root: &Path) -> Result<Vec<usize>> {
    let mut idx = Vec::new();
    if !root.exists() {
        return Ok(idx);
    }
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        if let Some(i) = entry.file_name().to_str().and_then(|s| s.parse::<usize>().ok()) {
            if entry.path().join(CONFIG_FILE).exists() {
                idx.push(i);
            }
        }
    }
    idx.sort_unstable();
    Ok(idx)
}

/// One line of `train_summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub index: usize,
    pub seed: u64,
    pub config_hash: String,
    pub topology: String,
    pub steps: usize,
    pub test_fapv: f64,
    pub test_log_mean: f64,
    pub test_log_mean_free: f64,
    pub backtest_fapv: f64,
    pub backtest_sharpe: Option<f64>,
    pub backtest_mdd: f64,
}

fn load_run_config(dir: &Path) -> Result<NetConfig> {
    Ok(parse_config(&dir.join(CONFIG_FILE))?.config)
}

/// Trains the agent of run folder `index` and backtests it with rolling
/// training over the test split.
pub fn train_run(root: &Path, index: usize, store: &CandleStore) -> Result<SummaryRow> {
    let dir = run_dir(root, index);
    let config = load_run_config(&dir)?;
    let market = load_market(&config, store)?;
    let seed = index as u64;
    let network = build_network(
        &config.topology()?,
        market.matrix.n_assets(),
        config.input.window_size,
        config.input.feature_number,
        seed,
    )?;
    let mut trainer = Trainer::new(network, market.matrix.n_periods(), config.training_config(seed))?;
    let log = trainer.train_offline(&market.matrix, &market.split)?;
    let test = trainer.evaluate(&market.matrix, market.split.test_rewards())?;
    trainer.network().save(&dir.join(NETFILE))?;
    trainer.pvm().save(&dir.join(PVM_FILE))?;
    fs::write(dir.join(METRICS_FILE), log.to_csv())?;

    let records = backtest_run(&dir, &config, &market)?;
    let mut text = log.text;
    for (i, r) in records.iter().enumerate() {
        let _ = write!(text, "the step is {}\ntotal assets are {:.6} BTC\n", i + 1, r.p);
    }
    fs::write(dir.join(LOG_FILE), text)?;
    let report = PerformanceReport::from_records(&records)?;
    Ok(SummaryRow {
        index,
        seed,
        config_hash: config.hash(),
        topology: trainer.network().kind().to_string(),
        steps: config.training.steps,
        test_fapv: test.portfolio_value,
        test_log_mean: test.mean_log_return,
        test_log_mean_free: test.mean_log_return_free,
        backtest_fapv: report.fapv,
        backtest_sharpe: report.sharpe,
        backtest_mdd: report.mdd,
    })
}

/// Restores the trained network and memory of `dir` and runs the test
/// split with rolling training, writing `backtest.csv`.
pub fn backtest_run(dir: &Path, config: &NetConfig, market: &Market) -> Result<Vec<BacktestRecord>> {
    let network = PolicyNetwork::load(&dir.join(NETFILE))?;
    let pvm = PortfolioVectorMemory::load(&dir.join(PVM_FILE))?;
    let seed = network.seed();
    let mut trainer = Trainer::new(network, market.matrix.n_periods(), config.training_config(seed))?;
    *trainer.pvm_mut() = pvm;
    let mut agent = EiieAgent::with_trainer(trainer);
    let records = run_backtest(&mut agent, &market.matrix, market.split.test_rewards(), config.commission(), true)?;
    write_records_csv(fs::File::create(dir.join(BACKTEST_FILE))?, &records)?;
    Ok(records)
}

/// Trains every run folder, `processes` at a time, and rewrites the
/// summary file.
pub fn train_all(root: &Path, store_path: &Path, processes: usize) -> Result<Vec<SummaryRow>> {
    let indexes = run_indexes(root)?;
    if indexes.is_empty() {
        return Err(Error::Config(format!("no run folders under {}; run generate first", root.display())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(processes.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<Result<SummaryRow>> = pool.install(|| {
        indexes
            .par_iter()
            .map(|&i| {
                // each worker opens its own store handle
                let store = crate::data::open_store(store_path)?;
                train_run(root, i, &store).map_err(|e| Error::Config(format!("run folder {i}: {e}")))
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    write_summary(root, &rows)?;
    Ok(rows)
}

/// Merges `rows` into the summary file, replacing rows with the same index.
pub fn write_summary(root: &Path, rows: &[SummaryRow]) -> Result<()> {
    let path = root.join(SUMMARY_FILE);
    let mut all = read_summary(root).unwrap_or_default();
    all.retain(|r| rows.iter().all(|n| n.index != r.index));
    all.extend(rows.iter().cloned());
    all.sort_by_key(|r| r.index);
    let mut w = csv::Writer::from_path(path)?;
    for r in &all {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(root: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(root.join(SUMMARY_FILE))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// What `--algos` entries refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Algo {
    Run(usize),
    Baseline(String),
    NotImplemented(String),
}

pub fn parse_algo(s: &str) -> Algo {
    let key = s.trim().to_ascii_lowercase();
    if let Ok(i) = key.parse() {
        Algo::Run(i)
    } else if EXCLUDED.contains(&key.as_str()) {
        Algo::NotImplemented(key)
    } else {
        Algo::Baseline(key)
    }
}

fn baseline_path(root: &Path, name: &str) -> PathBuf {
    root.join("baselines").join(format!("{name}.csv"))
}

/// Backtests a classical strategy over the test split and stores the
/// records under `<root>/baselines/`.
pub fn backtest_baseline(root: &Path, name: &str, config: &NetConfig, market: &Market) -> Result<Vec<BacktestRecord>> {
    let mut strategy = create_strategy(name, market.matrix.n_assets(), &StrategyParams::default())?;
    let records = run_backtest(&mut strategy, &market.matrix, market.split.test_rewards(), config.commission(), false)?;
    let path = baseline_path(root, name);
    fs::create_dir_all(path.parent().expect("has parent"))?;
    write_records_csv(fs::File::create(&path)?, &records)?;
    Ok(records)
}

/// Stored records of `algo`. A baseline that has not been run yet is
/// backtested once through `market` and cached.
pub fn load_records(
    root: &Path,
    algo: &Algo,
    market: &mut dyn FnMut() -> Result<(NetConfig, Market)>,
) -> Result<Option<Vec<BacktestRecord>>> {
    match algo {
        Algo::Run(i) => {
            let path = run_dir(root, *i).join(BACKTEST_FILE);
            let file = fs::File::open(&path)
                .map_err(|_| Error::Config(format!("run folder {i} has no {BACKTEST_FILE}; train it first")))?;
            Ok(Some(read_records_csv(file)?))
        }
        Algo::Baseline(name) => {
            let path = baseline_path(root, name);
            if !path.exists() {
                let (config, m) = market()?;
                backtest_baseline(root, name, &config, &m)?;
            }
            Ok(Some(read_records_csv(fs::File::open(path)?)?))
        }
        Algo::NotImplemented(_) => Ok(None),
    }
}

/// Mean log return and final value of stored records, as printed after a
/// backtest.
pub fn describe(records: &[BacktestRecord]) -> String {
    let s = reward_summary(records);
    format!(
        "final portfolio value {:.6}, mean log return {:.8}, without commission {:.8}",
        s.portfolio_value, s.mean_log_return, s.mean_log_return_free
    )
}
