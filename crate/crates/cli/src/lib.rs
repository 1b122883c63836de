//! The `eiie` command line: run-folder generation, data download,
//! training, backtests, plots and tables.

pub mod config;
pub mod data;
pub mod report;
pub mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use eiie::marketdata::ExchangeClient;
use eiie::{Error, Result};

use crate::config::{parse_config, NetConfig};
use crate::report::{emit_plot, emit_table, TableFormat, TableRow};
use crate::run::{parse_algo, Algo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    #[value(name = "generate")]
    Generate,
    #[value(name = "download_data")]
    DownloadData,
    #[value(name = "train")]
    Train,
    #[value(name = "backtest")]
    Backtest,
    #[value(name = "plot")]
    Plot,
    #[value(name = "table")]
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Raw,
    Csv,
    Html,
    Latex,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Raw => TableFormat::Raw,
            Format::Csv => TableFormat::Csv,
            Format::Html => TableFormat::Html,
            Format::Latex => TableFormat::Latex,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eiie", version, about = "Train and evaluate EIIE portfolio agents against classical baselines")]
pub struct Cli {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Number of run folders to create (generate).
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Run folders trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub processes: usize,
    /// Run folder index or baseline name to backtest.
    #[arg(long)]
    pub algo: Option<String>,
    /// Comma separated run folder indexes and baseline names (plot, table).
    #[arg(long, value_delimiter = ',')]
    pub algos: Vec<String>,
    /// Comma separated display names, one per entry of --algos.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    pub format: Format,
    /// Accepted for compatibility; computation always runs on the CPU.
    #[arg(long)]
    pub device: Option<String>,
    #[arg(long, default_value = "net_config.json")]
    pub config: PathBuf,
    /// Root of the run folders.
    #[arg(long, default_value = "train_package")]
    pub folder: PathBuf,
    /// Candle source: store file, `.csv` candles or `.json` synthetic market.
    #[arg(long, default_value = "database/Data.db")]
    pub data: PathBuf,
    /// Exchange endpoint for download_data and online configs.
    #[arg(long, default_value = "https://poloniex.com/public")]
    pub url: String,
    /// Assets to download.
    #[arg(long, value_delimiter = ',')]
    pub assets: Vec<String>,
    /// Plot file (default `<folder>/result.svg`).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn load_config(path: &std::path::Path) -> Result<NetConfig> {
    let parsed = parse_config(path)?;
    if !parsed.unknown_keys.is_empty() {
        eprintln!("warning: ignoring unknown config keys: {}", parsed.unknown_keys.join(", "));
    }
    Ok(parsed.config)
}

fn labels_for(cli: &Cli) -> Result<Vec<String>> {
    if cli.algos.is_empty() {
        return Err(Error::Config("--algos is required".into()));
    }
    if cli.labels.is_empty() {
        return Ok(cli.algos.clone());
    }
    if cli.labels.len() != cli.algos.len() {
        return Err(Error::Config(format!(
            "--labels has {} entries but --algos has {}",
            cli.labels.len(),
            cli.algos.len()
        )));
    }
    Ok(cli.labels.clone())
}

/// Runs one parsed command, writing reports to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let market = || -> Result<(NetConfig, data::Market)> {
        let config = load_config(&cli.config)?;
        let store = data::open_store(&cli.data)?;
        let market = data::load_market(&config, &store)?;
        Ok((config, market))
    };
    match cli.mode {
        Mode::Generate => {
            let config = load_config(&cli.config)?;
            let dirs = run::generate(&cli.folder, &config, cli.repeat)?;
            writeln!(out, "created {} run folders under {}", dirs.len(), cli.folder.display())?;
        }
        Mode::DownloadData => {
            let config = load_config(&cli.config)?;
            let client = ExchangeClient::new(cli.url.clone());
            let n = data::download(&config, &client, &cli.assets, &cli.data)?;
            writeln!(out, "stored {n} candles in {}", cli.data.display())?;
        }
        Mode::Train => {
            let config = load_config(&cli.config).ok();
            if config.as_ref().is_some_and(|c| c.input.online) {
                if cli.processes > 1 {
                    return Err(Error::Config("online data download needs --processes=1".into()));
                }
                let client = ExchangeClient::new(cli.url.clone());
                data::download(config.as_ref().expect("checked"), &client, &cli.assets, &cli.data)?;
            }
            let rows = run::train_all(&cli.folder, &cli.data, cli.processes)?;
            for r in &rows {
                writeln!(
                    out,
                    "run {}: test value {:.6}, backtest value {:.6}",
                    r.index, r.test_fapv, r.backtest_fapv
                )?;
            }
        }
        Mode::Backtest => {
            let algo = cli
                .algo
                .as_deref()
                .ok_or_else(|| Error::Config("--algo is required for backtest".into()))?;
            let records = match parse_algo(algo) {
                Algo::Run(i) => {
                    let dir = run::run_dir(&cli.folder, i);
                    let config = load_config(&dir.join(run::CONFIG_FILE))?;
                    let store = data::open_store(&cli.data)?;
                    let m = data::load_market(&config, &store)?;
                    run::backtest_run(&dir, &config, &m)?
                }
                Algo::Baseline(name) => {
                    let (config, m) = market()?;
                    run::backtest_baseline(&cli.folder, &name, &config, &m)?
                }
                Algo::NotImplemented(name) => {
                    return Err(Error::Config(format!("baseline `{name}` is not implemented")));
                }
            };
            writeln!(out, "{}", run::describe(&records))?;
        }
        Mode::Plot => {
            let labels = labels_for(cli)?;
            let mut cache = None;
            let mut get_market = || -> Result<(NetConfig, data::Market)> {
                if cache.is_none() {
                    cache = Some(market()?);
                }
                Ok(cache.clone().expect("filled"))
            };
            let mut series = Vec::new();
            for (algo, label) in cli.algos.iter().zip(labels) {
                match run::load_records(&cli.folder, &parse_algo(algo), &mut get_market)? {
                    Some(records) => series.push((label, records)),
                    None => eprintln!("warning: `{algo}` is not implemented; left out of the plot"),
                }
            }
            let svg = emit_plot(&series)?;
            let path = cli.output.clone().unwrap_or_else(|| cli.folder.join("result.svg"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, svg)?;
            writeln!(out, "wrote {}", path.display())?;
        }
        Mode::Table => {
            let labels = labels_for(cli)?;
            let mut cache = None;
            let mut get_market = || -> Result<(NetConfig, data::Market)> {
                if cache.is_none() {
                    cache = Some(market()?);
                }
                Ok(cache.clone().expect("filled"))
            };
            let mut rows = Vec::new();
            for (algo, label) in cli.algos.iter().zip(labels) {
                let report = match run::load_records(&cli.folder, &parse_algo(algo), &mut get_market)? {
                    Some(records) => Some(eiie::metrics::PerformanceReport::from_records(&records)?),
                    None => None,
                };
                rows.push(TableRow { label, report });
            }
            write!(out, "{}", emit_table(&rows, cli.format.into())?)?;
        }
    }
    Ok(())
}

/// Parses `args` and runs them; returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
