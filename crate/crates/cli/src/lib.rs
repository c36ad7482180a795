//! Command-line front end: argument and config handling plus the four
//! commands (`ingest`, `menu`, `trade`, `compare`).

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use pdmarket::dataset_io::{atomic_write, read_dataset, write_dataset, DatasetMeta};
use pdmarket::experiment::{run_comparison, SweepPlan};
use pdmarket::ingest::{load_survey, replicate, synth_dataset, AttributeModel, CategoricalAttribute, MixSpec};
use pdmarket::sampling::SamplingConfig;
use pdmarket::store::TradeStore;
use pdmarket::trading::{
    execute_trade, generate_price_menu, preview_trade, BaselineMode, Mechanism, RmseMode, TradeConfig, TradeRequest,
};
use pdmarket::{CountQuery, Dataset, ErrorKind, Money};

pub const DEFAULT_LEVEL_COLUMN: &str = "perturbation";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] pdmarket::Error),

    #[error("usage: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Engine(e) => match e.kind() {
                ErrorKind::Domain => 1,
                ErrorKind::Parse => 3,
                ErrorKind::Schema => 4,
                ErrorKind::Budget => 5,
                ErrorKind::Arbitrage => 6,
                ErrorKind::Infeasible => 7,
                ErrorKind::Io => 8,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "pdmarket", version, about = "Price and sell noisy count queries over personal data")]
pub struct Cli {
    /// TOML file supplying defaults for any flag (keys in kebab-case).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset file from a survey table or a synthetic population.
    Ingest(IngestArgs),
    /// Print the price menu for a query.
    Menu(MenuArgs),
    /// Buy a query answer.
    Trade(TradeArgs),
    /// Sweep prices for both mechanisms and emit the rows as CSV.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Survey CSV with one row per respondent.
    #[arg(long)]
    pub survey: Option<PathBuf>,
    /// Column holding the perturbation level.
    #[arg(long)]
    pub level_col: Option<String>,
    /// Copies of every respondent.
    #[arg(long)]
    pub replicate: Option<usize>,
    /// Number of synthetic owners to generate instead of reading a survey.
    #[arg(long)]
    pub synth: Option<usize>,
    /// Level proportions: very high, high, low, very low.
    #[arg(long)]
    pub mix: Option<String>,
    /// Synthetic attribute, `name=category:weight,...`; repeatable.
    #[arg(long)]
    pub attr: Vec<String>,
    /// Seed for synthetic generation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset file to write; a `.meta.json` sidecar is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Dataset file written by `ingest`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Predicate, inline or read from a file (`@path` or an existing path).
    #[arg(long)]
    pub query: Option<String>,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Market maker's flat profit.
    #[arg(long)]
    pub chi: Option<f64>,
    /// Candidate subsets per trade.
    #[arg(long)]
    pub h: Option<usize>,
    /// Perturbation runs for Monte-Carlo RMSE.
    #[arg(long)]
    pub phi: Option<usize>,
    /// `exact` or `monte-carlo`.
    #[arg(long)]
    pub rmse_mode: Option<String>,
    /// `budget` or `spec`.
    #[arg(long)]
    pub baseline_mode: Option<String>,
    /// Master seed; every random choice derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Population variance proxy used for the sample size.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Confidence z-score used for the sample size.
    #[arg(long)]
    pub cls: Option<f64>,
    /// Margin of error used for the sample size.
    #[arg(long)]
    pub mer: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MenuArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Comma-separated candidate prices.
    #[arg(long)]
    pub prices: Option<String>,
    /// Write the menu here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TradeArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Price the buyer pays.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Buyer identity; each buyer may buy a given query once.
    #[arg(long)]
    pub buyer: Option<String>,
    /// `balanced` or `baseline`.
    #[arg(long)]
    pub mechanism: Option<String>,
    /// Trade store; defaults to `<dataset>.trades.jsonl`.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Print the receipt without recording or settling anything.
    #[arg(long)]
    pub dry_run: bool,
    /// Write the receipt here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Comma-separated, strictly increasing prices.
    #[arg(long)]
    pub prices: Option<String>,
    /// Repetitions per price and mechanism.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Write the sweep here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Values a config file may provide. Flags win over these.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Config {
    pub dataset: Option<PathBuf>,
    pub query: Option<String>,
    pub budget: Option<f64>,
    pub prices: Option<Vec<f64>>,
    pub chi: Option<f64>,
    pub h: Option<usize>,
    pub phi: Option<usize>,
    pub rmse_mode: Option<String>,
    pub baseline_mode: Option<String>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub cls: Option<f64>,
    pub mer: Option<f64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
    pub dry_run: Option<bool>,
    pub mechanism: Option<String>,
    pub buyer: Option<String>,
    pub store: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub level_col: Option<String>,
    pub replicate: Option<usize>,
    pub synth: Option<usize>,
    pub mix: Option<String>,
    pub attr: Option<Vec<String>>,
}

pub fn parse_config(text: &str) -> CliResult<Config> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(pdmarket::Error::from)?;
            parse_config(&text)
        }
    }
}

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

pub fn parse_prices(text: &str) -> CliResult<Vec<Money>> {
    text.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>().map_err(|_| pdmarket::Error::Parse(format!("bad price {p:?}")).into())
        })
        .collect()
}

/// Strictly increasing and non-empty.
fn check_grid(prices: &[Money]) -> CliResult<()> {
    if prices.is_empty() {
        return Err(CliError::Usage("the price grid is empty".into()));
    }
    if prices.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::Usage(format!("prices must be strictly increasing, got {prices:?}")));
    }
    Ok(())
}

fn resolve_prices(flag: Option<&str>, cfg: &Config) -> CliResult<Vec<Money>> {
    let prices = match flag {
        Some(text) => parse_prices(text)?,
        None => required(cfg.prices.clone(), "prices")?,
    };
    check_grid(&prices)?;
    Ok(prices)
}

fn resolve_query(flag: Option<String>, cfg: &Config) -> CliResult<CountQuery> {
    let raw = required(flag.or_else(|| cfg.query.clone()), "query")?;
    let text = if let Some(path) = raw.strip_prefix('@') {
        std::fs::read_to_string(path).map_err(pdmarket::Error::from)?
    } else if Path::new(&raw).is_file() {
        std::fs::read_to_string(&raw).map_err(pdmarket::Error::from)?
    } else {
        raw
    };
    Ok(CountQuery::parse(text.trim())?)
}

fn resolve_dataset(flag: Option<PathBuf>, cfg: &Config) -> CliResult<(PathBuf, Dataset)> {
    let path = required(flag.or_else(|| cfg.dataset.clone()), "dataset")?;
    let (dataset, _) = read_dataset(&path)?;
    Ok((path, dataset))
}

fn resolve_engine(args: &EngineArgs, cfg: &Config) -> CliResult<TradeConfig> {
    let defaults = TradeConfig::default();
    let sampling = SamplingConfig {
        dt: args.dt.or(cfg.dt).unwrap_or(defaults.sampling.dt),
        cls: args.cls.or(cfg.cls).unwrap_or(defaults.sampling.cls),
        mer: args.mer.or(cfg.mer).unwrap_or(defaults.sampling.mer),
        h: args.h.or(cfg.h).unwrap_or(defaults.sampling.h),
    };
    sampling.validate()?;
    let rmse_mode = match args.rmse_mode.as_ref().or(cfg.rmse_mode.as_ref()) {
        Some(s) => s.parse::<RmseMode>()?,
        None => defaults.rmse_mode,
    };
    let baseline_mode = match args.baseline_mode.as_ref().or(cfg.baseline_mode.as_ref()) {
        Some(s) => s.parse::<BaselineMode>()?,
        None => defaults.baseline_mode,
    };
    Ok(TradeConfig {
        chi: args.chi.or(cfg.chi).unwrap_or(defaults.chi),
        sampling,
        phi: args.phi.or(cfg.phi).unwrap_or(defaults.phi),
        rmse_mode,
        baseline_mode,
        seed: args.seed.or(cfg.seed).unwrap_or(defaults.seed),
    })
}

/// Writes to `out` atomically, or to stdout when no path is given.
fn emit(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(path) => atomic_write(path, bytes)?,
        None => stdout.write_all(bytes).map_err(pdmarket::Error::from)?,
    }
    Ok(())
}

fn to_csv<T: serde::Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| pdmarket::Error::Parse(e.to_string()))?;
    }
    w.into_inner().map_err(|e| pdmarket::Error::Io(e.into_error()).into())
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args, &cfg, stdout),
        Command::Menu(args) => cmd_menu(args, &cfg, stdout),
        Command::Trade(args) => cmd_trade(args, &cfg, stdout),
        Command::Compare(args) => cmd_compare(args, &cfg, stdout),
    }
}

pub fn cmd_ingest(args: IngestArgs, cfg: &Config, stdout: &mut dyn Write) -> CliResult<()> {
    let out = required(args.out.or_else(|| cfg.out.clone()), "out")?;
    let survey = args.survey.or_else(|| cfg.survey.clone());
    let synth = args.synth.or(cfg.synth);
    let level_col = args.level_col.or_else(|| cfg.level_col.clone());
    let replicate_by = args.replicate.or(cfg.replicate);

    let (dataset, level_col) = match (survey, synth) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --survey or --synth, not both".into())),
        (None, None) => return Err(CliError::Usage("one of --survey or --synth is required".into())),
        (Some(path), None) => {
            let col = level_col.unwrap_or_else(|| DEFAULT_LEVEL_COLUMN.to_owned());
            (load_survey(&path, &col)?, Some(col))
        }
        (None, Some(n)) => {
            let mix = match args.mix.or_else(|| cfg.mix.clone()) {
                Some(m) => m.parse::<MixSpec>()?,
                None => MixSpec::uniform(),
            };
            let attrs = if args.attr.is_empty() { cfg.attr.clone().unwrap_or_default() } else { args.attr };
            let model = if attrs.is_empty() {
                AttributeModel::default()
            } else {
                AttributeModel {
                    attributes: attrs.iter().map(|a| a.parse::<CategoricalAttribute>()).collect::<Result<_, _>>()?,
                }
            };
            let seed = args.seed.or(cfg.seed).unwrap_or(0);
            (synth_dataset(n, &mix, &model, seed)?, None)
        }
    };
    let dataset = match replicate_by {
        Some(k) => replicate(&dataset, k)?,
        None => dataset,
    };
    write_dataset(&out, &dataset, &DatasetMeta::describe(&dataset, level_col.as_deref()))?;
    writeln!(stdout, "wrote {} owners to {}", dataset.len(), out.display()).map_err(pdmarket::Error::from)?;
    Ok(())
}

pub fn cmd_menu(args: MenuArgs, cfg: &Config, stdout: &mut dyn Write) -> CliResult<()> {
    let engine = resolve_engine(&args.engine, cfg)?;
    let prices = resolve_prices(args.prices.as_deref(), cfg)?;
    let query = resolve_query(args.query.query, cfg)?;
    let (_, dataset) = resolve_dataset(args.query.dataset, cfg)?;
    let menu = generate_price_menu(&dataset, &query, &prices, &engine)?;
    let bytes = to_csv(&menu.rows)?;
    emit(args.out.or_else(|| cfg.out.clone()).as_deref(), &bytes, stdout)
}

pub fn cmd_trade(args: TradeArgs, cfg: &Config, stdout: &mut dyn Write) -> CliResult<()> {
    let engine = resolve_engine(&args.engine, cfg)?;
    let budget = required(args.budget.or(cfg.budget), "budget")?;
    let buyer = required(args.buyer.or_else(|| cfg.buyer.clone()), "buyer")?;
    let mechanism = match args.mechanism.or_else(|| cfg.mechanism.clone()) {
        Some(m) => m.parse::<Mechanism>()?,
        None => Mechanism::Balanced,
    };
    let dry_run = args.dry_run || cfg.dry_run.unwrap_or(false);
    let query = resolve_query(args.query.query, cfg)?;
    let (dataset_path, dataset) = resolve_dataset(args.query.dataset, cfg)?;
    let store_path = args.store.or_else(|| cfg.store.clone()).unwrap_or_else(|| {
        let mut p = dataset_path.into_os_string();
        p.push(".trades.jsonl");
        PathBuf::from(p)
    });
    let store = TradeStore::new(store_path);
    let mut ledger = store.ledger()?;
    let request = TradeRequest { buyer, query, budget };

    let receipt = if dry_run {
        ledger.check(&request.buyer, &request.query.key())?;
        preview_trade(mechanism, &dataset, &request, &engine)?
    } else {
        let receipt = execute_trade(mechanism, &dataset, &request, &engine, &mut ledger)?;
        store.settle(&receipt)?;
        receipt
    };
    let mut text = serde_json::to_string_pretty(&receipt).expect("receipts serialize");
    text.push('\n');
    emit(args.out.or_else(|| cfg.out.clone()).as_deref(), text.as_bytes(), stdout)
}

pub fn cmd_compare(args: CompareArgs, cfg: &Config, stdout: &mut dyn Write) -> CliResult<()> {
    let engine = resolve_engine(&args.engine, cfg)?;
    let prices = resolve_prices(args.prices.as_deref(), cfg)?;
    let reps = args.reps.or(cfg.reps).unwrap_or(1);
    let query = resolve_query(args.query.query, cfg)?;
    let (_, dataset) = resolve_dataset(args.query.dataset, cfg)?;
    let plan = SweepPlan { prices, reps, mechanisms: vec![Mechanism::Balanced, Mechanism::Baseline], config: engine };
    let rows = run_comparison(&dataset, &query, &plan)?;
    let bytes = to_csv(&rows)?;
    emit(args.out.or_else(|| cfg.out.clone()).as_deref(), &bytes, stdout)
}
