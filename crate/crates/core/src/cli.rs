//! Command-line front end. `run` is the whole program minus process exit, so
//! tests can drive it with in-memory streams.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backtest::{run_strategy, Portfolio, PriceSeries, StrategyKind, StrategySpec};
use crate::error::{Error, Result};
use crate::experiments::{
    critical_threshold_sweep, run_table1, run_table2, run_table3_with, solve_mdp, solve_pomdp,
    trajectory, MdpSolveReport, ModelKind, OutputFormat, PomdpSolveReport, Render, Reporting,
    ScenarioPreset, SweepParameter, TrajectoryReport,
};
use crate::grid::{GrowthState, Scenario, ScenarioOverrides};
use crate::mdp::DEFAULT_TIE_TOLERANCE;

/// Bull-market sample used when `--prices` is not given.
pub const BUNDLED_PRICES: &str = include_str!("../data/bull_market_sample.csv");

#[derive(Debug, Parser)]
#[command(
    name = "manip-lab",
    version,
    about = "Solve growth-grid manipulation models and run strategy backtests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Markdown)]
    pub format: FormatArg,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = DEFAULT_TIE_TOLERANCE)]
    pub tie_tolerance: f64,

    /// Reserved for stochastic rollouts; no current command draws random numbers.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => OutputFormat::Markdown,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportingArg {
    Region,
    Uniform,
}

impl From<ReportingArg> for Reporting {
    fn from(r: ReportingArg) -> Self {
        match r {
            ReportingArg::Region => Reporting::Region,
            ReportingArg::Uniform => Reporting::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    BuyAndHold,
    Honest,
    Spoofing,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::BuyAndHold => StrategyKind::BuyAndHold,
            StrategyArg::Honest => StrategyKind::Honest,
            StrategyArg::Spoofing => StrategyKind::Spoofing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Mdp,
    Pomdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    #[value(alias = "manip_cost")]
    ManipCost,
    #[value(alias = "toggle_probability")]
    ToggleProbability,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Values and optimal-action sets of the fully observed model.
    SolveMdp {
        /// Preset name or TOML file of overrides.
        #[arg(long, default_value = "mdp_baseline")]
        scenario: String,
    },
    /// Per-observation values and optimal-action sets of the partially observed model.
    SolvePomdp {
        #[arg(long, default_value = "pomdp_baseline")]
        scenario: String,
    },
    /// Strategy profitability comparison.
    Table1 {
        /// Price CSV files (tick,price_a,price_b); defaults to the bundled sample.
        #[arg(long, num_args = 1..)]
        prices: Vec<PathBuf>,
    },
    /// Optimal actions of the fully observed model under four regimes.
    Table2,
    /// Optimal actions of the partially observed model under four regimes.
    Table3 {
        /// Belief(s) each observation's action set is read at.
        #[arg(long, value_enum, default_value_t = ReportingArg::Uniform)]
        reporting: ReportingArg,
    },
    /// Locate the cost or probability at which manipulation stops being optimal.
    Sweep {
        #[arg(long, value_enum, default_value_t = ModelArg::Mdp)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = ParamArg::ManipCost)]
        param: ParamArg,
        /// Interval as lo:hi.
        #[arg(long, default_value = "1:5", value_parser = parse_range, allow_hyphen_values = true)]
        range: (f64, f64),
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Base scenario the swept parameter is applied to.
        #[arg(long, default_value = "mdp_baseline")]
        scenario: String,
        /// How observation action sets are read when sweeping the POMDP.
        #[arg(long, value_enum, default_value_t = ReportingArg::Uniform)]
        reporting: ReportingArg,
    },
    /// One strategy over one price series; CSV output is the equity curve.
    Backtest {
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Spoofing)]
        strategy: StrategyArg,
        /// Override the execution discount of spoofing buys, in basis points.
        #[arg(long)]
        impact_bps: Option<f64>,
    },
    /// Greedy path to the goal under a deterministic regime.
    Trajectory {
        #[arg(long, default_value = "mdp_baseline")]
        scenario: String,
        #[arg(long)]
        start: String,
    },
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad upper bound: {e}"))?;
    Ok((lo, hi))
}

/// Resolves `--scenario`: a preset name, or a TOML file whose optional
/// `preset` key names the base and whose other keys override its fields.
pub fn resolve_scenario(arg: &str) -> Result<Scenario> {
    if let Ok(preset) = arg.parse::<ScenarioPreset>() {
        return Ok(preset.scenario());
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Error::UnknownName(format!(
            "scenario `{arg}` is neither a preset nor a file"
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{arg}: {e}")))?;
    let base = match table.remove("preset") {
        None => Scenario::default(),
        Some(toml::Value::String(name)) => name.parse::<ScenarioPreset>()?.scenario(),
        Some(_) => return Err(Error::Config(format!("{arg}: `preset` must be a string"))),
    };
    let overrides: ScenarioOverrides = table
        .try_into()
        .map_err(|e| Error::Config(format!("{arg}: {e}")))?;
    let scenario = base.apply(&overrides);
    scenario.validate()?;
    Ok(scenario)
}

fn load_prices(path: Option<&Path>) -> Result<PriceSeries> {
    match path {
        Some(p) => PriceSeries::load_csv(p),
        None => PriceSeries::parse_csv(BUNDLED_PRICES, "bull_market_sample.csv"),
    }
}

fn execute(cli: &Cli) -> Result<String> {
    let format: OutputFormat = cli.common.format.into();
    let tol = cli.common.tie_tolerance;
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::Contract(format!(
            "tie tolerance must be non-negative, got {tol}"
        )));
    }
    match &cli.command {
        Command::SolveMdp { scenario } => {
            let sol = solve_mdp(&resolve_scenario(scenario)?, tol)?;
            MdpSolveReport::new(&sol).render(format)
        }
        Command::SolvePomdp { scenario } => {
            let sol = solve_pomdp(&resolve_scenario(scenario)?, tol)?;
            PomdpSolveReport::new(&sol).render(format)
        }
        Command::Table1 { prices } => {
            let series = if prices.is_empty() {
                vec![load_prices(None)?]
            } else {
                prices
                    .iter()
                    .map(|p| load_prices(Some(p)))
                    .collect::<Result<Vec<_>>>()?
            };
            run_table1(&series)?.render(format)
        }
        Command::Table2 => run_table2(tol)?.render(format),
        Command::Table3 { reporting } => run_table3_with(tol, (*reporting).into())?.render(format),
        Command::Sweep {
            model,
            param,
            range,
            tolerance,
            scenario,
            reporting,
        } => {
            let model = match model {
                ModelArg::Mdp => ModelKind::Mdp,
                ModelArg::Pomdp => ModelKind::Pomdp,
            };
            let param = match param {
                ParamArg::ManipCost => SweepParameter::ManipCost,
                ParamArg::ToggleProbability => SweepParameter::ToggleProbability,
            };
            let base = resolve_scenario(scenario)?;
            critical_threshold_sweep(
                model,
                param,
                *range,
                *tolerance,
                &base,
                tol,
                (*reporting).into(),
            )?
            .render(format)
        }
        Command::Backtest {
            prices,
            strategy,
            impact_bps,
        } => {
            let series = load_prices(prices.as_deref())?;
            let mut spec =
                StrategySpec::default_for((*strategy).into()).scaled_to(series.last_tick());
            if let Some(bps) = impact_bps {
                spec.impact_bps = *bps;
            }
            let report = run_strategy(&series, &spec, Portfolio::default_for(&series)?)?;
            report.render(format)
        }
        Command::Trajectory { scenario, start } => {
            let start: GrowthState = start.parse()?;
            let (_, path) = trajectory(&resolve_scenario(scenario)?, start, tol)?;
            TrajectoryReport::new(&path).render(format)
        }
    }
}

/// Parses `args` (program name first), dispatches, and returns the exit status:
/// 0 on success, 1 on a domain error, 2 on a usage error. Data goes only to
/// `stdout` (or `--out`); diagnostics only to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let written = execute(&cli).and_then(|text| match &cli.common.out {
        Some(path) => std::fs::write(path, text).map_err(Error::from),
        None => stdout.write_all(text.as_bytes()).map_err(Error::from),
    });
    match written {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "error: {line}");
            1
        }
    }
}
