//! Portfolio accounting and strategy simulation on two-contract closing prices.
//!
//! Capital is the market value of the holdings plus cash, `I = A + C`.
//! Transaction costs are accumulated separately from cash so that net
//! profit is `Π = (I_T - I_0) - Σ z`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default initial account: 1,000 contracts of each asset inside 10M of capital.
pub const DEFAULT_INITIAL_CAPITAL: f64 = 10_000_000.0;
pub const DEFAULT_INITIAL_CONTRACTS: u64 = 1_000;

/// Closing prices for contracts A and B, one entry per tick `0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    price_a: Vec<f64>,
    price_b: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    tick: usize,
    price_a: f64,
    price_b: f64,
}

impl PriceSeries {
    pub fn new(price_a: Vec<f64>, price_b: Vec<f64>) -> Result<Self> {
        if price_a.len() != price_b.len() {
            return Err(Error::Contract(format!(
                "price columns differ in length ({} vs {})",
                price_a.len(),
                price_b.len()
            )));
        }
        if price_a.len() < 2 {
            return Err(Error::Contract(
                "a price series needs at least two ticks".into(),
            ));
        }
        if let Some(t) = price_a
            .iter()
            .chain(&price_b)
            .position(|p| !(p.is_finite() && *p > 0.0))
        {
            return Err(Error::Contract(format!(
                "non-positive price at tick {}",
                t % price_a.len()
            )));
        }
        Ok(PriceSeries { price_a, price_b })
    }

    /// Reads the `tick,price_a,price_b` format. Rows must be ticks 0, 1, 2, ...
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let parse_err = |row: usize, message: String| Error::Parse {
            path: source.to_string(),
            row,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if headers != vec!["tick", "price_a", "price_b"] {
            return Err(parse_err(
                1,
                format!(
                    "expected header `tick,price_a,price_b`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        let mut price_a = Vec::new();
        let mut price_b = Vec::new();
        for (i, record) in reader.deserialize::<PriceRow>().enumerate() {
            // line 1 is the header
            let line = i + 2;
            let row = record.map_err(|e| parse_err(line, e.to_string()))?;
            if row.tick != i {
                return Err(parse_err(
                    line,
                    format!("expected tick {i}, found {}", row.tick),
                ));
            }
            for (name, p) in [("price_a", row.price_a), ("price_b", row.price_b)] {
                if !(p.is_finite() && p > 0.0) {
                    return Err(parse_err(line, format!("{name} must be positive, got {p}")));
                }
            }
            price_a.push(row.price_a);
            price_b.push(row.price_b);
        }
        if price_a.len() < 2 {
            return Err(parse_err(
                price_a.len() + 1,
                "need at least two price rows".into(),
            ));
        }
        Self::new(price_a, price_b)
    }

    /// Number of rows, `T + 1`.
    pub fn len(&self) -> usize {
        self.price_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.price_a.is_empty()
    }

    /// Index of the final tick, `T`.
    pub fn last_tick(&self) -> usize {
        self.price_a.len() - 1
    }

    pub fn price_a(&self, tick: usize) -> f64 {
        self.price_a[tick]
    }

    pub fn price_b(&self, tick: usize) -> f64 {
        self.price_b[tick]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub qty_a: u64,
    pub qty_b: u64,
    pub cash: f64,
}

impl Portfolio {
    /// Splits `capital` into the given holdings (valued at tick 0) and cash.
    pub fn with_capital(
        series: &PriceSeries,
        capital: f64,
        qty_a: u64,
        qty_b: u64,
    ) -> Result<Self> {
        let market = qty_a as f64 * series.price_a(0) + qty_b as f64 * series.price_b(0);
        if market > capital {
            return Err(Error::Contract(format!(
                "holdings worth {market:.2} exceed capital {capital:.2}"
            )));
        }
        Ok(Portfolio {
            qty_a,
            qty_b,
            cash: capital - market,
        })
    }

    /// 1,000 contracts of each asset, 10M total capital.
    pub fn default_for(series: &PriceSeries) -> Result<Self> {
        Self::with_capital(
            series,
            DEFAULT_INITIAL_CAPITAL,
            DEFAULT_INITIAL_CONTRACTS,
            DEFAULT_INITIAL_CONTRACTS,
        )
    }

    pub fn market_value(&self, series: &PriceSeries, tick: usize) -> f64 {
        self.qty_a as f64 * series.price_a(tick) + self.qty_b as f64 * series.price_b(tick)
    }

    pub fn capital(&self, series: &PriceSeries, tick: usize) -> f64 {
        self.market_value(series, tick) + self.cash
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    BuyAndHold,
    Honest,
    Spoofing,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::BuyAndHold,
        StrategyKind::Honest,
        StrategyKind::Spoofing,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::BuyAndHold => "Buy and Hold",
            StrategyKind::Honest => "Honest",
            StrategyKind::Spoofing => "Spoofing",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub trade_ticks: Vec<usize>,
    /// Contracts of each asset bought per scheduled trade.
    pub trade_size: u64,
    /// Fee as a fraction of traded notional.
    pub fee_rate: f64,
    /// Execution improvement of manipulative trades, in basis points.
    pub impact_bps: f64,
}

pub const DEFAULT_FEE_RATE: f64 = 0.0005;
pub const DEFAULT_HONEST_TICKS: [usize; 4] = [23, 46, 69, 92];
pub const DEFAULT_SPOOFING_TICKS: [usize; 2] = [46, 92];
pub const DEFAULT_TRADE_SIZE: u64 = 100;
pub const DEFAULT_SPOOFING_TRADE_SIZE: u64 = 200;
pub const DEFAULT_IMPACT_BPS: f64 = 150.0;

impl StrategySpec {
    pub fn buy_and_hold() -> Self {
        StrategySpec {
            kind: StrategyKind::BuyAndHold,
            trade_ticks: Vec::new(),
            trade_size: 0,
            fee_rate: DEFAULT_FEE_RATE,
            impact_bps: 0.0,
        }
    }

    pub fn honest() -> Self {
        StrategySpec {
            kind: StrategyKind::Honest,
            trade_ticks: DEFAULT_HONEST_TICKS.to_vec(),
            trade_size: DEFAULT_TRADE_SIZE,
            fee_rate: DEFAULT_FEE_RATE,
            impact_bps: 0.0,
        }
    }

    /// Two trades of twice the honest size: the manipulator reaches the same
    /// holdings in half the steps, each at an improved price.
    pub fn spoofing() -> Self {
        StrategySpec {
            kind: StrategyKind::Spoofing,
            trade_ticks: DEFAULT_SPOOFING_TICKS.to_vec(),
            trade_size: DEFAULT_SPOOFING_TRADE_SIZE,
            fee_rate: DEFAULT_FEE_RATE,
            impact_bps: DEFAULT_IMPACT_BPS,
        }
    }

    pub fn default_for(kind: StrategyKind) -> Self {
        match kind {
            StrategyKind::BuyAndHold => Self::buy_and_hold(),
            StrategyKind::Honest => Self::honest(),
            StrategyKind::Spoofing => Self::spoofing(),
        }
    }

    /// Rescales the default schedule onto a series whose last tick is `last`.
    pub fn scaled_to(mut self, last: usize) -> Self {
        let reference = 92;
        if last != reference {
            self.trade_ticks = self
                .trade_ticks
                .iter()
                .map(|&t| (t * last + reference / 2) / reference)
                .collect();
        }
        self
    }

    fn validate(&self, series: &PriceSeries) -> Result<()> {
        if let Some(&t) = self.trade_ticks.iter().find(|&&t| t > series.last_tick()) {
            return Err(Error::Contract(format!(
                "trade tick {t} beyond last tick {}",
                series.last_tick()
            )));
        }
        if !(self.impact_bps >= 0.0) || !(self.fee_rate >= 0.0) {
            return Err(Error::Contract(
                "impact_bps and fee_rate must be non-negative".into(),
            ));
        }
        if self.kind == StrategyKind::BuyAndHold && !self.trade_ticks.is_empty() {
            return Err(Error::Contract("buy-and-hold takes no trades".into()));
        }
        Ok(())
    }

    fn execution_price(&self, close: f64, buy: bool) -> f64 {
        match self.kind {
            StrategyKind::Spoofing => {
                let shift = self.impact_bps / 10_000.0;
                if buy {
                    close * (1.0 - shift)
                } else {
                    close * (1.0 + shift)
                }
            }
            _ => close,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Asset {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TradeStatus {
    Filled,
    /// Not enough cash: the order is never filled and pays no fee.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub tick: usize,
    pub asset: Asset,
    pub quantity: u64,
    pub price: f64,
    pub fee: f64,
    pub status: TradeStatus,
}

/// Marked-to-market state at the close of one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSnapshot {
    pub tick: usize,
    pub qty_a: u64,
    pub qty_b: u64,
    pub cash: f64,
    pub market_value: f64,
    pub capital: f64,
    pub fees_to_date: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: StrategyKind,
    pub initial_capital: f64,
    pub final_capital: f64,
    pub growth: f64,
    pub total_fees: f64,
    pub net_profit: f64,
    pub profit_pct: f64,
    pub trade_log: Vec<TradeRecord>,
    pub snapshots: Vec<PortfolioSnapshot>,
}

pub fn run_strategy(
    series: &PriceSeries,
    spec: &StrategySpec,
    initial: Portfolio,
) -> Result<BacktestReport> {
    spec.validate(series)?;
    let mut ticks = spec.trade_ticks.clone();
    ticks.sort_unstable();

    let initial_capital = initial.capital(series, 0);
    let mut book = initial;
    let mut fees = 0.0;
    let mut log = Vec::new();
    let mut snapshots = Vec::with_capacity(series.len());

    for tick in 0..series.len() {
        for _ in ticks.iter().filter(|&&t| t == tick) {
            for asset in [Asset::A, Asset::B] {
                let close = match asset {
                    Asset::A => series.price_a(tick),
                    Asset::B => series.price_b(tick),
                };
                let price = spec.execution_price(close, true);
                let notional = price * spec.trade_size as f64;
                let fee = notional * spec.fee_rate;
                if notional + fee > book.cash {
                    log.push(TradeRecord {
                        tick,
                        asset,
                        quantity: spec.trade_size,
                        price,
                        fee: 0.0,
                        status: TradeStatus::Skipped,
                    });
                    continue;
                }
                book.cash -= notional;
                match asset {
                    Asset::A => book.qty_a += spec.trade_size,
                    Asset::B => book.qty_b += spec.trade_size,
                }
                fees += fee;
                log.push(TradeRecord {
                    tick,
                    asset,
                    quantity: spec.trade_size,
                    price,
                    fee,
                    status: TradeStatus::Filled,
                });
            }
        }
        let market_value = book.market_value(series, tick);
        snapshots.push(PortfolioSnapshot {
            tick,
            qty_a: book.qty_a,
            qty_b: book.qty_b,
            cash: book.cash,
            market_value,
            capital: market_value + book.cash,
            fees_to_date: fees,
        });
    }

    let final_capital = snapshots
        .last()
        .map(|s| s.capital)
        .unwrap_or(initial_capital);
    let growth = final_capital - initial_capital;
    let net_profit = growth - fees;
    Ok(BacktestReport {
        strategy: spec.kind,
        initial_capital,
        final_capital,
        growth,
        total_fees: fees,
        net_profit,
        profit_pct: 100.0 * net_profit / initial_capital,
        trade_log: log,
        snapshots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub runs: usize,
    pub mean_profit_pct: f64,
    /// Population standard deviation.
    pub std_profit_pct: f64,
}

/// Mean and population standard deviation of `profit_pct`, per strategy, in
/// [`StrategyKind::ALL`] order.
pub fn summarize_runs(reports: &[BacktestReport]) -> Result<Vec<StrategySummary>> {
    if reports.is_empty() {
        return Err(Error::Contract("no backtest reports to summarize".into()));
    }
    let mut out = Vec::new();
    for kind in StrategyKind::ALL {
        let xs: Vec<f64> = reports
            .iter()
            .filter(|r| r.strategy == kind)
            .map(|r| r.profit_pct)
            .collect();
        if xs.is_empty() {
            continue;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        out.push(StrategySummary {
            strategy: kind,
            runs: xs.len(),
            mean_profit_pct: mean,
            std_profit_pct: var.sqrt(),
        });
    }
    Ok(out)
}
