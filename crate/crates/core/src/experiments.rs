//! Regulatory regimes and the runners that solve them: optimal-action tables
//! for both models, threshold sweeps, and the strategy comparison.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backtest::{
    run_strategy, summarize_runs, BacktestReport, Portfolio, PriceSeries, StrategyKind,
    StrategySpec, StrategySummary,
};
use crate::error::{Error, Result};
use crate::grid::{build_mdp, build_pomdp, Action, GrowthState, Observation, Scenario};
use crate::mdp::{
    extract_policy_set, greedy_trajectory, q_values, value_iteration, FiniteMdp, PolicySet, QTable,
    Trajectory, ValueFunction, DEFAULT_EPSILON,
};
use crate::pomdp::{
    alpha_value_iteration, canonical_belief, policy_at_observation, policy_over_observation_region,
    AlphaSolution, FinitePomdp,
};

pub const FINE_MAGNITUDE: f64 = 4.53;
pub const PINGING_COST_MAGNITUDE: f64 = 4.91;
pub const POMDP_EPSILON: f64 = 1e-9;
pub const POMDP_MAX_BACKUPS: usize = 2_000;
/// Beliefs sampled along each observation's belief segment when reporting.
pub const REGION_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioPreset {
    MdpBaseline,
    MdpFines,
    MdpUncertain50,
    MdpUncertain10,
    PomdpBaseline,
    PomdpCosts,
    PomdpUncertain50,
    PomdpUncertain10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mdp,
    Pomdp,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdp" => Ok(ModelKind::Mdp),
            "pomdp" => Ok(ModelKind::Pomdp),
            _ => Err(Error::UnknownName(format!("model `{s}`"))),
        }
    }
}

impl ScenarioPreset {
    pub const ALL: [ScenarioPreset; 8] = [
        ScenarioPreset::MdpBaseline,
        ScenarioPreset::MdpFines,
        ScenarioPreset::MdpUncertain50,
        ScenarioPreset::MdpUncertain10,
        ScenarioPreset::PomdpBaseline,
        ScenarioPreset::PomdpCosts,
        ScenarioPreset::PomdpUncertain50,
        ScenarioPreset::PomdpUncertain10,
    ];

    pub const MDP: [ScenarioPreset; 4] = [
        ScenarioPreset::MdpBaseline,
        ScenarioPreset::MdpFines,
        ScenarioPreset::MdpUncertain50,
        ScenarioPreset::MdpUncertain10,
    ];

    pub const POMDP: [ScenarioPreset; 4] = [
        ScenarioPreset::PomdpBaseline,
        ScenarioPreset::PomdpCosts,
        ScenarioPreset::PomdpUncertain50,
        ScenarioPreset::PomdpUncertain10,
    ];

    pub fn name(self) -> &'static str {
        use ScenarioPreset::*;
        match self {
            MdpBaseline => "mdp_baseline",
            MdpFines => "mdp_fines",
            MdpUncertain50 => "mdp_uncertain_50",
            MdpUncertain10 => "mdp_uncertain_10",
            PomdpBaseline => "pomdp_baseline",
            PomdpCosts => "pomdp_costs",
            PomdpUncertain50 => "pomdp_uncertain_50",
            PomdpUncertain10 => "pomdp_uncertain_10",
        }
    }

    pub fn label(self) -> &'static str {
        use ScenarioPreset::*;
        match self {
            MdpBaseline | PomdpBaseline => "Baseline",
            MdpFines => "Adding fines",
            PomdpCosts => "Increase transaction costs",
            MdpUncertain50 | PomdpUncertain50 => "50% vs. 50%",
            MdpUncertain10 | PomdpUncertain10 => "10% vs. 90%",
        }
    }

    pub fn model(self) -> ModelKind {
        if Self::MDP.contains(&self) {
            ModelKind::Mdp
        } else {
            ModelKind::Pomdp
        }
    }

    pub fn scenario(self) -> Scenario {
        use ScenarioPreset::*;
        let base = Scenario::default();
        match self {
            MdpBaseline | PomdpBaseline => base,
            MdpFines => base.with_manipulation_cost(FINE_MAGNITUDE),
            PomdpCosts => base.with_manipulation_cost(PINGING_COST_MAGNITUDE),
            MdpUncertain50 | PomdpUncertain50 => base.with_toggle_probability(0.5),
            MdpUncertain10 | PomdpUncertain10 => base.with_toggle_probability(0.1),
        }
    }
}

impl fmt::Display for ScenarioPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownName(format!("preset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::UnknownName(format!("format `{s}`"))),
        }
    }
}

/// Anything the CLI can print.
pub trait Render {
    fn to_markdown(&self) -> String;
    fn to_csv(&self) -> Result<String>;
    fn to_json(&self) -> Result<String>;

    fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Markdown => Ok(self.to_markdown()),
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn action_list(actions: &[Action]) -> String {
    actions
        .iter()
        .map(|a| a.name())
        .collect::<Vec<_>>()
        .join(", ")
}

fn symbol_list(actions: &[Action]) -> String {
    actions
        .iter()
        .map(|a| a.spoof_side_symbol())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Optimal-action sets: one row per state (or observation), one column per regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<Vec<Action>>>,
}

impl PolicyTable {
    pub fn cell(&self, row: &str, column: &str) -> Option<&[Action]> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == column)?;
        Some(&self.cells[r][c])
    }

    fn row_header(&self) -> &'static str {
        if self.rows.first().is_some_and(|r| r.starts_with('y')) {
            "Observed state"
        } else {
            "State"
        }
    }
}

impl Render for PolicyTable {
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let labels: Vec<String> = self
            .columns
            .iter()
            .map(|c| match c.parse::<ScenarioPreset>() {
                Ok(p) => format!("{} (`{}`)", p.label(), p.name()),
                Err(_) => c.clone(),
            })
            .collect();
        let _ = writeln!(out, "| {} | {} |", self.row_header(), labels.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(self.columns.len()));
        for (r, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = self.cells[r]
                .iter()
                .map(|acts| format!("{} [{}]", action_list(acts), symbol_list(acts)))
                .collect();
            let _ = writeln!(out, "| {} | {} |", row, cells.join(" | "));
        }
        out
    }

    fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["row", "column", "actions", "symbols"])?;
            for (r, row) in self.rows.iter().enumerate() {
                for (c, col) in self.columns.iter().enumerate() {
                    let acts = &self.cells[r][c];
                    let names: Vec<&str> = acts.iter().map(|a| a.name()).collect();
                    let syms: Vec<&str> = acts.iter().map(|a| a.spoof_side_symbol()).collect();
                    w.write_record([
                        row.as_str(),
                        col.as_str(),
                        &names.join(";"),
                        &syms.join(";"),
                    ])?;
                }
            }
            Ok(())
        })
    }

    fn to_json(&self) -> Result<String> {
        json_string(self)
    }
}

/// Values, Q-table and tie sets of a solved spoofing model.
#[derive(Debug, Clone)]
pub struct MdpSolution {
    pub scenario: Scenario,
    pub mdp: FiniteMdp,
    pub values: ValueFunction,
    pub q: QTable,
    pub policy: PolicySet,
}

impl MdpSolution {
    pub fn actions(&self, state: GrowthState) -> Vec<Action> {
        self.policy
            .actions(state.index())
            .unwrap_or(&[])
            .iter()
            .map(|&a| Action::ALL[a])
            .collect()
    }

    pub fn value(&self, state: GrowthState) -> f64 {
        self.values.get(state.index())
    }

    pub fn q(&self, state: GrowthState, action: Action) -> f64 {
        self.q.get(state.index(), action.index())
    }

    /// Non-terminal states whose tie set contains a manipulative action.
    pub fn manipulative_states(&self) -> Vec<GrowthState> {
        GrowthState::ALL
            .iter()
            .copied()
            .filter(|s| !s.is_terminal())
            .filter(|&s| self.actions(s).iter().any(|a| a.is_manipulative()))
            .collect()
    }
}

pub fn solve_mdp(scenario: &Scenario, tie_tolerance: f64) -> Result<MdpSolution> {
    let mdp = build_mdp(scenario)?;
    let values = value_iteration(&mdp, DEFAULT_EPSILON)?;
    let q = q_values(&mdp, &values)?;
    let policy = extract_policy_set(&mdp, &q, tie_tolerance);
    Ok(MdpSolution {
        scenario: *scenario,
        mdp,
        values,
        q,
        policy,
    })
}

/// How a per-observation action set is read off the belief-space solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reporting {
    /// Tie set at the uniform belief over the observation's states.
    Uniform,
    /// Union of tie sets along the observation's whole belief segment.
    Region,
}

#[derive(Debug, Clone)]
pub struct PomdpSolution {
    pub scenario: Scenario,
    pub pomdp: FinitePomdp,
    pub solution: AlphaSolution,
    /// Indexed by observation; `None` for the goal symbol.
    pub uniform: Vec<Option<Vec<usize>>>,
    pub region: Vec<Option<Vec<usize>>>,
}

impl PomdpSolution {
    pub fn actions(&self, observation: Observation, reporting: Reporting) -> Vec<Action> {
        let sets = match reporting {
            Reporting::Uniform => &self.uniform,
            Reporting::Region => &self.region,
        };
        sets[observation.index()]
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .map(|&a| Action::ALL[a])
            .collect()
    }

    pub fn manipulative_observations(&self, reporting: Reporting) -> Vec<Observation> {
        Observation::REPORTED
            .iter()
            .copied()
            .filter(|&y| {
                self.actions(y, reporting)
                    .iter()
                    .any(|a| a.is_manipulative())
            })
            .collect()
    }

    /// Value at the uniform belief over the observation's states.
    pub fn canonical_value(&self, observation: Observation) -> Option<f64> {
        canonical_belief(&self.pomdp, observation.index()).map(|b| self.solution.value(&b))
    }
}

pub fn solve_pomdp(scenario: &Scenario, tie_tolerance: f64) -> Result<PomdpSolution> {
    let pomdp = build_pomdp(scenario)?;
    let solution = alpha_value_iteration(&pomdp, POMDP_EPSILON, POMDP_MAX_BACKUPS)?;
    if !solution.converged {
        return Err(Error::NotConverged {
            iterations: solution.backups,
            residual: solution.residual,
        });
    }
    let uniform = policy_at_observation(&pomdp, &solution.alphas, tie_tolerance);
    let region =
        policy_over_observation_region(&pomdp, &solution.alphas, tie_tolerance, REGION_POINTS);
    Ok(PomdpSolution {
        scenario: *scenario,
        pomdp,
        solution,
        uniform,
        region,
    })
}

const NON_TERMINAL: [GrowthState; 8] = [
    GrowthState::X1,
    GrowthState::X2,
    GrowthState::X3,
    GrowthState::X4,
    GrowthState::X5,
    GrowthState::X6,
    GrowthState::X7,
    GrowthState::X8,
];

/// Optimal actions of the spoofing model under the four regimes.
pub fn run_table2(tie_tolerance: f64) -> Result<PolicyTable> {
    let solutions = ScenarioPreset::MDP
        .iter()
        .map(|p| solve_mdp(&p.scenario(), tie_tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyTable {
        rows: NON_TERMINAL.iter().map(|s| s.name().to_string()).collect(),
        columns: ScenarioPreset::MDP
            .iter()
            .map(|p| p.name().to_string())
            .collect(),
        cells: NON_TERMINAL
            .iter()
            .map(|&s| solutions.iter().map(|sol| sol.actions(s)).collect())
            .collect(),
    })
}

/// Optimal actions of the pinging model, per observation, under the four
/// regimes, read at the uniform belief over each observation's states.
pub fn run_table3(tie_tolerance: f64) -> Result<PolicyTable> {
    run_table3_with(tie_tolerance, Reporting::Uniform)
}

pub fn run_table3_with(tie_tolerance: f64, reporting: Reporting) -> Result<PolicyTable> {
    let solutions = ScenarioPreset::POMDP
        .iter()
        .map(|p| solve_pomdp(&p.scenario(), tie_tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyTable {
        rows: Observation::REPORTED
            .iter()
            .map(|o| o.name().to_string())
            .collect(),
        columns: ScenarioPreset::POMDP
            .iter()
            .map(|p| p.name().to_string())
            .collect(),
        cells: Observation::REPORTED
            .iter()
            .map(|&y| {
                solutions
                    .iter()
                    .map(|sol| sol.actions(y, reporting))
                    .collect()
            })
            .collect(),
    })
}

/// Published optimal-action sets the tables are compared against.
pub mod reference {
    use crate::grid::Action::{self, *};

    /// Rows x1..x8; columns baseline, fines, 50%, 10%.
    pub const TABLE2: [[&[Action]; 4]; 8] = [
        [&[BuyA, BuyB, MBuyA], &[BuyB], &[MBuyB], &[MBuyB]],
        [&[MBuyB], &[SellA], &[MBuyA, MSellB], &[SellA]],
        [
            &[BuyB, MBuyA, MBuyB],
            &[BuyB],
            &[BuyB, MBuyB],
            &[BuyB, MBuyB],
        ],
        [&[BuyA, MBuyA], &[BuyA], &[BuyA, MBuyA], &[BuyA, MBuyA]],
        [&[BuyA, MBuyA, MBuyB], &[BuyA], &[BuyA], &[BuyA]],
        [&[BuyB], &[BuyB], &[BuyB], &[MBuyB]],
        [&[BuyB, MBuyB], &[BuyB], &[BuyB, MBuyB], &[BuyB, MBuyB]],
        [&[BuyA, MBuyA], &[BuyA], &[BuyA, MBuyA], &[BuyA, MBuyA]],
    ];

    /// Rows y1..y5; columns baseline, increased costs, 50%, 10%.
    pub const TABLE3: [[&[Action]; 4]; 5] = [
        [&[MBuyA], &[BuyB, BuyA], &[BuyA], &[BuyA, MBuyB]],
        [
            &[MBuyB, BuyB],
            &[BuyB, SellA],
            &[BuyB, MBuyB],
            &[BuyB, MBuyB, SellA],
        ],
        [&[MBuyA], &[BuyB], &[BuyB], &[BuyB]],
        [&[MBuyA], &[BuyA], &[BuyA], &[BuyA]],
        [&[MBuyB], &[BuyB], &[BuyB], &[BuyB]],
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellMatch {
    Exact,
    /// Every reference action is present, plus extra exact ties.
    Superset,
    /// At least one reference action is not optimal in the computed table.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub row: String,
    pub column: String,
    pub computed: Vec<Action>,
    pub reference: Vec<Action>,
    pub missing: Vec<Action>,
    pub status: CellMatch,
}

/// Cell-by-cell comparison of a computed table with a reference grid of the same shape.
pub fn compare_with_reference(
    table: &PolicyTable,
    reference: &[[&[Action]; 4]],
) -> Vec<CellComparison> {
    let mut out = Vec::new();
    for (r, row) in table.rows.iter().enumerate() {
        for (c, col) in table.columns.iter().enumerate() {
            let computed = table.cells[r][c].clone();
            let want: Vec<Action> = reference[r][c].to_vec();
            let missing: Vec<Action> = want
                .iter()
                .copied()
                .filter(|a| !computed.contains(a))
                .collect();
            let status = if !missing.is_empty() {
                CellMatch::Missing
            } else if computed.len() == want.len() {
                CellMatch::Exact
            } else {
                CellMatch::Superset
            };
            out.push(CellComparison {
                row: row.clone(),
                column: col.clone(),
                computed,
                reference: want,
                missing,
                status,
            });
        }
    }
    out
}

/// Greedy path from `start` under a deterministic regime, manipulative actions first on ties.
pub fn trajectory(
    scenario: &Scenario,
    start: GrowthState,
    tie_tolerance: f64,
) -> Result<(MdpSolution, Trajectory)> {
    let sol = solve_mdp(scenario, tie_tolerance)?;
    let order: Vec<usize> = Action::MANIPULATIVE_FIRST
        .iter()
        .map(|a| a.index())
        .collect();
    let path = greedy_trajectory(&sol.mdp, &sol.policy, start.index(), &order)?;
    Ok((sol, path))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub start: String,
    pub steps: usize,
    pub states: Vec<String>,
    pub actions: Vec<Action>,
}

impl TrajectoryReport {
    pub fn new(path: &Trajectory) -> Self {
        TrajectoryReport {
            start: GrowthState::ALL[path.states[0]].name().to_string(),
            steps: path.steps(),
            states: path
                .states
                .iter()
                .map(|&s| GrowthState::ALL[s].name().to_string())
                .collect(),
            actions: path.actions.iter().map(|&a| Action::ALL[a]).collect(),
        }
    }
}

impl Render for TrajectoryReport {
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| step | state | action | symbol |");
        let _ = writeln!(out, "|---|---|---|---|");
        for (i, a) in self.actions.iter().enumerate() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                i + 1,
                self.states[i],
                a.name(),
                a.spoof_side_symbol()
            );
        }
        let _ = writeln!(
            out,
            "\nreached {} in {} steps",
            self.states.last().map(String::as_str).unwrap_or("?"),
            self.steps
        );
        out
    }

    fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["step", "state", "action", "next_state"])?;
            for (i, a) in self.actions.iter().enumerate() {
                w.write_record([
                    (i + 1).to_string(),
                    self.states[i].clone(),
                    a.name().to_string(),
                    self.states[i + 1].clone(),
                ])?;
            }
            Ok(())
        })
    }

    fn to_json(&self) -> Result<String> {
        json_string(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Magnitude of every manipulative cost.
    ManipCost,
    ToggleProbability,
}

impl FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manip_cost" => Ok(SweepParameter::ManipCost),
            "toggle_probability" => Ok(SweepParameter::ToggleProbability),
            _ => Err(Error::UnknownName(format!("sweep parameter `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// States (MDP) or observations (POMDP) with an optimal manipulative action.
    pub manipulative_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: ModelKind,
    pub parameter: SweepParameter,
    pub grid: Vec<SweepPoint>,
    /// Last value with manipulation and first value without it.
    pub bracket: (f64, f64),
    pub threshold: f64,
}

/// Number of states or observations where manipulation is optimal at `value`.
pub fn manipulation_count(
    model: ModelKind,
    parameter: SweepParameter,
    value: f64,
    base: &Scenario,
    tie_tolerance: f64,
    reporting: Reporting,
) -> Result<usize> {
    let scenario = match parameter {
        SweepParameter::ManipCost => base.with_manipulation_cost(value),
        SweepParameter::ToggleProbability => base.with_toggle_probability(value),
    };
    Ok(match model {
        ModelKind::Mdp => solve_mdp(&scenario, tie_tolerance)?
            .manipulative_states()
            .len(),
        ModelKind::Pomdp => solve_pomdp(&scenario, tie_tolerance)?
            .manipulative_observations(reporting)
            .len(),
    })
}

/// Grid scan over `[lo, hi]` (steps of at most 0.1 for costs) followed by
/// bisection on "is any manipulative action optimal anywhere?".
pub fn critical_threshold_sweep(
    model: ModelKind,
    parameter: SweepParameter,
    range: (f64, f64),
    tolerance: f64,
    base: &Scenario,
    tie_tolerance: f64,
    reporting: Reporting,
) -> Result<SweepResult> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Contract(format!("invalid sweep range [{lo}, {hi}]")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Contract("sweep tolerance must be positive".into()));
    }
    let steps = (((hi - lo) / 0.1).round() as usize).clamp(10, 400);
    let count = |v: f64| manipulation_count(model, parameter, v, base, tie_tolerance, reporting);

    let mut grid = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let value = lo + (hi - lo) * i as f64 / steps as f64;
        grid.push(SweepPoint {
            value,
            manipulative_count: count(value)?,
        });
    }
    let flip = grid
        .windows(2)
        .position(|w| (w[0].manipulative_count > 0) != (w[1].manipulative_count > 0))
        .ok_or(Error::NoThreshold { lo, hi })?;

    let present_at_lo = grid[flip].manipulative_count > 0;
    let (mut a, mut b) = (grid[flip].value, grid[flip + 1].value);
    while b - a > tolerance {
        let mid = 0.5 * (a + b);
        if (count(mid)? > 0) == present_at_lo {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(SweepResult {
        model,
        parameter,
        grid,
        bracket: (a, b),
        threshold: 0.5 * (a + b),
    })
}

impl Render for SweepResult {
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "critical value: {:.6} (bracket [{:.6}, {:.6}])\n",
            self.threshold, self.bracket.0, self.bracket.1
        );
        let _ = writeln!(out, "| value | manipulative count |");
        let _ = writeln!(out, "|---|---|");
        for p in &self.grid {
            let _ = writeln!(out, "| {:.4} | {} |", p.value, p.manipulative_count);
        }
        out
    }

    fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["value", "manipulative_count"])?;
            for p in &self.grid {
                w.write_record([format!("{:.6}", p.value), p.manipulative_count.to_string()])?;
            }
            Ok(())
        })
    }

    fn to_json(&self) -> Result<String> {
        json_string(self)
    }
}

/// Strategy comparison over one or more price windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1 {
    pub summaries: Vec<StrategySummary>,
    pub reports: Vec<BacktestReport>,
    pub specs: Vec<StrategySpec>,
}

/// Runs the three default strategies on every series from the default account.
pub fn run_table1(series: &[PriceSeries]) -> Result<Table1> {
    let specs: Vec<StrategySpec> = StrategyKind::ALL
        .iter()
        .map(|&k| StrategySpec::default_for(k))
        .collect();
    run_table1_with(series, &specs)
}

pub fn run_table1_with(series: &[PriceSeries], specs: &[StrategySpec]) -> Result<Table1> {
    if series.is_empty() {
        return Err(Error::Contract("need at least one price series".into()));
    }
    let mut reports = Vec::new();
    for s in series {
        let initial = Portfolio::default_for(s)?;
        for spec in specs {
            let spec = spec.clone().scaled_to(s.last_tick());
            reports.push(run_strategy(s, &spec, initial)?);
        }
    }
    Ok(Table1 {
        summaries: summarize_runs(&reports)?,
        reports,
        specs: specs.to_vec(),
    })
}

impl Render for Table1 {
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| Strategy | Avg. profit (%) | Std. dev. | Runs |");
        let _ = writeln!(out, "|---|---|---|---|");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "| {} | {:.4}% | {:.6} | {} |",
                s.strategy, s.mean_profit_pct, s.std_profit_pct, s.runs
            );
        }
        let _ = writeln!(
            out,
            "\nnote: trade sizes, fee rate and spoofing price impact are calibrated stand-ins, not measured values"
        );
        for spec in &self.specs {
            let _ = writeln!(
                out,
                "- {}: ticks {:?}, size {}, fee rate {}, impact {} bps",
                spec.kind, spec.trade_ticks, spec.trade_size, spec.fee_rate, spec.impact_bps
            );
        }
        out
    }

    fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["strategy", "avg_profit_pct", "std_dev", "runs"])?;
            for s in &self.summaries {
                w.write_record([
                    s.strategy.label().to_string(),
                    format!("{:.6}", s.mean_profit_pct),
                    format!("{:.6}", s.std_profit_pct),
                    s.runs.to_string(),
                ])?;
            }
            Ok(())
        })
    }

    fn to_json(&self) -> Result<String> {
        json_string(&self.summaries)
    }
}

/// Per-run report export.
impl Render for BacktestReport {
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| field | value |");
        let _ = writeln!(out, "|---|---|");
        let _ = writeln!(out, "| strategy | {} |", self.strategy);
        let _ = writeln!(out, "| initial_capital | {:.2} |", self.initial_capital);
        let _ = writeln!(out, "| final_capital | {:.2} |", self.final_capital);
        let _ = writeln!(out, "| growth | {:.2} |", self.growth);
        let _ = writeln!(out, "| total_fees | {:.2} |", self.total_fees);
        let _ = writeln!(out, "| net_profit | {:.2} |", self.net_profit);
        let _ = writeln!(out, "| profit_pct | {:.4} |", self.profit_pct);
        let _ = writeln!(out, "\n| tick | asset | quantity | price | fee | status |");
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        for t in &self.trade_log {
            let _ = writeln!(
                out,
                "| {} | {:?} | {} | {:.4} | {:.4} | {:?} |",
                t.tick, t.asset, t.quantity, t.price, t.fee, t.status
            );
        }
        out
    }

    /// Plot-ready equity curve.
    fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record([
                "tick",
                "qty_a",
                "qty_b",
                "cash",
                "market_value",
                "capital",
                "fees_to_date",
            ])?;
            for s in &self.snapshots {
                w.write_record([
                    s.tick.to_string(),
                    s.qty_a.to_string(),
                    s.qty_b.to_string(),
                    format!("{:.6}", s.cash),
                    format!("{:.6}", s.market_value),
                    format!("{:.6}", s.capital),
                    format!("{:.6}", s.fees_to_date),
                ])?;
            }
            Ok(())
        })
    }

    fn to_json(&self) -> Result<String> {
        json_string(self)
    }
}

/// Values and tie sets of one solved spoofing scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpSolveReport {
    pub scenario: Scenario,
    pub iterations: usize,
    pub states: Vec<StateRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRow {
    pub state: String,
    pub value: f64,
    pub actions: Vec<Action>,
}

impl MdpSolveReport {
    pub fn new(sol: &MdpSolution) -> Self {
        MdpSolveReport {
            scenario: sol.scenario,
            iterations: sol.values.iterations,
            states: GrowthState::ALL
                .iter()
                .map(|&s| StateRow {
                    state: s.name().to_string(),
                    value: sol.value(s),
                    actions: sol.actions(s),
                })
                .collect(),
        }
    }
}

impl Render for MdpSolveReport {
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| State | V | Optimal actions |");
        let _ = writeln!(out, "|---|---|---|");
        for r in &self.states {
            let _ = writeln!(
                out,
                "| {} | {:.6} | {} |",
                r.state,
                r.value,
                if r.actions.is_empty() {
                    "(terminal)".to_string()
                } else {
                    format!("{} [{}]", action_list(&r.actions), symbol_list(&r.actions))
                }
            );
        }
        out
    }

    fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["state", "value", "actions"])?;
            for r in &self.states {
                let names: Vec<&str> = r.actions.iter().map(|a| a.name()).collect();
                w.write_record([r.state.clone(), format!("{:.10}", r.value), names.join(";")])?;
            }
            Ok(())
        })
    }

    fn to_json(&self) -> Result<String> {
        json_string(self)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PomdpSolveReport {
    pub scenario: Scenario,
    pub backups: usize,
    pub alpha_vectors: usize,
    pub observations: Vec<ObservationRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationRow {
    pub observation: String,
    pub states: Vec<String>,
    /// Value at the uniform belief over `states`.
    pub value: f64,
    pub region_actions: Vec<Action>,
    pub uniform_actions: Vec<Action>,
}

impl PomdpSolveReport {
    pub fn new(sol: &PomdpSolution) -> Self {
        PomdpSolveReport {
            scenario: sol.scenario,
            backups: sol.solution.backups,
            alpha_vectors: sol.solution.alphas.len(),
            observations: Observation::REPORTED
                .iter()
                .map(|&y| ObservationRow {
                    observation: y.name().to_string(),
                    states: sol
                        .pomdp
                        .emitting_states(y.index())
                        .iter()
                        .map(|&s| GrowthState::ALL[s].name().to_string())
                        .collect(),
                    value: sol.canonical_value(y).unwrap_or(f64::NAN),
                    region_actions: sol.actions(y, Reporting::Region),
                    uniform_actions: sol.actions(y, Reporting::Uniform),
                })
                .collect(),
        }
    }
}

impl Render for PomdpSolveReport {
    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| Observation | States | V(uniform) | Optimal over belief segment | Optimal at uniform belief |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for r in &self.observations {
            let _ = writeln!(
                out,
                "| {} | {} | {:.6} | {} | {} |",
                r.observation,
                r.states.join(", "),
                r.value,
                action_list(&r.region_actions),
                action_list(&r.uniform_actions)
            );
        }
        out
    }

    fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record([
                "observation",
                "states",
                "value",
                "region_actions",
                "uniform_actions",
            ])?;
            for r in &self.observations {
                let names =
                    |acts: &[Action]| acts.iter().map(|a| a.name()).collect::<Vec<_>>().join(";");
                w.write_record([
                    r.observation.clone(),
                    r.states.join(";"),
                    format!("{:.10}", r.value),
                    names(&r.region_actions),
                    names(&r.uniform_actions),
                ])?;
            }
            Ok(())
        })
    }

    fn to_json(&self) -> Result<String> {
        json_string(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::DEFAULT_TIE_TOLERANCE;

    #[test]
    fn presets_round_trip_through_toml() {
        for p in ScenarioPreset::ALL {
            let s = p.scenario();
            assert_eq!(
                Scenario::from_toml_str(&s.to_toml_string()).unwrap(),
                s,
                "{p}"
            );
            assert_eq!(p.name().parse::<ScenarioPreset>().unwrap(), p);
        }
    }

    #[test]
    fn preset_integrity() {
        assert_eq!(ScenarioPreset::MdpFines.scenario().manip_move_cost, -4.53);
        assert_eq!(ScenarioPreset::MdpFines.scenario().manip_edge_cost, -4.53);
        assert_eq!(
            ScenarioPreset::PomdpCosts.scenario().manip_collision_cost,
            -4.91
        );
        assert_eq!(
            ScenarioPreset::PomdpUncertain10
                .scenario()
                .toggle_probability,
            0.1
        );
        assert_eq!(
            ScenarioPreset::MdpUncertain50.scenario().toggle_probability,
            0.5
        );
    }

    #[test]
    fn table2_json_has_schema_keys() {
        let t = run_table2(DEFAULT_TIE_TOLERANCE).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, vec!["cells", "columns", "rows"]);
        assert_eq!(obj["rows"].as_array().unwrap().len(), 8);
        assert_eq!(obj["columns"].as_array().unwrap().len(), 4);
        assert_eq!(obj["cells"][1][0], serde_json::json!(["MBuyB"]));
    }

    #[test]
    fn tables_are_deterministic() {
        let a = run_table2(DEFAULT_TIE_TOLERANCE).unwrap();
        let b = run_table2(DEFAULT_TIE_TOLERANCE).unwrap();
        assert_eq!(a.to_markdown(), b.to_markdown());
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        let a = run_table3(DEFAULT_TIE_TOLERANCE).unwrap();
        let b = run_table3(DEFAULT_TIE_TOLERANCE).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn markdown_shows_both_namings() {
        let md = run_table2(DEFAULT_TIE_TOLERANCE).unwrap().to_markdown();
        assert!(md.contains("MBuyB [u_sB^m]"));
        assert_eq!(md.lines().count(), 10);
    }

    #[test]
    fn comparison_statuses() {
        let table = PolicyTable {
            rows: vec!["x1".into()],
            columns: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            cells: vec![vec![
                vec![Action::BuyA],
                vec![Action::BuyA, Action::BuyB],
                vec![Action::BuyB],
                vec![],
            ]],
        };
        let reference: [[&[Action]; 4]; 1] =
            [[&[Action::BuyA], &[Action::BuyA], &[Action::BuyA], &[]]];
        let cmp = compare_with_reference(&table, &reference);
        let st: Vec<_> = cmp.iter().map(|c| c.status).collect();
        assert_eq!(
            st,
            vec![
                CellMatch::Exact,
                CellMatch::Superset,
                CellMatch::Missing,
                CellMatch::Exact
            ]
        );
    }

    #[test]
    fn sweep_rejects_bad_input() {
        let base = Scenario::default();
        assert!(critical_threshold_sweep(
            ModelKind::Mdp,
            SweepParameter::ManipCost,
            (5.0, 1.0),
            1e-3,
            &base,
            1e-6,
            Reporting::Uniform
        )
        .is_err());
        assert!(critical_threshold_sweep(
            ModelKind::Mdp,
            SweepParameter::ManipCost,
            (1.0, 5.0),
            0.0,
            &base,
            1e-6,
            Reporting::Uniform
        )
        .is_err());
    }

    #[test]
    fn toggle_sweep_finds_no_threshold() {
        // Even with no toggle, manipulative moves tie with honest ones somewhere.
        let err = critical_threshold_sweep(
            ModelKind::Mdp,
            SweepParameter::ToggleProbability,
            (0.0, 1.0),
            1e-3,
            &Scenario::default(),
            1e-6,
            Reporting::Uniform,
        );
        assert!(matches!(err, Err(Error::NoThreshold { .. })), "{err:?}");
    }
}
