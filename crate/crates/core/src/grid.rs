//! The two-representation growth grid.
//!
//! Each representation is a 3-column by 2-row grid of growth levels. The goal
//! level sits at the top-right cell of both grids. The only difference
//! between the representations is where the illiquid cell (the obstacle) is:
//! top-centre in the first, bottom-centre in the second. Manipulative actions
//! flip the market into the other representation before the real order is
//! executed.
//!
//! ```text
//!        Rep1                 Rep2
//!   +----+----+----+     +----+----+----+
//!   | x2 | ## | G1 |     | x6 | x7 | G2 |   row 1
//!   +----+----+----+     +----+----+----+
//!   | x1 | x3 | x4 |     | x5 | ## | x8 |   row 0
//!   +----+----+----+     +----+----+----+
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::pomdp::FinitePomdp;

pub const N_COLS: u8 = 3;
pub const N_ROWS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub col: u8,
    /// Row 1 is the top row.
    pub row: u8,
}

impl Position {
    pub const GOAL: Position = Position { col: 2, row: 1 };

    pub const fn new(col: u8, row: u8) -> Self {
        Position { col, row }
    }

    pub fn all() -> impl Iterator<Item = Position> {
        (0..N_ROWS).flat_map(|row| (0..N_COLS).map(move |col| Position { col, row }))
    }

    /// The neighbouring cell in `direction`, or `None` when it falls off the grid.
    pub fn step(self, direction: Direction) -> Option<Position> {
        let (dc, dr): (i8, i8) = match direction {
            Direction::Up => (0, 1),
            Direction::Down => (0, -1),
            Direction::Right => (1, 0),
            Direction::Left => (-1, 0),
        };
        let col = self.col as i8 + dc;
        let row = self.row as i8 + dr;
        if (0..N_COLS as i8).contains(&col) && (0..N_ROWS as i8).contains(&row) {
            Some(Position::new(col as u8, row as u8))
        } else {
            None
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Representation {
    Rep1,
    Rep2,
}

impl Representation {
    pub fn obstacle(self) -> Position {
        match self {
            Representation::Rep1 => Position::new(1, 1),
            Representation::Rep2 => Position::new(1, 0),
        }
    }

    pub fn toggled(self) -> Self {
        match self {
            Representation::Rep1 => Representation::Rep2,
            Representation::Rep2 => Representation::Rep1,
        }
    }
}

/// A growth level: one cell of one representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GrowthState {
    X1,
    X2,
    X3,
    X4,
    X5,
    X6,
    X7,
    X8,
    Goal1,
    Goal2,
}

impl GrowthState {
    pub const ALL: [GrowthState; 10] = [
        GrowthState::X1,
        GrowthState::X2,
        GrowthState::X3,
        GrowthState::X4,
        GrowthState::X5,
        GrowthState::X6,
        GrowthState::X7,
        GrowthState::X8,
        GrowthState::Goal1,
        GrowthState::Goal2,
    ];

    pub const COUNT: usize = 10;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn representation(self) -> Representation {
        use GrowthState::*;
        match self {
            X1 | X2 | X3 | X4 | Goal1 => Representation::Rep1,
            X5 | X6 | X7 | X8 | Goal2 => Representation::Rep2,
        }
    }

    pub fn position(self) -> Position {
        use GrowthState::*;
        match self {
            X1 | X5 => Position::new(0, 0),
            X2 | X6 => Position::new(0, 1),
            X3 => Position::new(1, 0),
            X7 => Position::new(1, 1),
            X4 | X8 => Position::new(2, 0),
            Goal1 | Goal2 => Position::GOAL,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, GrowthState::Goal1 | GrowthState::Goal2)
    }

    /// The state occupying `position` in `rep`, `None` for the obstacle cell.
    pub fn at(rep: Representation, position: Position) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.representation() == rep && s.position() == position)
    }

    pub fn name(self) -> &'static str {
        use GrowthState::*;
        match self {
            X1 => "x1",
            X2 => "x2",
            X3 => "x3",
            X4 => "x4",
            X5 => "x5",
            X6 => "x6",
            X7 => "x7",
            X8 => "x8",
            Goal1 => "goal1",
            Goal2 => "goal2",
        }
    }
}

impl fmt::Display for GrowthState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GrowthState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let key = match lower.as_str() {
            "x*" | "goal" => "goal1",
            "x'*" => "goal2",
            other => other,
        };
        Self::ALL
            .iter()
            .copied()
            .find(|st| st.name() == key)
            .ok_or_else(|| Error::UnknownName(format!("state `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Right,
    Left,
}

/// Trading actions, named by the side of the real trade.
///
/// Buying contract A moves up the grid, buying contract B moves right.
/// The manipulative variants place a spoof order on the opposite side first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    BuyA,
    SellA,
    BuyB,
    SellB,
    MBuyA,
    MSellA,
    MBuyB,
    MSellB,
    DoNothing,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::BuyA,
        Action::SellA,
        Action::BuyB,
        Action::SellB,
        Action::MBuyA,
        Action::MSellA,
        Action::MBuyB,
        Action::MSellB,
        Action::DoNothing,
    ];

    pub const COUNT: usize = 9;

    /// Trajectory tie-break order with manipulative actions ahead of honest ones.
    pub const MANIPULATIVE_FIRST: [Action; 9] = [
        Action::MBuyA,
        Action::MSellA,
        Action::MBuyB,
        Action::MSellB,
        Action::BuyA,
        Action::SellA,
        Action::BuyB,
        Action::SellB,
        Action::DoNothing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_manipulative(self) -> bool {
        matches!(
            self,
            Action::MBuyA | Action::MSellA | Action::MBuyB | Action::MSellB
        )
    }

    pub fn direction(self) -> Option<Direction> {
        use Action::*;
        match self {
            BuyA | MBuyA => Some(Direction::Up),
            SellA | MSellA => Some(Direction::Down),
            BuyB | MBuyB => Some(Direction::Right),
            SellB | MSellB => Some(Direction::Left),
            DoNothing => None,
        }
    }

    pub fn name(self) -> &'static str {
        use Action::*;
        match self {
            BuyA => "BuyA",
            SellA => "SellA",
            BuyB => "BuyB",
            SellB => "SellB",
            MBuyA => "MBuyA",
            MSellA => "MSellA",
            MBuyB => "MBuyB",
            MSellB => "MSellB",
            DoNothing => "DoNothing",
        }
    }

    /// Symbol that names the action by its spoof-order side.
    ///
    /// A manipulative buy of A places a spoof *sell* order for A, so it is
    /// written `u_sA^m`; honest actions keep their trade side.
    pub fn spoof_side_symbol(self) -> &'static str {
        use Action::*;
        match self {
            BuyA => "u_bA",
            SellA => "u_sA",
            BuyB => "u_bB",
            SellB => "u_sB",
            MBuyA => "u_sA^m",
            MSellA => "u_bA^m",
            MBuyB => "u_sB^m",
            MSellB => "u_bB^m",
            DoNothing => "u_n",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s) || a.spoof_side_symbol() == s)
            .ok_or_else(|| Error::UnknownName(format!("action `{s}`")))
    }
}

/// Observation symbols of the pinging model: the position is revealed, the
/// representation is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Observation {
    Y1,
    Y2,
    Y3,
    Y4,
    Y5,
    YGoal,
}

impl Observation {
    pub const ALL: [Observation; 6] = [
        Observation::Y1,
        Observation::Y2,
        Observation::Y3,
        Observation::Y4,
        Observation::Y5,
        Observation::YGoal,
    ];

    /// Observations reported in policy tables (the goal is excluded).
    pub const REPORTED: [Observation; 5] = [
        Observation::Y1,
        Observation::Y2,
        Observation::Y3,
        Observation::Y4,
        Observation::Y5,
    ];

    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn position(self) -> Position {
        match self {
            Observation::Y1 => Position::new(0, 0),
            Observation::Y2 => Position::new(0, 1),
            Observation::Y3 => Position::new(1, 0),
            Observation::Y4 => Position::new(2, 0),
            Observation::Y5 => Position::new(1, 1),
            Observation::YGoal => Position::GOAL,
        }
    }

    pub fn of_position(position: Position) -> Self {
        Self::ALL
            .iter()
            .copied()
            .find(|o| o.position() == position)
            .expect("every grid cell has an observation symbol")
    }

    pub fn name(self) -> &'static str {
        match self {
            Observation::Y1 => "y1",
            Observation::Y2 => "y2",
            Observation::Y3 => "y3",
            Observation::Y4 => "y4",
            Observation::Y5 => "y5",
            Observation::YGoal => "yGoal",
        }
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownName(format!("observation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// The goal pays `terminal_per_tick_reward` on every tick once reached.
    #[default]
    AbsorbingRecurring,
    /// The goal pays `terminal_per_tick_reward` once, on entry.
    OneShot,
}

/// Rewards, dynamics and discounting for one experimental regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub move_cost: f64,
    pub manip_move_cost: f64,
    pub manip_edge_cost: f64,
    pub honest_collision_cost: f64,
    pub manip_collision_cost: f64,
    pub terminal_per_tick_reward: f64,
    pub discount: f64,
    pub toggle_probability: f64,
    pub terminal_mode: TerminalMode,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            move_cost: -1.0,
            manip_move_cost: -1.0,
            manip_edge_cost: 0.0,
            honest_collision_cost: 0.0,
            manip_collision_cost: -1.0,
            terminal_per_tick_reward: 1.0,
            discount: 0.95,
            toggle_probability: 1.0,
            terminal_mode: TerminalMode::AbsorbingRecurring,
        }
    }
}

/// Field-by-field overrides applied on top of a base scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub move_cost: Option<f64>,
    pub manip_move_cost: Option<f64>,
    pub manip_edge_cost: Option<f64>,
    pub honest_collision_cost: Option<f64>,
    pub manip_collision_cost: Option<f64>,
    pub terminal_per_tick_reward: Option<f64>,
    pub discount: Option<f64>,
    pub toggle_probability: Option<f64>,
    pub terminal_mode: Option<TerminalMode>,
}

impl Scenario {
    /// Sets every manipulative cost (move, edge bounce, collision) to `-magnitude`.
    pub fn with_manipulation_cost(mut self, magnitude: f64) -> Self {
        self.manip_move_cost = -magnitude;
        self.manip_edge_cost = -magnitude;
        self.manip_collision_cost = -magnitude;
        self
    }

    pub fn with_toggle_probability(mut self, p: f64) -> Self {
        self.toggle_probability = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let costs = [
            ("move_cost", self.move_cost),
            ("manip_move_cost", self.manip_move_cost),
            ("manip_edge_cost", self.manip_edge_cost),
            ("honest_collision_cost", self.honest_collision_cost),
            ("manip_collision_cost", self.manip_collision_cost),
            ("terminal_per_tick_reward", self.terminal_per_tick_reward),
        ];
        for (name, v) in costs {
            if !v.is_finite() {
                return Err(Error::InvalidScenario(format!("{name} must be finite")));
            }
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::InvalidScenario(format!(
                "discount must lie in (0,1), got {}",
                self.discount
            )));
        }
        if !(0.0..=1.0).contains(&self.toggle_probability) {
            return Err(Error::InvalidScenario(format!(
                "toggle_probability must lie in [0,1], got {}",
                self.toggle_probability
            )));
        }
        Ok(())
    }

    /// Fixed value of a goal state.
    pub fn terminal_value(&self) -> f64 {
        match self.terminal_mode {
            TerminalMode::AbsorbingRecurring => {
                self.terminal_per_tick_reward / (1.0 - self.discount)
            }
            TerminalMode::OneShot => 0.0,
        }
    }

    pub fn apply(mut self, o: &ScenarioOverrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        take!(
            move_cost,
            manip_move_cost,
            manip_edge_cost,
            honest_collision_cost,
            manip_collision_cost,
            terminal_per_tick_reward,
            discount,
            toggle_probability,
            terminal_mode
        );
        self
    }

    /// Parses a TOML document. Missing keys keep their defaults, unknown keys are rejected.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

impl ScenarioOverrides {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveEvent {
    Moved,
    EdgeBounce,
    ObstacleCollision,
    ReachedGoal,
    Stayed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub next_state: GrowthState,
    pub reward: f64,
    pub event: MoveEvent,
}

/// Deterministic outcome of `action` from `state`, given whether a
/// manipulative action managed to toggle the representation.
///
/// The toggle happens before the real order: the move is resolved against
/// the post-toggle obstacle. When a bounce off the grid edge would leave the
/// agent standing on the new obstacle, the toggle is annulled.
pub fn resolve_move(
    state: GrowthState,
    action: Action,
    toggled: bool,
    scenario: &Scenario,
) -> Result<MoveOutcome> {
    if state.is_terminal() {
        return Err(Error::Contract(format!(
            "cannot move from terminal state {state}"
        )));
    }
    let manipulative = action.is_manipulative();
    if toggled && !manipulative {
        return Err(Error::Contract(format!(
            "honest action {action} cannot toggle the representation"
        )));
    }
    let Some(direction) = action.direction() else {
        return Ok(MoveOutcome {
            next_state: state,
            reward: 0.0,
            event: MoveEvent::Stayed,
        });
    };

    let rep = if toggled {
        state.representation().toggled()
    } else {
        state.representation()
    };
    let here = state.position();
    let landing =
        |pos: Position| GrowthState::at(rep, pos).expect("landing cell is never the obstacle");

    let outcome = match here.step(direction) {
        None => {
            let reward = if manipulative {
                scenario.manip_edge_cost
            } else {
                0.0
            };
            let next_state = if here == rep.obstacle() {
                state
            } else {
                landing(here)
            };
            MoveOutcome {
                next_state,
                reward,
                event: MoveEvent::EdgeBounce,
            }
        }
        Some(target) if target == rep.obstacle() => MoveOutcome {
            next_state: landing(here),
            reward: if manipulative {
                scenario.manip_collision_cost
            } else {
                scenario.honest_collision_cost
            },
            event: MoveEvent::ObstacleCollision,
        },
        Some(target) => {
            let cost = if manipulative {
                scenario.manip_move_cost
            } else {
                scenario.move_cost
            };
            if target == Position::GOAL {
                let bonus = match scenario.terminal_mode {
                    TerminalMode::OneShot => scenario.terminal_per_tick_reward,
                    TerminalMode::AbsorbingRecurring => 0.0,
                };
                MoveOutcome {
                    next_state: landing(target),
                    reward: cost + bonus,
                    event: MoveEvent::ReachedGoal,
                }
            } else {
                MoveOutcome {
                    next_state: landing(target),
                    reward: cost,
                    event: MoveEvent::Moved,
                }
            }
        }
    };
    Ok(outcome)
}

/// Tabular spoofing model: 10 states, 9 actions.
pub fn build_mdp(scenario: &Scenario) -> Result<FiniteMdp> {
    scenario.validate()?;
    let n = GrowthState::COUNT;
    let m = Action::COUNT;
    let mut transition = vec![vec![vec![0.0; n]; n]; m];
    let mut reward = vec![vec![0.0; m]; n];
    let mut terminal_values = vec![None; n];

    for state in GrowthState::ALL {
        let s = state.index();
        if state.is_terminal() {
            terminal_values[s] = Some(scenario.terminal_value());
            for row in transition.iter_mut() {
                row[s][s] = 1.0;
            }
            continue;
        }
        for action in Action::ALL {
            let a = action.index();
            let branches: Vec<(bool, f64)> = if action.is_manipulative() {
                vec![
                    (true, scenario.toggle_probability),
                    (false, 1.0 - scenario.toggle_probability),
                ]
            } else {
                vec![(false, 1.0)]
            };
            for (toggled, p) in branches {
                if p == 0.0 {
                    continue;
                }
                let out = resolve_move(state, action, toggled, scenario)?;
                transition[a][s][out.next_state.index()] += p;
                reward[s][a] += p * out.reward;
            }
        }
    }

    FiniteMdp::new(
        GrowthState::ALL
            .iter()
            .map(|s| s.name().to_string())
            .collect(),
        Action::ALL.iter().map(|a| a.name().to_string()).collect(),
        transition,
        reward,
        terminal_values,
        scenario.discount,
    )
}

/// Tabular pinging model with noise-free, position-revealing observations.
pub fn build_pomdp(scenario: &Scenario) -> Result<FinitePomdp> {
    build_pomdp_with_noise(scenario, 0.0)
}

/// As [`build_pomdp`], but a non-goal position is misreported with
/// probability `confusion`, spread evenly over the other non-goal symbols.
pub fn build_pomdp_with_noise(scenario: &Scenario, confusion: f64) -> Result<FinitePomdp> {
    if !(0.0..=1.0).contains(&confusion) {
        return Err(Error::InvalidScenario(format!(
            "observation confusion must lie in [0,1], got {confusion}"
        )));
    }
    let mdp = build_mdp(scenario)?;
    let others = (Observation::REPORTED.len() - 1) as f64;
    let observation = GrowthState::ALL
        .iter()
        .map(|s| {
            let truth = Observation::of_position(s.position());
            Observation::ALL
                .iter()
                .map(|&o| {
                    if truth == Observation::YGoal {
                        f64::from(o == truth)
                    } else if o == truth {
                        1.0 - confusion
                    } else if o == Observation::YGoal {
                        0.0
                    } else {
                        confusion / others
                    }
                })
                .collect()
        })
        .collect();
    FinitePomdp::new(
        mdp,
        observation,
        Observation::ALL
            .iter()
            .map(|o| o.name().to_string())
            .collect(),
    )
}
