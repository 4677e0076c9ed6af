//! Scenario files: dynamics, grid, inputs, disturbance, targets, obstacles
//! and running-cost parameters in one TOML document.
//!
//! ```toml
//! name = "example"
//! dynamics = "dubins"          # dubins | truck | custom-graph
//! tau = 0.65
//!
//! [grid]
//! lower = [0.0, 0.0, -0.098]
//! upper = [1000.0, 800.0, 6.185]
//! counts = [40, 32, 32]
//! periodic = [false, false, true]
//!
//! [inputs]
//! lower = [20.0, -0.5]
//! upper = [50.0, 0.5]
//! counts = [3, 5]
//!
//! [disturbance]
//! lower = [-5.0, -2.0, -0.04]
//! upper = [5.0, 2.0, 0.04]
//!
//! [[targets]]                  # the first target is the depot
//! name = "runway"
//! boxes = [{ lower = [100.0, 40.0, -0.4], upper = [400.0, 160.0, 0.4] }]
//!
//! [[obstacles]]
//! lower = [500.0, 300.0, -10.0]
//! upper = [600.0, 400.0, 10.0]
//!
//! [cost]
//! input_weights = [0.0, 1.0]   # adds sum of w_i * u_i^2
//! ```
//!
//! A `custom-graph` scenario instead names a finite system in the text format
//! of [`FiniteSystem::parse_text`] (`graph`, relative to the scenario file, or
//! `graph_inline`), targets given as `cells = [...]`, and `start_cell`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::abstraction::{build_abstraction, read_cache, AbstractRunningCost, Abstraction, InputSample};
use crate::dynamics::{
    dubins_growth_bound, dubins_rhs, truck_growth_bound, truck_rhs, GrowthBoundModel, IntervalBox, VectorFieldSpec,
};
use crate::error::{Error, Result};
use crate::grid::{GridRegion, Region, UniformGrid};
use crate::system::{Cost, FiniteSystem, StateSet, INFINITY};
use crate::tsplib::TspBackend;

const BUILTIN: &[(&str, &str)] = &[
    ("uav-mini", include_str!("../scenarios/uav-mini.toml")),
    ("truck-mini", include_str!("../scenarios/truck-mini.toml")),
    ("uav-full", include_str!("../scenarios/uav-full.toml")),
    ("truck-full", include_str!("../scenarios/truck-full.toml")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Dubins,
    Truck,
    CustomGraph,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub periodic: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Evenly spaced samples per dimension; ignored when `axes` is given.
    #[serde(default)]
    pub counts: Vec<usize>,
    /// Explicit sample values per dimension, each within `[lower, upper]`.
    #[serde(default)]
    pub axes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub boxes: Vec<BoxConfig>,
    #[serde(default)]
    pub cells: Vec<usize>,
}

/// Planar line segment of a roadway axis.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: [f64; 2],
    pub to: [f64; 2],
}

impl Segment {
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let d = [self.to[0] - self.from[0], self.to[1] - self.from[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 > 0.0 {
            (((p[0] - self.from[0]) * d[0] + (p[1] - self.from[1]) * d[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p[0] - self.from[0] - t * d[0]).hypot(p[1] - self.from[1] - t * d[1])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// Weights of squared input components.
    #[serde(default)]
    pub input_weights: Vec<f64>,
    /// Roadway axes; the distance of the successor's planar position to the
    /// nearest axis is added to the step cost.
    #[serde(default)]
    pub roads: Vec<Segment>,
    /// Boxes where driving is allowed; states outside all of them cost `∞`.
    /// Empty means unrestricted.
    #[serde(default)]
    pub lanes: Vec<BoxConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dynamics: DynamicsKind,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_sim_substeps")]
    pub sim_substeps: usize,
    /// Bound on `|x4|` used by the truck growth bound.
    #[serde(default)]
    pub speed_cap: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_backend")]
    pub tsp_backend: String,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    pub grid: Option<GridConfig>,
    pub inputs: Option<InputConfig>,
    pub disturbance: Option<BoxConfig>,
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub obstacles: Vec<BoxConfig>,
    #[serde(default)]
    pub cost: CostConfig,
    pub start: Option<Vec<f64>>,
    pub graph: Option<String>,
    pub graph_inline: Option<String>,
    pub start_cell: Option<usize>,
}

fn default_substeps() -> usize {
    5
}

fn default_sim_substeps() -> usize {
    20
}

fn default_backend() -> String {
    "heuristic".into()
}

fn default_max_steps() -> usize {
    10_000
}

/// Running cost of a continuous scenario:
/// `τ + Σ w_i u_i² + dist((y1, y2), roads)`, or `∞` when the current state is
/// outside the domain, inside an obstacle, or outside every lane.
#[derive(Debug, Clone)]
pub struct ScenarioCost {
    tau: f64,
    input_weights: Vec<f64>,
    roads: Vec<Segment>,
    obstacles: GridRegion,
    lanes: Option<GridRegion>,
    grid: UniformGrid,
}

impl ScenarioCost {
    fn base(&self, u: &[f64]) -> Cost {
        self.tau
            + self
                .input_weights
                .iter()
                .zip(u)
                .map(|(w, v)| w * v * v)
                .sum::<f64>()
    }

    fn road_distance(&self, p: [f64; 2]) -> f64 {
        self.roads.iter().map(|s| s.distance(p)).fold(INFINITY, f64::min)
    }

    /// Concrete step cost `g(x, y, u)`.
    pub fn concrete(&self, x: &[f64], u: &[f64], y: &[f64]) -> Cost {
        if self.grid.quantize(x) == self.grid.sink() || self.obstacles.contains_point(x) {
            return INFINITY;
        }
        if let Some(l) = &self.lanes {
            if !l.contains_point(x) {
                return INFINITY;
            }
        }
        let mut g = self.base(u);
        if !self.roads.is_empty() {
            g += self.road_distance([y[0], y[1]]);
        }
        g
    }
}

impl AbstractRunningCost for ScenarioCost {
    fn is_obstacle(&self, cell: &IntervalBox) -> bool {
        self.obstacles.intersects_box(cell) || self.lanes.as_ref().is_some_and(|l| !l.contains_box(cell))
    }

    fn successor_dependent(&self) -> bool {
        !self.roads.is_empty()
    }

    fn finite_cost(&self, _cell: &IntervalBox, input: &[f64], successor: Option<&IntervalBox>) -> Cost {
        let mut g = self.base(input);
        if let Some(s) = successor {
            let half_diag = s.radius[0].hypot(s.radius[1]);
            g += self.road_distance([s.center[0], s.center[1]]) + half_diag;
        }
        g
    }
}

/// A continuous scenario ready for abstraction and simulation.
#[derive(Debug, Clone)]
pub struct ContinuousScenario {
    pub spec: VectorFieldSpec,
    pub model: GrowthBoundModel,
    pub grid: UniformGrid,
    pub inputs: InputSample,
    pub cost: ScenarioCost,
    pub target_regions: Vec<Region>,
    pub targets: Vec<GridRegion>,
    pub obstacles: Region,
    pub start: Option<Vec<f64>>,
    pub sim_substeps: usize,
}

impl ContinuousScenario {
    pub fn abstraction(&self) -> Result<Abstraction> {
        build_abstraction(&self.spec, &self.model, &self.grid, &self.inputs, &self.cost)
    }

    pub fn load_abstraction(&self, path: &Path) -> Result<Abstraction> {
        let abs = read_cache(path, &self.cost)?;
        if abs.grid != self.grid || abs.inputs != self.inputs {
            return Err(Error::Config(format!(
                "{}: cached abstraction was built for a different grid or input sample",
                path.display()
            )));
        }
        Ok(abs)
    }

    /// Inner approximation of each target on the grid.
    pub fn target_sets(&self) -> Vec<StateSet> {
        let n = self.grid.num_states();
        self.targets
            .iter()
            .map(|t| {
                StateSet::from_indices(
                    n,
                    (0..self.grid.num_cells()).filter(|&c| t.contains_box(&self.grid.cell_box_unchecked(c))),
                )
            })
            .collect()
    }

    /// Concrete state at the center of `cell`.
    pub fn cell_center(&self, cell: usize) -> Result<Vec<f64>> {
        Ok(self.grid.cell_box(cell)?.center)
    }
}

#[derive(Debug, Clone)]
pub struct GraphScenario {
    pub system: FiniteSystem,
    pub targets: Vec<StateSet>,
    pub start: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum ScenarioKind {
    Continuous(Box<ContinuousScenario>),
    Graph(GraphScenario),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub kind: ScenarioKind,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_box(b: &BoxConfig, n: usize, what: &str) -> Result<()> {
    if b.lower.len() != n || b.upper.len() != n {
        return Err(config_err(format!("{what}: expected {n} coordinates")));
    }
    if b.lower.iter().zip(&b.upper).any(|(l, u)| !(l <= u)) {
        return Err(config_err(format!("{what}: lower must not exceed upper")));
    }
    Ok(())
}

fn region_of(boxes: &[BoxConfig]) -> Region {
    Region::new(boxes.iter().map(|b| (b.lower.clone(), b.upper.clone())).collect())
}

impl Scenario {
    /// Parses a scenario; relative graph paths are resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        Self::from_config(config, base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
            .map_err(|e| config_err(format!("{}: {}", path.display(), e)))
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let text = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                config_err(format!(
                    "unknown scenario {name:?}; builtin scenarios: {}",
                    builtin_names().join(", ")
                ))
            })?;
        Self::from_toml(text, None)
    }

    /// A builtin name or a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUILTIN.iter().any(|(n, _)| *n == name_or_path) || !Path::new(name_or_path).exists() {
            Self::builtin(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn backend(&self) -> Result<TspBackend> {
        self.config.tsp_backend.parse()
    }

    pub fn num_targets(&self) -> usize {
        self.config.targets.len()
    }

    pub fn continuous(&self) -> Result<&ContinuousScenario> {
        match &self.kind {
            ScenarioKind::Continuous(c) => Ok(c),
            ScenarioKind::Graph(_) => Err(config_err(format!(
                "scenario {} is a custom graph without continuous dynamics",
                self.config.name
            ))),
        }
    }

    pub fn from_config(config: ScenarioConfig, base: Option<&Path>) -> Result<Self> {
        if config.targets.len() < 2 {
            return Err(config_err("need at least two targets (depot first)"));
        }
        config.backend_check()?;
        let kind = match config.dynamics {
            DynamicsKind::CustomGraph => ScenarioKind::Graph(graph_scenario(&config, base)?),
            _ => ScenarioKind::Continuous(Box::new(continuous_scenario(&config)?)),
        };
        Ok(Scenario { config, kind })
    }
}

impl ScenarioConfig {
    fn backend_check(&self) -> Result<()> {
        self.tsp_backend.parse::<TspBackend>().map(|_| ())
    }
}

fn graph_scenario(config: &ScenarioConfig, base: Option<&Path>) -> Result<GraphScenario> {
    let system = match (&config.graph, &config.graph_inline) {
        (Some(p), None) => {
            let path: PathBuf = match base {
                Some(b) => b.join(p),
                None => PathBuf::from(p),
            };
            FiniteSystem::read_text(&path)?
        }
        (None, Some(text)) => FiniteSystem::parse_text(text)?,
        _ => return Err(config_err("custom-graph needs exactly one of graph or graph_inline")),
    };
    let n = system.num_states();
    let targets = config
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if let Some(&c) = t.cells.iter().find(|&&c| c >= n) {
                return Err(config_err(format!("target {}: cell {c} out of range", i + 1)));
            }
            if t.cells.is_empty() {
                return Err(config_err(format!("target {}: no cells", i + 1)));
            }
            Ok(StateSet::from_indices(n, t.cells.iter().copied()))
        })
        .collect::<Result<Vec<_>>>()?;
    if config.start_cell.is_some_and(|s| s >= n) {
        return Err(config_err("start_cell out of range"));
    }
    Ok(GraphScenario {
        system,
        targets,
        start: config.start_cell,
    })
}

fn continuous_scenario(config: &ScenarioConfig) -> Result<ContinuousScenario> {
    let n = match config.dynamics {
        DynamicsKind::Dubins => 3,
        DynamicsKind::Truck => 4,
        DynamicsKind::CustomGraph => unreachable!(),
    };
    let g = config.grid.as_ref().ok_or_else(|| config_err("missing [grid]"))?;
    check_box(
        &BoxConfig {
            lower: g.lower.clone(),
            upper: g.upper.clone(),
        },
        n,
        "grid",
    )?;
    let periodic = if g.periodic.is_empty() { vec![false; n] } else { g.periodic.clone() };
    if g.counts.len() != n || periodic.len() != n {
        return Err(config_err(format!("grid: expected {n} counts and periodic flags")));
    }
    let grid = UniformGrid::from_bounds(g.lower.clone(), &g.upper, g.counts.clone(), periodic)
        .map_err(|e| config_err(format!("grid: {e}")))?;

    let ic = config.inputs.as_ref().ok_or_else(|| config_err("missing [inputs]"))?;
    check_box(
        &BoxConfig {
            lower: ic.lower.clone(),
            upper: ic.upper.clone(),
        },
        2,
        "inputs",
    )?;
    let inputs = if ic.axes.is_empty() {
        InputSample::uniform(&ic.lower, &ic.upper, &ic.counts)
    } else if ic.axes.len() != 2 || ic.axes.iter().any(Vec::is_empty) {
        Err(config_err("inputs.axes: expected 2 nonempty value lists"))
    } else {
        InputSample::from_axes(&ic.axes)
    }
    .map_err(|e| config_err(format!("inputs: {e}")))?;
    if !inputs.within(&ic.lower, &ic.upper) {
        return Err(config_err("inputs: sample values outside the input box"));
    }

    let w = config.disturbance.clone().unwrap_or(BoxConfig {
        lower: vec![0.0; n],
        upper: vec![0.0; n],
    });
    check_box(&w, n, "disturbance")?;
    if !(config.tau > 0.0) {
        return Err(config_err("tau must be positive"));
    }
    let (rhs, model): (fn(&[f64], &[f64], &mut [f64]), GrowthBoundModel) = match config.dynamics {
        DynamicsKind::Dubins => (dubins_rhs, dubins_growth_bound()),
        _ => {
            let half: Vec<f64> = w.lower.iter().zip(&w.upper).map(|(l, u)| l.abs().max(u.abs())).collect();
            let dist = half[3];
            let cap = config.speed_cap.unwrap_or_else(|| {
                let vmax = g.lower[3].abs().max(g.upper[3].abs());
                vmax + (ic.lower[0].abs().max(ic.upper[0].abs()) + dist) * config.tau
            });
            (truck_rhs, truck_growth_bound(cap, half, config.tau))
        }
    };
    let spec = VectorFieldSpec::new(n, 2, rhs, w.lower.clone(), w.upper.clone(), config.tau)?
        .with_substeps(config.substeps);

    for (i, t) in config.targets.iter().enumerate() {
        if t.boxes.is_empty() {
            return Err(config_err(format!("target {}: no boxes", i + 1)));
        }
        for b in &t.boxes {
            check_box(b, n, &format!("target {}", i + 1))?;
        }
    }
    for (i, b) in config.obstacles.iter().enumerate() {
        check_box(b, n, &format!("obstacle {}", i + 1))?;
    }
    for (i, b) in config.cost.lanes.iter().enumerate() {
        check_box(b, n, &format!("lane {}", i + 1))?;
    }
    if !config.cost.input_weights.is_empty() && config.cost.input_weights.len() != 2 {
        return Err(config_err("cost.input_weights: expected 2 weights"));
    }
    let target_regions: Vec<Region> = config.targets.iter().map(|t| region_of(&t.boxes)).collect();
    let targets = target_regions.iter().map(|r| GridRegion::new(&grid, r)).collect();
    let obstacles = region_of(&config.obstacles);
    let cost = ScenarioCost {
        tau: config.tau,
        input_weights: config.cost.input_weights.clone(),
        roads: config.cost.roads.clone(),
        obstacles: GridRegion::new(&grid, &obstacles),
        lanes: (!config.cost.lanes.is_empty()).then(|| GridRegion::new(&grid, &region_of(&config.cost.lanes))),
        grid: grid.clone(),
    };
    if let Some(s) = &config.start {
        if s.len() != n {
            return Err(config_err(format!("start: expected {n} coordinates")));
        }
    }
    Ok(ContinuousScenario {
        spec,
        model,
        grid,
        inputs,
        cost,
        target_regions,
        targets,
        obstacles,
        start: config.start.clone(),
        sim_substeps: config.sim_substeps.max(1),
    })
}
