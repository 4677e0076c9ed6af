//! Closed-loop simulation of synthesized controllers on the concrete sampled
//! dynamics, total-cost evaluation and performance estimation.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridRegion;
use crate::scenario::ContinuousScenario;
use crate::synthesis::{switching_step, SwitchingState, SynthesisResult};
use crate::system::{Cost, INFINITY};

/// Disturbance realized as a constant over each sampling interval.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal {
    Constant(Vec<f64>),
    /// Independent uniform draw in `W` per sampling interval.
    Uniform { seed: u64 },
    /// One value per sampling interval; the last value is held afterwards.
    Scripted(Vec<Vec<f64>>),
}

impl DisturbanceSignal {
    /// Checks that every emitted value lies in the box `[lower, upper]`.
    pub fn validate(&self, lower: &[f64], upper: &[f64]) -> Result<()> {
        let inside = |w: &[f64]| {
            w.len() == lower.len() && w.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| l <= v && v <= u)
        };
        match self {
            DisturbanceSignal::Constant(w) if !inside(w) => {
                Err(Error::usage(format!("disturbance {w:?} outside W")))
            }
            DisturbanceSignal::Scripted(ws) => match ws.iter().position(|w| !inside(w)) {
                Some(k) => Err(Error::usage(format!("scripted disturbance {k} outside W"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    fn source(&self, lower: &[f64], upper: &[f64]) -> DisturbanceSource {
        DisturbanceSource {
            signal: self.clone(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            rng: match self {
                DisturbanceSignal::Uniform { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
                _ => None,
            },
        }
    }
}

struct DisturbanceSource {
    signal: DisturbanceSignal,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rng: Option<ChaCha8Rng>,
}

impl DisturbanceSource {
    fn at(&mut self, t: usize) -> Vec<f64> {
        match &self.signal {
            DisturbanceSignal::Constant(w) => w.clone(),
            DisturbanceSignal::Scripted(ws) => match ws.get(t).or(ws.last()) {
                Some(w) => w.clone(),
                None => self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect(),
            },
            DisturbanceSignal::Uniform { .. } => {
                let rng = self.rng.as_mut().expect("uniform source has a generator");
                self.lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(&l, &u)| if l < u { rng.random_range(l..=u) } else { l })
                    .collect()
            }
        }
    }
}

/// One sampling instant of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub stop: bool,
    pub stage: usize,
    /// `g(x(t), u(t), x(t+1))`; zero at the termination step.
    pub step_cost: Cost,
    /// Cost accumulated strictly before `t`.
    pub acc_cost: Cost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub steps: Vec<TrajectoryStep>,
    /// First step with `v = 1`, or `None` for infinite operation.
    pub termination: Option<usize>,
    /// `(stage, cell)` when the state left the active winning domain.
    pub fault: Option<(usize, usize)>,
}

impl TrajectoryRecord {
    pub fn accumulated_cost(&self) -> Cost {
        match self.termination {
            Some(t) => self.steps[t].acc_cost,
            None => INFINITY,
        }
    }
}

/// Runs the switching controller on the concrete dynamics from `x0`.
/// Runtime faults end the run and are kept in the record.
pub fn simulate_closed_loop(
    result: &SynthesisResult,
    scen: &ContinuousScenario,
    x0: &[f64],
    dist: &DisturbanceSignal,
    max_steps: usize,
) -> Result<TrajectoryRecord> {
    let grid = &scen.grid;
    if x0.len() != grid.dim() {
        return Err(Error::usage(format!("start state needs {} coordinates", grid.dim())));
    }
    let start_cell = grid.quantize(x0);
    if !result.shrunk[0].contains(start_cell) {
        return Err(Error::usage(format!(
            "start state {x0:?} (cell {start_cell}) is not in the shrunk depot set"
        )));
    }
    dist.validate(scen.spec.w_lower(), scen.spec.w_upper())?;
    let mut source = dist.source(scen.spec.w_lower(), scen.spec.w_upper());
    let mut record = TrajectoryRecord {
        steps: Vec::new(),
        termination: None,
        fault: None,
    };
    let mut x = grid.wrap(x0);
    let mut state = SwitchingState::default();
    let mut acc = 0.0;
    for t in 0..=max_steps {
        let cell = grid.quantize(&x);
        let (action, next) = match switching_step(result, state, cell) {
            Ok(r) => r,
            Err(Error::RuntimeFault { stage, cell }) => {
                record.fault = Some((stage, cell));
                return Ok(record);
            }
            Err(e) => return Err(e),
        };
        state = next;
        let u = scen.inputs.get(action.input).to_vec();
        if action.stop {
            record.steps.push(TrajectoryStep {
                x,
                u,
                stop: true,
                stage: state.stage,
                step_cost: 0.0,
                acc_cost: acc,
            });
            record.termination = Some(t);
            return Ok(record);
        }
        if t == max_steps {
            break;
        }
        let w = source.at(t);
        let y = grid.wrap(&scen.spec.flow(&x, &u, &w, scen.sim_substeps)?);
        let g = scen.cost.concrete(&x, &u, &y);
        record.steps.push(TrajectoryStep {
            x,
            u,
            stop: false,
            stage: state.stage,
            step_cost: g,
            acc_cost: acc,
        });
        acc += g;
        x = y;
    }
    Ok(record)
}

/// Coverage condition on the concrete target sets at sampling instants:
/// start and end in the depot, every other target visited in between.
pub fn check_condition_star(traj: &TrajectoryRecord, targets: &[GridRegion]) -> bool {
    let Some(t_end) = traj.termination else {
        return false;
    };
    let Some((depot, others)) = targets.split_first() else {
        return false;
    };
    let run = &traj.steps[..=t_end];
    depot.contains_point(&run[0].x)
        && depot.contains_point(&run[t_end].x)
        && others.iter().all(|a| run.iter().any(|s| a.contains_point(&s.x)))
}

/// Total cost `J`: the concrete running cost summed up to termination, or
/// `∞` for infinite operation or when the coverage condition fails.
pub fn evaluate_total_cost(traj: &TrajectoryRecord, scen: &ContinuousScenario) -> Cost {
    if !check_condition_star(traj, &scen.targets) {
        return INFINITY;
    }
    let t_end = traj.termination.expect("condition implies termination");
    (0..t_end)
        .map(|t| {
            let (s, n) = (&traj.steps[t], &traj.steps[t + 1]);
            scen.cost.concrete(&s.x, &s.u, &n.x)
        })
        .sum()
}

/// Distinct vertices of the disturbance box.
pub fn disturbance_vertices(lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let free: Vec<usize> = (0..lower.len()).filter(|&d| lower[d] < upper[d]).collect();
    (0..1usize << free.len())
        .map(|mask| {
            let mut w = lower.to_vec();
            for (b, &d) in free.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    w[d] = upper[d];
                }
            }
            w
        })
        .collect()
}

/// The disturbance signals used by [`estimate_performance`]: the midpoint of
/// `W`, its vertices, then `trials` seeded uniform signals.
pub fn performance_signals(scen: &ContinuousScenario, trials: usize, seed: u64) -> Vec<DisturbanceSignal> {
    let (lo, hi) = (scen.spec.w_lower(), scen.spec.w_upper());
    let mut out = vec![DisturbanceSignal::Constant(scen.spec.w_mid())];
    out.extend(disturbance_vertices(lo, hi).into_iter().map(DisturbanceSignal::Constant));
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    out.extend((0..trials).map(|_| DisturbanceSignal::Uniform { seed: master.next_u64() }));
    out
}

/// Sampled lower bound on the worst-case closed-loop cost from `x0`: the
/// largest `J` over the signals of [`performance_signals`].
pub fn estimate_performance(
    result: &SynthesisResult,
    scen: &ContinuousScenario,
    x0: &[f64],
    trials: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Cost> {
    if trials == 0 {
        return Err(Error::usage("need at least one trial"));
    }
    let costs: Vec<Cost> = performance_signals(scen, trials, seed)
        .par_iter()
        .map(|d| simulate_closed_loop(result, scen, x0, d, max_steps).map(|r| evaluate_total_cost(&r, scen)))
        .collect::<Result<_>>()?;
    Ok(costs.into_iter().fold(0.0, f64::max))
}
