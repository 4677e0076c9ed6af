//! Travelling-salesman controller synthesis on a finite system.
//!
//! 1. Shrink the targets to a fixed point where every target's reach value
//!    function is finite on every other (shrunk) target.
//! 2. Estimate the travel cost between targets from those value functions
//!    and solve the classical ATSP on that matrix.
//! 3. For each tour position, solve the reach-avoid problem for that target
//!    with the next target's value function as terminal cost, so each leg is
//!    aware of the one that follows.
//!
//! At runtime [`switching_step`] walks through the tour positions, advancing
//! whenever the active controller signals stop.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::atsp::{AtspInstance, Tour};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::reach::{solve, ControlAction, MemorylessController, ReachAvoidProblem, ValueFunction};
use crate::system::{Cost, FiniteSystem, StateSet, INFINITY};
use crate::tsplib::{solve_with, TspBackend};

pub const RESULT_MAGIC: &[u8; 8] = b"DTSPCTRL";
pub const RESULT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub backend: TspBackend,
    pub seed: u64,
    /// Use `Reach(A'_{Tour(i)}, 0)` for every leg instead of chaining the
    /// next target's value function.
    pub naive_chaining: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            backend: TspBackend::Heuristic,
            seed: 0,
            naive_chaining: false,
        }
    }
}

/// Shrunk targets and their reach value functions (with zero terminal cost).
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub shrunk: Vec<StateSet>,
    pub value_functions: Vec<ValueFunction>,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub shrunk: Vec<StateSet>,
    pub tour: Tour,
    /// Indexed by tour position: entry `i` steers to `A'_{Tour(i+1)}`.
    pub controllers: Vec<MemorylessController>,
    pub value_functions: Vec<ValueFunction>,
    /// Row-major `N × N`.
    pub cost_matrix: Vec<Cost>,
    pub naive_chaining: bool,
}

impl SynthesisResult {
    pub fn num_targets(&self) -> usize {
        self.shrunk.len()
    }

    pub fn num_states(&self) -> usize {
        self.shrunk[0].capacity()
    }

    /// Controller used at 1-based stage `k ∈ [1, N+1]`. The last stage reuses
    /// the first position's controller, whose target is the depot.
    pub fn stage_controller(&self, k: usize) -> &MemorylessController {
        let n = self.num_targets();
        if k > n {
            &self.controllers[0]
        } else {
            &self.controllers[k - 1]
        }
    }

    pub fn cost(&self, i: usize, j: usize) -> Cost {
        self.cost_matrix[i * self.num_targets() + j]
    }
}

/// Queue-driven target shrinking. Batches of queued targets are solved in
/// parallel; shrink decisions are applied sequentially in FIFO order.
pub fn shrink_fixed_point(sys: &FiniteSystem, targets: &[StateSet]) -> Result<FixedPoint> {
    let n = targets.len();
    if n < 2 {
        return Err(Error::usage("need at least two targets (depot plus one)"));
    }
    for (i, t) in targets.iter().enumerate() {
        if t.capacity() != sys.num_states() {
            return Err(Error::usage(format!("target {} has wrong state count", i + 1)));
        }
        if t.is_empty() {
            return Err(Error::usage(format!("target {} is empty on the grid", i + 1)));
        }
    }
    let mut shrunk = targets.to_vec();
    let mut values: Vec<Option<ValueFunction>> = vec![None; n];
    let mut queue: VecDeque<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    while !queue.is_empty() {
        let batch: Vec<usize> = queue.drain(..).collect();
        for &i in &batch {
            queued[i] = false;
        }
        let solved: Vec<(usize, ValueFunction)> = batch
            .par_iter()
            .map(|&i| {
                let p = ReachAvoidProblem::zero_terminal(sys, shrunk[i].clone())?;
                Ok((i, solve(&p).0))
            })
            .collect::<Result<_>>()?;
        for (i, v) in solved {
            for j in (0..n).filter(|&j| j != i) {
                let keep = StateSet::from_indices(
                    sys.num_states(),
                    shrunk[j].iter().filter(|&x| v.get(x) < INFINITY),
                );
                if keep.is_empty() {
                    return Err(Error::Unsolvable {
                        by: i + 1,
                        emptied: j + 1,
                    });
                }
                if keep != shrunk[j] {
                    shrunk[j] = keep;
                    values[j] = None;
                    if !queued[j] {
                        queued[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            if !queued[i] {
                values[i] = Some(v);
            }
        }
    }
    Ok(FixedPoint {
        shrunk,
        value_functions: values.into_iter().map(|v| v.expect("value function computed")).collect(),
    })
}

/// `C[i][j] = min { V_j(p) : p ∈ A'_i }`, zero on the diagonal.
pub fn build_cost_matrix(fixed: &FixedPoint) -> Result<Vec<Cost>> {
    let n = fixed.shrunk.len();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = fixed.shrunk[i]
                .iter()
                .map(|p| fixed.value_functions[j].get(p))
                .fold(INFINITY, f64::min);
            if v == INFINITY {
                return Err(Error::usage(format!(
                    "internal invariant violated: C[{}][{}] is infinite after the fixed point",
                    i + 1,
                    j + 1
                )));
            }
            c[i * n + j] = v;
        }
    }
    Ok(c)
}

/// Per-position controllers for a given tour. Position `i` solves
/// `Reach(A'_{Tour(i)}, V_{Tour(i+1)})`, or `Reach(A'_{Tour(i)}, 0)` in naive
/// mode. Also returns each controller's value function.
pub fn chain_controllers(
    sys: &FiniteSystem,
    fixed: &FixedPoint,
    tour: &Tour,
    naive: bool,
) -> Result<Vec<(ValueFunction, MemorylessController)>> {
    let n = fixed.shrunk.len();
    (1..=n)
        .into_par_iter()
        .map(|pos| {
            let here = tour.at(pos);
            let next = tour.at(pos + 1);
            let terminal = if naive {
                vec![0.0; sys.num_states()]
            } else {
                fixed.value_functions[next].values.clone()
            };
            let p = ReachAvoidProblem::new(sys, fixed.shrunk[here].clone(), terminal)?;
            Ok(solve(&p))
        })
        .collect()
}

/// Assembles a result for an explicit tour on an existing fixed point.
pub fn synthesize_with_tour(
    sys: &FiniteSystem,
    fixed: &FixedPoint,
    cost_matrix: Vec<Cost>,
    tour: Tour,
    naive: bool,
) -> Result<SynthesisResult> {
    if tour.len() != fixed.shrunk.len() {
        return Err(Error::usage("tour length does not match number of targets"));
    }
    let controllers = chain_controllers(sys, fixed, &tour, naive)?
        .into_iter()
        .map(|(_, c)| c)
        .collect();
    Ok(SynthesisResult {
        shrunk: fixed.shrunk.clone(),
        tour,
        controllers,
        value_functions: fixed.value_functions.clone(),
        cost_matrix,
        naive_chaining: naive,
    })
}

pub fn synthesize(sys: &FiniteSystem, targets: &[StateSet], opts: &SynthesisOptions) -> Result<SynthesisResult> {
    let fixed = shrink_fixed_point(sys, targets)?;
    let c = build_cost_matrix(&fixed)?;
    let inst = AtspInstance::new(targets.len(), c.clone())?;
    let tour = solve_with(&inst, &opts.backend, opts.seed)?;
    synthesize_with_tour(sys, &fixed, c, tour, opts.naive_chaining)
}

/// Runtime memory of the switching controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchingState {
    /// 1-based stage in `[1, N+1]`.
    pub stage: usize,
    pub complete: bool,
}

impl Default for SwitchingState {
    fn default() -> Self {
        SwitchingState {
            stage: 1,
            complete: false,
        }
    }
}

/// Output of one evaluation of the switching controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchedAction {
    pub input: usize,
    /// Overall stopping signal; only raised when the final leg stops.
    pub stop: bool,
}

/// Evaluates the switching controller at `cell`. The stage advances while
/// the active controller signals stop, so targets that coincide are passed
/// in one step.
pub fn switching_step(
    result: &SynthesisResult,
    state: SwitchingState,
    cell: usize,
) -> Result<(SwitchedAction, SwitchingState)> {
    if state.complete {
        return Err(Error::usage("switching controller already completed"));
    }
    let n = result.num_targets();
    let mut k = state.stage;
    loop {
        let a: ControlAction = result.stage_controller(k).action(cell);
        if !a.defined {
            return Err(Error::RuntimeFault { stage: k, cell });
        }
        if a.stop {
            if k <= n {
                k += 1;
                continue;
            }
            return Ok((
                SwitchedAction {
                    input: a.input as usize,
                    stop: true,
                },
                SwitchingState {
                    stage: k,
                    complete: true,
                },
            ));
        }
        return Ok((
            SwitchedAction {
                input: a.input as usize,
                stop: false,
            },
            SwitchingState {
                stage: k,
                complete: false,
            },
        ));
    }
}

/// Worst-case accumulated cost of a fixed memoryless policy, where stopping
/// at `x` is worth `on_stop[x]`. Cycles and undefined states evaluate to `∞`.
pub fn evaluate_policy(sys: &FiniteSystem, ctrl: &MemorylessController, on_stop: &[Cost]) -> Vec<Cost> {
    let n = sys.num_states();
    let m = sys.num_inputs();
    const NEW: u8 = 0;
    const OPEN: u8 = 1;
    const DONE: u8 = 2;
    let mut mark = vec![NEW; n];
    let mut out = vec![INFINITY; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if mark[root] != NEW {
            continue;
        }
        stack.push((root, 0));
        mark[root] = OPEN;
        while let Some(&mut (x, ref mut next)) = stack.last_mut() {
            let a = ctrl.action(x);
            if !a.defined || a.stop {
                out[x] = if a.defined { on_stop[x] } else { INFINITY };
                mark[x] = DONE;
                stack.pop();
                continue;
            }
            let p = x * m + a.input as usize;
            let succ = sys.pair_successors(p);
            if *next < succ.len() {
                let y = succ[*next] as usize;
                *next += 1;
                match mark[y] {
                    NEW => {
                        mark[y] = OPEN;
                        stack.push((y, 0));
                    }
                    OPEN => out[y] = INFINITY, // cycle; value stays infinite
                    _ => {}
                }
                continue;
            }
            let cyclic = succ.iter().any(|&y| mark[y as usize] == OPEN);
            out[x] = if cyclic { INFINITY } else { sys.pair_q(p, &out) };
            mark[x] = DONE;
            stack.pop();
        }
    }
    out
}

/// Worst-case remaining cost per stage `k ∈ [1, N+1]` (index `k - 1`) of the
/// switching controller on the abstract system, excluding terminal offsets.
pub fn stage_bounds(sys: &FiniteSystem, result: &SynthesisResult) -> Vec<Vec<Cost>> {
    let n = result.num_targets();
    let mut bounds: Vec<Vec<Cost>> = vec![Vec::new(); n + 1];
    bounds[n] = evaluate_policy(sys, result.stage_controller(n + 1), &vec![0.0; sys.num_states()]);
    for k in (1..=n).rev() {
        bounds[k - 1] = evaluate_policy(sys, result.stage_controller(k), &bounds[k]);
    }
    bounds
}

/// Outcome of an abstract closed-loop run.
#[derive(Debug, Clone)]
pub struct AbstractRun {
    pub cells: Vec<usize>,
    pub stages: Vec<usize>,
    pub cost: Cost,
    pub completed: bool,
}

/// Closed loop on the abstract system with an adversary that always picks
/// the successor maximizing step cost plus remaining worst-case cost.
pub fn simulate_adversarial(
    sys: &FiniteSystem,
    result: &SynthesisResult,
    bounds: &[Vec<Cost>],
    start: usize,
    max_steps: usize,
) -> Result<AbstractRun> {
    let m = sys.num_inputs();
    let mut state = SwitchingState::default();
    let mut x = start;
    let mut run = AbstractRun {
        cells: vec![start],
        stages: Vec::new(),
        cost: 0.0,
        completed: false,
    };
    for _ in 0..=max_steps {
        let (a, next) = switching_step(result, state, x)?;
        state = next;
        run.stages.push(state.stage);
        if a.stop {
            run.completed = true;
            return Ok(run);
        }
        let p = x * m + a.input;
        let bound = &bounds[state.stage - 1];
        let succ = sys.pair_successors(p);
        let (k, _) = succ
            .iter()
            .enumerate()
            .map(|(k, &y)| (k, sys.edge_cost(p, k) + bound[y as usize]))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        run.cost += sys.edge_cost(p, k);
        x = succ[k] as usize;
        run.cells.push(x);
    }
    Ok(run)
}

/// 64-bit fingerprint of the grid (or of the bare state count for systems
/// without a grid), stored in result files to catch mismatched reloads.
pub fn grid_fingerprint(grid: Option<&UniformGrid>, num_states: usize) -> u64 {
    let mut h = Sha256::new();
    h.update((num_states as u64).to_le_bytes());
    if let Some(g) = grid {
        h.update((g.dim() as u64).to_le_bytes());
        for d in 0..g.dim() {
            h.update(g.lower()[d].to_le_bytes());
            h.update(g.eta()[d].to_le_bytes());
            h.update((g.counts()[d] as u64).to_le_bytes());
            h.update([g.periodic()[d] as u8]);
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Binary layout (little-endian): magic `DTSPCTRL`, version `u32`, grid
/// fingerprint `u64`, flags `u8` (bit 0 naive chaining, bit 1 value
/// functions present), state count `u64`, `N` `u64`, tour as `N+1` 0-based
/// `u64` city indices, `N` target bitsets (word count `u64` then words), `N`
/// controller arrays of `(input u16, flags u8)` per state, then optionally
/// `N` value functions and the `N × N` cost matrix as `f64` (`∞` kept as
/// the IEEE infinity).
pub fn write_result(result: &SynthesisResult, fingerprint: u64, with_values: bool, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let n = result.num_targets();
    let states = result.num_states();
    w.write_all(RESULT_MAGIC).map_err(io)?;
    w.write_all(&RESULT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&fingerprint.to_le_bytes()).map_err(io)?;
    let flags = result.naive_chaining as u8 | ((with_values as u8) << 1);
    w.write_all(&[flags]).map_err(io)?;
    w.write_all(&(states as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    for &c in result.tour.cities() {
        w.write_all(&(c as u64).to_le_bytes()).map_err(io)?;
    }
    for s in &result.shrunk {
        w.write_all(&(s.words().len() as u64).to_le_bytes()).map_err(io)?;
        for word in s.words() {
            w.write_all(&word.to_le_bytes()).map_err(io)?;
        }
    }
    for c in &result.controllers {
        for a in &c.actions {
            w.write_all(&a.input.to_le_bytes()).map_err(io)?;
            w.write_all(&[a.flags()]).map_err(io)?;
        }
    }
    if with_values {
        for v in &result.value_functions {
            for x in &v.values {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        for x in &result.cost_matrix {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads a result file; returns the result and the stored fingerprint. If
/// the file carries no value functions they are left empty.
pub fn read_result(path: &Path) -> Result<(SynthesisResult, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = &bytes[..];
    let corrupt = |what: &str| Error::usage(format!("{}: corrupt result file ({what})", path.display()));
    let take = |k: usize, r: &mut &[u8]| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; k];
        r.read_exact(&mut buf).map_err(|_| corrupt("truncated"))?;
        Ok(buf)
    };
    let u64_of = |b: Vec<u8>| u64::from_le_bytes(b.try_into().unwrap());
    if take(8, &mut r)? != RESULT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(take(4, &mut r)?.try_into().unwrap());
    if version != RESULT_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let fingerprint = u64_of(take(8, &mut r)?);
    let flags = take(1, &mut r)?[0];
    let states = u64_of(take(8, &mut r)?) as usize;
    let n = u64_of(take(8, &mut r)?) as usize;
    if n < 2 || n > 1 << 16 || states == 0 {
        return Err(corrupt("bad header"));
    }
    let mut cities = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        cities.push(u64_of(take(8, &mut r)?) as usize);
    }
    let tour = Tour::new(cities).map_err(|_| corrupt("invalid tour"))?;
    let mut shrunk = Vec::with_capacity(n);
    for _ in 0..n {
        let k = u64_of(take(8, &mut r)?) as usize;
        if k != states.div_ceil(64) {
            return Err(corrupt("bitset size"));
        }
        let words = (0..k).map(|_| take(8, &mut r).map(u64_of)).collect::<Result<Vec<_>>>()?;
        shrunk.push(StateSet::from_words(states, words)?);
    }
    let mut controllers = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = take(3 * states, &mut r)?;
        let actions = raw
            .chunks_exact(3)
            .map(|c| ControlAction::from_parts(u16::from_le_bytes([c[0], c[1]]), c[2]))
            .collect();
        controllers.push(MemorylessController { actions });
    }
    let mut value_functions = Vec::new();
    let mut cost_matrix = Vec::new();
    if flags & 2 != 0 {
        for _ in 0..n {
            let raw = take(8 * states, &mut r)?;
            value_functions.push(ValueFunction {
                values: raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            });
        }
        let raw = take(8 * n * n, &mut r)?;
        cost_matrix = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok((
        SynthesisResult {
            shrunk,
            tour,
            controllers,
            value_functions,
            cost_matrix,
            naive_chaining: flags & 1 != 0,
        },
        fingerprint,
    ))
}
