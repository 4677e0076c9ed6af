//! Quantitative reach-avoid games on finite systems.
//!
//! The value of a state is the worst-case (over successors) minimal cost of
//! reaching the target and stopping there, where stopping at a target state
//! `x` costs `G0(x)`. Obstacles enter through infinite running costs.
//!
//! Two algorithms compute the same value function:
//! a minimax label-setting (Dijkstra generalization over hyperedges) when all
//! finite running costs are strictly positive, and Gauss-Seidel value
//! iteration from `V ≡ ∞` otherwise.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::system::{Cost, FiniteSystem, StateSet, INFINITY};

/// Reach-avoid problem over a borrowed finite system.
#[derive(Debug, Clone)]
pub struct ReachAvoidProblem<'a> {
    system: &'a FiniteSystem,
    target: StateSet,
    terminal: Vec<Cost>,
}

impl<'a> ReachAvoidProblem<'a> {
    /// `terminal` holds `G0` per state; entries outside the target are
    /// ignored (treated as `∞`).
    pub fn new(system: &'a FiniteSystem, target: StateSet, terminal: Vec<Cost>) -> Result<Self> {
        let n = system.num_states();
        if target.capacity() != n || terminal.len() != n {
            return Err(Error::usage("target or terminal cost does not match system size"));
        }
        if target.is_empty() {
            return Err(Error::usage("reach-avoid target must be nonempty"));
        }
        if terminal.iter().any(|c| c.is_nan() || *c < 0.0) {
            return Err(Error::usage("terminal cost must be in [0, inf]"));
        }
        let mut terminal = terminal;
        for (x, g) in terminal.iter_mut().enumerate() {
            if !target.contains(x) {
                *g = INFINITY;
            }
        }
        if target.iter().all(|x| terminal[x] == INFINITY) {
            return Err(Error::usage("terminal cost must be finite on some target state"));
        }
        Ok(ReachAvoidProblem {
            system,
            target,
            terminal,
        })
    }

    /// Problem with zero terminal cost on the whole target.
    pub fn zero_terminal(system: &'a FiniteSystem, target: StateSet) -> Result<Self> {
        let n = system.num_states();
        Self::new(system, target, vec![0.0; n])
    }

    pub fn system(&self) -> &FiniteSystem {
        self.system
    }

    pub fn target(&self) -> &StateSet {
        &self.target
    }

    /// Cost of stopping at `x`: `G0(x)` on the target, `∞` elsewhere.
    pub fn stop_cost(&self, x: usize) -> Cost {
        self.terminal[x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<Cost>,
}

impl ValueFunction {
    pub fn infinite(n: usize) -> Self {
        ValueFunction {
            values: vec![INFINITY; n],
        }
    }

    pub fn get(&self, x: usize) -> Cost {
        self.values[x]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-state choice of an input index and stopping flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ControlAction {
    pub input: u16,
    pub stop: bool,
    /// False outside the winning domain (`V = ∞`); the action is then an
    /// arbitrary default.
    pub defined: bool,
}

impl ControlAction {
    pub fn flags(&self) -> u8 {
        (self.stop as u8) | ((self.defined as u8) << 1)
    }

    pub fn from_parts(input: u16, flags: u8) -> Self {
        ControlAction {
            input,
            stop: flags & 1 != 0,
            defined: flags & 2 != 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemorylessController {
    pub actions: Vec<ControlAction>,
}

impl MemorylessController {
    pub fn action(&self, x: usize) -> ControlAction {
        self.actions[x]
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// One application of the Bellman operator
/// `V'(x) = min{ stop(x), min_u max_y [g(x,y,u) + V(y)] }`.
pub fn bellman_backup(problem: &ReachAvoidProblem<'_>, v: &ValueFunction) -> ValueFunction {
    let sys = problem.system;
    let m = sys.num_inputs();
    let values = (0..sys.num_states())
        .map(|x| {
            (0..m)
                .map(|u| sys.pair_q(x * m + u, &v.values))
                .fold(problem.stop_cost(x), f64::min)
        })
        .collect();
    ValueFunction { values }
}

/// Solves the reach-avoid problem: value function plus an optimal memoryless
/// controller with stopping signal.
pub fn solve(problem: &ReachAvoidProblem<'_>) -> (ValueFunction, MemorylessController) {
    let positive = problem.system.finite_costs_positive();
    let v = if positive {
        label_setting(problem)
    } else {
        gauss_seidel(problem, 1e-12)
    };
    let ctrl = if positive {
        extract_argmin(problem, &v)
    } else {
        extract_layered(problem, &v)
    };
    (v, ctrl)
}

/// `{x : V(x) = ∞}`.
pub fn restrict_infinite(v: &ValueFunction) -> StateSet {
    StateSet::from_indices(
        v.values.len(),
        v.values
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == INFINITY)
            .map(|(x, _)| x),
    )
}

#[derive(PartialEq)]
struct Label(Cost, u32);

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap; ties broken by lower state index.
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimax Dijkstra. A pair `(x, u)` is relaxed once all of its successors
/// are final; the per-pair countdown makes each relaxation O(1) amortized.
fn label_setting(problem: &ReachAvoidProblem<'_>) -> ValueFunction {
    let sys = problem.system;
    let n = sys.num_states();
    let m = sys.num_inputs();
    assert!(
        sys.finite_costs_positive(),
        "label-setting requires strictly positive finite step costs"
    );
    let mut value = vec![INFINITY; n];
    let mut done = vec![false; n];
    let mut pending: Vec<u32> = (0..n * m)
        .map(|p| sys.pair_successors(p).len() as u32)
        .collect();
    let mut heap = BinaryHeap::new();
    for x in problem.target.iter() {
        let g = problem.stop_cost(x);
        if g < INFINITY {
            value[x] = g;
            heap.push(Label(g, x as u32));
        }
    }
    while let Some(Label(vx, y)) = heap.pop() {
        let y = y as usize;
        if done[y] || vx > value[y] {
            continue;
        }
        done[y] = true;
        for &p in sys.predecessor_pairs(y) {
            let p = p as usize;
            pending[p] -= 1;
            if pending[p] != 0 {
                continue;
            }
            let x = p / m;
            if done[x] {
                continue;
            }
            let q = sys.pair_q(p, &value);
            if q < value[x] {
                value[x] = q;
                heap.push(Label(q, x as u32));
            }
        }
    }
    ValueFunction { values: value }
}

fn gauss_seidel(problem: &ReachAvoidProblem<'_>, tol: f64) -> ValueFunction {
    let sys = problem.system;
    let n = sys.num_states();
    let m = sys.num_inputs();
    let mut value = vec![INFINITY; n];
    loop {
        let mut change: f64 = 0.0;
        for x in 0..n {
            let new = (0..m)
                .map(|u| sys.pair_q(x * m + u, &value))
                .fold(problem.stop_cost(x), f64::min);
            let old = value[x];
            if new != old {
                let d = if old == INFINITY { INFINITY } else { (old - new).abs() };
                change = change.max(d);
                value[x] = new;
            }
        }
        if change <= tol {
            return ValueFunction { values: value };
        }
    }
}

fn close(a: Cost, b: Cost) -> bool {
    a == b || (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

/// Lowest-index minimizer per state. Only sound with positive costs, where
/// every minimizing input strictly decreases the value.
fn extract_argmin(problem: &ReachAvoidProblem<'_>, v: &ValueFunction) -> MemorylessController {
    let sys = problem.system;
    let m = sys.num_inputs();
    let actions = (0..sys.num_states())
        .map(|x| {
            let vx = v.values[x];
            if vx == INFINITY {
                return ControlAction::default();
            }
            if problem.stop_cost(x) <= vx {
                return ControlAction {
                    input: 0,
                    stop: true,
                    defined: true,
                };
            }
            let u = (0..m)
                .find(|&u| close(sys.pair_q(x * m + u, &v.values), vx))
                .expect("finite value without a minimizing input");
            ControlAction {
                input: u as u16,
                stop: false,
                defined: true,
            }
        })
        .collect();
    MemorylessController { actions }
}

/// Controller extraction that tolerates zero-cost cycles: states are settled
/// in waves, and a state may only use an input whose successors are all
/// settled already, so the closed loop cannot circle forever.
fn extract_layered(problem: &ReachAvoidProblem<'_>, v: &ValueFunction) -> MemorylessController {
    let sys = problem.system;
    let n = sys.num_states();
    let m = sys.num_inputs();
    let mut actions = vec![ControlAction::default(); n];
    let mut settled = vec![false; n];
    let mut pending: Vec<u32> = (0..n * m)
        .map(|p| sys.pair_successors(p).len() as u32)
        .collect();
    let mut queue = VecDeque::new();
    for x in 0..n {
        if v.values[x] < INFINITY && problem.stop_cost(x) <= v.values[x] {
            actions[x] = ControlAction {
                input: 0,
                stop: true,
                defined: true,
            };
            settled[x] = true;
            queue.push_back(x);
        }
    }
    while let Some(y) = queue.pop_front() {
        let mut ready: Vec<usize> = Vec::new();
        for &p in sys.predecessor_pairs(y) {
            let p = p as usize;
            pending[p] -= 1;
            if pending[p] == 0 && !settled[p / m] {
                ready.push(p);
            }
        }
        ready.sort_unstable();
        for p in ready {
            let x = p / m;
            if settled[x] {
                continue;
            }
            if close(sys.pair_q(p, &v.values), v.values[x]) {
                actions[x] = ControlAction {
                    input: (p % m) as u16,
                    stop: false,
                    defined: true,
                };
                settled[x] = true;
                queue.push_back(x);
            }
        }
    }
    MemorylessController { actions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::FiniteSystemBuilder;

    fn chain() -> FiniteSystem {
        let mut b = FiniteSystemBuilder::new(4, 1);
        b.add(0, 0, 1, 1.0).add(1, 0, 2, 1.0).add(2, 0, 2, 1.0).add(3, 0, 3, 1.0);
        b.build().unwrap()
    }

    #[test]
    fn chain_values_and_controller() {
        let sys = chain();
        let p = ReachAvoidProblem::zero_terminal(&sys, StateSet::from_indices(4, [2])).unwrap();
        let (v, c) = solve(&p);
        assert_eq!(v.values, vec![2.0, 1.0, 0.0, INFINITY]);
        assert!(c.action(2).stop);
        assert_eq!(c.action(0), ControlAction { input: 0, stop: false, defined: true });
        assert!(!c.action(3).defined);
        assert_eq!(restrict_infinite(&v), StateSet::from_indices(4, [3]));
    }

    #[test]
    fn backup_iterates_to_chain_values() {
        let sys = chain();
        let p = ReachAvoidProblem::zero_terminal(&sys, StateSet::from_indices(4, [2])).unwrap();
        let mut v = ValueFunction::infinite(4);
        for _ in 0..5 {
            v = bellman_backup(&p, &v);
        }
        assert_eq!(v.values, vec![2.0, 1.0, 0.0, INFINITY]);
    }

    #[test]
    fn stopping_beats_looping() {
        let mut b = FiniteSystemBuilder::new(1, 1);
        b.add(0, 0, 0, 1.0);
        let sys = b.build().unwrap();
        let p = ReachAvoidProblem::new(&sys, StateSet::full(1), vec![5.0]).unwrap();
        let (v, c) = solve(&p);
        assert_eq!(v.values, vec![5.0]);
        assert!(c.action(0).stop);
    }

    #[test]
    fn picks_cheaper_input() {
        let mut b = FiniteSystemBuilder::new(3, 2);
        for x in 0..2 {
            b.add(x, 0, x + 1, 1.0).add(x, 1, x + 1, 10.0);
        }
        b.add(2, 0, 2, 1.0).add(2, 1, 2, 1.0);
        let sys = b.build().unwrap();
        let p = ReachAvoidProblem::zero_terminal(&sys, StateSet::from_indices(3, [2])).unwrap();
        let (v, c) = solve(&p);
        assert_eq!(v.values, vec![2.0, 1.0, 0.0]);
        assert_eq!(c.action(0).input, 0);
        assert_eq!(c.action(1).input, 0);
    }

    #[test]
    fn worst_case_over_successors() {
        // 0 --a--> {1, 2}: 1 is one step from the target, 2 is three steps.
        let mut b = FiniteSystemBuilder::new(5, 1);
        b.add(0, 0, 1, 1.0).add(0, 0, 2, 1.0);
        b.add(1, 0, 4, 1.0);
        b.add(2, 0, 3, 1.0);
        b.add(3, 0, 4, 1.0);
        b.add(4, 0, 4, 1.0);
        let sys = b.build().unwrap();
        let p = ReachAvoidProblem::zero_terminal(&sys, StateSet::from_indices(5, [4])).unwrap();
        let (v, _) = solve(&p);
        assert_eq!(v.values, vec![3.0, 1.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn unreachable_stays_infinite() {
        let mut b = FiniteSystemBuilder::new(2, 1);
        b.add(0, 0, 0, 1.0).add(1, 0, 1, 1.0);
        let sys = b.build().unwrap();
        let p = ReachAvoidProblem::zero_terminal(&sys, StateSet::from_indices(2, [1])).unwrap();
        let mut v = ValueFunction::infinite(2);
        for _ in 0..10 {
            v = bellman_backup(&p, &v);
            assert_eq!(v.values[0], INFINITY);
        }
    }

    #[test]
    fn zero_cost_cycles_do_not_trap_the_controller() {
        // State 0: input 0 is a free self-loop, input 1 reaches the target
        // for free. Both have Q = 0; only input 1 terminates.
        let mut b = FiniteSystemBuilder::new(2, 2);
        b.add(0, 0, 0, 0.0).add(0, 1, 1, 0.0);
        b.add(1, 0, 1, 0.0).add(1, 1, 1, 0.0);
        let sys = b.build().unwrap();
        let p = ReachAvoidProblem::zero_terminal(&sys, StateSet::from_indices(2, [1])).unwrap();
        let (v, c) = solve(&p);
        assert_eq!(v.values, vec![0.0, 0.0]);
        assert_eq!(c.action(0).input, 1);
        assert!(c.action(1).stop);
    }

    #[test]
    fn zero_cost_loop_without_exit_is_infinite() {
        let mut b = FiniteSystemBuilder::new(2, 1);
        b.add(0, 0, 0, 0.0).add(1, 0, 1, 0.0);
        let sys = b.build().unwrap();
        let p = ReachAvoidProblem::zero_terminal(&sys, StateSet::from_indices(2, [1])).unwrap();
        let (v, _) = solve(&p);
        assert_eq!(v.values, vec![INFINITY, 0.0]);
    }

    #[test]
    fn obstacles_block_but_allow_stopping() {
        let mut b = FiniteSystemBuilder::new(3, 1);
        b.add(0, 0, 1, 1.0).add(1, 0, 2, INFINITY).add(2, 0, 2, 1.0);
        let sys = b.build().unwrap();
        let p = ReachAvoidProblem::zero_terminal(&sys, StateSet::from_indices(3, [1, 2])).unwrap();
        let (v, _) = solve(&p);
        assert_eq!(v.values, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn invalid_problems_rejected() {
        let sys = chain();
        assert!(ReachAvoidProblem::zero_terminal(&sys, StateSet::empty(4)).is_err());
        assert!(ReachAvoidProblem::new(&sys, StateSet::from_indices(4, [2]), vec![INFINITY; 4]).is_err());
        assert!(ReachAvoidProblem::zero_terminal(&sys, StateSet::empty(3)).is_err());
    }
}
