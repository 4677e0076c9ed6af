// Minimax reach-avoid on a 5x5 grid world with a wall and a slippery input.

use dtsp::reach::{solve, ReachAvoidProblem, ValueFunction};
use dtsp::{FiniteSystemBuilder, Result, StateSet, INFINITY};

const SIDE: usize = 5;

pub fn run_example() -> Result<ValueFunction> {
    let id = |r: usize, c: usize| r * SIDE + c;
    let wall = |r: usize, c: usize| c == 2 && r < 4;
    // Inputs: east, north, south, and a fast east move that may overshoot.
    let mut b = FiniteSystemBuilder::new(SIDE * SIDE, 4);
    for r in 0..SIDE {
        for c in 0..SIDE {
            let x = id(r, c);
            let cost = if wall(r, c) { INFINITY } else { 1.0 };
            let east = id(r, (c + 1).min(SIDE - 1));
            b.add(x, 0, east, cost);
            b.add(x, 1, id(r.saturating_sub(1), c), cost);
            b.add(x, 2, id((r + 1).min(SIDE - 1), c), cost);
            b.add(x, 3, east, 1.5 * cost).add(x, 3, id(r, (c + 2).min(SIDE - 1)), 1.5 * cost);
        }
    }
    let sys = b.build()?;
    let target = StateSet::from_indices(SIDE * SIDE, [id(0, 4)]);
    let problem = ReachAvoidProblem::zero_terminal(&sys, target)?;
    let (v, ctrl) = solve(&problem);
    for r in 0..SIDE {
        let row: Vec<String> = (0..SIDE)
            .map(|c| match v.get(id(r, c)) {
                x if x == INFINITY => "   inf".into(),
                x => format!("{x:6.1}"),
            })
            .collect();
        println!("{}", row.join(""));
    }
    let a = ctrl.action(id(4, 0));
    println!("from the south-west corner: input {}, stop {}", a.input, a.stop);
    Ok(v)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
