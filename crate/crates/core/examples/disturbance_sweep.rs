//! Sampled worst-case performance of the UAV controller: the nominal run,
//! every vertex of the disturbance box, and seeded random signals.

use dtsp::scenario::Scenario;
use dtsp::sim::{
    estimate_performance, evaluate_total_cost, performance_signals, simulate_closed_loop,
};
use dtsp::synthesis::{stage_bounds, synthesize, SynthesisOptions};
use dtsp::Result;

fn main() -> Result<()> {
    let s = Scenario::builtin("uav-mini")?;
    let c = s.continuous()?;
    let abs = c.abstraction()?;
    let result = synthesize(&abs.system, &c.target_sets(), &SynthesisOptions::default())?;
    let x0 = c.start.clone().expect("uav-mini has a start state");
    let max = s.config.max_steps;

    for (k, d) in performance_signals(c, 4, 9).iter().enumerate() {
        let traj = simulate_closed_loop(&result, c, &x0, d, max)?;
        println!("signal {k:2} {d:?}: J = {:.3}", evaluate_total_cost(&traj, c));
    }
    let bound = stage_bounds(&abs.system, &result)[0][c.grid.quantize(&x0)];
    for trials in [1, 10, 100] {
        let est = estimate_performance(&result, c, &x0, trials, 9, max)?;
        println!("estimate with {trials:3} random trials: {est:.3} (abstract bound {bound:.3})");
    }
    Ok(())
}
