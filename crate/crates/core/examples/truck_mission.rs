//! Desk-scale truck delivery round: four-dimensional abstraction with lane
//! rules and a road-distance cost, then a nominal closed-loop run.

use dtsp::scenario::Scenario;
use dtsp::sim::{check_condition_star, evaluate_total_cost, simulate_closed_loop, DisturbanceSignal};
use dtsp::synthesis::{stage_bounds, synthesize, SynthesisOptions};
use dtsp::Result;

fn main() -> Result<()> {
    let s = Scenario::builtin("truck-mini")?;
    let c = s.continuous()?;
    let abs = c.abstraction()?;
    println!("{} cells, {} transitions", abs.grid.num_cells(), abs.system.num_transitions());
    let result = synthesize(&abs.system, &c.target_sets(), &SynthesisOptions::default())?;
    let n = result.num_targets();
    println!("tour {}", result.tour);
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:8.2}", result.cost(i, j))).collect();
        println!("  {}", row.join(""));
    }

    let x0 = c.start.clone().expect("truck-mini has a start state");
    let bound = stage_bounds(&abs.system, &result)[0][c.grid.quantize(&x0)];
    let traj = simulate_closed_loop(&result, c, &x0, &DisturbanceSignal::Constant(c.spec.w_mid()), s.config.max_steps)?;
    for step in traj.steps.iter().step_by(5) {
        println!(
            "  stage {} at ({:6.2}, {:6.2}) heading {:5.2} speed {:4.2}",
            step.stage, step.x[0], step.x[1], step.x[2], step.x[3]
        );
    }
    println!(
        "covered all targets: {}, J = {:.3}, abstract bound {bound:.3}",
        check_condition_star(&traj, &c.targets),
        evaluate_total_cost(&traj, c)
    );
    Ok(())
}
