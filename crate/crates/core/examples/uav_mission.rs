//! Desk-scale UAV mission: abstraction, synthesis, a closed-loop run under a
//! constant disturbance, and CSV/SVG export.

use std::path::PathBuf;

use dtsp::export::{write_svg, write_trajectory_csv};
use dtsp::scenario::Scenario;
use dtsp::sim::{evaluate_total_cost, simulate_closed_loop, DisturbanceSignal};
use dtsp::synthesis::{stage_bounds, synthesize, SynthesisOptions};
use dtsp::Result;

fn main() -> Result<()> {
    let s = Scenario::builtin("uav-mini")?;
    let c = s.continuous()?;
    let abs = c.abstraction()?;
    println!("{} cells, {} transitions", abs.grid.num_cells(), abs.system.num_transitions());
    let result = synthesize(&abs.system, &c.target_sets(), &SynthesisOptions::default())?;
    println!("tour {}", result.tour);

    let x0 = c.start.clone().expect("uav-mini has a start state");
    let bound = stage_bounds(&abs.system, &result)[0][c.grid.quantize(&x0)];
    let w = c.spec.w_lower().to_vec();
    let traj = simulate_closed_loop(&result, c, &x0, &DisturbanceSignal::Constant(w), s.config.max_steps)?;
    println!(
        "terminated at step {:?}, J = {:.3}, abstract bound {bound:.3}",
        traj.termination,
        evaluate_total_cost(&traj, c)
    );

    let out = PathBuf::from("target/uav_mission");
    std::fs::create_dir_all(&out).expect("create output directory");
    write_trajectory_csv(&traj, c.grid.dim(), c.inputs.dim(), &out.join("trajectory.csv"))?;
    write_svg(&traj, c, &out.join("trajectory.svg"))?;
    println!("wrote {}", out.display());
    Ok(())
}
