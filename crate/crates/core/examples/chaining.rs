//! Compares chained controllers, which stop at a target only where the next
//! leg is cheap, with naive ones that stop at the first target cell.

use dtsp::atsp::AtspInstance;
use dtsp::scenario::Scenario;
use dtsp::sim::{evaluate_total_cost, simulate_closed_loop, DisturbanceSignal};
use dtsp::synthesis::{build_cost_matrix, shrink_fixed_point, synthesize_with_tour};
use dtsp::tsplib::solve_with;
use dtsp::Result;

fn main() -> Result<()> {
    let s = Scenario::builtin("uav-mini")?;
    let c = s.continuous()?;
    let abs = c.abstraction()?;
    let targets = c.target_sets();
    let fixed = shrink_fixed_point(&abs.system, &targets)?;
    let matrix = build_cost_matrix(&fixed)?;
    let tour = solve_with(&AtspInstance::new(targets.len(), matrix.clone())?, &s.backend()?, s.config.seed)?;
    let chained = synthesize_with_tour(&abs.system, &fixed, matrix.clone(), tour.clone(), false)?;
    let naive = synthesize_with_tour(&abs.system, &fixed, matrix, tour, true)?;

    let d = DisturbanceSignal::Constant(c.spec.w_mid());
    let (mut sum_c, mut sum_n, mut count) = (0.0, 0.0, 0);
    for cell in fixed.shrunk[0].iter() {
        let x0 = c.cell_center(cell)?;
        let jc = evaluate_total_cost(&simulate_closed_loop(&chained, c, &x0, &d, s.config.max_steps)?, c);
        let jn = evaluate_total_cost(&simulate_closed_loop(&naive, c, &x0, &d, s.config.max_steps)?, c);
        sum_c += jc;
        sum_n += jn;
        count += 1;
    }
    println!(
        "mean J over {count} depot cells: chained {:.3}, naive {:.3}",
        sum_c / count as f64,
        sum_n / count as f64
    );
    Ok(())
}
