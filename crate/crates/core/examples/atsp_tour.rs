// Random asymmetric TSP: exact and heuristic tours, plus a TSPLIB roundtrip.

use dtsp::atsp::{nearest_neighbor, solve_exact, solve_heuristic, AtspInstance};
use dtsp::tsplib::{parse_problem, parse_tour, write_problem, write_tour, DEFAULT_SCALE};
use dtsp::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(f64, f64)> {
    let n = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let matrix = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { rng.random_range(1.0..50.0) })
        .collect();
    let inst = AtspInstance::new(n, matrix)?;
    let exact = solve_exact(&inst)?;
    let greedy = nearest_neighbor(&inst);
    let heuristic = solve_heuristic(&inst, 0);
    for (name, t) in [("exact", &exact), ("nearest neighbor", &greedy), ("2-opt + Or-opt", &heuristic)] {
        println!("{name:>16}: {t} cost {:.3}", inst.tour_cost(t)?);
    }

    let text = write_problem(&inst, "random10", DEFAULT_SCALE);
    let back = parse_problem(&text, DEFAULT_SCALE)?;
    let tour = parse_tour(&write_tour(&exact, "random10"))?;
    println!("TSPLIB roundtrip cost: {:.3}", back.tour_cost(&tour)?);
    Ok((inst.tour_cost(&exact)?, inst.tour_cost(&heuristic)?))
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
