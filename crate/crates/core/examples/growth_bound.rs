// One sampling period of the Dubins vehicle from a grid cell: the nominal
// flow, the growth-bound successor box, and sampled solutions inside it.

use dtsp::dynamics::{dubins_growth_bound, dubins_rhs, overapprox_successor, IntervalBox, VectorFieldSpec};
use dtsp::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<usize> {
    let spec = VectorFieldSpec::new(3, 2, dubins_rhs, vec![-1.0, -1.0, -0.02], vec![1.0, 1.0, 0.02], 0.5)?;
    let model = dubins_growth_bound();
    let cell = IntervalBox::new(vec![10.0, 10.0, 0.3], vec![0.5, 0.5, 0.05])?;
    let u = [4.0, 0.4];
    let reach = overapprox_successor(&spec, &model, &cell, &u)?;
    println!("successor box: center {:?}, radius {:?}", reach.center, reach.radius);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (lo, hi) = (cell.lower(), cell.upper());
    let mut inside = 0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|d| rng.random_range(lo[d]..=hi[d])).collect();
        let w: Vec<f64> = (0..3)
            .map(|d| rng.random_range(spec.w_lower()[d]..=spec.w_upper()[d]))
            .collect();
        if reach.contains(&spec.flow(&x, &u, &w, 20)?) {
            inside += 1;
        }
    }
    println!("{inside} of 1000 sampled solutions inside the box");
    Ok(inside)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
