//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dtsp::abstraction::Abstraction;
use dtsp::atsp::{solve_exact, solve_heuristic, AtspInstance, Tour};
use dtsp::export::{read_trajectory_csv, write_trajectory_csv};
use dtsp::reach::{solve, ReachAvoidProblem};
use dtsp::scenario::{ContinuousScenario, Scenario};
use dtsp::sim::{
    check_condition_star, disturbance_vertices, evaluate_total_cost, simulate_closed_loop, DisturbanceSignal,
    TrajectoryRecord, TrajectoryStep,
};
use dtsp::synthesis::{
    build_cost_matrix, shrink_fixed_point, stage_bounds, synthesize_with_tour, SynthesisResult,
};
use dtsp::tsplib::solve_with;
use dtsp::{Cost, FiniteSystem, FiniteSystemBuilder, StateSet, INFINITY};

struct Outcome {
    id: usize,
    pass: bool,
    summary: String,
}

fn outcome(id: usize, pass: bool, summary: impl Into<String>) -> Outcome {
    let o = Outcome {
        id,
        pass,
        summary: summary.into(),
    };
    println!("  [{}] {}", o.id, o.summary);
    o
}

fn random_system(rng: &mut ChaCha8Rng) -> FiniteSystem {
    let n = rng.random_range(2..=200);
    let m = rng.random_range(1..=5);
    let mut b = FiniteSystemBuilder::new(n, m);
    for x in 0..n {
        for u in 0..m {
            let k = rng.random_range(1..=3);
            let succ: BTreeSet<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
            for y in succ {
                b.add(x, u, y, 10.0 - rng.random_range(0.0..10.0));
            }
        }
    }
    b.build().unwrap()
}

/// Dense Gauss-Seidel value iteration from `∞` until no value changes.
fn value_iteration(sys: &FiniteSystem, stop: &[Cost]) -> Vec<Cost> {
    let n = sys.num_states();
    let mut v = vec![INFINITY; n];
    for _ in 0..100 * n {
        let mut changed = false;
        for x in 0..n {
            let mut best = stop[x];
            for u in 0..sys.num_inputs() {
                let q = sys
                    .successors(x, u)
                    .unwrap()
                    .iter()
                    .map(|&y| sys.step_cost(x, u, y as usize).unwrap() + v[y as usize])
                    .fold(0.0, f64::max);
                best = best.min(q);
            }
            if best < v[x] {
                v[x] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    v
}

fn reach_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for _ in 0..100 {
        let sys = random_system(&mut rng);
        let n = sys.num_states();
        let target = StateSet::from_indices(n, (0..n).filter(|_| rng.random_bool(0.1)).chain([0]));
        let terminal: Vec<Cost> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let p = ReachAvoidProblem::new(&sys, target.clone(), terminal.clone()).unwrap();
        let (v, _) = solve(&p);
        let stop: Vec<Cost> = (0..n).map(|x| if target.contains(x) { terminal[x] } else { INFINITY }).collect();
        let oracle = value_iteration(&sys, &stop);
        for x in 0..n {
            let (a, b) = (v.get(x), oracle[x]);
            let d = if a == b { 0.0 } else { (a - b).abs() };
            worst = worst.max(d);
            if d.is_nan() || d > 1e-9 {
                mismatched += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        1,
        mismatched == 0 && secs < 10.0,
        format!("reach-avoid oracle: 100 systems, max deviation {worst:.2e}, {mismatched} mismatches, {secs:.2} s"),
    )
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> AtspInstance {
    let m = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { rng.random_range(1..=100) as f64 })
        .collect();
    AtspInstance::new(n, m).unwrap()
}

fn brute_force(inst: &AtspInstance) -> f64 {
    Tour::all_tours(inst.n())
        .iter()
        .map(|t| inst.tour_cost(t).unwrap())
        .fold(INFINITY, f64::min)
}

fn exact_atsp() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut wrong = 0;
    for k in 0..50 {
        let inst = random_instance(&mut rng, 4 + k % 5);
        let hk = inst.tour_cost(&solve_exact(&inst).unwrap()).unwrap();
        if hk != brute_force(&inst) {
            wrong += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        2,
        wrong == 0 && secs < 5.0,
        format!("exact ATSP: 50 instances N in 4..8, {wrong} differ from brute force, {secs:.2} s"),
    )
}

fn heuristic_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut below = 0;
    let mut close = 0;
    let mut worst: f64 = 1.0;
    for k in 0..100 {
        let inst = random_instance(&mut rng, 12);
        let exact = inst.tour_cost(&solve_exact(&inst).unwrap()).unwrap();
        let heur = inst.tour_cost(&solve_heuristic(&inst, k)).unwrap();
        if heur < exact {
            below += 1;
        }
        if heur <= 1.15 * exact {
            close += 1;
        }
        worst = worst.max(heur / exact);
    }
    outcome(
        3,
        below == 0 && close >= 95,
        format!("heuristic ATSP: {close}/100 within 1.15x of exact, {below} below exact, worst ratio {worst:.3}"),
    )
}

fn soundness(name: &str, c: &ContinuousScenario, abs: &Abstraction, seed: u64) -> (usize, usize) {
    let g = &c.grid;
    let m = abs.inputs.len();
    let (wl, wu) = (c.spec.w_lower(), c.spec.w_upper());
    let substeps = c.sim_substeps.max(1);
    let samples: Vec<u64> = (0..10_000).collect();
    let violations = samples
        .par_iter()
        .filter(|&&k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let cell = rng.random_range(0..g.num_cells());
            let u = rng.random_range(0..m);
            let b = g.cell_box(cell).unwrap();
            let x: Vec<f64> = b
                .lower()
                .iter()
                .zip(b.upper())
                .map(|(l, h)| rng.random_range(*l..h))
                .collect();
            let pieces = rng.random_range(1..=4);
            let values: Vec<Vec<f64>> = (0..pieces)
                .map(|_| {
                    wl.iter()
                        .zip(wu)
                        .map(|(&l, &h)| if l < h { rng.random_range(l..=h) } else { l })
                        .collect()
                })
                .collect();
            let ws: Vec<&Vec<f64>> = (0..substeps).map(|s| &values[s * pieces / substeps]).collect();
            let y = g.wrap(&c.spec.flow_piecewise(&x, abs.inputs.get(u), &ws).unwrap());
            let succ = abs.system.successors(cell, u).unwrap();
            succ.binary_search(&(g.quantize(&y) as u32)).is_err()
        })
        .count();
    println!("  {name}: {violations} of 10000 sampled transitions outside the abstract successor set");
    (violations, samples.len())
}

fn start_of(c: &ContinuousScenario, result: &SynthesisResult) -> Vec<f64> {
    c.start
        .clone()
        .unwrap_or_else(|| c.cell_center(result.shrunk[0].iter().next().unwrap()).unwrap())
}

fn nominal(c: &ContinuousScenario) -> DisturbanceSignal {
    DisturbanceSignal::Constant(c.spec.w_mid())
}

fn run_j(result: &SynthesisResult, c: &ContinuousScenario, x0: &[f64], d: &DisturbanceSignal, max: usize) -> Cost {
    simulate_closed_loop(result, c, x0, d, max)
        .map(|t| evaluate_total_cost(&t, c))
        .unwrap_or(INFINITY)
}

fn coverage(s: &Scenario, sys: &FiniteSystem, result: &SynthesisResult) -> Outcome {
    let c = s.continuous().unwrap();
    let max = s.config.max_steps;
    let bounds = stage_bounds(sys, result);
    let mut signals = vec![nominal(c)];
    signals.extend(
        disturbance_vertices(c.spec.w_lower(), c.spec.w_upper())
            .into_iter()
            .map(DisturbanceSignal::Constant),
    );
    signals.extend((0..20).map(|k| DisturbanceSignal::Uniform { seed: 100 + k }));
    let cells: Vec<usize> = result.shrunk[0].iter().collect();
    let per_cell: Vec<(usize, usize, usize)> = cells
        .par_iter()
        .map(|&cell| {
            let x0 = c.cell_center(cell).unwrap();
            let mut failed = 0;
            let mut over_bound = 0;
            for d in &signals {
                let ok = match simulate_closed_loop(result, c, &x0, d, max) {
                    Ok(t) => {
                        let j = evaluate_total_cost(&t, c);
                        if j > bounds[0][cell] {
                            over_bound += 1;
                        }
                        t.fault.is_none() && t.termination.is_some() && check_condition_star(&t, &c.targets) && j < INFINITY
                    }
                    Err(_) => false,
                };
                if !ok {
                    failed += 1;
                }
            }
            (failed, over_bound, signals.len())
        })
        .collect();
    let runs: usize = per_cell.iter().map(|r| r.2).sum();
    let failed: usize = per_cell.iter().map(|r| r.0).sum();
    let over: usize = per_cell.iter().map(|r| r.1).sum();
    outcome(
        5,
        failed == 0 && over == 0,
        format!(
            "coverage on uav-mini: {} start cells x {} signals (nominal, {} vertices, 20 random) = {runs} runs, \
             {failed} failed termination/coverage/finite J, {over} exceeded the abstract bound",
            cells.len(),
            signals.len(),
            signals.len() - 21
        ),
    )
}

fn chaining(s: &Scenario, sys: &FiniteSystem, chained: &SynthesisResult, naive: &SynthesisResult) -> Outcome {
    let c = s.continuous().unwrap();
    let (bc, bn) = (stage_bounds(sys, chained), stage_bounds(sys, naive));
    let depot: Vec<usize> = chained.shrunk[0].iter().collect();
    let tighter = depot.iter().filter(|&&x| bc[0][x] <= bn[0][x]).count();
    let mean = |b: &[Vec<Cost>]| depot.iter().map(|&x| b[0][x]).sum::<f64>() / depot.len() as f64;
    println!(
        "  worst-case bound: chained <= naive at {tighter}/{} start cells, mean {:.3} vs {:.3}",
        depot.len(),
        mean(&bc),
        mean(&bn)
    );
    let max = s.config.max_steps;
    let d = nominal(c);
    let pairs: Vec<(Cost, Cost)> = chained.shrunk[0]
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&cell| {
            let x0 = c.cell_center(cell).unwrap();
            (run_j(chained, c, &x0, &d, max), run_j(naive, c, &x0, &d, max))
        })
        .collect();
    let worse = pairs.iter().filter(|(a, b)| a > b).count();
    let finite: Vec<&(Cost, Cost)> = pairs.iter().filter(|(a, b)| a.is_finite() && b.is_finite()).collect();
    let mean_c = finite.iter().map(|p| p.0).sum::<f64>() / finite.len() as f64;
    let mean_n = finite.iter().map(|p| p.1).sum::<f64>() / finite.len() as f64;
    let worst = pairs
        .iter()
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        6,
        worse == 0,
        format!(
            "chaining on uav-mini: {worse}/{} start cells where chained J > naive J (largest excess {worst:.3}); \
             mean J chained {mean_c:.3} vs naive {mean_n:.3}, mean improvement {:.3} ({:.1}%)",
            pairs.len(),
            mean_n - mean_c,
            100.0 * (mean_n - mean_c) / mean_n
        ),
    )
}

fn semantics(s: &Scenario, result: &SynthesisResult) -> Outcome {
    let c = s.continuous().unwrap();
    let max = s.config.max_steps;
    let dir = tempfile::tempdir().unwrap();
    let n = c.grid.dim();
    let m = c.inputs.dim();
    let lo: Vec<f64> = c.grid.lower().to_vec();
    let hi: Vec<f64> = (0..n).map(|d| c.grid.upper(d)).collect();
    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    });

    let point = {
        let (lo, hi) = (lo.clone(), hi.clone());
        (0..n)
            .map(move |d| lo[d]..hi[d])
            .collect::<Vec<_>>()
    };
    let steps = prop::collection::vec((point.clone(), 0..c.inputs.len(), 0.0..5.0f64), 0..40);
    let nonstop = runner.run(&steps, |raw| {
        let mut acc = 0.0;
        let rec = TrajectoryRecord {
            steps: raw
                .into_iter()
                .map(|(x, u, g)| {
                    let s = TrajectoryStep {
                        x,
                        u: c.inputs.get(u).to_vec(),
                        stop: false,
                        stage: 1,
                        step_cost: g,
                        acc_cost: acc,
                    };
                    acc += g;
                    s
                })
                .collect(),
            termination: None,
            fault: None,
        };
        prop_assert_eq!(evaluate_total_cost(&rec, c), INFINITY);
        prop_assert!(!check_condition_star(&rec, &c.targets));
        Ok(())
    });

    let cells: Vec<usize> = result.shrunk[0].iter().collect();
    let trajectories: Vec<TrajectoryRecord> = cells
        .iter()
        .step_by((cells.len() / 24).max(1))
        .map(|&cell| simulate_closed_loop(result, c, &c.cell_center(cell).unwrap(), &nominal(c), max).unwrap())
        .collect();
    let depot = &c.targets[0];
    let others = &c.targets[1..];
    let broken = runner.run(&(0..trajectories.len(), 0..3usize, any::<prop::sample::Index>()), |(k, how, at)| {
        let mut t = trajectories[k].clone();
        let end = t.termination.unwrap();
        match how {
            0 => {
                for s in &mut t.steps {
                    s.stop = false;
                }
                t.termination = None;
            }
            1 => {
                // Drop every visit of one non-depot target.
                let a = &others[at.index(others.len())];
                let keep: Vec<TrajectoryStep> =
                    t.steps.iter().filter(|s| !a.contains_point(&s.x)).cloned().collect();
                prop_assume!(keep.len() >= 2 && keep.last().unwrap().stop);
                t.steps = keep;
                t.termination = Some(t.steps.len() - 1);
            }
            _ => {
                // End outside the depot.
                let outside = (0..t.steps.len()).find(|&i| !depot.contains_point(&t.steps[i].x));
                prop_assume!(outside.is_some());
                let i = outside.unwrap();
                t.steps.truncate(i + 1);
                t.steps[i].stop = true;
                t.termination = Some(i);
                prop_assume!(i <= end);
            }
        }
        prop_assert!(!check_condition_star(&t, &c.targets));
        prop_assert_eq!(evaluate_total_cost(&t, c), INFINITY);
        Ok(())
    });

    let mut mismatches = 0;
    for (k, t) in trajectories.iter().enumerate() {
        let path = dir.path().join(format!("t{k}.csv"));
        write_trajectory_csv(t, n, m, &path).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        let (a, b) = (evaluate_total_cost(t, c), evaluate_total_cost(&back, c));
        let acc = back.steps[back.termination.unwrap()].acc_cost;
        if a.to_bits() != b.to_bits() || acc.to_bits() != a.to_bits() || back != *t {
            mismatches += 1;
        }
    }
    let pass = nonstop.is_ok() && broken.is_ok() && mismatches == 0;
    if let Err(e) = &nonstop {
        println!("  v = 0 property failed: {e}");
    }
    if let Err(e) = &broken {
        println!("  condition property failed: {e}");
    }
    outcome(
        8,
        pass,
        format!(
            "cost semantics: J = inf for 64 never-stopping records and 64 records violating the coverage condition; \
             CSV re-accumulation bit-exact on {}/{} runs",
            trajectories.len() - mismatches,
            trajectories.len()
        ),
    )
}

fn tour_optimality(s: &Scenario, sys: &FiniteSystem) -> Outcome {
    let t0 = Instant::now();
    let c = s.continuous().unwrap();
    let targets = c.target_sets();
    let fixed = shrink_fixed_point(sys, &targets).unwrap();
    let matrix = build_cost_matrix(&fixed).unwrap();
    let inst = AtspInstance::new(targets.len(), matrix.clone()).unwrap();
    let heuristic = solve_with(&inst, &s.backend().unwrap(), s.config.seed).unwrap();
    let exact = solve_exact(&inst).unwrap();
    println!(
        "  truck-mini: heuristic tour {heuristic}, matrix optimum {exact} (cost {:.4})",
        inst.tour_cost(&exact).unwrap()
    );
    let d = nominal(c);
    let max = s.config.max_steps;
    let mut results: Vec<(Tour, Cost, f64, Cost)> = Vec::new();
    let mut x0 = None;
    for tour in Tour::all_tours(targets.len()) {
        let r = synthesize_with_tour(sys, &fixed, matrix.clone(), tour.clone(), false).unwrap();
        let start = x0.get_or_insert_with(|| start_of(c, &r)).clone();
        let j = run_j(&r, c, &start, &d, max);
        let bound = stage_bounds(sys, &r)[0][c.grid.quantize(&start)];
        results.push((tour.clone(), j, inst.tour_cost(&tour).unwrap(), bound));
    }
    results.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (t, j, cm, b) in results.iter().take(5) {
        println!("    tour {t}: J = {j:.4}, matrix cost {cm:.4}, worst-case bound {b:.4}");
    }
    let best = results[0].1;
    let (_, hj, hc, _) = results.iter().find(|r| r.0 == heuristic).unwrap();
    let rank = results.iter().filter(|r| r.1 < *hj).count() + 1;
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        7,
        *hj == best && secs <= 1800.0,
        format!(
            "tour optimality on truck-mini: heuristic tour {heuristic} has J = {hj:.4} (matrix cost {hc:.4}), \
             rank {rank} of 24; best J = {best:.4} by {}; {secs:.0} s",
            results[0].0
        ),
    )
}

fn cli(args: &[&str], dir: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_dtsp"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut ok = true;
    for d in &dirs {
        let ctrl = d.path().join("controller.bin");
        let ctrl = ctrl.to_str().unwrap();
        ok &= cli(&["synth", "uav-mini", "--seed", "7", "--values"], d.path());
        ok &= cli(
            &["simulate", "uav-mini", "--controller", ctrl, "--disturbance", "uniform", "--seed", "7"],
            d.path(),
        );
    }
    let same = |name: &str| {
        let a = std::fs::read(dirs[0].path().join(name));
        let b = std::fs::read(dirs[1].path().join(name));
        matches!((a, b), (Ok(a), Ok(b)) if a == b)
    };
    let (ctrl, traj) = (same("controller.bin"), same("trajectory.csv"));
    outcome(
        9,
        ok && ctrl && traj,
        format!(
            "determinism: two synth + simulate runs (seed 7, uniform disturbance); commands ok: {ok}, \
             controller files identical: {ctrl}, trajectory CSVs identical: {traj}"
        ),
    )
}

fn main() {
    let mut outcomes = vec![reach_oracle(), exact_atsp(), heuristic_quality()];

    let uav = Scenario::builtin("uav-mini").unwrap();
    let uc = uav.continuous().unwrap();
    let t0 = Instant::now();
    let abs = uc.abstraction().unwrap();
    println!("  uav-mini abstraction built in {:.1?}", t0.elapsed());
    let (uav_bad, _) = soundness("uav-mini", uc, &abs, 4);
    let targets = uc.target_sets();
    let fixed = shrink_fixed_point(&abs.system, &targets).unwrap();
    let matrix = build_cost_matrix(&fixed).unwrap();
    let inst = AtspInstance::new(targets.len(), matrix.clone()).unwrap();
    let tour = solve_with(&inst, &uav.backend().unwrap(), uav.config.seed).unwrap();
    let chained = synthesize_with_tour(&abs.system, &fixed, matrix.clone(), tour.clone(), false).unwrap();
    let naive = synthesize_with_tour(&abs.system, &fixed, matrix, tour, true).unwrap();
    outcomes.push(coverage(&uav, &abs.system, &chained));
    outcomes.push(chaining(&uav, &abs.system, &chained, &naive));
    outcomes.push(semantics(&uav, &chained));
    drop((abs, fixed, chained, naive));

    let truck = Scenario::builtin("truck-mini").unwrap();
    let tc = truck.continuous().unwrap();
    let t0 = Instant::now();
    let abs = tc.abstraction().unwrap();
    println!("  truck-mini abstraction built in {:.1?}", t0.elapsed());
    let (truck_bad, _) = soundness("truck-mini", tc, &abs, 5);
    outcomes.push(outcome(
        4,
        uav_bad == 0 && truck_bad == 0,
        format!("abstraction soundness: {uav_bad} violations on uav-mini, {truck_bad} on truck-mini (10000 samples each)"),
    ));
    outcomes.push(tour_optimality(&truck, &abs.system));
    drop(abs);

    outcomes.push(determinism());

    outcomes.sort_by_key(|o| o.id);
    println!();
    for o in &outcomes {
        println!("criterion {} {}: {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.summary);
    }
    if outcomes.iter().any(|o| !o.pass) {
        std::process::exit(1);
    }
}
