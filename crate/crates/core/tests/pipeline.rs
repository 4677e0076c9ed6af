//! Scenario to closed loop on small continuous systems.

use dtsp::scenario::Scenario;
use dtsp::sim::{
    check_condition_star, estimate_performance, evaluate_total_cost, simulate_closed_loop, DisturbanceSignal,
};
use dtsp::synthesis::{stage_bounds, synthesize, SynthesisOptions, SynthesisResult};
use dtsp::FiniteSystem;

const SHUTTLE: &str = r#"
name = "shuttle"
dynamics = "dubins"
tau = 1.0

[grid]
lower = [0.0, -1.0, -0.09817477042468103]
upper = [12.0, 1.0, 6.1850105367549055]
counts = [12, 2, 32]
periodic = [false, true, true]

[inputs]
lower = [-2.0, 0.0]
upper = [2.0, 0.0]
counts = [3, 1]

[disturbance]
lower = [-0.05, 0.0, 0.0]
upper = [0.05, 0.0, 0.0]

[[targets]]
boxes = [{ lower = [0.0, -1.0, -0.1], upper = [3.0, 1.0, 0.1] }]

[[targets]]
boxes = [{ lower = [9.0, -1.0, -0.1], upper = [12.0, 1.0, 0.1] }]

[[targets]]
boxes = [{ lower = [4.0, -1.0, -0.1], upper = [8.0, 1.0, 0.1] }]

[cost]
input_weights = [0.25, 0.0]
"#;

fn shuttle() -> (Scenario, FiniteSystem, SynthesisResult) {
    let s = Scenario::from_toml(SHUTTLE, None).unwrap();
    let c = s.continuous().unwrap();
    let abs = c.abstraction().unwrap();
    let r = synthesize(&abs.system, &c.target_sets(), &SynthesisOptions::default()).unwrap();
    (s, abs.system, r)
}

#[test]
fn every_depot_cell_covers_within_bound() {
    let (s, sys, r) = shuttle();
    let c = s.continuous().unwrap();
    let bounds = stage_bounds(&sys, &r);
    let signals = [
        DisturbanceSignal::Constant(vec![0.0; 3]),
        DisturbanceSignal::Constant(vec![-0.05, 0.0, 0.0]),
        DisturbanceSignal::Constant(vec![0.05, 0.0, 0.0]),
        DisturbanceSignal::Uniform { seed: 1 },
        DisturbanceSignal::Scripted(vec![vec![0.05, 0.0, 0.0], vec![-0.05, 0.0, 0.0]]),
    ];
    assert!(r.shrunk[0].count() > 0);
    for cell in r.shrunk[0].iter() {
        let x0 = c.cell_center(cell).unwrap();
        for d in &signals {
            let t = simulate_closed_loop(&r, c, &x0, d, 200).unwrap();
            assert!(t.fault.is_none());
            assert!(check_condition_star(&t, &c.targets), "cell {cell} under {d:?}");
            let j = evaluate_total_cost(&t, c);
            assert!(j.is_finite() && j <= bounds[0][cell], "cell {cell}: J {j} bound {}", bounds[0][cell]);
        }
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let (s, _, r) = shuttle();
    let c = s.continuous().unwrap();
    let x0 = c.cell_center(r.shrunk[0].iter().next().unwrap()).unwrap();
    let d = DisturbanceSignal::Uniform { seed: 42 };
    let a = simulate_closed_loop(&r, c, &x0, &d, 200).unwrap();
    let b = simulate_closed_loop(&r, c, &x0, &d, 200).unwrap();
    assert_eq!(a, b);
}

#[test]
fn estimate_is_monotone_in_trials_and_dominates_nominal() {
    let (s, _, r) = shuttle();
    let c = s.continuous().unwrap();
    let x0 = c.cell_center(r.shrunk[0].iter().next().unwrap()).unwrap();
    let nominal = evaluate_total_cost(
        &simulate_closed_loop(&r, c, &x0, &DisturbanceSignal::Constant(vec![0.0; 3]), 200).unwrap(),
        c,
    );
    let mut last = 0.0;
    for trials in [1, 2, 5, 10] {
        let e = estimate_performance(&r, c, &x0, trials, 8, 200).unwrap();
        assert!(e >= last && e >= nominal);
        last = e;
    }
    assert!(estimate_performance(&r, c, &x0, 0, 8, 200).is_err());
}

#[test]
fn standing_still_on_a_shared_target_stops_at_once() {
    let text = r#"
name = "still"
dynamics = "dubins"
tau = 1.0

[grid]
lower = [0.0, 0.0, -0.09817477042468103]
upper = [4.0, 4.0, 6.1850105367549055]
counts = [4, 4, 32]
periodic = [false, false, true]

[inputs]
lower = [0.0, 0.0]
upper = [0.0, 0.0]
counts = [1, 1]

[[targets]]
boxes = [{ lower = [1.0, 1.0, -0.1], upper = [2.0, 2.0, 0.1] }]

[[targets]]
boxes = [{ lower = [1.0, 1.0, -0.1], upper = [2.0, 2.0, 0.1] }]
"#;
    let s = Scenario::from_toml(text, None).unwrap();
    let c = s.continuous().unwrap();
    let abs = c.abstraction().unwrap();
    let r = synthesize(&abs.system, &c.target_sets(), &SynthesisOptions::default()).unwrap();
    let t = simulate_closed_loop(&r, c, &[1.5, 1.5, 0.0], &DisturbanceSignal::Constant(vec![0.0; 3]), 10).unwrap();
    assert_eq!(t.termination, Some(0));
    assert!(t.steps[0].stop);
    assert_eq!(evaluate_total_cost(&t, c), 0.0);
}
