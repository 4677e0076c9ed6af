//! Runs the fast examples as tests.

macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(finite_system, "finite_system.rs");
example!(reach_avoid, "reach_avoid.rs");
example!(atsp_tour, "atsp_tour.rs");
example!(growth_bound, "growth_bound.rs");
example!(graph_tour, "graph_tour.rs");

#[test]
fn finite_system_roundtrips() {
    let sys = finite_system::run_example().unwrap();
    assert_eq!(sys.num_transitions(), 11);
}

#[test]
fn reach_avoid_routes_around_the_wall() {
    let v = reach_avoid::run_example().unwrap();
    assert_eq!(v.get(4), 0.0);
    assert!(v.get(20).is_finite());
    assert_eq!(v.get(2), f64::INFINITY);
}

#[test]
fn atsp_heuristic_is_never_below_exact() {
    let (exact, heuristic) = atsp_tour::run_example().unwrap();
    assert!(heuristic >= exact);
}

#[test]
fn growth_bound_contains_samples() {
    assert_eq!(growth_bound::run_example().unwrap(), 1000);
}

#[test]
fn graph_tour_completes() {
    let cost = graph_tour::run_example().unwrap();
    assert!(cost.is_finite() && cost > 0.0);
}
