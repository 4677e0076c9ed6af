// Coverage tour on a custom finite system loaded from a scenario document:
// synthesis, the switching controller, and a worst-case abstract run.

use dtsp::scenario::{Scenario, ScenarioKind};
use dtsp::synthesis::{simulate_adversarial, stage_bounds, synthesize, SynthesisOptions};
use dtsp::{Error, Result};

const WAREHOUSE: &str = r#"
name = "warehouse"
dynamics = "custom-graph"
tsp_backend = "exact"
start_cell = 0
graph_inline = """
states 8 inputs 2
# input 0 goes clockwise, input 1 counter-clockwise; aisle 3-4 is slippery
0 0 1 2
0 1 7 1
1 0 2 1
1 1 0 2
2 0 3 1
2 1 1 1
3 0 4 3
3 0 5 3
3 1 2 1
4 0 5 1
4 1 3 1
5 0 6 1
5 1 4 1
6 0 7 2
6 1 5 1
7 0 0 1
7 1 6 2
"""

[[targets]]
name = "dock"
cells = [0]

[[targets]]
name = "shelf A"
cells = [2]

[[targets]]
name = "shelf B"
cells = [4]

[[targets]]
name = "shelf C"
cells = [6]
"#;

pub fn run_example() -> Result<f64> {
    let s = Scenario::from_toml(WAREHOUSE, None)?;
    let ScenarioKind::Graph(g) = &s.kind else {
        return Err(Error::Config("expected a graph scenario".into()));
    };
    let opts = SynthesisOptions {
        backend: s.backend()?,
        ..SynthesisOptions::default()
    };
    let result = synthesize(&g.system, &g.targets, &opts)?;
    println!("tour {}", result.tour);
    let bounds = stage_bounds(&g.system, &result);
    let start = g.start.unwrap_or(0);
    let run = simulate_adversarial(&g.system, &result, &bounds, start, 100)?;
    println!("worst-case bound {} from state {start}", bounds[0][start]);
    println!("adversarial run {:?}, stages {:?}", run.cells, run.stages);
    println!("completed {}, cost {}", run.completed, run.cost);
    Ok(run.cost)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
