use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use dtsp::abstraction::{write_cache, Abstraction};
use dtsp::atsp::AtspInstance;
use dtsp::export::{read_trajectory_csv, write_svg, write_trajectory_csv};
use dtsp::scenario::{ContinuousScenario, Scenario, ScenarioKind};
use dtsp::sim::{
    disturbance_vertices, estimate_performance, evaluate_total_cost, simulate_closed_loop, DisturbanceSignal,
};
use dtsp::synthesis::{
    grid_fingerprint, read_result, simulate_adversarial, stage_bounds, synthesize, write_result, SynthesisOptions,
    SynthesisResult,
};
use dtsp::tsplib::{export_tsplib, read_problem, solve_with, write_tour, TspBackend, DEFAULT_SCALE};
use dtsp::{Error, FiniteSystem, Result, StateSet};

#[derive(Parser)]
#[command(name = "dtsp", version, about = "Travelling-salesman controller synthesis on finite abstractions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for the TSP heuristic and random disturbances.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the finite abstraction of a scenario and cache it.
    Abstract {
        /// Builtin scenario name or path to a scenario file.
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize the switching controller and write it as `controller.bin`.
    Synth {
        scenario: String,
        /// Reuse a cached abstraction instead of rebuilding it.
        #[arg(long)]
        abstraction: Option<PathBuf>,
        /// Chain legs with zero terminal cost instead of the next value function.
        #[arg(long)]
        naive_chaining: bool,
        /// TSP backend: exact, heuristic or external:<path>.
        #[arg(long)]
        backend: Option<String>,
        /// Also store value functions and the cost matrix.
        #[arg(long)]
        values: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run the closed loop and write `trajectory.csv`.
    Simulate {
        scenario: String,
        #[arg(long, default_value = "controller.bin")]
        controller: PathBuf,
        /// Start state as comma-separated coordinates (a cell index for graphs).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Option<Vec<f64>>,
        /// nominal, uniform, vertex:<k> or comma-separated values.
        #[arg(long, default_value = "nominal", allow_hyphen_values = true)]
        disturbance: String,
        /// Also estimate the worst-case cost over this many random signals.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Solve a TSPLIB ATSP problem file and write the tour file.
    Tour {
        problem: PathBuf,
        #[arg(long, default_value = "heuristic")]
        backend: String,
        #[command(flatten)]
        common: Common,
    },
    /// Render a trajectory as SVG, or a controller's cost matrix as TSPLIB.
    Export {
        scenario: String,
        #[arg(long, required_unless_present = "controller")]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        controller: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn out_file(common: &Common, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&common.out_dir).map_err(|e| io_err(&common.out_dir, e))?;
    Ok(common.out_dir.join(name))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn build(c: &ContinuousScenario) -> Result<Abstraction> {
    let t0 = Instant::now();
    let abs = c.abstraction()?;
    eprintln!(
        "abstraction: {} cells, {} inputs, {} transitions in {:.1?}",
        abs.grid.num_cells(),
        abs.inputs.len(),
        abs.system.num_transitions(),
        t0.elapsed()
    );
    Ok(abs)
}

fn cmd_abstract(scenario: &str, common: &Common) -> Result<()> {
    let s = Scenario::resolve(scenario)?;
    let abs = build(s.continuous()?)?;
    let path = out_file(common, "abstraction.bin")?;
    write_cache(&abs, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn system_of(s: &Scenario, cache: Option<&Path>) -> Result<(FiniteSystem, Vec<StateSet>, u64)> {
    match &s.kind {
        ScenarioKind::Continuous(c) => {
            let abs = match cache {
                Some(p) => c.load_abstraction(p)?,
                None => build(c)?,
            };
            let fp = grid_fingerprint(Some(&c.grid), abs.system.num_states());
            Ok((abs.system, c.target_sets(), fp))
        }
        ScenarioKind::Graph(g) => Ok((
            g.system.clone(),
            g.targets.clone(),
            grid_fingerprint(None, g.system.num_states()),
        )),
    }
}

fn start_cell(s: &Scenario, result: &SynthesisResult) -> Option<usize> {
    match &s.kind {
        ScenarioKind::Continuous(c) => c.start.as_ref().map(|x| c.grid.quantize(x)),
        ScenarioKind::Graph(g) => g.start,
    }
    .or_else(|| result.shrunk[0].iter().next())
}

fn cmd_synth(
    scenario: &str,
    cache: Option<&Path>,
    naive: bool,
    backend: Option<&str>,
    values: bool,
    common: &Common,
) -> Result<()> {
    let s = Scenario::resolve(scenario)?;
    let (sys, targets, fp) = system_of(&s, cache)?;
    let opts = SynthesisOptions {
        backend: match backend {
            Some(b) => b.parse()?,
            None => s.backend()?,
        },
        seed: common.seed.unwrap_or(s.config.seed),
        naive_chaining: naive,
    };
    let t0 = Instant::now();
    let result = synthesize(&sys, &targets, &opts)?;
    eprintln!("synthesis: {:.1?}", t0.elapsed());
    let sizes: Vec<String> = result.shrunk.iter().map(|a| a.count().to_string()).collect();
    println!("shrunk target sizes: {}", sizes.join(" "));
    println!("tour: {}", result.tour);
    let bounds = stage_bounds(&sys, &result);
    let depot: Vec<f64> = result.shrunk[0].iter().map(|x| bounds[0][x]).collect();
    let lo = depot.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = depot.iter().copied().fold(0.0, f64::max);
    println!("worst-case bound over the shrunk depot: {lo:.3} to {hi:.3}");
    if let Some(x) = start_cell(&s, &result) {
        println!("start cell {x}: bound {:.3}", bounds[0][x]);
    }
    let path = out_file(common, "controller.bin")?;
    write_result(&result, fp, values, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_checked(path: &Path, expected: u64) -> Result<SynthesisResult> {
    let (result, fp) = read_result(path)?;
    if fp != expected {
        return Err(Error::Config(format!(
            "{}: controller was synthesized for a different grid",
            path.display()
        )));
    }
    Ok(result)
}

fn parse_disturbance(text: &str, c: &ContinuousScenario, seed: u64) -> Result<DisturbanceSignal> {
    let (lo, hi) = (c.spec.w_lower(), c.spec.w_upper());
    Ok(match text {
        "nominal" => DisturbanceSignal::Constant(c.spec.w_mid()),
        "uniform" => DisturbanceSignal::Uniform { seed },
        _ => match text.strip_prefix("vertex:") {
            Some(k) => {
                let vs = disturbance_vertices(lo, hi);
                let k: usize = k.parse().map_err(|_| Error::Usage(format!("bad vertex index {k:?}")))?;
                DisturbanceSignal::Constant(
                    vs.get(k)
                        .cloned()
                        .ok_or_else(|| Error::Usage(format!("W has {} vertices", vs.len())))?,
                )
            }
            None => DisturbanceSignal::Constant(
                text.split(',')
                    .map(|v| v.trim().parse().map_err(|_| Error::Usage(format!("bad disturbance {text:?}"))))
                    .collect::<Result<_>>()?,
            ),
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    scenario: &str,
    controller: &Path,
    start: Option<&[f64]>,
    disturbance: &str,
    trials: Option<usize>,
    max_steps: Option<usize>,
    common: &Common,
) -> Result<()> {
    let s = Scenario::resolve(scenario)?;
    let seed = common.seed.unwrap_or(s.config.seed);
    let max_steps = max_steps.unwrap_or(s.config.max_steps);
    match &s.kind {
        ScenarioKind::Graph(g) => {
            let result = load_checked(controller, grid_fingerprint(None, g.system.num_states()))?;
            let x0 = match start {
                Some([x]) if *x >= 0.0 && x.fract() == 0.0 => *x as usize,
                Some(_) => return Err(Error::Usage("graph start must be one cell index".into())),
                None => start_cell(&s, &result).ok_or_else(|| Error::Usage("no start cell".into()))?,
            };
            let bounds = stage_bounds(&g.system, &result);
            let run = simulate_adversarial(&g.system, &result, &bounds, x0, max_steps)?;
            let cells: Vec<String> = run.cells.iter().map(usize::to_string).collect();
            println!("adversarial run: {}", cells.join(" "));
            println!("completed: {}, cost {}", run.completed, run.cost);
            Ok(())
        }
        ScenarioKind::Continuous(c) => {
            let result = load_checked(controller, grid_fingerprint(Some(&c.grid), c.grid.num_states()))?;
            let x0 = match start {
                Some(x) => x.to_vec(),
                None => match &c.start {
                    Some(x) => x.clone(),
                    None => c.cell_center(start_cell(&s, &result).ok_or_else(|| Error::Usage("no start".into()))?)?,
                },
            };
            let dist = parse_disturbance(disturbance, c, seed)?;
            let traj = simulate_closed_loop(&result, c, &x0, &dist, max_steps)?;
            let path = out_file(common, "trajectory.csv")?;
            write_trajectory_csv(&traj, c.grid.dim(), c.inputs.dim(), &path)?;
            println!("wrote {}", path.display());
            if let Some(n) = trials {
                let est = estimate_performance(&result, c, &x0, n, seed, max_steps)?;
                println!("estimated worst-case cost over {n} trials and W's vertices: {est}");
            }
            if let Some((stage, cell)) = traj.fault {
                return Err(Error::RuntimeFault { stage, cell });
            }
            match traj.termination {
                Some(t) => println!("terminated at t = {t}, J = {}", evaluate_total_cost(&traj, c)),
                None => println!("no termination within {max_steps} steps, J = inf"),
            }
            Ok(())
        }
    }
}

fn cmd_tour(problem: &Path, backend: &str, common: &Common) -> Result<()> {
    let backend: TspBackend = backend.parse()?;
    let inst = read_problem(problem, DEFAULT_SCALE)?;
    let tour = solve_with(&inst, &backend, common.seed.unwrap_or(0))?;
    let name = problem.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
    println!("tour: {tour}");
    println!("cost: {}", inst.tour_cost(&tour)?);
    let path = out_file(common, &format!("{name}.tour"))?;
    std::fs::write(&path, write_tour(&tour, name)).map_err(|e| io_err(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_export(scenario: &str, trajectory: Option<&Path>, controller: Option<&Path>, common: &Common) -> Result<()> {
    let s = Scenario::resolve(scenario)?;
    if let Some(t) = trajectory {
        let traj = read_trajectory_csv(t)?;
        let path = out_file(common, "trajectory.svg")?;
        write_svg(&traj, s.continuous()?, &path)?;
        println!("wrote {}", path.display());
    }
    if let Some(p) = controller {
        let (result, _) = read_result(p)?;
        if result.cost_matrix.is_empty() {
            return Err(Error::Usage(format!("{}: synthesized without --values", p.display())));
        }
        let inst = AtspInstance::new(result.num_targets(), result.cost_matrix.clone())?;
        let path = out_file(common, &format!("{}.atsp", s.config.name))?;
        export_tsplib(&inst, &path, DEFAULT_SCALE)?;
        println!("wrote {}", path.display());
        let path = out_file(common, &format!("{}.tour", s.config.name))?;
        std::fs::write(&path, write_tour(&result.tour, &s.config.name)).map_err(|e| io_err(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Abstract { scenario, common } => cmd_abstract(scenario, common),
        Command::Synth {
            scenario,
            abstraction,
            naive_chaining,
            backend,
            values,
            common,
        } => cmd_synth(
            scenario,
            abstraction.as_deref(),
            *naive_chaining,
            backend.as_deref(),
            *values,
            common,
        ),
        Command::Simulate {
            scenario,
            controller,
            start,
            disturbance,
            trials,
            max_steps,
            common,
        } => cmd_simulate(
            scenario,
            controller,
            start.as_deref(),
            disturbance,
            *trials,
            *max_steps,
            common,
        ),
        Command::Tour {
            problem,
            backend,
            common,
        } => cmd_tour(problem, backend, common),
        Command::Export {
            scenario,
            trajectory,
            controller,
            common,
        } => cmd_export(scenario, trajectory.as_deref(), controller.as_deref(), common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
