//! Builds the UAV abstraction, writes it to a cache file and reloads it.

use std::time::Instant;

use dtsp::abstraction::write_cache;
use dtsp::scenario::Scenario;
use dtsp::Result;

fn main() -> Result<()> {
    let s = Scenario::builtin("uav-mini")?;
    let c = s.continuous()?;
    let t0 = Instant::now();
    let abs = c.abstraction()?;
    println!(
        "built {} cells x {} inputs, {} transitions in {:.1?}",
        abs.grid.num_cells(),
        abs.inputs.len(),
        abs.system.num_transitions(),
        t0.elapsed()
    );
    let targets = c.target_sets();
    for (i, t) in targets.iter().enumerate() {
        println!("target {}: {} cells", i + 1, t.count());
    }
    let path = std::env::temp_dir().join("uav-mini.abs");
    write_cache(&abs, &path)?;
    let t0 = Instant::now();
    let back = c.load_abstraction(&path)?;
    println!("reloaded {} in {:.1?}", path.display(), t0.elapsed());
    assert_eq!(back.system.num_transitions(), abs.system.num_transitions());
    Ok(())
}
