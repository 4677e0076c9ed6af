// Builds a small nondeterministic system, prints it in the text format and
// parses it back.

use dtsp::{FiniteSystem, FiniteSystemBuilder, Result};

pub fn run_example() -> Result<FiniteSystem> {
    // States 0..4 on a line; input 0 moves right but may slip back, input 1 waits.
    let mut b = FiniteSystemBuilder::new(4, 2);
    for x in 0..4 {
        let right = (x + 1).min(3);
        b.add(x, 0, right, 1.0).add(x, 0, x, 1.0);
        b.add(x, 1, x, 0.5);
    }
    let sys = b.build()?;
    let text = sys.to_text();
    println!("{text}");
    let back = FiniteSystem::parse_text(&text)?;
    assert_eq!(back.num_transitions(), sys.num_transitions());
    println!(
        "{} states, {} inputs, {} transitions; successors of (0, 0): {:?}",
        back.num_states(),
        back.num_inputs(),
        back.num_transitions(),
        back.successors(0, 0)?
    );
    Ok(back)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
