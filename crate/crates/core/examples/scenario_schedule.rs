//! Which client sees which department in which experience, per scenario.

use fedledger::data::{generate_schedule, Scenario};

fn main() -> fedledger::Result<()> {
    let (clients, experiences, departments) = (4, 8, 5);
    for id in 1..=3 {
        let scenario = Scenario::from_id(id).expect("scenario 1-3");
        let s = generate_schedule(scenario, clients, experiences, departments, 0.5, 42)?;
        println!("scenario {id}");
        for c in 0..s.clients() {
            let cells: Vec<String> = (0..s.experiences())
                .map(|t| {
                    s.active[c][t]
                        .iter()
                        .map(|&a| if a { '#' } else { '.' })
                        .collect()
                })
                .collect();
            println!("  client {c} density {:.2}  {}", s.density(c), cells.join(" "));
        }
    }
    Ok(())
}
