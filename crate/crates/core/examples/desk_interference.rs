//! Desk-scale interference study: federated strategies with sequential
//! fine-tuning while the collaborating clients' activities come and go.

use std::time::Instant;

use fedledger::config::parse_config_str;
use fedledger::eval::summarize;
use fedledger::sim::run_simulation;

fn main() -> fedledger::Result<()> {
    let mut overrides: Vec<String> = std::env::args().skip(1).collect();
    overrides.insert(0, "fl=[\"single\",\"fedavg\",\"fedprox\",\"fedyogi\",\"scaffold\"]".into());
    let cfg = parse_config_str(
        r#"{
            "scenario": 2, "arch": "shallow", "cl": "sequential",
            "M": 4, "T": 5, "R": 2, "eta": 200, "rho": 200, "seeds": [1, 2, 3],
            "injection": {"k_global": 4, "k_local": 4}
        }"#,
        &overrides,
    )?;
    let start = Instant::now();
    let out = run_simulation(&cfg)?;
    print!("{}", summarize(&out.records).render());
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
