//! Desk-scale forgetting study: every continual strategy under FedAvg on a
//! synthetic ledger where the audit client's activities come and go.

use std::time::Instant;

use fedledger::config::parse_config_str;
use fedledger::eval::summarize;
use fedledger::sim::run_simulation;

fn main() -> fedledger::Result<()> {
    let mut overrides: Vec<String> = std::env::args().skip(1).collect();
    overrides.insert(0, "cl=[\"scratch\",\"sequential\",\"replay\",\"lwf\",\"ewc\"]".into());
    let cfg = parse_config_str(
        r#"{
            "scenario": 1, "arch": "shallow", "fl": "fedavg",
            "M": 4, "T": 5, "R": 2, "eta": 200, "rho": 200, "seeds": [1, 2, 3],
            "injection": {"k_global": 4, "k_local": 4}
        }"#,
        &overrides,
    )?;
    let start = Instant::now();
    let out = run_simulation(&cfg)?;
    print!("{}", summarize(&out.records).render());
    for r in &out.records {
        println!("seed {} t {} {:<10} {:?}", r.seed, r.t, r.cl, r.ap_global.map(|x| (x * 1000.0).round() / 1000.0));
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
