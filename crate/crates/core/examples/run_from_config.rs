//! Build a run config the way the CLI does (file text plus `KEY=VALUE`
//! overrides), run it, and list the artifacts. Extra arguments are treated
//! as further overrides, e.g. `cl=["sequential","lwf"]`.

use fedledger::cli::run_to_dir;
use fedledger::config::parse_config_str;

fn main() -> fedledger::Result<()> {
    let out = std::env::temp_dir().join("fedledger-example");
    let mut overrides = vec![
        "arch=shallow".to_string(),
        "seeds=[1,2]".to_string(),
        "scale=10".to_string(),
        format!("out_dir={}", serde_json::to_string(&out.to_string_lossy()).expect("path serializes")),
    ];
    overrides.extend(std::env::args().skip(1));
    let cfg = parse_config_str(r#"{"scenario": 2, "fl": ["fedavg", "scaffold"], "cl": "sequential"}"#, &overrides)?;
    let eff = cfg.effective();
    println!("run-id {}", cfg.run_id());
    println!("T={} R={} eta={} rho={} k={}/{}", eff.t, eff.r, eff.eta, eff.rho, eff.k_global, eff.k_local);

    let (dir, table) = run_to_dir(&cfg)?;
    print!("{}", table.render());
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| fedledger::Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    files.sort();
    println!("{}: {}", dir.display(), files.join(", "));
    Ok(())
}
