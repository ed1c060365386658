//! Inject global and local anomalies into one payment activity and show
//! what changed.

use fedledger::anomaly::{inject_activity, AnomalyPool, InjectionSettings};
use fedledger::data::{build_schema, synthesize_dataset, RawEntry, SynthSpec};
use fedledger::rng;

fn show(tag: &str, before: &RawEntry, after: &RawEntry) {
    println!("{tag:<6} {:?} {:.1}", before.categorical, before.numerical[0]);
    println!("{:<6} {:?} {:.1}", "->", after.categorical, after.numerical[0]);
}

fn main() -> fedledger::Result<()> {
    let (table, _) = synthesize_dataset(&SynthSpec::default())?;
    let pool = AnomalyPool::generate(&table, 20);
    let schema = build_schema(&table, &pool)?;
    let dept = table.departments()[0].clone();
    let original: Vec<RawEntry> = table.entries.iter().filter(|e| e.department == dept).take(1000).cloned().collect();

    let mut rows = original.clone();
    let settings = InjectionSettings::default();
    let mut r = rng::stream(7, "inject", &[0, 0]);
    let (_, report) = inject_activity(&mut rows, &settings, &pool, &schema, &mut r)?;
    println!(
        "{dept}: {} rows, {} global, {} local ({} relaxed)",
        rows.len(),
        report.global.len(),
        report.local.len(),
        report.relaxed.len()
    );
    for &i in report.global.iter().take(3) {
        show("global", &original[i], &rows[i]);
    }
    for &i in report.local.iter().take(3) {
        show("local", &original[i], &rows[i]);
    }
    Ok(())
}
