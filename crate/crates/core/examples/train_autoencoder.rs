//! Train the shallow autoencoder on one activity and watch the anomaly
//! ranking improve as reconstruction error falls.

use fedledger::anomaly::{inject_activity, AnomalyPool, InjectionSettings};
use fedledger::data::{build_schema, synthesize_dataset, EncodedBatch, RawEntry, SynthSpec};
use fedledger::eval::evaluate_batch;
use fedledger::nn::{init_model, train_iterations, AdamState, ArchitectureSpec, NoHook, TrainOptions};
use fedledger::rng;

fn main() -> fedledger::Result<()> {
    let (table, _) = synthesize_dataset(&SynthSpec::default())?;
    let pool = AnomalyPool::generate(&table, 20);
    let schema = build_schema(&table, &pool)?;
    let dept = table.departments()[1].clone();
    let mut rows: Vec<RawEntry> = table.entries.iter().filter(|e| e.department == dept).take(1000).cloned().collect();
    let settings = InjectionSettings {
        k_global: 20,
        k_local: 20,
        ..InjectionSettings::default()
    };
    let (labels, _) = inject_activity(&mut rows, &settings, &pool, &schema, &mut rng::stream(3, "inject", &[0, 0]))?;
    let entries: Vec<_> = rows.into_iter().zip(labels).collect();
    let batch = EncodedBatch::encode(&schema, &entries)?;

    let spec = ArchitectureSpec::shallow(schema.width())?;
    let mut params = init_model(&spec, 1)?;
    let mut adam = AdamState::new(params.len(), 1e-3);
    let mut train_rng = rng::stream(1, "train", &[0]);
    let opts = TrainOptions {
        n_iters: 250,
        ..TrainOptions::default()
    };
    println!("{} inputs, {} parameters", schema.width(), params.len());
    for round in 0..8 {
        let report = train_iterations(&mut params, &mut adam, &spec, &batch.layout, batch.rows.view(), &opts, &mut train_rng, &mut NoHook)?;
        let eval = evaluate_batch(&params, &spec, &batch, opts.theta_mix, true)?;
        println!(
            "iter {:>5}  loss {:.4}  AP_global {:.3}  AP_local {:.3}",
            (round + 1) * opts.n_iters,
            report.mean_loss,
            eval.ap_global.unwrap_or(f64::NAN),
            eval.ap_local.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
