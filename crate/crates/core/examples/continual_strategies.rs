//! One client, one new department per experience. After each experience the
//! model is scored on every department seen so far, which shows how much
//! each strategy forgets.

use fedledger::anomaly::AnomalyPool;
use fedledger::cl::{ClKind, ClSettings, ContinualState};
use fedledger::data::{build_schema, synthesize_dataset, AnomalyLabel, EncodedBatch, SynthSpec};
use fedledger::nn::{forward, init_model, row_losses, train_iterations, AdamState, ArchitectureSpec, TrainOptions};
use fedledger::rng;

fn main() -> fedledger::Result<()> {
    let (table, _) = synthesize_dataset(&SynthSpec::default())?;
    let schema = build_schema(&table, &AnomalyPool::generate(&table, 20))?;
    let experiences: Vec<EncodedBatch> = table
        .departments()
        .iter()
        .take(4)
        .map(|d| {
            let entries: Vec<_> = table
                .entries
                .iter()
                .filter(|e| &e.department == d)
                .take(400)
                .map(|e| (e.clone(), AnomalyLabel::None))
                .collect();
            EncodedBatch::encode(&schema, &entries)
        })
        .collect::<Result<_, _>>()?;
    let spec = ArchitectureSpec::shallow(schema.width())?;
    let opts = TrainOptions {
        n_iters: 400,
        ..TrainOptions::default()
    };
    let settings = ClSettings {
        buffer_size: 200,
        ..ClSettings::default()
    };
    let seed = 9;

    for kind in ClKind::ALL {
        let mut state = ContinualState::new(kind, settings, schema.width());
        let mut params = init_model(&spec, seed)?;
        let mut adam = AdamState::new(params.len(), 1e-3);
        println!("{}", kind.name());
        for (t, data) in experiences.iter().enumerate() {
            params = state.begin_experience(t, &params, &spec, seed, &mut adam)?;
            let mut hook = state.hook(rng::stream(seed, "replay", &[t as u64]));
            let mut r = rng::stream(seed, "train", &[t as u64]);
            train_iterations(&mut params, &mut adam, &spec, &data.layout, data.rows.view(), &opts, &mut r, &mut hook)?;
            drop(hook);
            state.end_experience(&params, &spec, opts.theta_mix, data, &mut rng::stream(seed, "cl_end", &[t as u64]))?;
            let errors: Vec<String> = experiences[..=t]
                .iter()
                .map(|d| {
                    let out = forward(&params, &spec, d.rows.view())?;
                    let l = row_losses(&d.layout, d.rows.view(), out.view(), opts.theta_mix)?;
                    Ok(format!("{:.3}", l.iter().map(|x| x.total).sum::<f64>() / l.len() as f64))
                })
                .collect::<fedledger::Result<_>>()?;
            println!("  after t{t}: {}", errors.join(" "));
        }
    }
    Ok(())
}
