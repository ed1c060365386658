//! Hand-driven federated rounds over three clients with different
//! departments, comparing the four aggregation rules.

use fedledger::data::{build_schema, synthesize_dataset, AnomalyLabel, EncodedBatch, SynthSpec};
use fedledger::anomaly::AnomalyPool;
use fedledger::fl::{
    fedavg_aggregate, fedyogi_server_update, scaffold_control_update, scaffold_server_update, ClientUpdate, FlKind,
    ProxHook, ScaffoldSettings, ScaffoldState, YogiServerState, YogiSettings,
};
use fedledger::nn::{init_model, row_losses, forward, train_iterations, AdamState, ArchitectureSpec, LossHook, NoHook, TrainOptions};
use fedledger::rng;

fn main() -> fedledger::Result<()> {
    let (table, _) = synthesize_dataset(&SynthSpec::default())?;
    let schema = build_schema(&table, &AnomalyPool::generate(&table, 20))?;
    let depts = table.departments();
    // client c holds departments c and c+1, 300 rows each
    let shards: Vec<EncodedBatch> = (0..3)
        .map(|c| {
            let entries: Vec<_> = depts[c..c + 2]
                .iter()
                .flat_map(|d| table.entries.iter().filter(move |e| &e.department == d).take(300))
                .map(|e| (e.clone(), AnomalyLabel::None))
                .collect();
            EncodedBatch::encode(&schema, &entries)
        })
        .collect::<Result<_, _>>()?;
    let spec = ArchitectureSpec::shallow(schema.width())?;
    let opts = TrainOptions {
        n_iters: 100,
        ..TrainOptions::default()
    };
    let lr = 1e-3;

    for fl in [FlKind::FedAvg, FlKind::FedProx, FlKind::FedYogi, FlKind::Scaffold] {
        let mut global = init_model(&spec, 5)?;
        let mut yogi = YogiServerState::new(global.len(), YogiSettings::default());
        let mut scaffold = ScaffoldState::new(global.len(), shards.len(), ScaffoldSettings::default());
        let mut adams: Vec<AdamState> = shards.iter().map(|_| AdamState::new(global.len(), lr)).collect();
        print!("{:<9}", fl.name());
        for round in 0..5u64 {
            let mut updates = Vec::new();
            for (c, shard) in shards.iter().enumerate() {
                let mut local = global.clone();
                let mut r = rng::stream(5, "train", &[round, c as u64]);
                let mut prox = ProxHook { anchor: &global, mu: 1.2 };
                let mut control = scaffold.hook(c);
                let mut none = NoHook;
                let hook: &mut dyn LossHook = match fl {
                    FlKind::FedProx => &mut prox,
                    FlKind::Scaffold => &mut control,
                    _ => &mut none,
                };
                let report = train_iterations(&mut local, &mut adams[c], &spec, &shard.layout, shard.rows.view(), &opts, &mut r, hook)?;
                let control_delta = if fl == FlKind::Scaffold {
                    let (new_c, delta) = scaffold_control_update(&global, &local, &scaffold.server, &scaffold.clients[c], report.steps, lr)?;
                    scaffold.clients[c] = new_c;
                    Some(delta)
                } else {
                    None
                };
                updates.push(ClientUpdate {
                    client: c,
                    params: local,
                    samples: shard.len(),
                    control_delta,
                });
            }
            global = match fl {
                FlKind::FedYogi => fedyogi_server_update(&mut yogi, &global, &updates)?,
                FlKind::Scaffold => scaffold_server_update(&mut scaffold, &global, &updates, shards.len())?,
                _ => fedavg_aggregate(&updates)?,
            };
            // mean reconstruction error of the central model over all shards
            let mut total = 0.0;
            let mut n = 0;
            for s in &shards {
                let out = forward(&global, &spec, s.rows.view())?;
                let losses = row_losses(&s.layout, s.rows.view(), out.view(), opts.theta_mix)?;
                total += losses.iter().map(|l| l.total).sum::<f64>();
                n += losses.len();
            }
            print!("  r{round} {:.4}", total / n as f64);
        }
        println!();
    }
    Ok(())
}
