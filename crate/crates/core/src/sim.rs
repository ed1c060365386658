//! The federated continual protocol: experiences, rounds, aggregation and
//! per-experience evaluation on the audit client.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::{inject_activity, AnomalyPool, InjectionReport, InjectionSettings};
use crate::cl::{ClKind, ContinualState};
use crate::config::{ArchKind, DatasetConfig, RunConfig};
use crate::data::{
    build_experience_streams, build_schema, generate_schedule, load_city_csv, synthesize_dataset, AnomalyLabel,
    DatasetSchema, EncodedBatch, EntryTable, RawEntry, ScenarioSchedule,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_batch, MetricsRecord};
use crate::fl::{
    fedavg_aggregate, fedyogi_server_update, scaffold_control_update, scaffold_server_update, ClientUpdate, FlKind,
    ProxHook, ScaffoldState, YogiServerState,
};
use crate::nn::{self, AdamState, ArchitectureSpec, EarlyStop, HookChain, LossHook, ParamVector, TrainOptions};
use crate::rng;

/// Audit client index.
pub const AUDIT_CLIENT: usize = 0;

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub seed: u64,
    pub arch: String,
    pub fl: String,
    pub cl: String,
    pub t: usize,
    pub r: usize,
    /// Last local batch loss per client; `None` for clients that sat out.
    pub losses: Vec<Option<f64>>,
    pub checksum: String,
}

/// Table, anomaly pool and schema shared by every seed.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub table: EntryTable,
    pub pool: AnomalyPool,
    pub schema: DatasetSchema,
    /// Scheduled departments, `L` of them.
    pub departments: Vec<String>,
}

pub fn load_table(cfg: &DatasetConfig) -> Result<EntryTable> {
    match cfg {
        DatasetConfig::Synthetic(spec) => Ok(synthesize_dataset(spec)?.0),
        DatasetConfig::Csv { path, profile, .. } => load_city_csv(path, profile),
    }
}

pub fn prepare_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let table = load_table(&cfg.dataset)?;
    dataset_from_table(cfg, table)
}

pub fn dataset_from_table(cfg: &RunConfig, table: EntryTable) -> Result<Dataset> {
    let pool = AnomalyPool::generate(&table, cfg.pool_size);
    let schema = build_schema(&table, &pool)?;
    let candidates = match (&cfg.departments, &cfg.dataset) {
        (Some(d), _) => d.clone(),
        (None, DatasetConfig::Csv { profile, .. }) => profile.departments.clone(),
        (None, DatasetConfig::Synthetic(_)) => table.departments(),
    };
    if candidates.len() < cfg.l {
        return Err(Error::config(
            "/departments",
            format!("{} departments available, L = {}", candidates.len(), cfg.l),
        ));
    }
    let departments = candidates[..cfg.l].to_vec();
    Ok(Dataset {
        table,
        pool,
        schema,
        departments,
    })
}

/// Encoded experience data of one seed, `batches[client][t]`.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub seed: u64,
    pub schedule: ScenarioSchedule,
    pub batches: Vec<Vec<EncodedBatch>>,
    /// Injection reports of the audit client, `[t][department]` in batch order.
    pub injections: Vec<Vec<(String, InjectionReport)>>,
}

pub fn build_schedule(cfg: &RunConfig, seed: u64) -> Result<ScenarioSchedule> {
    let t = cfg.effective().t;
    match &cfg.activity_matrix {
        Some(m) => {
            let active = m.iter().map(|rows| rows[..t].to_vec()).collect();
            ScenarioSchedule::from_matrix(cfg.scenario, active)
        }
        None => {
            // a single client still draws its row from a two-client schedule
            let mut s = generate_schedule(cfg.scenario, cfg.m.max(2), t, cfg.l, cfg.p, seed)?;
            s.active.truncate(cfg.m);
            Ok(s)
        }
    }
}

/// Sample streams, inject anomalies into every audit activity and encode.
pub fn prepare_seed(cfg: &RunConfig, ds: &Dataset, seed: u64) -> Result<SeedData> {
    let eff = cfg.effective();
    let schedule = build_schedule(cfg, seed)?;
    let streams = build_experience_streams(&ds.table, &schedule, &ds.departments, eff.rho, seed)?;
    let settings = InjectionSettings {
        k_global: eff.k_global,
        k_local: eff.k_local,
        ..cfg.injection
    };
    let mut batches = Vec::with_capacity(streams.len());
    let mut injections = Vec::new();
    for stream in &streams {
        let mut per_t = Vec::with_capacity(stream.experiences.len());
        for (t, exp) in stream.experiences.iter().enumerate() {
            let mut entries: Vec<(RawEntry, AnomalyLabel)> = Vec::with_capacity(stream.rows_in(t));
            let mut reports = Vec::new();
            for (dept, ids) in exp {
                let mut rows: Vec<RawEntry> = ids.iter().map(|&i| ds.table.entries[i].clone()).collect();
                let labels = if stream.client == AUDIT_CLIENT {
                    let d = ds.departments.iter().position(|x| x == dept).expect("scheduled department") as u64;
                    let mut r = rng::stream(seed, "inject", &[t as u64, d]);
                    let (labels, report) = inject_activity(&mut rows, &settings, &ds.pool, &ds.schema, &mut r)?;
                    reports.push((dept.clone(), report));
                    labels
                } else {
                    vec![AnomalyLabel::None; rows.len()]
                };
                entries.extend(rows.into_iter().zip(labels));
            }
            if stream.client == AUDIT_CLIENT {
                injections.push(reports);
            }
            per_t.push(EncodedBatch::encode(&ds.schema, &entries)?);
        }
        batches.push(per_t);
    }
    Ok(SeedData {
        seed,
        schedule,
        batches,
        injections,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy {
    pub arch: ArchKind,
    pub fl: FlKind,
    pub cl: ClKind,
}

/// Result of one (seed, strategy) run.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub records: Vec<MetricsRecord>,
    pub transcripts: Vec<RoundTranscript>,
    pub final_params: ParamVector,
    /// Adam steps taken per client per experience, `[t][client]`.
    pub steps: Vec<Vec<usize>>,
}

struct Client {
    id: usize,
    adam: AdamState,
    cl: ContinualState,
}

struct LocalResult {
    update: ClientUpdate,
    new_control: Option<Vec<f64>>,
    loss: f64,
    steps: usize,
}

fn arch_tag(a: ArchKind) -> u64 {
    match a {
        ArchKind::Shallow => 0,
        ArchKind::Deep => 1,
    }
}

/// Train one client for one round starting from `broadcast`.
#[allow(clippy::too_many_arguments)]
fn local_round(
    cfg: &RunConfig,
    spec: &ArchitectureSpec,
    strat: Strategy,
    client: &mut Client,
    data: &EncodedBatch,
    broadcast: &ParamVector,
    scaffold: Option<&ScaffoldState>,
    path: [u64; 3],
    seed: u64,
) -> Result<LocalResult> {
    let eff = cfg.effective();
    let [a, t, r] = path;
    let c = client.id as u64;
    let opts = TrainOptions {
        n_iters: eff.eta,
        batch_size: cfg.gamma,
        theta_mix: cfg.theta,
        early_stop: cfg.early_stop.then(EarlyStop::default),
    };
    let mut params = broadcast.clone();
    let mut rng = rng::stream(seed, "train", &[a, c, t, r]);
    let mut cont = client.cl.hook(rng::stream(seed, "replay", &[a, c, t, r]));
    let mut prox = ProxHook {
        anchor: broadcast,
        mu: cfg.mu,
    };
    let mut scaffold_hook = scaffold.map(|s| s.hook(client.id));
    let mut hooks: Vec<&mut dyn LossHook> = vec![&mut cont];
    if strat.fl == FlKind::FedProx {
        hooks.push(&mut prox);
    }
    if let Some(h) = scaffold_hook.as_mut() {
        hooks.push(h);
    }
    let report = nn::train_iterations(
        &mut params,
        &mut client.adam,
        spec,
        &data.layout,
        data.rows.view(),
        &opts,
        &mut rng,
        &mut HookChain(hooks),
    )?;
    if !report.last_loss.is_finite() {
        return Err(Error::Numeric(format!("client {} diverged in experience {t}, round {r}", client.id)));
    }
    let (new_control, control_delta) = match scaffold {
        Some(s) if !s.settings.pin_zero => {
            let (new, delta) =
                scaffold_control_update(broadcast, &params, &s.server, &s.clients[client.id], report.steps, cfg.lr)?;
            (Some(new), Some(delta))
        }
        Some(s) => (None, Some(vec![0.0; s.server.len()])),
        None => (None, None),
    };
    Ok(LocalResult {
        update: ClientUpdate {
            client: client.id,
            params,
            samples: data.len(),
            control_delta,
        },
        new_control,
        loss: report.last_loss,
        steps: report.steps,
    })
}

/// Run the protocol for one seed and one strategy triple.
pub fn run_strategy(cfg: &RunConfig, ds: &Dataset, data: &SeedData, strat: Strategy) -> Result<StrategyRun> {
    let eff = cfg.effective();
    let seed = data.seed;
    let spec = strat.arch.spec(ds.schema.width(), cfg.leaky_slope)?;
    let a = arch_tag(strat.arch);
    let mut central = nn::init_model(&spec, rng::derive_seed(seed, "init", &[a]))?;
    let n = central.len();
    let participants: Vec<usize> = if strat.fl == FlKind::Single {
        vec![AUDIT_CLIENT]
    } else {
        (0..cfg.m).collect()
    };
    let mut clients: Vec<Client> = participants
        .iter()
        .map(|&id| Client {
            id,
            adam: AdamState::new(n, cfg.lr),
            cl: ContinualState::new(strat.cl, cfg.cl_settings, ds.schema.width()),
        })
        .collect();
    let mut yogi = (strat.fl == FlKind::FedYogi).then(|| YogiServerState::new(n, cfg.yogi));
    let mut scaffold = (strat.fl == FlKind::Scaffold).then(|| ScaffoldState::new(n, cfg.m, cfg.scaffold));

    let mut out = StrategyRun {
        records: Vec::with_capacity(eff.t),
        transcripts: Vec::with_capacity(eff.t * eff.r),
        final_params: central.clone(),
        steps: Vec::with_capacity(eff.t),
    };
    for t in 0..eff.t {
        if t > 0 {
            if let Some(s) = scaffold.as_mut().filter(|s| s.settings.reset_each_experience) {
                s.reset();
            }
        }
        let mut start = None;
        for c in &mut clients {
            let p = c.cl.begin_experience(t, &central, &spec, seed, &mut c.adam)?;
            start.get_or_insert(p);
        }
        central = start.expect("at least one participant");
        let mut steps = vec![0usize; cfg.m];

        for r in 0..eff.r {
            let broadcast = central.clone();
            let sc = scaffold.as_ref();
            let results: Vec<Option<LocalResult>> = clients
                .par_iter_mut()
                .map(|c| {
                    let batch = &data.batches[c.id][t];
                    if batch.is_empty() {
                        return Ok(None);
                    }
                    local_round(cfg, &spec, strat, c, batch, &broadcast, sc, [a, t as u64, r as u64], seed).map(Some)
                })
                .collect::<Result<_>>()?;
            let mut losses = vec![None; cfg.m];
            let mut updates = Vec::new();
            let mut controls = Vec::new();
            for res in results.into_iter().flatten() {
                losses[res.update.client] = Some(res.loss);
                steps[res.update.client] += res.steps;
                controls.push((res.update.client, res.new_control));
                updates.push(res.update);
            }
            if !updates.is_empty() {
                central = match strat.fl {
                    FlKind::Single | FlKind::FedAvg | FlKind::FedProx => fedavg_aggregate(&updates)?,
                    FlKind::FedYogi => fedyogi_server_update(yogi.as_mut().expect("yogi state"), &central, &updates)?,
                    FlKind::Scaffold => {
                        let s = scaffold.as_mut().expect("scaffold state");
                        let next = scaffold_server_update(s, &central, &updates, participants.len())?;
                        for (c, new) in controls {
                            if let Some(new) = new {
                                s.clients[c] = new;
                            }
                        }
                        next
                    }
                };
            }
            out.transcripts.push(RoundTranscript {
                seed,
                arch: strat.arch.name().into(),
                fl: strat.fl.name().into(),
                cl: strat.cl.name().into(),
                t,
                r,
                losses,
                checksum: central.checksum(),
            });
        }

        let audit = if cfg.cumulative_eval {
            let parts: Vec<&EncodedBatch> = data.batches[AUDIT_CLIENT][..=t].iter().collect();
            EncodedBatch::concat(ds.schema.layout(), &parts)?
        } else {
            data.batches[AUDIT_CLIENT][t].clone()
        };
        let ev = evaluate_batch(&central, &spec, &audit, cfg.theta, !cfg.ap_other_as_negative)?;
        out.records.push(MetricsRecord {
            seed,
            t,
            fl: strat.fl.name().into(),
            cl: strat.cl.name().into(),
            arch: strat.arch.name().into(),
            ap_global: ev.ap_global,
            ap_local: ev.ap_local,
            dept_errors: ev.dept_errors,
            mean_rec_error: ev.mean_rec_error,
        });

        for c in &mut clients {
            let mut r = rng::stream(seed, "cl_end", &[a, c.id as u64, t as u64]);
            c.cl.end_experience(&central, &spec, cfg.theta, &data.batches[c.id][t], &mut r)?;
        }
        out.steps.push(steps);
    }
    out.final_params = central;
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct SimulationOutput {
    pub records: Vec<MetricsRecord>,
    pub transcripts: Vec<RoundTranscript>,
}

/// Every strategy triple in config order: arch, then fl, then cl.
pub fn strategies(cfg: &RunConfig) -> Vec<Strategy> {
    let mut out = Vec::new();
    for &arch in &cfg.arch {
        for &fl in &cfg.fl {
            for &cl in &cfg.cl {
                out.push(Strategy { arch, fl, cl });
            }
        }
    }
    out
}

/// Worker count from `FEDLEDGER_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("FEDLEDGER_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config("", format!("FEDLEDGER_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

/// Run every seed and strategy on an already loaded dataset.
pub fn run_on_dataset(cfg: &RunConfig, ds: &Dataset) -> Result<SimulationOutput> {
    let work = || -> Result<SimulationOutput> {
        let mut out = SimulationOutput::default();
        for &seed in &cfg.seeds {
            let data = prepare_seed(cfg, ds, seed)?;
            for strat in strategies(cfg) {
                let run = run_strategy(cfg, ds, &data, strat)?;
                out.records.extend(run.records);
                out.transcripts.extend(run.transcripts);
            }
        }
        Ok(out)
    };
    match thread_cap()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Contract(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    }
}

pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationOutput> {
    let ds = prepare_dataset(cfg)?;
    run_on_dataset(cfg, &ds)
}
