//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Exact and structural criteria fail the process. The two desk-scale trend
//! criteria (forgetting, interference) are reported; set
//! `FEDLEDGER_STRICT_TRENDS=1` to make them fail the process as well.
//! `FEDLEDGER_ACCEPTANCE_ONLY=1,9` restricts the run to the listed criteria.

use std::collections::HashMap;
use std::time::Instant;

use fedledger::anomaly::{inject_activity, AnomalyPool, InjectionSettings};
use fedledger::cl::ClKind;
use fedledger::cli::run_to_dir;
use fedledger::config::{parse_config_str, ArchKind, RunConfig};
use fedledger::data::{build_schema, synthesize_dataset, AnomalyLabel, RawEntry, SegmentLayout, SynthSpec};
use fedledger::eval::{average_precision, summarize, SummaryTable};
use fedledger::fl::{
    fedavg_aggregate, scaffold_control_update, scaffold_server_update, ClientUpdate, FlKind, ScaffoldSettings,
    ScaffoldState,
};
use fedledger::nn::{
    backward, forward_pass, init_model, loss_with_output_grad, reconstruction_loss, train_iterations, AdamState,
    Activation, ArchitectureSpec, LayerShape, ParamVector, TrainOptions,
};
use fedledger::rng;
use fedledger::sim::{prepare_dataset, prepare_seed, run_simulation, run_strategy, Strategy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- criterion 1

/// Precision and recall at every cutoff, each counted over the whole pool
/// from explicit ranks. Rank of a row: rows with a higher score, plus equal
/// scores earlier in the input.
fn brute_force_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n = scores.len();
    let total = labels.iter().filter(|&&l| l).count();
    if total == 0 {
        return None;
    }
    let rank: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count())
        .collect();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for cutoff in 1..=n {
        let retrieved: Vec<usize> = (0..n).filter(|&i| rank[i] < cutoff).collect();
        let tp = retrieved.iter().filter(|&&i| labels[i]).count();
        let recall = tp as f64 / total as f64;
        let precision = tp as f64 / retrieved.len() as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for n in 1..=12usize {
        // one score vector without ties and one with heavy ties per size
        let distinct: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let tied: Vec<f64> = (0..n).map(|_| rng.gen_range(0..3) as f64).collect();
        for scores in [&distinct, &tied] {
            for mask in 0u32..(1 << n) {
                let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let got = average_precision(scores, &labels);
                let want = brute_force_ap(scores, &labels);
                let same = match (got, want) {
                    (Some(a), Some(b)) => a.to_bits() == b.to_bits(),
                    (None, None) => true,
                    _ => false,
                };
                mismatches += usize::from(!same);
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 10.0,
        format!("{checked} label patterns, {mismatches} mismatches, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn random_layout(rng: &mut ChaCha8Rng) -> SegmentLayout {
    let j = rng.gen_range(1..=3);
    let mut categorical = Vec::new();
    let mut at = 0;
    for _ in 0..j {
        let card = rng.gen_range(2..=4);
        categorical.push(at..at + card);
        at += card;
    }
    SegmentLayout {
        categorical,
        numeric_offset: at,
        numeric_count: rng.gen_range(1..=2),
    }
}

fn random_rows(rng: &mut ChaCha8Rng, layout: &SegmentLayout, n: usize) -> ndarray::Array2<f64> {
    let mut rows = ndarray::Array2::zeros((n, layout.width()));
    for mut r in rows.outer_iter_mut() {
        for seg in &layout.categorical {
            r[rng.gen_range(seg.clone())] = 1.0;
        }
        for k in layout.numeric() {
            r[k] = rng.gen::<f64>();
        }
    }
    rows
}

/// Which linear piece every leaky unit and every clamped output probability
/// sits on. Central differences are only meaningful when `theta - h` and
/// `theta + h` share it.
fn regime(q: &ParamVector, spec: &ArchitectureSpec, layout: &SegmentLayout, x: &ndarray::Array2<f64>) -> Vec<i8> {
    let pass = forward_pass(q, spec, x.view()).unwrap();
    let mut sig = Vec::new();
    for (l, act) in spec.activations().into_iter().enumerate() {
        if act == Activation::LeakyRelu {
            sig.extend(pass.activations[l + 1].iter().map(|&v| (v > 0.0) as i8));
        }
    }
    for row in pass.output().outer_iter() {
        for seg in &layout.categorical {
            for k in seg.clone() {
                let p = (row[k] + 1.0) / 2.0;
                sig.push(if p < 1e-6 { -1 } else if p > 1.0 - 1e-6 { 1 } else { 0 });
            }
        }
    }
    sig
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-4;
    let theta = 2.0 / 3.0;
    let mut models = 0;
    let mut coords = 0;
    let mut straddled = 0;
    let mut worst = 0.0f64;
    while models < 20 {
        let layout = random_layout(&mut rng);
        let d = layout.width();
        let depth = rng.gen_range(1..=2);
        let mut widths = vec![d];
        for _ in 0..depth {
            let prev = *widths.last().unwrap();
            widths.push(rng.gen_range(1..=prev.clamp(2, 5)));
        }
        let spec = ArchitectureSpec::symmetric(widths).unwrap();
        if spec.param_count() > 200 {
            continue;
        }
        let mut p = init_model(&spec, rng.gen()).unwrap();
        for v in &mut p.values {
            *v += rng.gen_range(-0.2..0.2);
        }
        let n_rows = rng.gen_range(1..=5);
        let x = random_rows(&mut rng, &layout, n_rows);
        let loss = |q: &ParamVector| {
            let pass = forward_pass(q, &spec, x.view()).unwrap();
            loss_with_output_grad(&layout, x.view(), pass.output().view(), theta).unwrap().0.total
        };
        let (g, _) = backward(&p, &spec, x.view(), &layout, theta).unwrap();
        for i in 0..p.len() {
            let mut plus = p.clone();
            plus.values[i] += h;
            let mut minus = p.clone();
            minus.values[i] -= h;
            if regime(&plus, &spec, &layout, &x) != regime(&minus, &spec, &layout, &x) {
                straddled += 1;
                continue;
            }
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            // absolute floor for coordinates whose true gradient is ~0
            let denom = g.values[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((g.values[i] - fd).abs() / denom);
            coords += 1;
        }
        models += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 30.0,
        format!("{models} models, {coords} coordinates, max rel error {worst:.2e}, {straddled} skipped at a kink, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn flat(values: Vec<f64>) -> ParamVector {
    let n = values.len();
    ParamVector {
        values,
        shapes: vec![LayerShape { fan_in: 0, fan_out: n }],
    }
}

fn update(client: usize, values: Vec<f64>, samples: usize) -> ClientUpdate {
    ClientUpdate {
        client,
        params: flat(values),
        samples,
        control_delta: None,
    }
}

fn criterion_3() -> Outcome {
    let fixture = fedavg_aggregate(&[update(0, vec![1.0], 100), update(1, vec![3.0], 300)]).unwrap();
    let exact = fixture.values == vec![2.5];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let clients = rng.gen_range(1..=8);
        let len = rng.gen_range(1..=16);
        let updates: Vec<ClientUpdate> = (0..clients)
            .map(|c| {
                let v = (0..len).map(|_| rng.gen_range(-5.0..5.0)).collect();
                update(c, v, rng.gen_range(1..=1000))
            })
            .collect();
        let base = fedavg_aggregate(&updates).unwrap();
        let mut shuffled = updates.clone();
        shuffled.shuffle(&mut rng);
        let factor = rng.gen_range(2..=9);
        let scaled: Vec<ClientUpdate> = updates
            .iter()
            .map(|u| ClientUpdate {
                samples: u.samples * factor,
                ..u.clone()
            })
            .collect();
        for other in [fedavg_aggregate(&shuffled).unwrap(), fedavg_aggregate(&scaled).unwrap()] {
            for (a, b) in base.values.iter().zip(&other.values) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(
        exact && worst < 1e-12,
        format!("fixture {:?}, max invariance gap {worst:.1e} over 100 fixtures", fixture.values),
    )
}

// ---------------------------------------------------------------- criterion 4

fn ladder_config() -> RunConfig {
    parse_config_str(
        r#"{
            "scenario": 1, "arch": "shallow", "M": 3, "T": 3, "R": 2,
            "eta": 40, "rho": 120, "seeds": [11],
            "injection": {"k_global": 3, "k_local": 3}
        }"#,
        &[],
    )
    .unwrap()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let base_cfg = ladder_config();
    let ds = prepare_dataset(&base_cfg).unwrap();
    let data = prepare_seed(&base_cfg, &ds, 11).unwrap();
    let strat = |fl, cl| Strategy {
        arch: ArchKind::Shallow,
        fl,
        cl,
    };
    let baseline = run_strategy(&base_cfg, &ds, &data, strat(FlKind::FedAvg, ClKind::Sequential)).unwrap();
    let trajectory = |run: &fedledger::sim::StrategyRun| -> Vec<String> {
        run.transcripts.iter().map(|t| t.checksum.clone()).collect()
    };
    let want = trajectory(&baseline);

    let mut ewc = base_cfg.clone();
    ewc.cl_settings.ewc_lambda = 0.0;
    let mut lwf = base_cfg.clone();
    lwf.cl_settings.lwf_alpha = 0.0;
    let mut replay = base_cfg.clone();
    replay.cl_settings.buffer_size = 0;
    let mut prox = base_cfg.clone();
    prox.mu = 0.0;
    let mut scaffold = base_cfg.clone();
    scaffold.scaffold = ScaffoldSettings {
        pin_zero: true,
        ..scaffold.scaffold
    };
    let rungs = [
        ("ewc", ewc, strat(FlKind::FedAvg, ClKind::Ewc)),
        ("lwf", lwf, strat(FlKind::FedAvg, ClKind::Lwf)),
        ("replay", replay, strat(FlKind::FedAvg, ClKind::Replay)),
        ("fedprox", prox, strat(FlKind::FedProx, ClKind::Sequential)),
        ("scaffold", scaffold, strat(FlKind::Scaffold, ClKind::Sequential)),
    ];
    let mut failed = Vec::new();
    for (name, cfg, s) in rungs {
        let run = run_strategy(&cfg, &ds, &data, s).unwrap();
        let same = trajectory(&run) == want && run.final_params.to_bytes() == baseline.final_params.to_bytes();
        if !same {
            failed.push(name);
        }
    }
    outcome(
        failed.is_empty(),
        format!(
            "{} rounds compared per rung, diverging: {:?}, {:.1}s",
            want.len(),
            failed,
            start.elapsed().as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------ criteria 5, 6

fn desk_config(scenario: u8, extra: &[&str]) -> RunConfig {
    let text = format!(
        r#"{{
            "scenario": {scenario}, "arch": "shallow",
            "M": 4, "T": 5, "R": 2, "eta": 200, "rho": 200, "seeds": [1, 2, 3],
            "injection": {{"k_global": 4, "k_local": 4}}
        }}"#
    );
    let overrides: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    parse_config_str(&text, &overrides).unwrap()
}

fn ap_global(table: &SummaryTable, fl: &str, cl: &str) -> f64 {
    100.0 * table.get(fl, cl).and_then(|r| r.ap_global).expect("summary row").mean
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config(1, &[r#"cl=["scratch","sequential","replay","lwf","ewc"]"#, "fl=fedavg"]);
    let table = summarize(&run_simulation(&cfg).unwrap().records);
    let secs = start.elapsed().as_secs_f64();
    let ap = |cl| ap_global(&table, "fedavg", cl);
    let seq = ap("sequential");
    let checks = [
        ("replay>sequential", ap("replay") > seq),
        ("lwf>sequential", ap("lwf") > seq),
        ("ewc>sequential", ap("ewc") > seq),
        ("sequential>scratch", seq > ap("scratch")),
        ("runtime<15min", secs < 900.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        format!(
            "scratch {:.2}, sequential {:.2}, replay {:.2}, lwf {:.2}, ewc {:.2}; unmet {:?}; {secs:.0}s",
            ap("scratch"),
            seq,
            ap("replay"),
            ap("lwf"),
            ap("ewc"),
            failed
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config(2, &[r#"fl=["fedavg","fedprox","scaffold"]"#, "cl=sequential"]);
    let table = summarize(&run_simulation(&cfg).unwrap().records);
    let secs = start.elapsed().as_secs_f64();
    let ap = |fl| ap_global(&table, fl, "sequential");
    let avg = ap("fedavg");
    let checks = [
        ("fedprox>fedavg", ap("fedprox") > avg),
        ("scaffold>fedavg", ap("scaffold") > avg),
        ("runtime<15min", secs < 900.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        format!(
            "fedavg {avg:.2}, fedprox {:.2}, scaffold {:.2}; unmet {:?}; {secs:.0}s",
            ap("fedprox"),
            ap("scaffold"),
            failed
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn clean_counts<'a>(rows: &'a [RawEntry], labels: &[AnomalyLabel], j: usize) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for (r, l) in rows.iter().zip(labels) {
        if *l == AnomalyLabel::None {
            *m.entry(r.categorical[j].as_str()).or_insert(0) += 1;
        }
    }
    m
}

fn clean_joint(rows: &[RawEntry], labels: &[AnomalyLabel], a: usize, va: &str, b: usize, vb: &str) -> usize {
    rows.iter()
        .zip(labels)
        .filter(|(r, l)| **l == AnomalyLabel::None && r.categorical[a] == va && r.categorical[b] == vb)
        .count()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let settings = InjectionSettings::default();
    let mut activities = 0;
    let mut globals = 0;
    let mut locals = 0;
    let mut relaxed_total = 0;
    let mut violations = Vec::new();
    // a handful of synthetic ledgers, activities drawn from random departments
    for ledger in 0..5u64 {
        let spec = SynthSpec {
            seed: 100 + ledger,
            ..SynthSpec::default()
        };
        let (table, _) = synthesize_dataset(&spec).unwrap();
        let pool = AnomalyPool::generate(&table, 20);
        let schema = build_schema(&table, &pool).unwrap();
        let by_dept = table.by_department();
        let mut depts: Vec<&str> = by_dept.keys().copied().collect();
        depts.sort_unstable();
        for _ in 0..10 {
            let dept = *depts.choose(&mut rng).unwrap();
            let ids = &by_dept[dept];
            let size = rng.gen_range(200..=1000).min(ids.len());
            let picked: Vec<usize> = ids.choose_multiple(&mut rng, size).copied().collect();
            let original: Vec<RawEntry> = picked.iter().map(|&i| table.entries[i].clone()).collect();
            let mut rows = original.clone();
            let mut r = rng::stream(rng.gen(), "inject", &[ledger, activities as u64]);
            let (labels, report) = inject_activity(&mut rows, &settings, &pool, &schema, &mut r).unwrap();
            activities += 1;
            relaxed_total += report.relaxed.len();
            let n_cat = schema.categorical.len();
            let counts: Vec<HashMap<&str, usize>> = (0..n_cat).map(|j| clean_counts(&rows, &labels, j)).collect();
            for &i in &report.global {
                globals += 1;
                let rare_cat = (0..n_cat).any(|j| !counts[j].contains_key(rows[i].categorical[j].as_str()));
                let rare_num = rows[i].numerical.iter().enumerate().any(|(k, v)| {
                    !rows
                        .iter()
                        .zip(&labels)
                        .any(|(o, l)| *l == AnomalyLabel::None && o.numerical[k] == *v)
                });
                if !(rare_cat || rare_num) {
                    violations.push(format!("activity {activities}: global row {i} has no unseen value"));
                }
            }
            for &i in &report.local {
                if report.relaxed.contains(&i) {
                    continue;
                }
                locals += 1;
                let row = &rows[i];
                let common = (0..n_cat).all(|j| counts[j].get(row.categorical[j].as_str()).copied().unwrap_or(0) >= settings.f_min);
                let changed: Vec<usize> = (0..n_cat).filter(|&j| row.categorical[j] != original[i].categorical[j]).collect();
                // some attribute pair covering every changed attribute is unseen among clean rows
                let unseen = (0..n_cat).any(|a| {
                    (a + 1..n_cat).any(|b| {
                        changed.iter().all(|c| *c == a || *c == b)
                            && clean_joint(&rows, &labels, a, &row.categorical[a], b, &row.categorical[b]) == 0
                    })
                });
                if !(common && unseen && !changed.is_empty()) {
                    violations.push(format!("activity {activities}: local row {i} common={common} unseen={unseen}"));
                }
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "{activities} activities, {globals} global and {locals} local anomalies checked, {relaxed_total} relaxed skipped{}",
            violations.first().map(|v| format!("; first violation: {v}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg_a = desk_config(1, &["fl=fedavg", "cl=sequential"]);
    cfg_a.out_dir = a.path().to_path_buf();
    let mut cfg_b = desk_config(1, &["fl=fedavg", "cl=sequential"]);
    cfg_b.out_dir = b.path().to_path_buf();
    let (dir_a, _) = run_to_dir(&cfg_a).unwrap();
    let (dir_b, _) = run_to_dir(&cfg_b).unwrap();
    let csv_a = std::fs::read(dir_a.join("metrics.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.join("metrics.csv")).unwrap();
    let same_id = dir_a.file_name() == dir_b.file_name();
    outcome(
        csv_a == csv_b && same_id && !csv_a.is_empty(),
        format!(
            "run-id {} / {}, metrics.csv {} bytes, identical {}, {:.0}s",
            cfg_a.run_id(),
            cfg_b.run_id(),
            csv_a.len(),
            csv_a == csv_b,
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

#[allow(clippy::single_range_in_vec_init)]
fn criterion_9() -> Outcome {
    let layout = SegmentLayout {
        categorical: vec![0..2],
        numeric_offset: 2,
        numeric_count: 1,
    };
    // mapped probabilities (0.8, 0.2) in tanh output space
    let loss = reconstruction_loss(&layout, &[1.0, 0.0, 0.5], &[0.6, -0.6, 0.3], 2.0 / 3.0).unwrap();
    // independent scalar evaluation of the weighted BCE + MSE
    let bce = -(0.8f64.ln() + 0.8f64.ln()) / 2.0;
    let mse = (0.5f64 - 0.3).powi(2);
    let oracle = 2.0 / 3.0 * bce + 1.0 / 3.0 * mse;
    outcome(
        (loss.total - 0.16210).abs() <= 1e-5 && (loss.total - oracle).abs() < 1e-12,
        format!("total {:.6} (oracle {oracle:.6})", loss.total),
    )
}

// --------------------------------------------------------------- criterion 10

fn criterion_10() -> Outcome {
    let (c_plus, _) = scaffold_control_update(&flat(vec![1.0]), &flat(vec![0.9]), &[0.0], &[0.0], 1, 0.1).unwrap();
    let fixture = (c_plus[0] - 1.0).abs() < 1e-12;

    // two real rounds of three clients on a small autoencoder
    let layout = SegmentLayout {
        categorical: vec![0..3, 3..6],
        numeric_offset: 6,
        numeric_count: 1,
    };
    let spec = ArchitectureSpec::symmetric(vec![7, 4, 2]).unwrap();
    let mut data_rng = ChaCha8Rng::seed_from_u64(10);
    let shards: Vec<_> = (0..3).map(|c| random_rows(&mut data_rng, &layout, 20 + 10 * c)).collect();
    let mut global = init_model(&spec, 10).unwrap();
    let mut state = ScaffoldState::new(global.len(), 3, ScaffoldSettings::default());
    let opts = TrainOptions {
        n_iters: 5,
        batch_size: 8,
        ..TrainOptions::default()
    };
    let mut gap = 0.0f64;
    for round in 0..2u64 {
        let mut updates = Vec::new();
        for (c, shard) in shards.iter().enumerate() {
            let mut local = global.clone();
            let mut adam = AdamState::new(local.len(), 1e-3);
            let mut r = rng::stream(10, "train", &[round, c as u64]);
            let mut hook = state.hook(c);
            let report = train_iterations(&mut local, &mut adam, &spec, &layout, shard.view(), &opts, &mut r, &mut hook).unwrap();
            let (new_c, delta) =
                scaffold_control_update(&global, &local, &state.server, &state.clients[c], report.steps, 1e-3).unwrap();
            state.clients[c] = new_c;
            updates.push(ClientUpdate {
                client: c,
                params: local,
                samples: shard.nrows(),
                control_delta: Some(delta),
            });
        }
        global = scaffold_server_update(&mut state, &global, &updates, 3).unwrap();
        for i in 0..global.len() {
            let mean = state.clients.iter().map(|c| c[i]).sum::<f64>() / 3.0;
            gap = gap.max((state.server[i] - mean).abs());
        }
    }
    outcome(
        fixture && gap < 1e-12,
        format!("c+ = {}, max |c - mean(c_i)| after rounds {gap:.1e}", c_plus[0]),
    )
}

fn main() {
    let strict_trends = std::env::var("FEDLEDGER_STRICT_TRENDS").is_ok_and(|v| v == "1");
    type Check = fn() -> Outcome;
    let criteria: [(u8, &str, bool, Check); 10] = [
        (1, "AP oracle equivalence", true, criterion_1),
        (2, "gradient oracle equivalence", true, criterion_2),
        (3, "aggregation exactness", true, criterion_3),
        (4, "strategy degeneracy ladder", true, criterion_4),
        (5, "forgetting trend (desk)", strict_trends, criterion_5),
        (6, "interference trend (desk)", strict_trends, criterion_6),
        (7, "injection invariants", true, criterion_7),
        (8, "determinism", true, criterion_8),
        (9, "loss fixture", true, criterion_9),
        (10, "scaffold option II", true, criterion_10),
    ];
    let mut hard_failures = Vec::new();
    let mut lines = Vec::new();
    // e.g. FEDLEDGER_ACCEPTANCE_ONLY=2,9 for a quick partial run
    let only: Option<Vec<u8>> = std::env::var("FEDLEDGER_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    for (id, name, gating, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && !gating { " (reported, not gating)" } else { "" };
        let line = format!("criterion {id:>2} {tag} {name}: {}{note}", o.detail);
        println!("{line}");
        lines.push(line);
        if !o.pass && gating {
            hard_failures.push(id);
        }
    }
    println!();
    for l in &lines {
        println!("{l}");
    }
    if !hard_failures.is_empty() {
        eprintln!("gating criteria failed: {hard_failures:?}");
        std::process::exit(1);
    }
}
