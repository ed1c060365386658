//! Labeled anomaly injection for the audit client's payment activities.
//!
//! Global anomalies carry individually rare values: reserved synthetic tokens
//! that never occur in real data and/or amounts beyond the observed range.
//! Local anomalies only recombine values that are common in the activity, but
//! into an attribute pair that never co-occurs among its clean rows.

use std::collections::{BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AnomalyLabel, DatasetSchema, EntryTable, RawEntry};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Reserved values for global anomalies, one list per categorical attribute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnomalyPool {
    pub categorical: Vec<Vec<String>>,
}

impl AnomalyPool {
    /// `SYN_<attr>_<i>` tokens, suffixed until they collide with no real value.
    pub fn generate(table: &EntryTable, per_attribute: usize) -> Self {
        let categorical = table
            .categorical_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let real: BTreeSet<&str> = table.entries.iter().map(|e| e.categorical[j].as_str()).collect();
                (0..per_attribute)
                    .map(|i| {
                        let mut token = format!("SYN_{name}_{i}");
                        while real.contains(token.as_str()) {
                            token.push('_');
                        }
                        token
                    })
                    .collect()
            })
            .collect();
        AnomalyPool { categorical }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionSettings {
    pub k_global: usize,
    pub k_local: usize,
    /// Minimum clean-row frequency of every value in a local anomaly.
    pub f_min: usize,
    pub max_resample: usize,
}

impl Default for InjectionSettings {
    fn default() -> Self {
        InjectionSettings {
            k_global: 20,
            k_local: 20,
            f_min: 10,
            max_resample: 100,
        }
    }
}

/// Which rows were touched, and which local anomalies needed relaxation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InjectionReport {
    pub global: Vec<usize>,
    pub local: Vec<usize>,
    pub relaxed: Vec<usize>,
}

fn clean_indices(labels: &[AnomalyLabel]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| (!l.is_anomaly()).then_some(i))
        .collect()
}

/// Replace 1-2 categorical values with reserved tokens and, for about half the
/// rows (always when there are no categorical attributes), push one amount to
/// a scaled value of `1 + u`, `u` in (0.5, 2).
pub fn inject_global(
    rows: &mut [RawEntry],
    labels: &mut [AnomalyLabel],
    k: usize,
    pool: &AnomalyPool,
    schema: &DatasetSchema,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let clean = clean_indices(labels);
    if k > clean.len() {
        return Err(Error::config(
            "/k_global",
            format!("cannot inject {k} global anomalies into {} clean rows", clean.len()),
        ));
    }
    let n_cat = schema.categorical.len();
    let n_num = schema.numerical.len();
    let usable: Vec<usize> = (0..n_cat)
        .filter(|&j| pool.categorical.get(j).is_some_and(|v| !v.is_empty()))
        .collect();
    if usable.is_empty() && n_num == 0 {
        return Err(Error::Injection("no reserved values and no numeric attribute to perturb".into()));
    }
    let mut chosen: Vec<usize> = index::sample(rng, clean.len(), k).into_iter().map(|i| clean[i]).collect();
    chosen.sort_unstable();
    for &i in &chosen {
        let row = &mut rows[i];
        if !usable.is_empty() {
            let n_attr = rng.gen_range(1..=2usize).min(usable.len());
            for &j in usable.choose_multiple(rng, n_attr) {
                row.categorical[j] = pool.categorical[j].choose(rng).expect("non-empty").clone();
            }
        }
        if n_num > 0 && (usable.is_empty() || rng.gen_bool(0.5)) {
            let k = rng.gen_range(0..n_num);
            let attr = &schema.numerical[k];
            let u: f64 = rng.gen_range(0.5..2.0);
            let span = if attr.max > attr.min { attr.max - attr.min } else { attr.max.abs().max(1.0) };
            row.numerical[k] = attr.min + (1.0 + u) * span;
        }
        labels[i] = AnomalyLabel::Global;
    }
    Ok(chosen)
}

struct CleanStats {
    freq: Vec<HashMap<String, usize>>,
    pairs: HashMap<(usize, usize), HashMap<(String, String), usize>>,
}

impl CleanStats {
    fn new(rows: &[RawEntry], idx: &[usize], n_cat: usize) -> Self {
        let mut freq = vec![HashMap::new(); n_cat];
        let mut pairs: HashMap<(usize, usize), HashMap<(String, String), usize>> = HashMap::new();
        for &i in idx {
            let c = &rows[i].categorical;
            for j in 0..n_cat {
                *freq[j].entry(c[j].clone()).or_insert(0) += 1;
                for l in j + 1..n_cat {
                    *pairs
                        .entry((j, l))
                        .or_default()
                        .entry((c[j].clone(), c[l].clone()))
                        .or_insert(0) += 1;
                }
            }
        }
        CleanStats { freq, pairs }
    }

    fn joint(&self, a: usize, va: &str, b: usize, vb: &str) -> usize {
        let ((a, va), (b, vb)) = if a < b { ((a, va), (b, vb)) } else { ((b, vb), (a, va)) };
        self.pairs
            .get(&(a, b))
            .and_then(|m| m.get(&(va.to_string(), vb.to_string())))
            .copied()
            .unwrap_or(0)
    }

    /// Values with at least `f_min` clean occurrences, sorted for determinism.
    fn frequent(&self, j: usize, f_min: usize) -> Vec<&str> {
        let mut v: Vec<&str> = self.freq[j]
            .iter()
            .filter(|(_, &n)| n >= f_min)
            .map(|(s, _)| s.as_str())
            .collect();
        v.sort_unstable();
        v
    }

    fn count(&self, j: usize, v: &str) -> usize {
        self.freq[j].get(v).copied().unwrap_or(0)
    }
}

/// Recombine a pair of common categorical values into an unseen combination.
///
/// Returns the injected row indices and the subset that fell back to the
/// rarest achievable combination (or to rows with rare context values).
pub fn inject_local(
    rows: &mut [RawEntry],
    labels: &mut [AnomalyLabel],
    k: usize,
    f_min: usize,
    max_resample: usize,
    rng: &mut SimRng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if k == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let clean = clean_indices(labels);
    if k > clean.len() {
        return Err(Error::config(
            "/k_local",
            format!("cannot inject {k} local anomalies into {} clean rows", clean.len()),
        ));
    }
    let n_cat = rows.first().map_or(0, |r| r.categorical.len());
    if n_cat < 2 {
        return Err(Error::Injection("local anomalies need at least two categorical attributes".into()));
    }
    // Distinct-value check over the activity.
    let snapshot = CleanStats::new(rows, &clean, n_cat);
    let varied: Vec<usize> = (0..n_cat).filter(|&j| snapshot.freq[j].len() >= 2).collect();
    if varied.len() < 2 {
        let flat = (0..n_cat).find(|j| !varied.contains(j)).expect("some attribute is constant");
        return Err(Error::Injection(format!(
            "attribute {flat} has a single value in this activity; no unseen combination exists"
        )));
    }

    // Prefer target rows whose own values stay common after the targets leave
    // the clean pool.
    let margin = f_min + k;
    let mut preferred: Vec<usize> = clean
        .iter()
        .copied()
        .filter(|&i| (0..n_cat).all(|j| snapshot.count(j, &rows[i].categorical[j]) >= margin))
        .collect();
    let mut others: Vec<usize> = clean.iter().copied().filter(|i| !preferred.contains(i)).collect();
    preferred.shuffle(rng);
    others.shuffle(rng);
    let mut targets: Vec<usize> = preferred.iter().chain(&others).take(k).copied().collect();
    targets.sort_unstable();
    let rest: Vec<usize> = clean.iter().copied().filter(|i| targets.binary_search(i).is_err()).collect();
    let stats = CleanStats::new(rows, &rest, n_cat);

    let frequent: Vec<Vec<&str>> = (0..n_cat).map(|j| stats.frequent(j, f_min)).collect();
    let pairable: Vec<usize> = (0..n_cat).filter(|&j| !frequent[j].is_empty()).collect();
    let mut relaxed = Vec::new();
    let mut updates: Vec<(usize, usize, String, usize, String)> = Vec::with_capacity(k);
    for &i in &targets {
        let row = &rows[i];
        let context_ok = (0..n_cat).all(|j| stats.count(j, &row.categorical[j]) >= f_min);
        let mut found = None;
        if pairable.len() >= 2 {
            for _ in 0..max_resample {
                let pick: Vec<&usize> = pairable.choose_multiple(rng, 2).collect();
                let (a, b) = (*pick[0], *pick[1]);
                let va = *frequent[a].choose(rng).expect("non-empty");
                let vb = *frequent[b].choose(rng).expect("non-empty");
                if (va, vb) == (row.categorical[a].as_str(), row.categorical[b].as_str()) {
                    continue;
                }
                if stats.joint(a, va, b, vb) == 0 {
                    found = Some((a, va.to_string(), b, vb.to_string()));
                    break;
                }
            }
        }
        let choice = match found {
            Some(c) => {
                if !context_ok {
                    relaxed.push(i);
                }
                c
            }
            None => {
                relaxed.push(i);
                rarest_combination(&stats, &varied, &frequent, row, rng)
            }
        };
        updates.push((i, choice.0, choice.1, choice.2, choice.3));
    }
    for (i, a, va, b, vb) in updates {
        rows[i].categorical[a] = va;
        rows[i].categorical[b] = vb;
        labels[i] = AnomalyLabel::Local;
    }
    relaxed.sort_unstable();
    Ok((targets, relaxed))
}

/// Among all attribute pairs and candidate values (frequent ones when
/// available, otherwise every observed value) pick a combination with the
/// lowest clean joint count, random among ties.
fn rarest_combination(
    stats: &CleanStats,
    varied: &[usize],
    frequent: &[Vec<&str>],
    row: &RawEntry,
    rng: &mut SimRng,
) -> (usize, String, usize, String) {
    let candidates = |j: usize| -> Vec<String> {
        if frequent[j].is_empty() {
            let mut all: Vec<String> = stats.freq[j].keys().cloned().collect();
            all.sort_unstable();
            all
        } else {
            frequent[j].iter().map(|s| s.to_string()).collect()
        }
    };
    let mut best = usize::MAX;
    let mut ties = Vec::new();
    for (x, &a) in varied.iter().enumerate() {
        for &b in &varied[x + 1..] {
            let (ca, cb) = (candidates(a), candidates(b));
            for va in &ca {
                for vb in &cb {
                    if (va.as_str(), vb.as_str()) == (row.categorical[a].as_str(), row.categorical[b].as_str()) {
                        continue;
                    }
                    let n = stats.joint(a, va, b, vb);
                    if n < best {
                        best = n;
                        ties.clear();
                    }
                    if n == best {
                        ties.push((a, va.clone(), b, vb.clone()));
                    }
                }
            }
        }
    }
    ties.choose(rng).cloned().expect("at least two varied attributes yield a candidate")
}

/// Global then local injection into one activity.
pub fn inject_activity(
    rows: &mut [RawEntry],
    settings: &InjectionSettings,
    pool: &AnomalyPool,
    schema: &DatasetSchema,
    rng: &mut SimRng,
) -> Result<(Vec<AnomalyLabel>, InjectionReport)> {
    let mut labels = vec![AnomalyLabel::None; rows.len()];
    let global = inject_global(rows, &mut labels, settings.k_global, pool, schema, rng)?;
    let (local, relaxed) = inject_local(rows, &mut labels, settings.k_local, settings.f_min, settings.max_resample, rng)?;
    Ok((labels, InjectionReport { global, local, relaxed }))
}
