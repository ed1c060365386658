//! Desk-scale synthetic payments.
//!
//! Every department owns a handful of prototype entries. A row picks one
//! prototype and keeps each of its categorical values with probability
//! `keep_prob`, otherwise it draws from the department's own skewed marginal
//! over the shared alphabet. Amounts are log-normal around a
//! department-specific centre. Departments therefore differ both in their
//! marginals and in which value combinations co-occur.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EntryTable, RawEntry};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub departments: usize,
    pub rows_per_department: usize,
    pub categorical: usize,
    pub numerical: usize,
    /// Alphabet size per categorical attribute.
    pub cardinality: usize,
    pub prototypes: usize,
    pub keep_prob: f64,
    /// Geometric decay of the department marginal over its value ranking.
    pub skew: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            departments: 5,
            rows_per_department: 2000,
            categorical: 4,
            numerical: 1,
            cardinality: 8,
            prototypes: 4,
            keep_prob: 0.8,
            skew: 0.55,
            seed: 0,
        }
    }
}

/// Generating parameters of one department.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartmentProfile {
    pub name: String,
    /// `marginals[j][v]`: probability of value `v` for attribute `j`.
    pub marginals: Vec<Vec<f64>>,
    pub prototypes: Vec<Vec<usize>>,
    pub amount_centres: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub spec: SynthSpec,
    pub departments: Vec<DepartmentProfile>,
}

pub fn department_name(d: usize) -> String {
    format!("DEPT_{d:02}")
}

pub fn value_name(attr: usize, v: usize) -> String {
    format!("A{attr}_V{v}")
}

pub fn synthesize_dataset(spec: &SynthSpec) -> Result<(EntryTable, SynthParams)> {
    if spec.departments == 0
        || spec.rows_per_department == 0
        || spec.categorical + spec.numerical == 0
        || spec.cardinality == 0
        || spec.prototypes == 0
    {
        return Err(Error::config("/synthetic", "all synthetic counts must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.keep_prob) || !(spec.skew > 0.0 && spec.skew <= 1.0) {
        return Err(Error::config("/synthetic", "keep_prob must be in [0,1] and skew in (0,1]"));
    }
    let mut prng = rng::stream(spec.seed, "synth-profile", &[]);
    let departments: Vec<DepartmentProfile> = (0..spec.departments)
        .map(|d| {
            let marginals: Vec<Vec<f64>> = (0..spec.categorical)
                .map(|_| {
                    let mut order: Vec<usize> = (0..spec.cardinality).collect();
                    order.shuffle(&mut prng);
                    let mut probs = vec![0.0; spec.cardinality];
                    for (rank, &v) in order.iter().enumerate() {
                        probs[v] = spec.skew.powi(rank as i32);
                    }
                    let total: f64 = probs.iter().sum();
                    probs.iter_mut().for_each(|p| *p /= total);
                    probs
                })
                .collect();
            let prototypes = (0..spec.prototypes)
                .map(|_| {
                    marginals
                        .iter()
                        .map(|m| WeightedIndex::new(m).expect("positive weights").sample(&mut prng))
                        .collect()
                })
                .collect();
            let amount_centres = (0..spec.numerical).map(|_| 10f64.powf(prng.gen_range(1.0..3.0))).collect();
            DepartmentProfile {
                name: department_name(d),
                marginals,
                prototypes,
                amount_centres,
            }
        })
        .collect();

    let mut entries = Vec::with_capacity(spec.departments * spec.rows_per_department);
    for (d, dept) in departments.iter().enumerate() {
        let mut rrng = rng::stream(spec.seed, "synth-rows", &[d as u64]);
        let samplers: Vec<WeightedIndex<f64>> = dept
            .marginals
            .iter()
            .map(|m| WeightedIndex::new(m).expect("positive weights"))
            .collect();
        for _ in 0..spec.rows_per_department {
            let proto = &dept.prototypes[rrng.gen_range(0..dept.prototypes.len())];
            let categorical = (0..spec.categorical)
                .map(|j| {
                    let v = if rrng.gen::<f64>() < spec.keep_prob {
                        proto[j]
                    } else {
                        samplers[j].sample(&mut rrng)
                    };
                    value_name(j, v)
                })
                .collect();
            let numerical = dept
                .amount_centres
                .iter()
                .map(|&c| {
                    // Box-Muller, sigma 0.3 in log space
                    let u1: f64 = rrng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rrng.gen();
                    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                    ((c * (0.3 * z).exp()) * 100.0).round() / 100.0
                })
                .collect();
            entries.push(RawEntry {
                id: entries.len(),
                department: dept.name.clone(),
                categorical,
                numerical,
            });
        }
    }
    let table = EntryTable {
        department_attribute: "department".into(),
        categorical_names: (0..spec.categorical).map(|j| format!("attr_{j}")).collect(),
        numerical_names: (0..spec.numerical).map(|k| format!("amount_{k}")).collect(),
        entries,
        skipped_rows: 0,
    };
    Ok((
        table,
        SynthParams {
            spec: spec.clone(),
            departments,
        },
    ))
}

/// Write a table as CSV with a `department` column first.
pub fn write_csv(table: &EntryTable, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut header = vec![table.department_attribute.clone()];
    header.extend(table.categorical_names.iter().cloned());
    header.extend(table.numerical_names.iter().cloned());
    let werr = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(werr)?;
    for e in &table.entries {
        let mut rec = vec![e.department.clone()];
        rec.extend(e.categorical.iter().cloned());
        rec.extend(e.numerical.iter().map(|x| format!("{x}")));
        w.write_record(&rec).map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
