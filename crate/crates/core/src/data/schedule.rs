use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Which clients see sparse (opt-in/opt-out) department activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Sparse audit client, constant collaborators.
    SparseAudit = 1,
    /// Constant audit client, sparse collaborators.
    SparseCollaborators = 2,
    /// Everyone sparse.
    AllSparse = 3,
}

impl Scenario {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Scenario::SparseAudit),
            2 => Some(Scenario::SparseCollaborators),
            3 => Some(Scenario::AllSparse),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    /// Client 0 is the audit client.
    pub fn is_sparse(self, client: usize) -> bool {
        match self {
            Scenario::SparseAudit => client == 0,
            Scenario::SparseCollaborators => client != 0,
            Scenario::AllSparse => true,
        }
    }
}

/// `active[client][experience][department]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSchedule {
    pub scenario: Scenario,
    pub p: f64,
    pub active: Vec<Vec<Vec<bool>>>,
}

impl ScenarioSchedule {
    pub fn clients(&self) -> usize {
        self.active.len()
    }

    pub fn experiences(&self) -> usize {
        self.active.first().map_or(0, Vec::len)
    }

    pub fn departments(&self) -> usize {
        self.active
            .first()
            .and_then(|c| c.first())
            .map_or(0, Vec::len)
    }

    pub fn active_departments(&self, client: usize, t: usize) -> Vec<usize> {
        self.active[client][t]
            .iter()
            .enumerate()
            .filter_map(|(d, &a)| a.then_some(d))
            .collect()
    }

    pub fn density(&self, client: usize) -> f64 {
        let cells: Vec<bool> = self.active[client].iter().flatten().copied().collect();
        cells.iter().filter(|&&a| a).count() as f64 / cells.len().max(1) as f64
    }

    /// Wrap an explicit activity matrix (no repair is applied).
    pub fn from_matrix(scenario: Scenario, active: Vec<Vec<Vec<bool>>>) -> Result<Self> {
        let pointer = "/activity_matrix";
        let t = active.first().map_or(0, Vec::len);
        let d = active.first().and_then(|c| c.first()).map_or(0, Vec::len);
        if active.len() < 2 || t == 0 || d == 0 {
            return Err(Error::config(pointer, "matrix needs >= 2 clients, >= 1 experience and >= 1 department"));
        }
        if active.iter().any(|c| c.len() != t || c.iter().any(|e| e.len() != d)) {
            return Err(Error::config(pointer, "matrix is ragged"));
        }
        Ok(ScenarioSchedule { scenario, p: f64::NAN, active })
    }
}

/// Bernoulli(`p`) activity for sparse clients, all-true for constant ones,
/// then every empty client-experience gets one random department switched on.
pub fn generate_schedule(
    scenario: Scenario,
    n_clients: usize,
    n_experiences: usize,
    n_departments: usize,
    p: f64,
    seed: u64,
) -> Result<ScenarioSchedule> {
    if n_clients < 2 {
        return Err(Error::config("/M", "at least two clients are required"));
    }
    if n_experiences == 0 || n_departments == 0 {
        return Err(Error::config("/T", "experience and department counts must be positive"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::config("/p", "activity probability must be in (0, 1]"));
    }
    let active = (0..n_clients)
        .map(|c| {
            let mut r = rng::stream(seed, "schedule", &[c as u64]);
            (0..n_experiences)
                .map(|_| {
                    if !scenario.is_sparse(c) {
                        return vec![true; n_departments];
                    }
                    let mut row: Vec<bool> = (0..n_departments).map(|_| r.gen::<f64>() < p).collect();
                    if !row.iter().any(|&a| a) {
                        row[r.gen_range(0..n_departments)] = true;
                    }
                    row
                })
                .collect()
        })
        .collect();
    Ok(ScenarioSchedule { scenario, p, active })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_one_collaborators_constant() {
        let s = generate_schedule(Scenario::SparseAudit, 4, 20, 5, 0.5, 3).unwrap();
        for c in 1..4 {
            assert!(s.active[c].iter().flatten().all(|&a| a));
        }
        assert!(s.density(0) < 1.0);
    }

    #[test]
    fn scenario_two_audit_constant() {
        let s = generate_schedule(Scenario::SparseCollaborators, 4, 20, 5, 0.5, 3).unwrap();
        assert!(s.active[0].iter().flatten().all(|&a| a));
        assert!((1..4).all(|c| s.density(c) < 1.0));
    }

    #[test]
    fn p_one_is_dense() {
        let s = generate_schedule(Scenario::AllSparse, 3, 6, 5, 1.0, 9).unwrap();
        assert!(s.active.iter().flatten().flatten().all(|&a| a));
    }

    #[test]
    fn invalid_inputs() {
        assert!(generate_schedule(Scenario::AllSparse, 4, 5, 5, 0.0, 1).is_err());
        assert!(generate_schedule(Scenario::AllSparse, 1, 5, 5, 0.5, 1).is_err());
    }

    #[test]
    fn repair_guarantees_activity() {
        for seed in 0..200 {
            let s = generate_schedule(Scenario::AllSparse, 4, 10, 5, 0.05, seed).unwrap();
            for c in 0..4 {
                for t in 0..10 {
                    assert!(!s.active_departments(c, t).is_empty());
                }
            }
        }
    }

    #[test]
    fn scenario_three_density_near_p() {
        // 1,000 seeds x 100 cells per client; repair adds a little mass at p=0.5
        let mut total = 0.0;
        let n = 1000;
        for seed in 0..n {
            let s = generate_schedule(Scenario::AllSparse, 4, 5, 5, 0.5, seed).unwrap();
            total += (0..4).map(|c| s.density(c)).sum::<f64>() / 4.0;
        }
        let mean = total / n as f64;
        assert!((mean - 0.5).abs() < 0.05, "density {mean}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_schedule(Scenario::AllSparse, 4, 5, 5, 0.5, 11).unwrap();
        let b = generate_schedule(Scenario::AllSparse, 4, 5, 5, 0.5, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ragged_matrix_rejected() {
        let m = vec![vec![vec![true, false]], vec![vec![true]]];
        assert!(ScenarioSchedule::from_matrix(Scenario::AllSparse, m).is_err());
    }
}
