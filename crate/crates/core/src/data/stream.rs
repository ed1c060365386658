use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EntryTable, ScenarioSchedule};
use crate::error::{Error, Result};
use crate::rng;

/// One client's sampled entry ids per experience and department.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceStream {
    pub client: usize,
    pub scenario: u8,
    /// `experiences[t][department]` -> entry indices into the table.
    pub experiences: Vec<BTreeMap<String, Vec<usize>>>,
}

impl ExperienceStream {
    pub fn rows_in(&self, t: usize) -> usize {
        self.experiences[t].values().map(Vec::len).sum()
    }
}

/// Sample `rho` entries for every active (client, experience, department)
/// cell. Departments smaller than `rho` are sampled with replacement.
pub fn build_experience_streams(
    table: &EntryTable,
    schedule: &ScenarioSchedule,
    departments: &[String],
    rho: usize,
    seed: u64,
) -> Result<Vec<ExperienceStream>> {
    if departments.len() != schedule.departments() {
        return Err(Error::config(
            "/departments",
            format!(
                "schedule has {} departments, {} named",
                schedule.departments(),
                departments.len()
            ),
        ));
    }
    if rho == 0 {
        return Err(Error::config("/rho", "rho must be positive"));
    }
    let by_dept = table.by_department();
    let mut streams = Vec::with_capacity(schedule.clients());
    for c in 0..schedule.clients() {
        let mut experiences = Vec::with_capacity(schedule.experiences());
        for t in 0..schedule.experiences() {
            let mut exp = BTreeMap::new();
            for d in schedule.active_departments(c, t) {
                let name = &departments[d];
                let pool = by_dept
                    .get(name.as_str())
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| Error::config("/departments", format!("scheduled department {name:?} has no entries")))?;
                let mut r = rng::stream(seed, "stream", &[c as u64, t as u64, d as u64]);
                let ids: Vec<usize> = if pool.len() >= rho {
                    index::sample(&mut r, pool.len(), rho).into_iter().map(|i| pool[i]).collect()
                } else {
                    (0..rho).map(|_| pool[r.gen_range(0..pool.len())]).collect()
                };
                exp.insert(name.clone(), ids);
            }
            experiences.push(exp);
        }
        streams.push(ExperienceStream {
            client: c,
            scenario: schedule.scenario.id(),
            experiences,
        });
    }
    Ok(streams)
}
