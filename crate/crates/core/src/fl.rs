//! Federated aggregation strategies and their client-side local objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LossHook, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlKind {
    /// Only the audit client trains; no collaboration.
    Single,
    FedAvg,
    FedProx,
    FedYogi,
    Scaffold,
}

impl FlKind {
    pub const ALL: [FlKind; 5] = [FlKind::Single, FlKind::FedAvg, FlKind::FedProx, FlKind::FedYogi, FlKind::Scaffold];

    pub fn name(self) -> &'static str {
        match self {
            FlKind::Single => "single",
            FlKind::FedAvg => "fedavg",
            FlKind::FedProx => "fedprox",
            FlKind::FedYogi => "fedyogi",
            FlKind::Scaffold => "scaffold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// A client's result for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    pub params: ParamVector,
    pub samples: usize,
    /// Scaffold only: `c_client_new - c_client_old`.
    pub control_delta: Option<Vec<f64>>,
}

/// Sample-count weighted mean of the client models.
pub fn fedavg_aggregate(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let first = updates
        .first()
        .ok_or_else(|| Error::Protocol("no client updates to aggregate".into()))?;
    let mut total = 0usize;
    for u in updates {
        if !u.params.same_shape(&first.params) {
            return Err(Error::Protocol(format!("client {} sent a model of a different shape", u.client)));
        }
        if u.samples == 0 {
            return Err(Error::Protocol(format!("client {} reported zero samples", u.client)));
        }
        total += u.samples;
    }
    let mut out = ParamVector::zeros_like(&first.params);
    for u in updates {
        let w = u.samples as f64 / total as f64;
        for (o, v) in out.values.iter_mut().zip(&u.params.values) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// `(mu / 2) * ||local - global||^2`
pub fn fedprox_penalty(local: &ParamVector, global: &ParamVector, mu: f64) -> Result<f64> {
    local.check_shape(global)?;
    Ok(0.5 * mu * local.sub(global)?.squared_norm())
}

/// Proximal tether to the broadcast model.
pub struct ProxHook<'a> {
    pub anchor: &'a ParamVector,
    pub mu: f64,
}

impl LossHook for ProxHook<'_> {
    fn param_term(&mut self, params: &ParamVector, grad: &mut ParamVector) -> Result<f64> {
        if self.mu == 0.0 {
            return Ok(0.0);
        }
        let penalty = fedprox_penalty(params, self.anchor, self.mu)?;
        for ((g, p), a) in grad.values.iter_mut().zip(&params.values).zip(&self.anchor.values) {
            *g += self.mu * (p - a);
        }
        Ok(penalty)
    }
}

/// Server-side Yogi optimizer applied to the aggregated client delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YogiServerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YogiSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
    pub lr: f64,
}

impl Default for YogiSettings {
    fn default() -> Self {
        YogiSettings {
            beta1: 0.9,
            beta2: 0.99,
            tau: 1e-3,
            lr: 1e-2,
        }
    }
}

impl YogiServerState {
    pub fn new(len: usize, s: YogiSettings) -> Self {
        YogiServerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1: s.beta1,
            beta2: s.beta2,
            tau: s.tau,
            lr: s.lr,
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn fedyogi_server_update(state: &mut YogiServerState, prev: &ParamVector, updates: &[ClientUpdate]) -> Result<ParamVector> {
    let avg = fedavg_aggregate(updates)?;
    avg.check_shape(prev)?;
    if state.m.len() != prev.len() || state.v.len() != prev.len() {
        return Err(Error::Shape("yogi moments do not match the model".into()));
    }
    let mut next = prev.clone();
    for i in 0..prev.len() {
        let delta = avg.values[i] - prev.values[i];
        let d2 = delta * delta;
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * delta;
        state.v[i] -= (1.0 - state.beta2) * d2 * sign(state.v[i] - d2);
        next.values[i] += state.lr * state.m[i] / (state.v[i].sqrt() + state.tau);
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldSettings {
    pub server_lr: f64,
    /// Zero the control variates at every experience boundary.
    pub reset_each_experience: bool,
    /// Keep every control variate at zero (no correction, no updates).
    pub pin_zero: bool,
}

impl Default for ScaffoldSettings {
    fn default() -> Self {
        ScaffoldSettings {
            server_lr: 1.0,
            reset_each_experience: false,
            pin_zero: false,
        }
    }
}

/// Server and per-client control variates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaffoldState {
    pub server: Vec<f64>,
    pub clients: Vec<Vec<f64>>,
    pub settings: ScaffoldSettings,
}

impl ScaffoldState {
    pub fn new(len: usize, n_clients: usize, settings: ScaffoldSettings) -> Self {
        ScaffoldState {
            server: vec![0.0; len],
            clients: vec![vec![0.0; len]; n_clients],
            settings,
        }
    }

    pub fn reset(&mut self) {
        self.server.iter_mut().for_each(|x| *x = 0.0);
        for c in &mut self.clients {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn hook(&self, client: usize) -> ScaffoldHook {
        ScaffoldHook {
            correction: if self.settings.pin_zero {
                None
            } else {
                Some(self.server.iter().zip(&self.clients[client]).map(|(c, ci)| c - ci).collect())
            },
        }
    }
}

/// Adds `c - c_client` to the local Adam update direction. Option II
/// measures the variates as displacement per step and learning rate, which
/// is the unit of that direction, not of the raw gradient.
pub struct ScaffoldHook {
    correction: Option<Vec<f64>>,
}

impl LossHook for ScaffoldHook {
    fn step_correction(&self) -> Option<&[f64]> {
        self.correction.as_deref()
    }
}

/// Option II control-variate refresh:
/// `c_client_new = c_client - c + (x - y) / (steps * local_lr)`.
/// Returns the new client variate and its delta.
pub fn scaffold_control_update(
    broadcast: &ParamVector,
    local: &ParamVector,
    server_c: &[f64],
    client_c: &[f64],
    steps: usize,
    local_lr: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if steps == 0 {
        return Err(Error::config("/eta", "scaffold needs at least one local step"));
    }
    broadcast.check_shape(local)?;
    if server_c.len() != local.len() || client_c.len() != local.len() {
        return Err(Error::Shape("control variates do not match the model".into()));
    }
    let denom = steps as f64 * local_lr;
    let new: Vec<f64> = (0..local.len())
        .map(|i| client_c[i] - server_c[i] + (broadcast.values[i] - local.values[i]) / denom)
        .collect();
    let delta = new.iter().zip(client_c).map(|(n, o)| n - o).collect();
    Ok((new, delta))
}

/// `theta_next = theta_prev + server_lr * (weighted_mean(y) - theta_prev)` and
/// `c_next = c + mean(delta_c)`. Every client must report.
pub fn scaffold_server_update(
    state: &mut ScaffoldState,
    prev: &ParamVector,
    updates: &[ClientUpdate],
    expected_clients: usize,
) -> Result<ParamVector> {
    if updates.len() != expected_clients {
        return Err(Error::Protocol(format!(
            "scaffold requires full participation: {} of {} clients reported",
            updates.len(),
            expected_clients
        )));
    }
    let avg = fedavg_aggregate(updates)?;
    avg.check_shape(prev)?;
    let lr = state.settings.server_lr;
    let mut next = prev.clone();
    for (n, (&p, &a)) in next.values.iter_mut().zip(prev.values.iter().zip(&avg.values)) {
        *n = (1.0 - lr) * p + lr * a;
    }
    if !state.settings.pin_zero {
        let m = updates.len() as f64;
        for u in updates {
            let delta = u
                .control_delta
                .as_ref()
                .ok_or_else(|| Error::Protocol(format!("client {} sent no control delta", u.client)))?;
            if delta.len() != state.server.len() {
                return Err(Error::Protocol("control delta length mismatch".into()));
            }
            for (c, d) in state.server.iter_mut().zip(delta) {
                *c += d / m;
            }
        }
    }
    Ok(next)
}
