//! Continual-learning strategies run at every client across experiences.

use std::collections::HashMap;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AnomalyLabel, EncodedBatch, SegmentLayout};
use crate::error::{Error, Result};
use crate::nn::{self, AdamState, ArchitectureSpec, LossHook, ParamVector};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClKind {
    Scratch,
    Sequential,
    Replay,
    Lwf,
    Ewc,
}

impl ClKind {
    pub const ALL: [ClKind; 5] = [ClKind::Scratch, ClKind::Sequential, ClKind::Replay, ClKind::Lwf, ClKind::Ewc];

    pub fn name(self) -> &'static str {
        match self {
            ClKind::Scratch => "scratch",
            ClKind::Sequential => "sequential",
            ClKind::Replay => "replay",
            ClKind::Lwf => "lwf",
            ClKind::Ewc => "ewc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClSettings {
    pub buffer_size: usize,
    pub ewc_lambda: f64,
    pub lwf_alpha: f64,
    pub fisher_samples: usize,
    pub replay_exclude_anomalies: bool,
}

impl Default for ClSettings {
    fn default() -> Self {
        ClSettings {
            buffer_size: 1000,
            ewc_lambda: 500.0,
            lwf_alpha: 1.2,
            fisher_samples: 1000,
            replay_exclude_anomalies: false,
        }
    }
}

/// Department-stratified rehearsal memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    pub capacity: usize,
    /// Departments in first-observation order.
    pub departments: Vec<String>,
    rows: HashMap<String, Array2<f64>>,
    flat: Array2<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, width: usize) -> Self {
        ReplayBuffer {
            capacity,
            departments: Vec::new(),
            rows: HashMap::new(),
            flat: Array2::zeros((0, width)),
        }
    }

    pub fn len(&self) -> usize {
        self.flat.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.nrows() == 0
    }

    pub fn count(&self, department: &str) -> usize {
        self.rows.get(department).map_or(0, |r| r.nrows())
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.flat.view()
    }

    /// `floor(N / n)` per department, one extra for the first `N mod n`.
    pub fn quotas(&self) -> Vec<usize> {
        let n = self.departments.len();
        if n == 0 {
            return Vec::new();
        }
        (0..n)
            .map(|i| self.capacity / n + usize::from(i < self.capacity % n))
            .collect()
    }

    fn rebuild(&mut self) {
        let width = self.flat.ncols();
        let views: Vec<ArrayView2<f64>> = self
            .departments
            .iter()
            .filter_map(|d| self.rows.get(d).map(|a| a.view()))
            .collect();
        self.flat = if views.is_empty() {
            Array2::zeros((0, width))
        } else {
            concatenate(Axis(0), &views).expect("equal widths")
        };
    }
}

fn sample_rows(rows: ArrayView2<f64>, keep: usize, rng: &mut SimRng) -> Array2<f64> {
    if keep >= rows.nrows() {
        return rows.to_owned();
    }
    let mut idx = index::sample(rng, rows.nrows(), keep).into_vec();
    idx.sort_unstable();
    rows.select(Axis(0), &idx)
}

/// Rebalance the buffer after an experience: newly seen departments fill
/// their quota from `data`, known departments are down-sampled to theirs.
pub fn replay_update_buffer(buffer: &mut ReplayBuffer, data: &EncodedBatch, exclude_anomalies: bool, rng: &mut SimRng) {
    let mut fresh = Vec::new();
    for d in &data.departments {
        if !buffer.departments.contains(d) && !fresh.contains(d) {
            fresh.push(d.clone());
        }
    }
    buffer.departments.extend(fresh.iter().cloned());
    let quotas = buffer.quotas();
    for (dept, quota) in buffer.departments.clone().into_iter().zip(quotas) {
        if fresh.contains(&dept) {
            let idx: Vec<usize> = (0..data.len())
                .filter(|&i| data.departments[i] == dept && !(exclude_anomalies && data.labels[i] != AnomalyLabel::None))
                .collect();
            let candidates = data.rows.select(Axis(0), &idx);
            buffer.rows.insert(dept, sample_rows(candidates.view(), quota, rng));
        } else if let Some(existing) = buffer.rows.get(&dept) {
            if existing.nrows() > quota {
                let kept = sample_rows(existing.view(), quota, rng);
                buffer.rows.insert(dept, kept);
            }
        }
    }
    buffer.rebuild();
}

/// Appends up to `batch` rows drawn uniformly from the buffer.
pub fn replay_augment(batch: Array2<f64>, buffer: &ReplayBuffer, rng: &mut SimRng) -> Array2<f64> {
    if buffer.is_empty() {
        return batch;
    }
    let m = batch.nrows().min(buffer.len());
    let idx = index::sample(rng, buffer.len(), m).into_vec();
    let replayed = buffer.rows().select(Axis(0), &idx);
    concatenate(Axis(0), &[batch.view(), replayed.view()]).expect("equal widths")
}

pub struct ReplayHook<'a> {
    pub buffer: &'a ReplayBuffer,
    pub rng: SimRng,
}

impl LossHook for ReplayHook<'_> {
    fn augment(&mut self, batch: Array2<f64>) -> Array2<f64> {
        replay_augment(batch, self.buffer, &mut self.rng)
    }
}

/// Quadratic anchor to the previous experience's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EwcState {
    pub anchor: ParamVector,
    pub fisher: Vec<f64>,
    pub lambda: f64,
}

/// `(lambda / 2) * sum_j F_j (theta_j - anchor_j)^2`
pub fn ewc_penalty(params: &ParamVector, state: &EwcState) -> Result<f64> {
    params.check_shape(&state.anchor)?;
    if state.fisher.len() != params.len() {
        return Err(Error::Shape("fisher diagonal length differs from the parameters".into()));
    }
    let s: f64 = params
        .values
        .iter()
        .zip(&state.anchor.values)
        .zip(&state.fisher)
        .map(|((p, a), f)| f * (p - a) * (p - a))
        .sum();
    Ok(0.5 * state.lambda * s)
}

impl LossHook for EwcState {
    fn param_term(&mut self, params: &ParamVector, grad: &mut ParamVector) -> Result<f64> {
        if self.lambda == 0.0 {
            return Ok(0.0);
        }
        let penalty = ewc_penalty(params, self)?;
        for (((g, p), a), f) in grad
            .values
            .iter_mut()
            .zip(&params.values)
            .zip(&self.anchor.values)
            .zip(&self.fisher)
        {
            *g += self.lambda * f * (p - a);
        }
        Ok(penalty)
    }
}

/// Diagonal empirical Fisher: mean of squared single-row gradients over
/// `n_samples` rows drawn uniformly with replacement.
pub fn estimate_fisher(
    params: &ParamVector,
    spec: &ArchitectureSpec,
    layout: &SegmentLayout,
    theta_mix: f64,
    data: ArrayView2<f64>,
    n_samples: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    if data.nrows() == 0 {
        return Err(Error::config("/data", "fisher estimation needs data"));
    }
    let mut fisher = vec![0.0; params.len()];
    if n_samples == 0 {
        return Ok(fisher);
    }
    for _ in 0..n_samples {
        let i = rng.gen_range(0..data.nrows());
        let row = data.slice(ndarray::s![i..i + 1, ..]);
        let (g, _) = nn::backward(params, spec, row, layout, theta_mix)?;
        for (f, gv) in fisher.iter_mut().zip(&g.values) {
            *f += gv * gv;
        }
    }
    let inv = 1.0 / n_samples as f64;
    fisher.iter_mut().for_each(|f| *f *= inv);
    Ok(fisher)
}

/// `alpha * mean((new - old)^2)` over all rows and output dimensions.
pub fn lwf_distill_loss(new_output: ArrayView2<f64>, old_output: ArrayView2<f64>, alpha: f64) -> Result<f64> {
    if new_output.dim() != old_output.dim() {
        return Err(Error::Shape(format!(
            "distillation outputs differ: {:?} vs {:?}",
            new_output.dim(),
            old_output.dim()
        )));
    }
    let n = new_output.len().max(1) as f64;
    let s: f64 = new_output
        .iter()
        .zip(old_output.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(alpha * s / n)
}

/// Frozen copy of the previous experience's model.
#[derive(Debug, Clone, PartialEq)]
pub struct LwfState {
    pub frozen: ParamVector,
    pub spec: ArchitectureSpec,
    pub alpha: f64,
}

impl LossHook for LwfState {
    fn output_term(&mut self, inputs: ArrayView2<f64>, outputs: ArrayView2<f64>, d_out: &mut Array2<f64>) -> Result<f64> {
        if self.alpha == 0.0 {
            return Ok(0.0);
        }
        let old = nn::forward(&self.frozen, &self.spec, inputs)?;
        let loss = lwf_distill_loss(outputs, old.view(), self.alpha)?;
        let scale = 2.0 * self.alpha / outputs.len() as f64;
        ndarray::Zip::from(d_out)
            .and(outputs)
            .and(&old)
            .for_each(|d, &n, &o| *d += scale * (n - o));
        Ok(loss)
    }
}

/// Per-client strategy state carried across experiences.
#[derive(Debug, Clone)]
pub struct ContinualState {
    pub kind: ClKind,
    pub settings: ClSettings,
    pub buffer: ReplayBuffer,
    pub ewc: Option<EwcState>,
    pub lwf: Option<LwfState>,
}

impl ContinualState {
    pub fn new(kind: ClKind, settings: ClSettings, width: usize) -> Self {
        ContinualState {
            kind,
            settings,
            buffer: ReplayBuffer::new(settings.buffer_size, width),
            ewc: None,
            lwf: None,
        }
    }

    /// Parameters a client starts experience `t` from. Scratch draws a fresh
    /// model from `(seed, t)`; every other strategy continues from `incoming`.
    /// The optimizer is reset in all cases.
    pub fn begin_experience(
        &self,
        t: usize,
        incoming: &ParamVector,
        spec: &ArchitectureSpec,
        seed: u64,
        optimizer: &mut AdamState,
    ) -> Result<ParamVector> {
        optimizer.reset();
        match self.kind {
            ClKind::Scratch => nn::init_model(spec, rng::derive_seed(seed, "scratch", &[t as u64])),
            _ => Ok(incoming.clone()),
        }
    }

    /// Hook applied during local training in the current experience.
    pub fn hook(&self, replay_rng: SimRng) -> ContinualHook<'_> {
        match self.kind {
            ClKind::Replay => ContinualHook::Replay(Box::new(ReplayHook {
                buffer: &self.buffer,
                rng: replay_rng,
            })),
            ClKind::Ewc => match &self.ewc {
                Some(e) => ContinualHook::Ewc(e.clone()),
                None => ContinualHook::None,
            },
            ClKind::Lwf => match &self.lwf {
                Some(l) => ContinualHook::Lwf(l.clone()),
                None => ContinualHook::None,
            },
            ClKind::Scratch | ClKind::Sequential => ContinualHook::None,
        }
    }

    /// End-of-experience bookkeeping against the post-aggregation model.
    #[allow(clippy::too_many_arguments)]
    pub fn end_experience(
        &mut self,
        central: &ParamVector,
        spec: &ArchitectureSpec,
        theta_mix: f64,
        data: &EncodedBatch,
        rng: &mut SimRng,
    ) -> Result<()> {
        if data.is_empty() {
            return Ok(());
        }
        match self.kind {
            ClKind::Replay => replay_update_buffer(&mut self.buffer, data, self.settings.replay_exclude_anomalies, rng),
            ClKind::Ewc => {
                let fisher = estimate_fisher(
                    central,
                    spec,
                    &data.layout,
                    theta_mix,
                    data.rows.view(),
                    self.settings.fisher_samples,
                    rng,
                )?;
                self.ewc = Some(EwcState {
                    anchor: central.clone(),
                    fisher,
                    lambda: self.settings.ewc_lambda,
                });
            }
            ClKind::Lwf => {
                self.lwf = Some(LwfState {
                    frozen: central.clone(),
                    spec: spec.clone(),
                    alpha: self.settings.lwf_alpha,
                })
            }
            ClKind::Scratch | ClKind::Sequential => {}
        }
        Ok(())
    }
}

pub enum ContinualHook<'a> {
    None,
    Replay(Box<ReplayHook<'a>>),
    Ewc(EwcState),
    Lwf(LwfState),
}

impl LossHook for ContinualHook<'_> {
    fn augment(&mut self, batch: Array2<f64>) -> Array2<f64> {
        match self {
            ContinualHook::Replay(h) => h.augment(batch),
            _ => batch,
        }
    }

    fn output_term(&mut self, inputs: ArrayView2<f64>, outputs: ArrayView2<f64>, d_out: &mut Array2<f64>) -> Result<f64> {
        match self {
            ContinualHook::Lwf(h) => h.output_term(inputs, outputs, d_out),
            _ => Ok(0.0),
        }
    }

    fn param_term(&mut self, params: &ParamVector, grad: &mut ParamVector) -> Result<f64> {
        match self {
            ContinualHook::Ewc(h) => h.param_term(params, grad),
            _ => Ok(0.0),
        }
    }
}
