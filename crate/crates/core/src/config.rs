//! Run configuration: JSON parsing with pointer-addressed errors, overrides,
//! canonical form and run ids.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::anomaly::InjectionSettings;
use crate::cl::{ClKind, ClSettings};
use crate::data::{CityDataset, DatasetProfile, Scenario, SynthSpec};
use crate::error::{Error, Result};
use crate::fl::{FlKind, ScaffoldSettings, YogiSettings};
use crate::nn::{ArchitectureSpec, DEFAULT_LEAKY_SLOPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArchKind {
    Shallow,
    Deep,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Shallow => "shallow",
            ArchKind::Deep => "deep",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "shallow" => Some(ArchKind::Shallow),
            "deep" => Some(ArchKind::Deep),
            _ => None,
        }
    }

    pub fn spec(self, input_dim: usize, leaky_slope: f64) -> Result<ArchitectureSpec> {
        let mut spec = match self {
            ArchKind::Shallow => ArchitectureSpec::shallow(input_dim)?,
            ArchKind::Deep => ArchitectureSpec::deep(input_dim)?,
        };
        spec.leaky_slope = leaky_slope;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Synthetic(SynthSpec),
    Csv {
        kind: CityDataset,
        path: PathBuf,
        profile: DatasetProfile,
    },
}

/// Everything a simulation needs. Counts are stored unscaled; see
/// [`RunConfig::effective`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// Departments scheduled into experiences; the first `l` are used.
    pub departments: Option<Vec<String>>,
    pub scenario: Scenario,
    pub p: f64,
    pub activity_matrix: Option<Vec<Vec<Vec<bool>>>>,
    pub arch: Vec<ArchKind>,
    pub fl: Vec<FlKind>,
    pub cl: Vec<ClKind>,
    pub t: usize,
    pub r: usize,
    pub eta: usize,
    pub rho: usize,
    pub gamma: usize,
    pub l: usize,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub theta: f64,
    pub lr: f64,
    pub leaky_slope: f64,
    pub cl_settings: ClSettings,
    pub mu: f64,
    pub yogi: YogiSettings,
    pub scaffold: ScaffoldSettings,
    pub injection: InjectionSettings,
    pub pool_size: usize,
    pub scale: usize,
    pub cumulative_eval: bool,
    pub early_stop: bool,
    /// Count the other anomaly class as negatives instead of excluding it.
    pub ap_other_as_negative: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetConfig::Synthetic(SynthSpec::default()),
            departments: None,
            scenario: Scenario::SparseAudit,
            p: 0.5,
            activity_matrix: None,
            arch: vec![ArchKind::Shallow, ArchKind::Deep],
            fl: vec![FlKind::FedAvg],
            cl: vec![ClKind::Sequential],
            t: 20,
            r: 5,
            eta: 1000,
            rho: 1000,
            gamma: 16,
            l: 5,
            m: 4,
            seeds: vec![1, 2, 3, 4, 5],
            theta: 2.0 / 3.0,
            lr: 1e-3,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            cl_settings: ClSettings::default(),
            mu: 1.2,
            yogi: YogiSettings::default(),
            scaffold: ScaffoldSettings::default(),
            injection: InjectionSettings::default(),
            pool_size: 20,
            scale: 1,
            cumulative_eval: false,
            early_stop: false,
            ap_other_as_negative: false,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Counts actually executed after applying the scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectiveCounts {
    pub t: usize,
    pub r: usize,
    pub eta: usize,
    pub rho: usize,
    pub k_global: usize,
    pub k_local: usize,
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

impl RunConfig {
    pub fn effective(&self) -> EffectiveCounts {
        let s = self.scale.max(1);
        EffectiveCounts {
            t: ceil_div(self.t, s),
            r: ceil_div(self.r, s),
            eta: ceil_div(self.eta, s),
            rho: ceil_div(self.rho, s),
            k_global: ceil_div(self.injection.k_global, s),
            k_local: ceil_div(self.injection.k_local, s),
        }
    }

    /// Full configuration as JSON, defaults included. Keys are sorted, so
    /// the serialized form is canonical.
    pub fn to_json(&self) -> Value {
        let dataset = match &self.dataset {
            DatasetConfig::Synthetic(s) => json!({
                "kind": "synthetic",
                "synthetic": {
                    "departments": s.departments,
                    "rows_per_department": s.rows_per_department,
                    "categorical": s.categorical,
                    "numerical": s.numerical,
                    "cardinality": s.cardinality,
                    "prototypes": s.prototypes,
                    "keep_prob": s.keep_prob,
                    "skew": s.skew,
                    "seed": s.seed,
                },
            }),
            DatasetConfig::Csv { kind, path, profile } => json!({
                "kind": serde_json::to_value(kind).expect("enum serializes"),
                "path": path.to_string_lossy(),
                "columns": {
                    "department": profile.department_column,
                    "categorical": profile.categorical_columns,
                    "numerical": profile.numerical_columns,
                },
                "departments": profile.departments,
            }),
        };
        json!({
            "dataset": dataset,
            "departments": self.departments,
            "scenario": self.scenario.id(),
            "p": self.p,
            "activity_matrix": self.activity_matrix,
            "arch": self.arch.iter().map(|a| a.name()).collect::<Vec<_>>(),
            "fl": self.fl.iter().map(|k| k.name()).collect::<Vec<_>>(),
            "cl": self.cl.iter().map(|k| k.name()).collect::<Vec<_>>(),
            "T": self.t,
            "R": self.r,
            "eta": self.eta,
            "rho": self.rho,
            "gamma": self.gamma,
            "L": self.l,
            "M": self.m,
            "seeds": self.seeds,
            "theta": self.theta,
            "lr": self.lr,
            "leaky_slope": self.leaky_slope,
            "lambda": self.cl_settings.ewc_lambda,
            "alpha": self.cl_settings.lwf_alpha,
            "N_B": self.cl_settings.buffer_size,
            "fisher_samples": self.cl_settings.fisher_samples,
            "replay_exclude_anomalies": self.cl_settings.replay_exclude_anomalies,
            "mu": self.mu,
            "yogi": {
                "beta1": self.yogi.beta1,
                "beta2": self.yogi.beta2,
                "tau": self.yogi.tau,
                "lr": self.yogi.lr,
            },
            "scaffold": {
                "server_lr": self.scaffold.server_lr,
                "reset_each_experience": self.scaffold.reset_each_experience,
                "pin_zero": self.scaffold.pin_zero,
            },
            "injection": {
                "k_global": self.injection.k_global,
                "k_local": self.injection.k_local,
                "f_min": self.injection.f_min,
                "max_resample": self.injection.max_resample,
                "pool_size": self.pool_size,
            },
            "scale": self.scale,
            "cumulative_eval": self.cumulative_eval,
            "early_stop": self.early_stop,
            "ap_other_class": if self.ap_other_as_negative { "negative" } else { "exclude" },
            "out_dir": self.out_dir.to_string_lossy(),
        })
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("config serializes")
    }

    /// Hash of the canonical config (output location excluded) and the
    /// crate version.
    pub fn run_id(&self) -> String {
        let mut v = self.to_json();
        if let Some(o) = v.as_object_mut() {
            o.remove("out_dir");
        }
        let mut h = Sha256::new();
        h.update(serde_json::to_string(&v).expect("config serializes").as_bytes());
        h.update(b"\n");
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

/// Typed access to one JSON object; remembers which keys were read so the
/// rest can be rejected.
struct Obj<'a> {
    map: &'a Map<String, Value>,
    pointer: String,
    seen: Vec<&'static str>,
}

impl<'a> Obj<'a> {
    fn new(value: &'a Value, pointer: &str) -> Result<Self> {
        match value {
            Value::Object(map) => Ok(Obj {
                map,
                pointer: pointer.to_string(),
                seen: Vec::new(),
            }),
            _ => Err(Error::config(pointer, "expected an object")),
        }
    }

    fn ptr(&self, key: &str) -> String {
        format!("{}/{}", self.pointer, key.replace('~', "~0").replace('/', "~1"))
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn usize(&mut self, key: &'static str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| Error::config(self.ptr(key), "expected a non-negative integer")),
        }
    }

    fn positive(&mut self, key: &'static str, default: usize) -> Result<usize> {
        let v = self.usize(key, default)?;
        if v == 0 {
            return Err(Error::config(self.ptr(key), "must be positive"));
        }
        Ok(v)
    }

    fn f64(&mut self, key: &'static str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::config(self.ptr(key), "expected a number")),
        }
    }

    fn nonneg(&mut self, key: &'static str, default: f64) -> Result<f64> {
        let v = self.f64(key, default)?;
        if v < 0.0 {
            return Err(Error::config(self.ptr(key), "must not be negative"));
        }
        Ok(v)
    }

    fn bool(&mut self, key: &'static str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| Error::config(self.ptr(key), "expected a boolean")),
        }
    }

    fn string(&mut self, key: &'static str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(Error::config(self.ptr(key), "expected a string")),
        }
    }

    fn strings(&mut self, key: &'static str) -> Result<Option<Vec<String>>> {
        let ptr = self.ptr(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| Error::config(format!("{ptr}/{i}"), "expected a string"))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(Error::config(ptr, "expected an array of strings")),
        }
    }

    /// A string or a list of strings, each mapped through `parse`.
    fn choices<T: PartialEq>(&mut self, key: &'static str, default: Vec<T>, parse: fn(&str) -> Option<T>) -> Result<Vec<T>> {
        let ptr = self.ptr(key);
        let names: Vec<(String, String)> = match self.get(key) {
            None => return Ok(default),
            Some(Value::String(s)) => vec![(ptr.clone(), s.clone())],
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_str()
                        .map(|s| (format!("{ptr}/{i}"), s.to_string()))
                        .ok_or_else(|| Error::config(format!("{ptr}/{i}"), "expected a string"))
                })
                .collect::<Result<_>>()?,
            Some(_) => return Err(Error::config(ptr, "expected a string or an array of strings")),
        };
        if names.is_empty() {
            return Err(Error::config(ptr, "must list at least one entry"));
        }
        let mut out = Vec::new();
        for (p, n) in names {
            let v = parse(&n).ok_or_else(|| Error::config(p.clone(), format!("unknown value {n:?}")))?;
            if out.contains(&v) {
                return Err(Error::config(p, format!("{n:?} listed twice")));
            }
            out.push(v);
        }
        Ok(out)
    }

    fn child(&mut self, key: &'static str) -> Result<Option<Obj<'a>>> {
        let ptr = self.ptr(key);
        match self.get(key) {
            None => Ok(None),
            Some(v) => Obj::new(v, &ptr).map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        for key in self.map.keys() {
            if !self.seen.contains(&key.as_str()) {
                return Err(Error::config(self.ptr(key), "unknown key"));
            }
        }
        Ok(())
    }
}

fn parse_dataset(mut o: Obj<'_>) -> Result<DatasetConfig> {
    let kind = o.string("kind")?.unwrap_or_else(|| "synthetic".into());
    let out = if kind == "synthetic" {
        let d = SynthSpec::default();
        let spec = match o.child("synthetic")? {
            None => d,
            Some(mut s) => {
                let spec = SynthSpec {
                    departments: s.positive("departments", d.departments)?,
                    rows_per_department: s.positive("rows_per_department", d.rows_per_department)?,
                    categorical: s.usize("categorical", d.categorical)?,
                    numerical: s.usize("numerical", d.numerical)?,
                    cardinality: s.positive("cardinality", d.cardinality)?,
                    prototypes: s.positive("prototypes", d.prototypes)?,
                    keep_prob: s.f64("keep_prob", d.keep_prob)?,
                    skew: s.f64("skew", d.skew)?,
                    seed: s.usize("seed", d.seed as usize)? as u64,
                };
                if !(0.0..=1.0).contains(&spec.keep_prob) {
                    return Err(Error::config(s.ptr("keep_prob"), "must be in [0, 1]"));
                }
                if !(spec.skew > 0.0 && spec.skew <= 1.0) {
                    return Err(Error::config(s.ptr("skew"), "must be in (0, 1]"));
                }
                if spec.categorical + spec.numerical == 0 {
                    return Err(Error::config(s.ptr("categorical"), "need at least one attribute"));
                }
                s.finish()?;
                spec
            }
        };
        DatasetConfig::Synthetic(spec)
    } else {
        let city: CityDataset = serde_json::from_value(Value::String(kind.clone()))
            .map_err(|_| Error::config(o.ptr("kind"), format!("unknown dataset kind {kind:?}")))?;
        let path = o
            .string("path")?
            .ok_or_else(|| Error::config(o.ptr("path"), "a CSV path is required for city datasets"))?;
        let mut profile = DatasetProfile::builtin(city);
        if let Some(mut c) = o.child("columns")? {
            if let Some(d) = c.string("department")? {
                profile.department_column = d;
            }
            if let Some(v) = c.strings("categorical")? {
                profile.categorical_columns = v;
            }
            if let Some(v) = c.strings("numerical")? {
                profile.numerical_columns = v;
            }
            c.finish()?;
        }
        if let Some(d) = o.strings("departments")? {
            profile.departments = d;
        }
        DatasetConfig::Csv {
            kind: city,
            path: PathBuf::from(path),
            profile,
        }
    };
    o.finish()?;
    Ok(out)
}

fn parse_matrix(v: &Value) -> Result<Vec<Vec<Vec<bool>>>> {
    let ptr = "/activity_matrix";
    let arr = |v: &'_ Value, p: &str| -> Result<Vec<Value>> {
        v.as_array().cloned().ok_or_else(|| Error::config(p, "expected an array"))
    };
    arr(v, ptr)?
        .iter()
        .enumerate()
        .map(|(c, cv)| {
            arr(cv, &format!("{ptr}/{c}"))?
                .iter()
                .enumerate()
                .map(|(t, tv)| {
                    arr(tv, &format!("{ptr}/{c}/{t}"))?
                        .iter()
                        .enumerate()
                        .map(|(d, b)| {
                            b.as_bool()
                                .ok_or_else(|| Error::config(format!("{ptr}/{c}/{t}/{d}"), "expected a boolean"))
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Validate a configuration document. Missing keys take the protocol defaults.
pub fn config_from_value(doc: &Value) -> Result<RunConfig> {
    let d = RunConfig::default();
    let mut o = Obj::new(doc, "")?;
    let dataset = match o.child("dataset")? {
        Some(ds) => parse_dataset(ds)?,
        None => d.dataset.clone(),
    };
    let departments = o.strings("departments")?;
    let scenario_id = o.usize("scenario", d.scenario.id() as usize)?;
    let scenario = u8::try_from(scenario_id)
        .ok()
        .and_then(Scenario::from_id)
        .ok_or_else(|| Error::config("/scenario", "scenario must be 1, 2 or 3"))?;
    let p = o.f64("p", d.p)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::config("/p", "activity probability must be in (0, 1]"));
    }
    let activity_matrix = o.get("activity_matrix").map(parse_matrix).transpose()?;

    let mut cl_settings = d.cl_settings;
    cl_settings.ewc_lambda = o.nonneg("lambda", cl_settings.ewc_lambda)?;
    cl_settings.lwf_alpha = o.nonneg("alpha", cl_settings.lwf_alpha)?;
    cl_settings.buffer_size = o.usize("N_B", cl_settings.buffer_size)?;
    cl_settings.fisher_samples = o.positive("fisher_samples", cl_settings.fisher_samples)?;
    cl_settings.replay_exclude_anomalies = o.bool("replay_exclude_anomalies", cl_settings.replay_exclude_anomalies)?;

    let mut yogi = d.yogi;
    if let Some(mut y) = o.child("yogi")? {
        yogi.beta1 = y.f64("beta1", yogi.beta1)?;
        yogi.beta2 = y.f64("beta2", yogi.beta2)?;
        yogi.tau = y.f64("tau", yogi.tau)?;
        yogi.lr = y.f64("lr", yogi.lr)?;
        for (k, v) in [("beta1", yogi.beta1), ("beta2", yogi.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(y.ptr(k), "must be in [0, 1)"));
            }
        }
        if yogi.tau <= 0.0 || yogi.lr <= 0.0 {
            return Err(Error::config(y.ptr(if yogi.tau <= 0.0 { "tau" } else { "lr" }), "must be positive"));
        }
        y.finish()?;
    }
    let mut scaffold = d.scaffold;
    if let Some(mut s) = o.child("scaffold")? {
        scaffold.server_lr = s.f64("server_lr", scaffold.server_lr)?;
        scaffold.reset_each_experience = s.bool("reset_each_experience", scaffold.reset_each_experience)?;
        scaffold.pin_zero = s.bool("pin_zero", scaffold.pin_zero)?;
        if scaffold.server_lr <= 0.0 {
            return Err(Error::config(s.ptr("server_lr"), "must be positive"));
        }
        s.finish()?;
    }
    let mut injection = d.injection;
    let mut pool_size = d.pool_size;
    if let Some(mut i) = o.child("injection")? {
        injection.k_global = i.usize("k_global", injection.k_global)?;
        injection.k_local = i.usize("k_local", injection.k_local)?;
        injection.f_min = i.usize("f_min", injection.f_min)?;
        injection.max_resample = i.positive("max_resample", injection.max_resample)?;
        pool_size = i.positive("pool_size", pool_size)?;
        i.finish()?;
    }

    let seeds = match o.get("seeds") {
        None => d.seeds.clone(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| v.as_u64().ok_or_else(|| Error::config(format!("/seeds/{i}"), "expected a non-negative integer")))
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(Error::config("/seeds", "expected an array of integers")),
    };
    if seeds.is_empty() {
        return Err(Error::config("/seeds", "at least one seed is required"));
    }
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(Error::config(format!("/seeds/{i}"), format!("seed {s} listed twice")));
        }
    }

    let theta = o.f64("theta", d.theta)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::config("/theta", "must be in [0, 1]"));
    }
    let lr = o.f64("lr", d.lr)?;
    if lr <= 0.0 {
        return Err(Error::config("/lr", "must be positive"));
    }
    let ap_other = o.string("ap_other_class")?.unwrap_or_else(|| "exclude".into());
    let ap_other_as_negative = match ap_other.as_str() {
        "exclude" => false,
        "negative" => true,
        _ => return Err(Error::config("/ap_other_class", "expected \"exclude\" or \"negative\"")),
    };

    let cfg = RunConfig {
        dataset,
        departments,
        scenario,
        p,
        activity_matrix,
        arch: o.choices("arch", d.arch.clone(), ArchKind::parse)?,
        fl: o.choices("fl", d.fl.clone(), FlKind::parse)?,
        cl: o.choices("cl", d.cl.clone(), ClKind::parse)?,
        t: o.positive("T", d.t)?,
        r: o.positive("R", d.r)?,
        eta: o.positive("eta", d.eta)?,
        rho: o.positive("rho", d.rho)?,
        gamma: o.positive("gamma", d.gamma)?,
        l: o.positive("L", d.l)?,
        m: o.positive("M", d.m)?,
        seeds,
        theta,
        lr,
        leaky_slope: o.nonneg("leaky_slope", d.leaky_slope)?,
        cl_settings,
        mu: o.nonneg("mu", d.mu)?,
        yogi,
        scaffold,
        injection,
        pool_size,
        scale: o.positive("scale", d.scale)?,
        cumulative_eval: o.bool("cumulative_eval", d.cumulative_eval)?,
        early_stop: o.bool("early_stop", d.early_stop)?,
        ap_other_as_negative,
        out_dir: o.string("out_dir")?.map_or(d.out_dir.clone(), PathBuf::from),
    };
    o.finish()?;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    if let Some(ds) = &cfg.departments {
        if ds.len() < cfg.l {
            return Err(Error::config("/departments", format!("{} departments listed, L = {}", ds.len(), cfg.l)));
        }
    }
    if let DatasetConfig::Synthetic(s) = &cfg.dataset {
        if cfg.departments.is_none() && s.departments < cfg.l {
            return Err(Error::config(
                "/L",
                format!("synthetic data has {} departments, L = {}", s.departments, cfg.l),
            ));
        }
    }
    if let Some(m) = &cfg.activity_matrix {
        let eff = cfg.effective();
        if m.len() != cfg.m {
            return Err(Error::config("/activity_matrix", format!("expected {} clients, got {}", cfg.m, m.len())));
        }
        for (c, rows) in m.iter().enumerate() {
            if rows.len() < eff.t {
                return Err(Error::config(
                    format!("/activity_matrix/{c}"),
                    format!("expected at least {} experiences, got {}", eff.t, rows.len()),
                ));
            }
            for (t, row) in rows.iter().enumerate() {
                if row.len() != cfg.l {
                    return Err(Error::config(
                        format!("/activity_matrix/{c}/{t}"),
                        format!("expected {} departments, got {}", cfg.l, row.len()),
                    ));
                }
            }
        }
    }
    if cfg.fl.contains(&FlKind::Scaffold) && cfg.activity_matrix.is_some() {
        // explicit schedules may idle a client, which breaks full participation
        for (c, rows) in cfg.activity_matrix.iter().flatten().enumerate() {
            for (t, row) in rows.iter().take(cfg.effective().t).enumerate() {
                if !row.iter().any(|&a| a) {
                    return Err(Error::config(
                        format!("/activity_matrix/{c}/{t}"),
                        "scaffold requires every client to be active in every experience",
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Split `KEY=VALUE`; the key is dotted (`yogi.beta1`) or a JSON pointer.
/// The value is read as JSON when it parses, else as a string.
pub fn parse_override(s: &str) -> Result<(Vec<String>, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config("", format!("override {s:?} is not KEY=VALUE")))?;
    let k = k.trim();
    let path: Vec<String> = if let Some(p) = k.strip_prefix('/') {
        p.split('/').map(|seg| seg.replace("~1", "/").replace("~0", "~")).collect()
    } else {
        k.split('.').map(str::to_string).collect()
    };
    if path.iter().any(String::is_empty) {
        return Err(Error::config("", format!("override key {k:?} is empty")));
    }
    let value = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((path, value))
}

pub fn apply_override(doc: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut cur = doc;
    let mut ptr = String::new();
    for (i, key) in path.iter().enumerate() {
        ptr.push('/');
        ptr.push_str(key);
        let map = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(ptr.clone(), "cannot set a key inside a non-object"))?;
        if i + 1 == path.len() {
            map.insert(key.clone(), value);
            return Ok(());
        }
        cur = map.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Parse a document string and apply overrides in order.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::config("", format!("invalid JSON: {e}")))?;
    for o in overrides {
        let (path, value) = parse_override(o)?;
        apply_override(&mut doc, &path, value)?;
    }
    config_from_value(&doc)
}

/// `path = None` starts from an empty document (all defaults).
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => "{}".to_string(),
    };
    parse_config_str(&text, overrides)
}
