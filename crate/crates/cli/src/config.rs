//! Experiment configuration file and flag-value parsing.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use transitory::{ArrivalKind, ArrivalModel, ServiceKind, ServiceModel};

use crate::CliError;

/// A number or a list of numbers.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arrival: Option<ArrivalKind>,
    pub service: Option<ServiceKind>,
    pub n_list: Option<Vec<usize>>,
    pub t: Option<OneOrMany>,
    pub thresholds: Option<OneOrMany>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub grid_m: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            CliError::Validation(format!("config {}: at `{}`: {}", path.display(), e.path(), e.inner()))
        })
    }

    pub fn service_model(&self) -> Result<Option<ServiceModel>, CliError> {
        self.service
            .clone()
            .map(|k| ServiceModel::from_kind(k).map_err(CliError::from))
            .transpose()
    }

    pub fn arrival_model(&self) -> Result<Option<ArrivalModel>, CliError> {
        self.arrival
            .clone()
            .map(|k| ArrivalModel::new(k).map_err(CliError::from))
            .transpose()
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// `a,b,c` or `lo:hi:count` (inclusive, evenly spaced, rounded to 1e-12).
pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range `{s}` must look like lo:hi:count"));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| format!("bad number `{}`", parts[0]))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| format!("bad number `{}`", parts[1]))?;
        let count: usize = parts[2].trim().parse().map_err(|_| format!("bad count `{}`", parts[2]))?;
        return match count {
            0 => Err("range count must be positive".into()),
            1 => Ok(vec![lo]),
            _ => Ok((0..count)
                .map(|i| round12(lo + (hi - lo) * i as f64 / (count - 1) as f64))
                .collect()),
        };
    }
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>()
                .map_err(|_| format!("bad number `{p}`"))
                .and_then(|v| if v.is_nan() { Err("NaN is not allowed".into()) } else { Ok(v) })
        })
        .collect()
}

pub fn parse_counts(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad count `{p}`")))
        .collect()
}

fn params(body: &str) -> Result<Vec<(String, f64)>, String> {
    body.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| format!("expected key=value, got `{p}`"))?;
            let v: f64 = v.trim().parse().map_err(|_| format!("bad number in `{p}`"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn take(ps: &[(String, f64)], key: &str, spec: &str) -> Result<f64, String> {
    ps.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| format!("`{spec}` is missing `{key}`"))
}

fn only_keys(ps: &[(String, f64)], allowed: &[&str], spec: &str) -> Result<(), String> {
    match ps.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(format!("unknown parameter `{k}` in `{spec}`")),
        None => Ok(()),
    }
}

/// Service law from a flag: JSON (`{"kind": ...}`) or a compact form such as
/// `exponential:rate=0.8`, `exponential:mean=1.25`, `deterministic:value=1`,
/// `gamma:shape=2,scale=0.5`, `empirical:0.5@0.8,3@0.2` (atom@weight).
pub fn parse_service(spec: &str) -> Result<ServiceModel, String> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        let kind: ServiceKind = serde_json::from_str(spec).map_err(|e| format!("service JSON: {e}"))?;
        return ServiceModel::from_kind(kind).map_err(|e| e.to_string());
    }
    let (name, body) = spec.split_once(':').unwrap_or((spec, ""));
    let model = match name {
        "exponential" | "exp" => {
            let ps = params(body)?;
            only_keys(&ps, &["rate", "mean"], spec)?;
            match (take(&ps, "rate", spec), take(&ps, "mean", spec)) {
                (Ok(r), Err(_)) => ServiceModel::exponential(r),
                (Err(_), Ok(m)) => ServiceModel::exponential_mean(m),
                _ => return Err(format!("`{spec}` needs exactly one of rate or mean")),
            }
        }
        "deterministic" => {
            let ps = params(body)?;
            only_keys(&ps, &["value"], spec)?;
            ServiceModel::deterministic(take(&ps, "value", spec)?)
        }
        "gamma" => {
            let ps = params(body)?;
            only_keys(&ps, &["shape", "scale"], spec)?;
            ServiceModel::gamma(take(&ps, "shape", spec)?, take(&ps, "scale", spec)?)
        }
        "empirical" => {
            let pairs = body
                .split(',')
                .map(|p| {
                    let (x, w) = p.split_once('@').ok_or_else(|| format!("expected atom@weight, got `{p}`"))?;
                    let x: f64 = x.trim().parse().map_err(|_| format!("bad atom `{x}`"))?;
                    let w: f64 = w.trim().parse().map_err(|_| format!("bad weight `{w}`"))?;
                    Ok((x, w))
                })
                .collect::<Result<Vec<_>, String>>()?;
            ServiceModel::empirical(&pairs)
        }
        other => return Err(format!("unknown service law `{other}`")),
    };
    model.map_err(|e| e.to_string())
}

/// Arrival law from a flag: JSON, `uniform`, `power:exponent=2` or
/// `exponential:rate=3`.
pub fn parse_arrival(spec: &str) -> Result<ArrivalModel, String> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        let kind: ArrivalKind = serde_json::from_str(spec).map_err(|e| format!("arrival JSON: {e}"))?;
        return ArrivalModel::new(kind).map_err(|e| e.to_string());
    }
    let (name, body) = spec.split_once(':').unwrap_or((spec, ""));
    let ps = params(body)?;
    let kind = match name {
        "uniform" => {
            only_keys(&ps, &[], spec)?;
            ArrivalKind::Uniform
        }
        "power" => {
            only_keys(&ps, &["exponent"], spec)?;
            ArrivalKind::Power {
                exponent: take(&ps, "exponent", spec)?,
            }
        }
        "exponential" | "exp" => {
            only_keys(&ps, &["rate"], spec)?;
            ArrivalKind::Exponential {
                rate: take(&ps, "rate", spec)?,
            }
        }
        other => return Err(format!("unknown arrival law `{other}`")),
    };
    ArrivalModel::new(kind).map_err(|e| e.to_string())
}
