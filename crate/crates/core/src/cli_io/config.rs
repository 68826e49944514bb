//! Flat `key = value` configuration files.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::experiments::{Experiment, ExperimentConfig, SpectrumSpec};
use crate::features::{AnalyticKernel, FeatureLaw};

/// Every accepted key, in serialization order.
pub const KEYS: [&str; 18] = [
    "experiment",
    "spectra",
    "laws",
    "eta",
    "n_grid",
    "trials",
    "n_test",
    "sigma",
    "master_seed",
    "kernel",
    "bandwidth",
    "input_domain",
    "include_anchors",
    "m_ratios",
    "m_full_ratio",
    "m",
    "dump_singular_values",
    "out",
];

/// A value that overrides the file, with a label for error messages (`flag --trials`).
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: String,
    pub source: String,
}

impl Override {
    pub fn flag(key: &str, value: &str) -> Self {
        let key = key.replace('-', "_");
        Override {
            source: format!("flag --{key}"),
            key,
            value: value.to_string(),
        }
    }
}

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    location: String,
}

fn config_error(location: &str, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        location: location.to_string(),
        key: key.to_string(),
        message: message.into(),
    }
}

/// Parses file contents, applies `overrides` on top, then validates.
///
/// `experiment` (usually the subcommand) takes precedence over an `experiment` key in the file.
pub fn parse_config(contents: &str, overrides: &[Override], experiment: Option<Experiment>) -> Result<ExperimentConfig> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in contents.lines().enumerate() {
        let location = format!("line {}", i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_error(&location, line, "expected `key = value`"));
        };
        entries.push(Entry {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            location,
        });
    }
    for o in overrides {
        entries.push(Entry {
            key: o.key.clone(),
            value: o.value.clone(),
            location: o.source.clone(),
        });
    }
    for e in &entries {
        if !KEYS.contains(&e.key.as_str()) {
            return Err(config_error(&e.location, &e.key, "unknown key"));
        }
    }
    // last occurrence wins
    let find = |key: &str| entries.iter().rev().find(|e| e.key == key);

    let kind = match (experiment, find("experiment")) {
        (Some(k), _) => k,
        (None, Some(e)) => e.value.parse().map_err(|err: Error| config_error(&e.location, &e.key, err.to_string()))?,
        (None, None) => return Err(config_error("defaults", "experiment", "no experiment given")),
    };
    let mut cfg = ExperimentConfig::defaults(kind);
    let mut bandwidth = 1.0;
    let mut kernel_name = cfg.kernel.name().to_string();
    let mut location_of = std::collections::HashMap::new();

    for key in KEYS {
        let Some(e) = find(key) else { continue };
        location_of.insert(key, e.location.clone());
        let bad = |msg: String| config_error(&e.location, key, msg);
        let v = e.value.as_str();
        match key {
            "experiment" => {}
            "spectra" => cfg.spectra = list(v, |s| s.parse::<SpectrumSpec>().map_err(|x| x.to_string())).map_err(bad)?,
            "laws" => cfg.laws = list(v, |s| s.parse::<FeatureLaw>().map_err(|x| x.to_string())).map_err(bad)?,
            "eta" => cfg.eta = number(v).map_err(bad)?,
            "n_grid" => cfg.n_grid = list(v, integer).map_err(bad)?,
            "trials" => cfg.trials = integer(v).map_err(bad)?,
            "n_test" => cfg.n_test = integer(v).map_err(bad)?,
            "sigma" => cfg.sigma = number(v).map_err(bad)?,
            "master_seed" => cfg.master_seed = v.parse().map_err(|_| bad(format!("`{v}` is not an unsigned integer")))?,
            "kernel" => kernel_name = v.to_string(),
            "bandwidth" => bandwidth = number(v).map_err(bad)?,
            "input_domain" => cfg.input_domain = v.parse().map_err(|x: Error| bad(x.to_string()))?,
            "include_anchors" => cfg.include_anchors = boolean(v).map_err(bad)?,
            "m_ratios" => cfg.m_ratios = list(v, number).map_err(bad)?,
            "m_full_ratio" => cfg.m_full_ratio = number(v).map_err(bad)?,
            "m" => cfg.m = integer(v).map_err(bad)?,
            "dump_singular_values" => cfg.dump_singular_values = boolean(v).map_err(bad)?,
            "out" => cfg.out = Some(PathBuf::from(v)),
            _ => unreachable!(),
        }
    }
    cfg.kernel = match kernel_name.as_str() {
        "laplacian" => AnalyticKernel::Laplacian,
        "gaussian_rbf" => AnalyticKernel::GaussianRbf { bandwidth },
        "ntk" => AnalyticKernel::Ntk,
        other => {
            let loc = location_of.get("kernel").cloned().unwrap_or_default();
            return Err(config_error(&loc, "kernel", format!("unknown kernel `{other}`")));
        }
    };
    if cfg.kernel == AnalyticKernel::Ntk && find("input_domain").is_none() {
        cfg.input_domain = crate::features::InputDomain::UnitDisk2d;
    }
    if let Some((key, message)) = cfg.violation() {
        let loc = location_of.get(key).cloned().unwrap_or_else(|| "defaults".into());
        return Err(config_error(&loc, key, message));
    }
    Ok(cfg)
}

fn number(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("`{v}` is not a number"))
}

fn integer(v: &str) -> std::result::Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn list<T>(v: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(item).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes every key; `parse_config(&serialize(c), &[], None)` reproduces `c`.
pub fn serialize(cfg: &ExperimentConfig) -> String {
    let bandwidth = match cfg.kernel {
        AnalyticKernel::GaussianRbf { bandwidth } => bandwidth,
        _ => 1.0,
    };
    let mut out = String::new();
    let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
    put("experiment", cfg.experiment.to_string());
    put("spectra", join(&cfg.spectra));
    put("laws", join(&cfg.laws));
    put("eta", cfg.eta.to_string());
    put("n_grid", join(&cfg.n_grid));
    put("trials", cfg.trials.to_string());
    put("n_test", cfg.n_test.to_string());
    put("sigma", cfg.sigma.to_string());
    put("master_seed", cfg.master_seed.to_string());
    put("kernel", cfg.kernel.name().to_string());
    put("bandwidth", bandwidth.to_string());
    put("input_domain", cfg.input_domain.to_string());
    put("include_anchors", cfg.include_anchors.to_string());
    put("m_ratios", join(&cfg.m_ratios));
    put("m_full_ratio", cfg.m_full_ratio.to_string());
    put("m", cfg.m.to_string());
    put("dump_singular_values", cfg.dump_singular_values.to_string());
    if let Some(p) = &cfg.out {
        put("out", p.display().to_string());
    }
    out
}
