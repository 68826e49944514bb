//! Command-line front end, configuration files, CSV output and SVG plots.

pub mod config;
pub mod csv;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{run, Experiment, ExperimentConfig};

pub use config::{parse_config, serialize, Override};
pub use csv::{format_float, write_csv};
pub use plot::render_plot;

pub const SEED_ENV: &str = "OVERFIT_LAB_SEED";

pub const USAGE: &str = "\
usage: overfit-lab <subcommand> [--config FILE] [--key value ...] --out PATH

subcommands:
  condnum          condition number of K against its predicted scale
  learning-curve   test error, bias and variance of the ridgeless interpolant
  smin-study       smallest singular value under several feature laws
  kernel-interp    interpolation with an analytic kernel
  truncation       variance of truncated kernels against the full kernel
  spectrum-dump    eigenvalues of the configured spectra

Any config key can be given as a flag, e.g. --trials 5 or --n-grid 64,128.
The OVERFIT_LAB_SEED environment variable overrides master_seed unless
--master-seed is given.
";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Subcommand {
    Run(Experiment),
    SpectrumDump,
}

impl Subcommand {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spectrum-dump" => Some(Subcommand::SpectrumDump),
            "condnum" | "learning-curve" | "smin-study" | "kernel-interp" | "truncation" => {
                s.parse().ok().map(Subcommand::Run)
            }
            _ => None,
        }
    }
}

/// A parsed command line, before the config file is read.
#[derive(Debug, Clone, PartialEq)]
pub struct CliInvocation {
    pub subcommand: Subcommand,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<Override>,
}

fn usage_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        location: "command line".into(),
        key: key.into(),
        message: message.into(),
    }
}

impl CliInvocation {
    /// Parses the arguments after the program name. Returns `None` for `--help`.
    pub fn parse(args: &[String]) -> Result<Option<Self>> {
        let Some(first) = args.first() else {
            return Err(usage_error("subcommand", "missing subcommand"));
        };
        if first == "--help" || first == "-h" || first == "help" {
            return Ok(None);
        }
        let subcommand =
            Subcommand::parse(first).ok_or_else(|| usage_error("subcommand", format!("unknown subcommand `{first}`")))?;
        let mut config_path = None;
        let mut overrides = Vec::new();
        let mut rest = args[1..].iter();
        while let Some(arg) = rest.next() {
            if arg == "--help" || arg == "-h" {
                return Ok(None);
            }
            let Some(flag) = arg.strip_prefix("--") else {
                return Err(usage_error(arg, "unexpected positional argument"));
            };
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = rest
                        .next()
                        .ok_or_else(|| usage_error(flag, format!("flag --{flag} needs a value")))?;
                    (flag.to_string(), v.clone())
                }
            };
            if key == "config" {
                config_path = Some(PathBuf::from(value));
            } else {
                let o = Override::flag(&key, &value);
                if !config::KEYS.contains(&o.key.as_str()) || o.key == "experiment" {
                    return Err(usage_error(&o.key, format!("unknown flag --{key}")));
                }
                overrides.push(o);
            }
        }
        Ok(Some(CliInvocation {
            subcommand,
            config_path,
            overrides,
        }))
    }

    /// Reads the config file (if any) and applies flags, then the seed variable.
    pub fn config(&self, env_seed: Option<&str>) -> Result<ExperimentConfig> {
        let contents = match &self.config_path {
            Some(p) => fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?,
            None => String::new(),
        };
        let mut overrides = Vec::new();
        if let Some(seed) = env_seed {
            overrides.push(Override {
                key: "master_seed".into(),
                value: seed.trim().to_string(),
                source: format!("environment {SEED_ENV}"),
            });
        }
        overrides.extend(self.overrides.iter().cloned());
        let experiment = match self.subcommand {
            Subcommand::Run(e) => e,
            Subcommand::SpectrumDump => Experiment::Condnum,
        };
        parse_config(&contents, &overrides, Some(experiment))
    }
}

/// `dir/stem.suffix` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Runs one invocation and returns the files it wrote.
pub fn execute(inv: &CliInvocation, env_seed: Option<&str>) -> Result<Vec<PathBuf>> {
    let cfg = inv.config(env_seed)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| usage_error("out", "an output path is required (--out PATH)"))?;
    let mut written = Vec::new();
    match inv.subcommand {
        Subcommand::SpectrumDump => {
            let mut text = String::from("spectrum,k,lambda_k\n");
            let mut curves = Vec::new();
            for spec in &cfg.spectra {
                let s = spec.generate(cfg.m)?;
                let mut points = Vec::new();
                for (i, l) in s.eigenvalues().iter().enumerate() {
                    text.push_str(&format!("{spec},{},{}\n", i + 1, format_float(*l)));
                    points.push(plot::CurvePoint {
                        x: (i + 1) as f64,
                        y: *l,
                        lo: *l,
                        hi: *l,
                    });
                }
                curves.push(plot::Curve {
                    name: spec.to_string(),
                    points,
                });
            }
            csv::write_file(&out, &text)?;
            written.push(out.clone());
            let svg = sibling(&out, "svg");
            let chart = plot::Chart {
                title: "eigenvalues".into(),
                x_label: "k".into(),
                y_label: "lambda_k".into(),
                log_x: true,
                log_y: true,
                curves,
            };
            csv::write_file(&svg, &plot::chart_svg(&chart))?;
            written.push(svg);
        }
        Subcommand::Run(_) => {
            let report = run(&cfg)?;
            write_csv(&report, &out)?;
            written.push(out.clone());
            let summary = sibling(&out, "summary.csv");
            csv::write_summary_csv(&report, &summary)?;
            written.push(summary);
            let echo = sibling(&out, "config");
            csv::write_file(&echo, &serialize(&cfg))?;
            written.push(echo);
            if !report.records.is_empty() {
                let (field, log_x, log_y) = plot::default_plot(&report);
                let svg = sibling(&out, "svg");
                render_plot(&report, &svg, "N", field, log_x, log_y)?;
                written.push(svg);
            }
            for dump in &report.singular_values {
                let p = sibling(&out, &format!("sv_{}_N{}.csv", sanitize(&dump.series), dump.n));
                csv::write_file(&p, &csv::singular_values_csv(dump))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Full front end: parses `args`, runs, reports on stdout/stderr, returns the exit status.
pub fn main_with(args: &[String], env_seed: Option<&str>) -> i32 {
    let inv = match CliInvocation::parse(args) {
        Ok(Some(inv)) => inv,
        Ok(None) => {
            print!("{USAGE}");
            return 0;
        }
        Err(e) => {
            eprintln!("error: {e}\n\n{USAGE}");
            return e.exit_code();
        }
    };
    match execute(&inv, env_seed) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
