//! CSV persistence of trial records and aggregates.
//!
//! Record columns, in order: `experiment,series,trial,seed,N,M` followed by every
//! [`Field`] name. Unpopulated values are empty; infinities are written as `inf`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{ExperimentReport, Field, SingularValueDump};

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v != 0.0 && !(1e-4..1e16).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub fn records_header() -> String {
    let mut cols = vec!["experiment", "series", "trial", "seed", "N", "M"];
    cols.extend(Field::ALL.iter().map(|f| f.name()));
    cols.join(",")
}

pub fn records_csv(report: &ExperimentReport) -> String {
    let mut out = records_header();
    out.push('\n');
    let experiment = report.config.experiment.name();
    for r in &report.records {
        let mut row = vec![
            experiment.to_string(),
            r.series.clone(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.m.map(|m| m.to_string()).unwrap_or_default(),
        ];
        row.extend(Field::ALL.iter().map(|f| r.get(*f).map(format_float).unwrap_or_default()));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub const SUMMARY_HEADER: &str = "experiment,series,N,field,count,median,q25,q75";

pub fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for a in &report.aggregates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            report.config.experiment,
            a.series,
            a.n,
            a.field,
            a.count,
            format_float(a.median),
            format_float(a.q25),
            format_float(a.q75)
        ));
    }
    out
}

/// `index,singular_value` rows of one dump.
pub fn singular_values_csv(dump: &SingularValueDump) -> String {
    let mut out = String::from("index,singular_value\n");
    for (i, s) in dump.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, format_float(*s)));
    }
    out
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes one header row and one row per trial record.
pub fn write_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    write_file(path, &records_csv(report))
}

pub fn write_summary_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    write_file(path, &summary_csv(report))
}
