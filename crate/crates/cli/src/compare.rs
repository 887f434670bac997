//! Joins curve CSVs on their probe axis.

use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub name: String,
    pub probes: Vec<u64>,
    pub qloss: Vec<f64>,
}

pub fn read_curve(path: &Path) -> CliResult<Curve> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read curve {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{} has no {name} column", path.display())))
    };
    let (n_col, q_col) = (col("N")?, col("qloss")?);
    let mut probes = Vec::new();
    let mut qloss = Vec::new();
    for row in reader.records() {
        let row = row?;
        let parse_err = |what: &str| CliError::Config(format!("{}: bad {what} value", path.display()));
        probes.push(row[n_col].trim().parse().map_err(|_| parse_err("N"))?);
        qloss.push(row[q_col].trim().parse().map_err(|_| parse_err("qloss"))?);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    Ok(Curve { name, probes, qloss })
}

/// Column suffixes: file stems, made unique by appending the run index.
fn unique_names(curves: &[Curve]) -> Vec<String> {
    curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if curves.iter().filter(|o| o.name == c.name).count() > 1 {
                format!("{}_{i}", c.name)
            } else {
                c.name.clone()
            }
        })
        .collect()
}

/// Joined table with columns `N`, then `qloss_<run>` for every run,
/// `ratio_<run>` (Qloss over the first run's Qloss) and `bound_ratio_<run>`
/// (Qloss over `coefficient / N`).
pub fn compare_curves(curves: &[Curve], coefficient: f64) -> CliResult<Vec<u8>> {
    let first = curves
        .first()
        .ok_or_else(|| CliError::Config("nothing to compare".into()))?;
    if !(coefficient > 0.0) {
        return Err(CliError::Config("bound coefficient must be positive".into()));
    }
    for c in &curves[1..] {
        if c.probes != first.probes {
            return Err(CliError::Config(format!(
                "alignment error: {} and {} have different probe axes",
                first.name, c.name
            )));
        }
    }
    let names = unique_names(curves);
    let mut header = vec!["N".to_string()];
    for prefix in ["qloss", "ratio", "bound_ratio"] {
        header.extend(names.iter().map(|n| format!("{prefix}_{n}")));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for (k, &n) in first.probes.iter().enumerate() {
        let mut row = vec![n.to_string()];
        row.extend(curves.iter().map(|c| c.qloss[k].to_string()));
        row.extend(curves.iter().map(|c| (c.qloss[k] / first.qloss[k]).to_string()));
        row.extend(curves.iter().map(|c| (c.qloss[k] * n as f64 / coefficient).to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

pub fn compare_runs(paths: &[PathBuf], coefficient: f64) -> CliResult<Vec<u8>> {
    let curves = paths.iter().map(|p| read_curve(p)).collect::<CliResult<Vec<_>>>()?;
    compare_curves(&curves, coefficient)
}
