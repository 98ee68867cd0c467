//! Result emission with byte-stable formatting: CSV for tables, JSON for
//! reports. Nothing time-dependent is ever written, so identical runs
//! produce identical files.

use bpsre_core::stats::SurvivalTable;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

pub fn survival_csv(table: &SurvivalTable) -> String {
    let mut out = String::from("n,reps,survivors,p_hat,ci_lo,ci_hi,sqrt_n_p_hat\n");
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n, r.replicates, r.survivors, r.p_hat, r.ci_lo, r.ci_hi, r.sqrt_n_p_hat
        )
        .unwrap();
    }
    out
}

/// Trajectory dump: generation, population (decimal string), is_mark.
pub fn trajectory_csv(values: &[bpsre_core::Count], marks: &[u64]) -> String {
    let mut out = String::from("generation,population,is_mark\n");
    let mut mark_iter = marks.iter().peekable();
    for (g, z) in values.iter().enumerate() {
        let is_mark = match mark_iter.peek() {
            Some(&&m) if m == g as u64 => {
                mark_iter.next();
                1
            }
            _ => 0,
        };
        writeln!(out, "{g},{z},{is_mark}").unwrap();
    }
    out
}

/// Per-path samples: path, t, value.
pub fn path_samples_csv(t_grid: &[f64], rows: &[Vec<f64>]) -> String {
    let mut out = String::from("path,t,value\n");
    for (p, row) in rows.iter().enumerate() {
        for (t, v) in t_grid.iter().zip(row) {
            writeln!(out, "{p},{t},{v}").unwrap();
        }
    }
    out
}

pub const MEANDER_QUANTILES: [f64; 9] = [0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99];

/// Marginal quantiles per grid time: t, q01..q99.
pub fn quantile_csv(t_grid: &[f64], samples: &[Vec<f64>]) -> String {
    let mut out = String::from("t,q01,q05,q10,q25,q50,q75,q90,q95,q99\n");
    for (t, sample) in t_grid.iter().zip(samples) {
        let mut sorted = sample.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        write!(out, "{t}").unwrap();
        for q in MEANDER_QUANTILES {
            let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
            write!(out, ",{}", sorted[idx]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)
}

/// Sidecar metadata path: `<out>.meta.json`.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

/// Replicate-numbered variant of an output path (replicate 0 keeps it).
pub fn replicate_path(out: &Path, replicate: u64) -> PathBuf {
    if replicate == 0 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let ext = out
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    out.with_file_name(format!("{stem}-r{replicate}{ext}"))
}
