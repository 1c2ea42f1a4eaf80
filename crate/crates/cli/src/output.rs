//! CSV tables with a JSON sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use qprobe::channels::{ChannelKind, NoiseParams};

use crate::config::ExperimentConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_prefix(prefix: &[&str], header: &[&str]) -> Self {
        Table {
            header: prefix.iter().chain(header).map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to(&self, w: impl Write) -> CliResult<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r.iter().map(Cell::render))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Column names of [`noise_cells`].
pub const NOISE_HEADER: [&str; 14] = [
    "N",
    "channel",
    "gamma0",
    "gamma_minus",
    "gamma_plus",
    "igamma0",
    "igamma_minus",
    "igamma_plus",
    "loss1",
    "loss2",
    "mu0",
    "r",
    "r1",
    "r2",
];

/// `N`, every exponent and the derived masses `μ₀`, `r`, `r₁`, `r₂`.
pub fn noise_cells(kind: ChannelKind, p: &NoiseParams, n: usize) -> Vec<Cell> {
    let nf = n as f64;
    vec![
        n.into(),
        kind.name().into(),
        p.gamma0.into(),
        p.gamma_minus.into(),
        p.gamma_plus.into(),
        p.igamma0.into(),
        p.igamma_minus.into(),
        p.igamma_plus.into(),
        p.loss1.into(),
        p.loss2.into(),
        p.mu0(n).into(),
        (nf * p.individual_total().exp_m1()).into(),
        (nf * p.loss1.exp_m1()).into(),
        (nf * p.loss2.exp_m1()).into(),
    ]
}

#[derive(Debug, Serialize)]
struct Sidecar<'a, S: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    converged: bool,
    config: &'a ExperimentConfig,
    summary: &'a S,
}

/// `path` with its extension replaced by `json` (appended if it is `json`).
pub fn sidecar_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    } else {
        path.with_extension("json")
    }
}

/// Writes the CSV (to `--out` or stdout) and, with `--out`, its sidecar.
pub fn emit<S: Serialize>(
    command: &str,
    cfg: &ExperimentConfig,
    table: &Table,
    converged: bool,
    summary: &S,
) -> CliResult<()> {
    match &cfg.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut buf = Vec::new();
            table.write_to(&mut buf)?;
            std::fs::write(path, buf)?;
            let side = Sidecar {
                tool: "qprobe",
                version: env!("CARGO_PKG_VERSION"),
                command,
                seed: cfg.seed.unwrap_or(0),
                converged,
                config: cfg,
                summary,
            };
            let mut text = serde_json::to_string_pretty(&side).map_err(std::io::Error::other)?;
            text.push('\n');
            std::fs::write(sidecar_path(path), text)?;
        }
        None => {
            let stdout = std::io::stdout();
            table.write_to(stdout.lock())?;
        }
    }
    Ok(())
}
