//! Experiment configuration: JSON file merged under command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use qprobe::channels::{loss_exponent_from_r, Channel, ChannelKind, NoiseParams};
use qprobe::optimize::OptimizeOptions;
use qprobe::ProbeFamily;

use crate::error::{config_err, CliError, CliResult};

/// Every setting a subcommand may read. Unset fields take per-command
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand name (file configs only; must match the invoked command).
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    /// Channel kind: collective, individual or loss.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    /// Collective dephasing exponent Γ⁰.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    /// Collective relaxation exponent Γ⁻.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_minus: Option<f64>,
    /// Collective excitation exponent Γ⁺.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_plus: Option<f64>,
    /// Individual dephasing exponent γ⁰.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub igamma0: Option<f64>,
    /// Individual relaxation exponent γ⁻.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub igamma_minus: Option<f64>,
    /// Individual excitation exponent γ⁺.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub igamma_plus: Option<f64>,
    /// Loss exponent of arm 1.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss1: Option<f64>,
    /// Loss exponent of arm 2.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss2: Option<f64>,
    /// Arm-1 loss as r₁ = N(e^γ₁ - 1) (alternative to --loss1).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    /// Arm-2 loss as r₂ = N(e^γ₂ - 1) (alternative to --loss2).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    /// Number of particles.
    #[arg(long = "N")]
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Particle numbers for sweeps over N, comma-separated.
    #[arg(long = "Ns")]
    #[serde(default, rename = "Ns", skip_serializing_if = "Option::is_none")]
    pub ns: Option<String>,
    /// Sweep grid: `a,b,c`, `lin:lo:hi:count` or `log:lo:hi:count`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    /// Probe family (repeatable): noon, cosine, phase_uniform,
    /// holland_burnett, spin_coherent, trident:p, quad:p:q, gaussian:K.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub family: Vec<String>,
    /// Seed for optimizer restarts.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output CSV path; the sidecar is written next to it with a `.json`
    /// extension. Without it the CSV goes to stdout.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Optimizer restarts.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    /// Optimizer iteration cap per start.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// Optimizer relative tolerance.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Ground-state grid points.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// Canonical-phase integration grid.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_grid: Option<usize>,
    /// Phase θ for the S^x measurement.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Total particle budget νN for clustering.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    /// α source for clustering: numeric, box or heisenberg.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_source: Option<String>,
    /// Cluster sizes for thresholds, comma-separated.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<String>,
    /// Component threshold for menorah scans.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Skip the optimized curve in `families`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_optimized: bool,
}

macro_rules! overlay {
    ($base:expr, $over:expr, [$($f:ident),*]) => {
        $( if $over.$f.is_some() { $base.$f = $over.$f.clone(); } )*
    };
}

impl ExperimentConfig {
    /// Reads a JSON configuration file.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `self` with every flag set in `flags` taking precedence.
    pub fn overlaid(mut self, flags: &ExperimentConfig) -> Self {
        overlay!(self, flags, [
            channel, gamma0, gamma_minus, gamma_plus, igamma0, igamma_minus, igamma_plus, loss1, loss2, r1, r2,
            n, ns, grid, seed, out, threads, restarts, max_iters, tol, grid_points, phase_grid, theta, budget, alpha_source,
            k, threshold
        ]);
        if !flags.family.is_empty() {
            self.family = flags.family.clone();
        }
        self.no_optimized |= flags.no_optimized;
        self
    }

    pub fn require_n(&self) -> CliResult<usize> {
        match self.n {
            Some(0) => config_err("--N must be positive"),
            Some(n) => Ok(n),
            None => config_err("--N is required"),
        }
    }

    pub fn kind(&self) -> CliResult<ChannelKind> {
        match &self.channel {
            Some(s) => s.parse().map_err(|e: qprobe::Error| CliError::Config(e.to_string())),
            None if self.loss1.is_some() || self.loss2.is_some() || self.r1.is_some() || self.r2.is_some() => {
                Ok(ChannelKind::Loss)
            }
            None if self.igamma0.is_some() || self.igamma_minus.is_some() || self.igamma_plus.is_some() => {
                Ok(ChannelKind::Individual)
            }
            None => Ok(ChannelKind::Collective),
        }
    }

    /// Noise exponents, converting `r₁,₂` for `n` particles.
    pub fn noise(&self, n: usize) -> CliResult<NoiseParams> {
        let loss = |g: Option<f64>, r: Option<f64>, name: &str| -> CliResult<f64> {
            match (g, r) {
                (Some(_), Some(_)) => config_err(format!("give either --loss{name} or --r{name}, not both")),
                (Some(g), None) => Ok(g),
                (None, Some(r)) => Ok(loss_exponent_from_r(r, n)?),
                (None, None) => Ok(0.0),
            }
        };
        let p = NoiseParams {
            gamma0: self.gamma0.unwrap_or(0.0),
            gamma_minus: self.gamma_minus.unwrap_or(0.0),
            gamma_plus: self.gamma_plus.unwrap_or(0.0),
            igamma0: self.igamma0.unwrap_or(0.0),
            igamma_minus: self.igamma_minus.unwrap_or(0.0),
            igamma_plus: self.igamma_plus.unwrap_or(0.0),
            loss1: loss(self.loss1, self.r1, "1")?,
            loss2: loss(self.loss2, self.r2, "2")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn channel_for(&self, n: usize) -> CliResult<Channel> {
        Ok(Channel::new(self.kind()?, self.noise(n)?)?)
    }

    pub fn families(&self) -> CliResult<Vec<ProbeFamily>> {
        self.family
            .iter()
            .map(|s| s.parse().map_err(|e: qprobe::Error| CliError::Config(e.to_string())))
            .collect()
    }

    pub fn optimize_options(&self) -> CliResult<OptimizeOptions> {
        let mut o = OptimizeOptions::default();
        if let Some(r) = self.restarts {
            if r == 0 {
                return config_err("--restarts must be positive");
            }
            o.restarts = r;
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t < 1.0) {
                return config_err("--tol must lie in (0, 1)");
            }
            o.tol = t;
        }
        if let Some(m) = self.max_iters {
            if m == 0 {
                return config_err("--max-iters must be positive");
            }
            o.max_iters = m;
        }
        o.seed = self.seed.unwrap_or(0);
        Ok(o)
    }

    /// Parsed `--grid`, required to be non-empty and ascending.
    pub fn grid(&self) -> CliResult<Option<Vec<f64>>> {
        self.grid.as_deref().map(parse_grid).transpose()
    }

    pub fn ns(&self) -> CliResult<Option<Vec<usize>>> {
        self.ns.as_deref().map(|s| parse_list(s, "--Ns")).transpose()
    }

    pub fn ks(&self) -> CliResult<Option<Vec<usize>>> {
        self.k.as_deref().map(|s| parse_list(s, "--k")).transpose()
    }
}

fn parse_list(s: &str, flag: &str) -> CliResult<Vec<usize>> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| CliError::Config(format!("{flag} `{t}`: {e}"))))
        .collect::<CliResult<Vec<_>>>()?;
    if v.is_empty() || v.contains(&0) {
        return config_err(format!("{flag} must list positive integers"));
    }
    Ok(v)
}

/// Parses `a,b,c`, `lin:lo:hi:count` or `log:lo:hi:count`.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let num = |t: &str| -> CliResult<f64> {
        t.trim().parse::<f64>().map_err(|e| CliError::Config(format!("grid value `{t}`: {e}")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [kind @ ("lin" | "log"), lo, hi, count] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let count: usize = count
                .trim()
                .parse()
                .map_err(|e| CliError::Config(format!("grid count `{count}`: {e}")))?;
            if count < 2 {
                return config_err("grid count must be at least 2");
            }
            if *kind == "log" && !(lo > 0.0 && hi > 0.0) {
                return config_err("log grid bounds must be positive");
            }
            (0..count)
                .map(|i| {
                    let t = i as f64 / (count - 1) as f64;
                    if *kind == "lin" {
                        lo + t * (hi - lo)
                    } else {
                        lo * (hi / lo).powf(t)
                    }
                })
                .collect()
        }
        [list] => list.split(',').map(num).collect::<CliResult<Vec<f64>>>()?,
        _ => return config_err(format!("cannot parse grid `{s}`")),
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return config_err("grid must be non-empty and finite");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return config_err("grid must be strictly ascending");
    }
    Ok(grid)
}
