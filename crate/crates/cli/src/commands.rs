//! Subcommand implementations. Each returns its table, convergence flag and
//! sidecar summary.

use serde::Serialize;
use serde_json::{json, Value};

use qprobe::channels::{loss_rate_conversion, Channel, ChannelKind};
use qprobe::fisher::{cfi_canonical_phase, cfi_sx, qfi};
use qprobe::optimize::{entanglement_threshold_with, family_error_curves, menorah_scan_with_threshold, optimize_probe};
use qprobe::semiclassical::{
    alpha_samples, build_potential, cluster_optimize, ground_state, precision_bound_with_grid, variational_profile,
    AlphaSource,
};
use qprobe::{make_probe, ProbeFamily};

use crate::config::{parse_grid, ExperimentConfig};
use crate::error::{config_err, CliResult};
use crate::output::{noise_cells, Cell, Table, NOISE_HEADER};

pub struct Outcome {
    pub table: Table,
    pub converged: bool,
    pub summary: Value,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn m_of(i: usize, n: usize) -> f64 {
    i as f64 - n as f64 / 2.0
}

pub fn qfi_cmd(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let n = cfg.require_n()?;
    let ch = cfg.channel_for(n)?;
    let fams = cfg.families()?;
    if fams.is_empty() {
        return config_err("--family is required");
    }
    let grid = cfg.phase_grid.unwrap_or(16 * (n + 1)).max(8 * (n + 1));
    let theta = cfg.theta.unwrap_or(std::f64::consts::FRAC_PI_2);
    let mut t = Table::with_prefix(&NOISE_HEADER, &["family", "qfi", "inv_f", "quantum", "cfi_canonical", "cfi_sx"]);
    for f in &fams {
        let state = ch.apply(&make_probe(f, n)?)?;
        let q = qfi(&state)?.qfi;
        let mut row = noise_cells(ch.kind, &ch.params, n);
        row.extend([
            Cell::from(f.name()),
            q.into(),
            (1.0 / q).into(),
            ((n * n) as f64 * (1.0 / q - ch.params.gamma0)).into(),
            cfi_canonical_phase(&state, grid)?.into(),
            cfi_sx(&state, theta)?.into(),
        ]);
        t.push(row);
    }
    Ok(Outcome { table: t, converged: true, summary: json!({ "phase_grid": grid, "theta": theta }) })
}

pub fn optimize_cmd(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let n = cfg.require_n()?;
    let ch = cfg.channel_for(n)?;
    let r = optimize_probe(&ch, n, &cfg.optimize_options()?)?;
    let mut t = Table::with_prefix(&NOISE_HEADER, &["m", "x", "re", "im", "abs", "qfi", "converged"]);
    for (i, a) in r.probe.amplitudes().iter().enumerate() {
        let m = m_of(i, n);
        let mut row = noise_cells(ch.kind, &ch.params, n);
        row.extend([
            Cell::from(m),
            (m / n as f64).into(),
            a.re.into(),
            a.im.into(),
            a.norm().into(),
            r.qfi.into(),
            r.converged.into(),
        ]);
        t.push(row);
    }
    let summary = json!({
        "qfi": r.qfi,
        "inv_f": 1.0 / r.qfi,
        "iterations": r.iterations,
        "restarts_used": r.restarts_used,
        "symmetry_gap": r.symmetry_gap,
    });
    Ok(Outcome { table: t, converged: r.converged, summary })
}

fn collective_dephasing_only(cfg: &ExperimentConfig, n: usize) -> CliResult<()> {
    let ch = cfg.channel_for(n)?;
    let p = ch.params;
    if ch.kind != ChannelKind::Collective || p.gamma_minus != 0.0 || p.gamma_plus != 0.0 {
        return config_err("this command sweeps collective dephasing only");
    }
    if cfg.gamma0.is_some() {
        return config_err("the dephasing strengths come from --grid, not --gamma0");
    }
    Ok(())
}

pub fn menorah_cmd(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let n = cfg.n.unwrap_or(40);
    if n == 0 {
        return config_err("--N must be positive");
    }
    collective_dephasing_only(cfg, n)?;
    let grid = match cfg.grid()? {
        Some(g) => g,
        None => (0..20).map(|i| 0.05 * 1.25f64.powi(i) / (n * n) as f64).collect(),
    };
    let threshold = cfg.threshold.unwrap_or(1e-3);
    let scan = menorah_scan_with_threshold(n, &grid, &cfg.optimize_options()?, threshold)?;
    let mut t = Table::with_prefix(&NOISE_HEADER, &["m", "abs", "components", "qfi", "converged"]);
    for (row_i, &g) in scan.gamma0.iter().enumerate() {
        let ch = Channel::collective_dephasing(g)?;
        for (i, a) in scan.amplitudes[row_i].iter().enumerate() {
            let mut row = noise_cells(ch.kind, &ch.params, n);
            row.extend([
                Cell::from(m_of(i, n)),
                (*a).into(),
                scan.components[row_i].into(),
                scan.qfi[row_i].into(),
                scan.converged[row_i].into(),
            ]);
            t.push(row);
        }
    }
    let summary = json!({
        "threshold": threshold,
        "components": scan.components,
        "bifurcations": scan.bifurcations,
    });
    Ok(Outcome { table: t, converged: scan.converged.iter().all(|&c| c), summary })
}

pub fn families_cmd(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let n = cfg.require_n()?;
    collective_dephasing_only(cfg, n)?;
    let grid = cfg.grid()?.map_or_else(|| config_err("--grid is required"), Ok)?;
    let mut fams = cfg.families()?;
    if fams.is_empty() {
        fams = ProbeFamily::standard();
    }
    let curves = family_error_curves(&fams, n, &grid, !cfg.no_optimized, &cfg.optimize_options()?)?;
    let mut t = Table::with_prefix(&NOISE_HEADER, &["family", "qfi", "inv_f", "quantum", "converged"]);
    for p in &curves {
        let ch = Channel::collective_dephasing(p.gamma0)?;
        let mut row = noise_cells(ch.kind, &ch.params, n);
        row.extend([
            Cell::from(p.family.clone()),
            p.qfi.into(),
            p.inv_f.into(),
            p.quantum.into(),
            p.converged.into(),
        ]);
        t.push(row);
    }
    let converged = curves.iter().all(|p| p.converged);
    Ok(Outcome { table: t, converged, summary: json!({ "points": curves.len() }) })
}

pub fn semiclassical_cmd(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let n = cfg.require_n()?;
    let ch = cfg.channel_for(n)?;
    let grid = cfg.grid_points.unwrap_or(2001);
    let bound = precision_bound_with_grid(ch.kind, &ch.params, n, grid)?;
    let pot = build_potential(ch.kind, &ch.params, n)?;
    let gs = ground_state(&pot, grid)?;
    let mut t = Table::with_prefix(&NOISE_HEADER, &["x", "psi", "mu", "lambda_min", "closed_form", "numeric"]);
    for (x, p) in gs.x.iter().zip(&gs.psi) {
        let mut row = noise_cells(ch.kind, &ch.params, n);
        row.extend([
            Cell::from(*x),
            (*p).into(),
            pot.eval(*x)?.into(),
            gs.lambda_min.into(),
            bound.closed_form.into(),
            bound.numeric.into(),
        ]);
        t.push(row);
    }
    let summary = json!({
        "bound": to_value(&bound),
        "lambda_min": gs.lambda_min,
        "width": gs.width(),
        "fitted_width": gs.fitted_width(),
    });
    Ok(Outcome { table: t, converged: true, summary })
}

pub fn cluster_cmd(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let g = cfg.gamma0.map_or_else(|| config_err("--gamma0 is required"), Ok)?;
    if !(g > 0.0) {
        return config_err("--gamma0 must be positive");
    }
    let budget = cfg.budget.unwrap_or(1000.0);
    let opts = cfg.optimize_options()?;
    let source = cfg.alpha_source.as_deref().unwrap_or("numeric");
    let (src, samples) = match source {
        "numeric" => {
            let ns = cfg.ns()?.unwrap_or_else(|| vec![10, 14, 20, 28, 40]);
            let grid = match cfg.grid()? {
                Some(v) => v,
                None => parse_grid("log:0.05:10:24")?,
            };
            let pts: Vec<(usize, f64)> =
                ns.iter().flat_map(|&n| grid.iter().map(move |&mu| (n, mu / (n * n) as f64))).collect();
            let s = alpha_samples(&pts, &opts)?;
            let merged = s.iter().map(|a| (a.mu0, a.alpha)).collect();
            (AlphaSource::Samples(merged), s)
        }
        "box" => (AlphaSource::Box, Vec::new()),
        "heisenberg" => (AlphaSource::Heisenberg, Vec::new()),
        other => return config_err(format!("unknown --alpha-source `{other}`")),
    };
    let c = cluster_optimize(g, budget, &src, &opts)?;
    let t = if samples.is_empty() {
        let mut t = Table::new(&["mu0", "alpha", "sqrt_mu0", "beta"]);
        for &(mu, a) in &c.alpha {
            t.push(vec![mu.into(), a.into(), mu.sqrt().into(), (a / mu.sqrt()).into()]);
        }
        t
    } else {
        let mut t = Table::new(&["N", "gamma0", "mu0", "alpha", "sqrt_mu0", "beta", "converged"]);
        for s in &samples {
            let sq = s.mu0.sqrt();
            t.push(vec![
                s.n.into(),
                s.gamma0.into(),
                s.mu0.into(),
                s.alpha.into(),
                sq.into(),
                (s.alpha / sq).into(),
                s.converged.into(),
            ]);
        }
        t
    };
    let converged = samples.iter().all(|s| s.converged);
    let summary = json!({
        "alpha_source": source,
        "gamma0": g,
        "budget": budget,
        "mu0_star": c.mu0_star,
        "n_c": c.n_c,
        "prefactor": c.prefactor,
        "variance_at_optimum": c.variance_at_optimum,
        "nu": c.nu,
    });
    Ok(Outcome { table: t, converged, summary })
}

pub fn loss_cmd(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let n = cfg.n.unwrap_or(30);
    if n == 0 {
        return config_err("--N must be positive");
    }
    let mut cfg = cfg.clone();
    if cfg.channel.is_none() {
        cfg.channel = Some("loss".into());
    }
    if cfg.gamma0.is_none() {
        cfg.gamma0 = Some(0.25);
    }
    let ch = cfg.channel_for(n)?;
    if ch.kind != ChannelKind::Loss {
        return config_err("the loss command needs --channel loss");
    }
    let grid = cfg.grid_points.unwrap_or(2001);
    let opt = optimize_probe(&ch, n, &cfg.optimize_options()?)?;
    let exact: Vec<f64> = opt.probe.amplitudes().iter().map(|a| a.norm()).collect();
    let v = variational_profile(ch.kind, &ch.params, n, grid)?;
    let overlap = exact.iter().zip(&v.amplitudes).map(|(a, b)| a * b).sum::<f64>().powi(2);
    let mut t = Table::with_prefix(&NOISE_HEADER, &["m", "x", "exact", "semiclassical", "overlap"]);
    for (i, (a, b)) in exact.iter().zip(&v.amplitudes).enumerate() {
        let m = m_of(i, n);
        let mut row = noise_cells(ch.kind, &ch.params, n);
        row.extend([Cell::from(m), (m / n as f64).into(), (*a).into(), (*b).into(), overlap.into()]);
        t.push(row);
    }
    let (_, t1) = loss_rate_conversion(ch.params.loss1, n)?;
    let (_, t2) = loss_rate_conversion(ch.params.loss2, n)?;
    let summary = json!({
        "overlap": overlap,
        "qfi_exact": opt.qfi,
        "qfi_semiclassical": v.qfi,
        "wall_shift": v.shift,
        "transmission1": t1,
        "transmission2": t2,
    });
    Ok(Outcome { table: t, converged: opt.converged, summary })
}

pub fn thresholds_cmd(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let ks = cfg.ks()?.unwrap_or_else(|| vec![2, 3, 4]);
    let opts = cfg.optimize_options()?;
    let mut t = Table::new(&["k", "gamma0_c"]);
    let mut vals = Vec::new();
    for &k in &ks {
        let g = entanglement_threshold_with(k, &opts, 1e-4)?;
        t.push(vec![k.into(), g.into()]);
        vals.push(g);
    }
    Ok(Outcome { table: t, converged: true, summary: json!({ "k": ks, "gamma0_c": vals, "tolerance": 1e-4 }) })
}
