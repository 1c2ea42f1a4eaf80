//! Large-`N` theory: the effective potential `μ(x)` on `x = m/N ∈ (-½, ½)`,
//! the ground state of `-ψ'' + μψ = λψ` (which gives the minimum error
//! `λ_min/N²`), the QFI functional, closed-form bounds and optimal cluster
//! sizes under collective dephasing.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{Channel, ChannelKind, NoiseParams};
use crate::error::{domain, invalid, Error, Result};
use crate::optimize::{optimize_objective, Objective, OptimizeOptions};
use crate::spin::C64;

/// Smallest grid accepted by [`ground_state`].
pub const MIN_GRID: usize = 501;
/// Relative agreement required between `n` and `2n` grid eigenvalues.
pub const GRID_RICHARDSON_TOL: f64 = 1e-4;

/// Shape of the effective potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// Flat `μ₀` between hard walls.
    Box,
    /// `μ₀ + μ₁ x²/(¼ - x²)`.
    CollectiveGeneral,
    /// `μ₀ + (μ₁/2)[sinch s* cosh(s - s*) - 1]`, `s = 2 artanh 2x`.
    CollectiveSinch,
    /// `μ₀ + r/(1 - 4x²)`.
    Individual,
    /// `μ₀ + ¼[r₁/(½ + x) + r₂/(½ - x)]`; the optimum leans towards the
    /// lossier arm 1 (`x > 0`).
    Loss,
}

/// Dimensionless potential parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    /// `N²Γ⁰`.
    pub mu0: f64,
    /// `N²(Γ⁺ + Γ⁻)`.
    pub mu1: f64,
    /// `N(e^γ - 1)` with `γ` the total individual exponent.
    pub r: f64,
    pub r1: f64,
    pub r2: f64,
    /// `N(Γ⁺ - Γ⁻)/2`.
    pub s_star: f64,
}

/// `sinh x / x`.
pub fn sinch(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

impl Potential {
    fn zero(kind: PotentialKind) -> Self {
        Potential {
            kind,
            mu0: 0.0,
            mu1: 0.0,
            r: 0.0,
            r1: 0.0,
            r2: 0.0,
            s_star: 0.0,
        }
    }

    pub fn flat(mu0: f64) -> Self {
        Potential { mu0, ..Self::zero(PotentialKind::Box) }
    }

    pub fn individual(mu0: f64, r: f64) -> Self {
        Potential { mu0, r, ..Self::zero(PotentialKind::Individual) }
    }

    pub fn loss(mu0: f64, r1: f64, r2: f64) -> Self {
        Potential { mu0, r1, r2, ..Self::zero(PotentialKind::Loss) }
    }

    pub fn collective(mu0: f64, mu1: f64) -> Self {
        Potential { mu0, mu1, ..Self::zero(PotentialKind::CollectiveGeneral) }
    }

    pub fn sinch(mu0: f64, mu1: f64, s_star: f64) -> Self {
        Potential { mu0, mu1, s_star, ..Self::zero(PotentialKind::CollectiveSinch) }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.mu0, self.mu1, self.r, self.r1, self.r2];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) || !self.s_star.is_finite() {
            return domain(format!("potential parameters must be finite and non-negative: {self:?}"));
        }
        Ok(())
    }

    /// `μ(x)` on the open interval.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > -0.5 && x < 0.5) {
            return domain(format!("x = {x} is outside (-1/2, 1/2)"));
        }
        Ok(self.eval_unchecked(x))
    }

    /// `μ(x)` without the range check; source-free walls continue analytically.
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Box => self.mu0,
            PotentialKind::CollectiveGeneral => self.mu0 + self.mu1 * x * x / (0.25 - x * x),
            PotentialKind::CollectiveSinch => {
                let s = 2.0 * (2.0 * x).atanh();
                self.mu0 + 0.5 * self.mu1 * (sinch(self.s_star) * (s - self.s_star).cosh() - 1.0)
            }
            PotentialKind::Individual => self.mu0 + self.r / (1.0 - 4.0 * x * x),
            PotentialKind::Loss => self.mu0 + 0.25 * (self.r1 / (0.5 + x) + self.r2 / (0.5 - x)),
        }
    }

    /// `min_x μ(x)`: closed form where available, else a dense scan with
    /// golden-section refinement.
    pub fn min_value(&self) -> f64 {
        match self.kind {
            PotentialKind::Box | PotentialKind::CollectiveGeneral => self.mu0,
            PotentialKind::Individual => self.mu0 + self.r,
            PotentialKind::CollectiveSinch => {
                self.mu0 + 0.5 * self.mu1 * (sinch(self.s_star) - 1.0)
            }
            PotentialKind::Loss => {
                self.mu0 + 0.25 * (self.r1.sqrt() + self.r2.sqrt()).powi(2)
            }
        }
    }
}

/// Potential for a channel of the given kind acting on `N` particles.
pub fn build_potential(kind: ChannelKind, noise: &NoiseParams, n: usize) -> Result<Potential> {
    if n == 0 {
        return domain("N must be at least 1");
    }
    noise.validate()?;
    Channel::new(kind, *noise)?;
    let nf = n as f64;
    let mu0 = noise.mu0(n);
    let pot = match kind {
        ChannelKind::Collective => {
            let mu1 = nf * nf * (noise.gamma_minus + noise.gamma_plus);
            let s_star = nf * (noise.gamma_plus - noise.gamma_minus) / 2.0;
            if mu1 == 0.0 {
                Potential::flat(mu0)
            } else if s_star == 0.0 {
                Potential::collective(mu0, mu1)
            } else {
                Potential::sinch(mu0, mu1, s_star)
            }
        }
        ChannelKind::Individual => Potential::individual(mu0, nf * noise.individual_total().exp_m1()),
        ChannelKind::Loss => Potential::loss(mu0, nf * noise.loss1.exp_m1(), nf * noise.loss2.exp_m1()),
    };
    pot.validate()?;
    Ok(pot)
}

/// Ground state of `-ψ'' + μψ = λψ` on a cell-centred grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub lambda_min: f64,
    /// Cell centres `x_i = -½ + (i + ½)h`.
    pub x: Vec<f64>,
    /// Non-negative, `Σψ²h = 1`.
    pub psi: Vec<f64>,
    pub h: f64,
    /// Wall positions.
    pub lo: f64,
    pub hi: f64,
}

impl GroundState {
    /// Standard deviation of `ψ²`.
    pub fn width(&self) -> f64 {
        let mean: f64 = self.x.iter().zip(&self.psi).map(|(x, p)| x * p * p).sum::<f64>() * self.h;
        (self.x.iter().zip(&self.psi).map(|(x, p)| (x - mean).powi(2) * p * p).sum::<f64>() * self.h).sqrt()
    }

    /// Gaussian width `σ` of `ψ²` from its half maximum, `HWHM/√(2 ln 2)`,
    /// measured on the outer side of the peak.
    pub fn fitted_width(&self) -> f64 {
        let p2: Vec<f64> = self.psi.iter().map(|p| p * p).collect();
        let peak = (0..p2.len()).fold(0, |b, i| if p2[i] > p2[b] { i } else { b });
        let half = 0.5 * p2[peak];
        let mut i = peak;
        while i + 1 < p2.len() && p2[i + 1] > half {
            i += 1;
        }
        let cross = if i + 1 < p2.len() {
            self.x[i] + (p2[i] - half) / (p2[i] - p2[i + 1]) * self.h
        } else {
            self.hi
        };
        (cross - self.x[peak]) / (2.0 * 2f64.ln()).sqrt()
    }

    /// `ψ` at `x` by linear interpolation, zero at the walls.
    pub fn sample(&self, x: f64) -> f64 {
        let n = self.psi.len();
        let t = (x - self.lo) / self.h - 0.5;
        if t <= -0.5 || t >= n as f64 - 0.5 {
            return 0.0;
        }
        let at = |i: isize| -> f64 {
            if i < 0 || i >= n as isize {
                // odd reflection through the wall
                let j = if i < 0 { 0 } else { n - 1 };
                -self.psi[j]
            } else {
                self.psi[i as usize]
            }
        };
        let i = t.floor() as isize;
        let w = t - i as f64;
        (1.0 - w) * at(i) + w * at(i + 1)
    }

    /// Samples at `x = m/N` as a unit-norm spin amplitude vector.
    pub fn to_amplitudes(&self, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..=n).map(|i| self.sample((i as f64 - n as f64 / 2.0) / n as f64)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / norm).collect()
    }
}

/// Ground state of a potential, with a check against twice the resolution.
pub fn ground_state(pot: &Potential, grid_points: usize) -> Result<GroundState> {
    pot.validate()?;
    let p = *pot;
    ground_state_fn(move |x| p.eval_unchecked(x), grid_points)
}

/// As [`ground_state`] for an arbitrary potential on `(-½, ½)`.
pub fn ground_state_fn(mu: impl Fn(f64) -> f64, grid_points: usize) -> Result<GroundState> {
    ground_state_on(mu, -0.5, 0.5, grid_points)
}

/// As [`ground_state_fn`] with walls at `lo < hi`.
pub fn ground_state_on(mu: impl Fn(f64) -> f64, lo: f64, hi: f64, grid_points: usize) -> Result<GroundState> {
    if grid_points < MIN_GRID {
        return invalid(format!("grid must have at least {MIN_GRID} points, got {grid_points}"));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return invalid(format!("walls must satisfy lo < hi, got [{lo}, {hi}]"));
    }
    let coarse = solve_grid(&mu, lo, hi, grid_points)?;
    let fine = solve_grid(&mu, lo, hi, 2 * grid_points)?;
    let rel = (coarse.lambda_min - fine.lambda_min).abs() / fine.lambda_min.abs().max(1.0);
    if rel > GRID_RICHARDSON_TOL {
        return Err(Error::NonConvergence(format!(
            "ground-state eigenvalue changes by {rel:e} (relative) when the grid is doubled"
        )));
    }
    Ok(coarse)
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: f64, x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &di) in d.iter().enumerate() {
        let off = if i == 0 { 0.0 } else { e * e / q };
        q = di - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (di.abs() + x.abs()).max(1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn solve_grid(mu: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Result<GroundState> {
    let h = (b - a) / n as f64;
    let x: Vec<f64> = (0..n).map(|i| a + (i as f64 + 0.5) * h).collect();
    let inv = 1.0 / (h * h);
    // Odd reflection at the walls puts ψ = 0 at x = ±½.
    let mut d: Vec<f64> = x.iter().map(|&xi| 2.0 * inv + mu(xi)).collect();
    d[0] += inv;
    d[n - 1] += inv;
    if d.iter().any(|v| !v.is_finite()) {
        return domain("potential is not finite on the grid");
    }
    let e = -inv;
    let mut lo = d.iter().copied().fold(f64::INFINITY, f64::min) - 2.0 * inv;
    let mut hi = d.iter().copied().fold(f64::INFINITY, f64::min) + 2.0 * inv;
    while sturm_count(&d, e, hi) < 1 {
        hi += (hi - lo).abs() + 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(&d, e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    // Inverse iteration with a shift just below the eigenvalue (SPD system).
    let shift = lambda - 1e-9 * lambda.abs().max(1.0);
    let mut v = vec![1.0; n];
    for _ in 0..6 {
        v = thomas(&d, e, shift, &v);
        let norm = (v.iter().map(|a| a * a).sum::<f64>() * h).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NonConvergence("inverse iteration failed".into()));
        }
        v.iter_mut().for_each(|a| *a /= norm);
    }
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    v.iter_mut().for_each(|a| *a = (*a * sign).max(0.0));
    let norm = (v.iter().map(|a| a * a).sum::<f64>() * h).sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    Ok(GroundState { lambda_min: lambda, x, psi: v, h, lo: a, hi: b })
}

/// Solves `(T - σ) y = b` for symmetric tridiagonal `T` with constant
/// off-diagonal `e`.
fn thomas(d: &[f64], e: f64, sigma: f64, b: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut piv = d[0] - sigma;
    c[0] = e / piv;
    y[0] = b[0] / piv;
    for i in 1..n {
        piv = d[i] - sigma - e * c[i - 1];
        c[i] = e / piv;
        y[i] = (b[i] - e * y[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        y[i] -= c[i] * y[i + 1];
    }
    y
}

/// Largest wall shift tried by [`variational_profile`], in lattice units.
pub const MAX_WALL_SHIFT: f64 = 4.0;

/// Finite-`N` semiclassical profile whose source-free walls are moved out by
/// `shift/N`, with `shift` chosen to maximize the exact QFI of the sampled
/// probe. Walls at a Coulomb source stay fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalProfile {
    pub potential: Potential,
    /// Wall displacement in units of `1/N`.
    pub shift: f64,
    pub ground_state: GroundState,
    /// Unit-norm amplitudes `ψ_m`, `m = -N/2..N/2`.
    pub amplitudes: Vec<f64>,
    /// Exact QFI of the sampled probe.
    pub qfi: f64,
}

pub fn variational_profile(
    kind: ChannelKind,
    noise: &NoiseParams,
    n: usize,
    grid_points: usize,
) -> Result<VariationalProfile> {
    let pot = build_potential(kind, noise, n)?;
    let obj = Objective::new(&Channel::new(kind, *noise)?, n)?;
    let (left, right) = match pot.kind {
        PotentialKind::Box => (true, true),
        PotentialKind::Loss => (pot.r1 == 0.0, pot.r2 == 0.0),
        _ => (false, false),
    };
    let nf = n as f64;
    let build = |shift: f64| -> Result<(GroundState, Vec<f64>, f64)> {
        let lo = if left { -0.5 - shift / nf } else { -0.5 };
        let hi = if right { 0.5 + shift / nf } else { 0.5 };
        let gs = ground_state_on(|x| pot.eval_unchecked(x), lo, hi, grid_points)?;
        let amps = gs.to_amplitudes(n);
        let psi: Vec<C64> = amps.iter().map(|&a| C64::new(a, 0.0)).collect();
        let f = obj.value(&psi);
        Ok((gs, amps, f))
    };
    let mut shift = 0.0;
    if left || right {
        let k = 16;
        let grid: Vec<f64> = (0..=k).map(|i| MAX_WALL_SHIFT * i as f64 / k as f64).collect();
        let vals = grid.iter().map(|&s| build(s).map(|r| r.2)).collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (i, v) in vals.iter().enumerate() {
            if *v > vals[best] {
                best = i;
            }
        }
        let step = MAX_WALL_SHIFT / k as f64;
        let (mut a, mut b) = ((grid[best] - step).max(0.0), (grid[best] + step).min(MAX_WALL_SHIFT));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
        let (mut fc, mut fd) = (build(c)?.2, build(d)?.2);
        while b - a > 1e-4 {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = build(c)?.2;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = build(d)?.2;
            }
        }
        shift = 0.5 * (a + b);
        if build(shift)?.2 < vals[best] {
            shift = grid[best];
        }
    }
    let (ground_state, amplitudes, qfi) = build(shift)?;
    Ok(VariationalProfile { potential: pot, shift, ground_state, amplitudes, qfi })
}

/// `F/N² ≈ ∫[ψ²/μ - ψ'²/μ²] dx` for a profile on the cell-centred grid of
/// [`GroundState`] (`x_i = -½ + (i + ½)h`). `ψ'` is taken on cell faces
/// with `ψ = 0` at the walls; wall faces use `μ` at the adjacent centre.
pub fn qfi_functional(psi: &[f64], pot: &Potential) -> Result<f64> {
    pot.validate()?;
    let n = psi.len();
    if n < 3 {
        return invalid("profile needs at least three samples");
    }
    let h = 1.0 / n as f64;
    let xc = |i: usize| -0.5 + (i as f64 + 0.5) * h;
    let mut acc = 0.0;
    for (i, &p) in psi.iter().enumerate() {
        let m = pot.eval(xc(i))?;
        if !(m > 0.0) {
            return domain(format!("μ({}) = {m} is not positive", xc(i)));
        }
        acc += p * p / m * h;
    }
    for f in 0..=n {
        let (left, right) = (
            if f == 0 { -psi[0] } else { psi[f - 1] },
            if f == n { -psi[n - 1] } else { psi[f] },
        );
        let dpsi = (right - left) / h;
        let m = if f == 0 {
            pot.eval(xc(0))?
        } else if f == n {
            pot.eval(xc(n - 1))?
        } else {
            pot.eval(-0.5 + f as f64 * h)?
        };
        let w = if f == 0 || f == n { 0.5 * h } else { h };
        acc -= dpsi * dpsi / (m * m) * w;
    }
    Ok(acc)
}

/// Closed-form minimum error with its numerical cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionBound {
    pub potential: Potential,
    /// Closed-form `1/F` bound per particle-trial.
    pub closed_form: f64,
    /// `λ_min/N²` from the ground-state solver.
    pub numeric: f64,
    /// `min_x μ(x)/N²`.
    pub potential_minimum: f64,
    /// Whether the asymptotic validity conditions hold.
    pub conditions_met: bool,
    pub notes: Vec<String>,
    /// Share of the loss error attributed to loss-induced dephasing,
    /// `ε₁ε₂/(ε₁² - ε₁ε₂ + ε₂²)`.
    pub loss_dephasing_fraction: Option<f64>,
}

/// Threshold used for "much greater than one" in validity conditions.
const LARGE: f64 = 10.0;

pub fn precision_bound(kind: ChannelKind, noise: &NoiseParams, n: usize) -> Result<PrecisionBound> {
    precision_bound_with_grid(kind, noise, n, 2001)
}

pub fn precision_bound_with_grid(
    kind: ChannelKind,
    noise: &NoiseParams,
    n: usize,
    grid_points: usize,
) -> Result<PrecisionBound> {
    let pot = build_potential(kind, noise, n)?;
    let nf = n as f64;
    let n2 = nf * nf;
    let mut notes = Vec::new();
    let mut fraction = None;
    let (closed_form, conditions_met) = match pot.kind {
        PotentialKind::Box => {
            let ok = pot.mu0 >= LARGE;
            if !ok {
                notes.push(format!("μ₀ = {} is not ≫ 1", pot.mu0));
            }
            (noise.gamma0 + PI * PI / n2, ok)
        }
        PotentialKind::CollectiveGeneral | PotentialKind::CollectiveSinch => {
            let rates = noise.gamma_minus + noise.gamma_plus;
            let ok_mass = pot.mu0 >= LARGE * (1.0 + pot.mu1 / pot.mu0.max(f64::MIN_POSITIVE)).sqrt();
            let ok_n = nf * noise.gamma_minus.max(noise.gamma_plus) <= 1.0 / LARGE;
            if !ok_mass {
                notes.push("μ₀ is not ≫ √(1 + μ₁/μ₀)".into());
            }
            if !ok_n {
                notes.push("N is not ≪ 1/Γ±".into());
            }
            (noise.gamma0 + rates.sqrt() / nf, ok_mass && ok_n)
        }
        PotentialKind::Individual => {
            let ok = pot.r >= LARGE;
            if !ok {
                notes.push(format!("r = {} is not ≫ 1", pot.r));
            }
            (noise.gamma0 + noise.individual_total().exp_m1() / nf, ok)
        }
        PotentialKind::Loss => {
            let e1 = (pot.r1 / (4.0 * nf)).sqrt();
            let e2 = (pot.r2 / (4.0 * nf)).sqrt();
            let ok = pot.r1 >= LARGE && (pot.r2 == 0.0 || pot.r2 >= LARGE);
            if !ok {
                notes.push("r₁,₂ are not ≫ 1".into());
            }
            let denom = e1 * e1 - e1 * e2 + e2 * e2;
            if denom > 0.0 {
                fraction = Some(e1 * e2 / denom);
            }
            notes.push(
                "closed form (ε₁+ε₂)²/(4N) and min μ/N² = (ε₁+ε₂)²/N differ by a factor 4; both reported"
                    .into(),
            );
            (noise.gamma0 + (e1 + e2).powi(2) / (4.0 * nf), ok)
        }
    };
    let gs = ground_state(&pot, grid_points)?;
    Ok(PrecisionBound {
        potential: pot,
        closed_form,
        numeric: gs.lambda_min / n2,
        potential_minimum: pot.min_value() / n2,
        conditions_met,
        notes,
        loss_dephasing_fraction: fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuddenDeath {
    /// Lower bound on `1/F`.
    pub bound: f64,
    /// `N(Γ⁻ - Γ⁺) ≥ 1`: the bound grows exponentially with `N`.
    pub exponential_regime: bool,
}

/// `1/F ≥ Γ⁰ + (Γ⁻+Γ⁺)/2 [sinch(N(Γ⁻-Γ⁺)/2) - 1]`.
pub fn sudden_death_bound(gamma_minus: f64, gamma_plus: f64, gamma0: f64, n: usize) -> Result<SuddenDeath> {
    if [gamma_minus, gamma_plus, gamma0].iter().any(|v| !v.is_finite() || *v < 0.0) {
        return domain("rates must be finite and non-negative");
    }
    let a = n as f64 * (gamma_minus - gamma_plus);
    Ok(SuddenDeath {
        bound: gamma0 + 0.5 * (gamma_minus + gamma_plus) * (sinch(a / 2.0) - 1.0),
        exponential_regime: a >= 1.0,
    })
}

/// Source of the quantum error coefficient `α(μ₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    /// Optimized probes at the listed `N` on the given `μ₀` grid.
    Numeric { ns: Vec<usize>, mu0_grid: Vec<f64> },
    /// Precomputed `(μ₀, α)` samples.
    Samples(Vec<(f64, f64)>),
    /// Large-mass law `α = π²`.
    Box,
    /// Small-mass limit `α = 1`.
    Heisenberg,
}

/// One optimized point of `α(μ₀) = N²(1/F_opt - Γ⁰)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSample {
    pub n: usize,
    pub gamma0: f64,
    pub mu0: f64,
    pub alpha: f64,
    pub converged: bool,
}

/// `α` from optimized probes at every `(N, Γ⁰)` pair.
pub fn alpha_samples(points: &[(usize, f64)], opts: &OptimizeOptions) -> Result<Vec<AlphaSample>> {
    points
        .par_iter()
        .map(|&(n, g)| {
            let obj = Objective::new(&Channel::collective_dephasing(g)?, n)?;
            let r = optimize_objective(&obj, opts)?;
            let n2 = (n * n) as f64;
            Ok(AlphaSample {
                n,
                gamma0: g,
                mu0: g * n2,
                alpha: n2 * (1.0 / r.qfi - g),
                converged: r.converged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAnalysis {
    /// `(μ₀, α)` used.
    pub alpha: Vec<(f64, f64)>,
    /// `(√μ₀, β)` with `β = α/√μ₀`.
    pub beta: Vec<(f64, f64)>,
    /// Mass at which `β'(√μ₀) = -1`.
    pub mu0_star: f64,
    /// Optimal cluster size `√(μ₀*/Γ⁰)`.
    pub n_c: f64,
    /// `c` in `var θ = c√Γ⁰/(νN)`.
    pub prefactor: f64,
    /// Variance of the estimate for the whole budget `νN`.
    pub variance_at_optimum: f64,
    /// Number of clusters `νN/N_c`.
    pub nu: f64,
}

fn table_alpha(alpha: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let k = 400;
    (0..=k)
        .map(|i| {
            let mu = lo * (hi / lo).powf(i as f64 / k as f64);
            (mu, alpha(mu))
        })
        .collect()
}

/// Optimal clustering of a budget of `νN` particles under collective
/// dephasing.
pub fn cluster_optimize(
    gamma0: f64,
    budget: f64,
    source: &AlphaSource,
    opts: &OptimizeOptions,
) -> Result<ClusterAnalysis> {
    if !(gamma0 > 0.0) || !gamma0.is_finite() {
        return domain(format!("Γ⁰ must be positive, got {gamma0}"));
    }
    if !(budget > 0.0) {
        return domain(format!("budget must be positive, got {budget}"));
    }
    let alpha: Vec<(f64, f64)> = match source {
        AlphaSource::Box => table_alpha(|_| PI * PI, 0.01, 100.0),
        AlphaSource::Heisenberg => table_alpha(|_| 1.0, 0.01, 100.0),
        AlphaSource::Samples(s) => s.clone(),
        AlphaSource::Numeric { ns, mu0_grid } => {
            let pts: Vec<(usize, f64)> = ns
                .iter()
                .flat_map(|&n| mu0_grid.iter().map(move |&mu| (n, mu / (n * n) as f64)))
                .collect();
            let s = alpha_samples(&pts, opts)?;
            if s.iter().any(|a| !a.converged) {
                return Err(Error::NonConvergence("optimizer did not converge on the α sweep".into()));
            }
            s.iter().map(|a| (a.mu0, a.alpha)).collect()
        }
    };
    cluster_from_alpha(gamma0, budget, alpha)
}

/// Averages samples that share a mass and sorts them by mass.
fn merge_alpha(mut alpha: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    alpha.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for (m, a) in alpha {
        match out.last_mut() {
            Some(last) if (last.0 - m).abs() <= 1e-12 * m.abs().max(1.0) => {
                last.1 += a;
                last.2 += 1;
            }
            _ => out.push((m, a, 1)),
        }
    }
    out.into_iter().map(|(m, a, k)| (m, a / k as f64)).collect()
}

fn cluster_from_alpha(gamma0: f64, budget: f64, alpha: Vec<(f64, f64)>) -> Result<ClusterAnalysis> {
    if alpha.iter().any(|(m, a)| !(m.is_finite() && *m > 0.0 && a.is_finite())) {
        return invalid("α samples must have positive finite masses and finite values");
    }
    let alpha = merge_alpha(alpha);
    let covered = alpha.first().is_some_and(|a| a.0 <= 0.1) && alpha.last().is_some_and(|a| a.0 >= 5.0);
    if alpha.len() < 4 || !covered {
        return invalid("α samples must cover μ₀ ∈ [0.1, 5] with at least four points");
    }
    let beta: Vec<(f64, f64)> = alpha.iter().map(|&(m, a)| (m.sqrt(), a / m.sqrt())).collect();
    // β' at interval midpoints; first crossing of -1 from below.
    let slopes: Vec<(f64, f64)> = beta
        .windows(2)
        .map(|w| (0.5 * (w[0].0 + w[1].0), (w[1].1 - w[0].1) / (w[1].0 - w[0].0)))
        .collect();
    let t_star = slopes
        .windows(2)
        .find(|w| w[0].1 < -1.0 && w[1].1 >= -1.0)
        .map(|w| w[0].0 + (-1.0 - w[0].1) * (w[1].0 - w[0].0) / (w[1].1 - w[0].1))
        .ok_or_else(|| Error::Validation("β'(√μ₀) never crosses -1 on the sampled range".into()))?;
    let mu0_star = t_star * t_star;
    let beta_star = interpolate(&beta, t_star);
    let prefactor = t_star + beta_star;
    let n_c = (mu0_star / gamma0).sqrt();
    Ok(ClusterAnalysis {
        alpha,
        beta,
        mu0_star,
        n_c,
        prefactor,
        variance_at_optimum: prefactor * gamma0.sqrt() / budget,
        nu: budget / n_c,
    })
}

/// Piecewise-linear interpolation on sorted abscissae.
pub fn interpolate(pts: &[(f64, f64)], x: f64) -> f64 {
    match pts.iter().position(|p| p.0 >= x) {
        Some(0) => pts[0].1,
        None => pts[pts.len() - 1].1,
        Some(i) => {
            let (a, b) = (pts[i - 1], pts[i]);
            a.1 + (x - a.0) * (b.1 - a.1) / (b.0 - a.0)
        }
    }
}
