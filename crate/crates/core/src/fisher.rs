//! Quantum and classical Fisher information for phase shifts generated by
//! `S^z`.
//!
//! The phase enters as `ρ(θ) = e^{-iθS^z} ρ e^{iθS^z}`, so `∂ρ = -i[S^z, ρ]`.
//! Within each block `S^z` is diagonal with values `m = i - (d-1)/2`, which
//! also covers loss sectors (half the photon-number difference of the arms).
//! Decoherence exponents are held fixed at the estimation point.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::linalg::{herm_eigen, sym_eigen};
use crate::spin::{
    check_hermitian, m_of_index, make_probe, wigner_d_column, BlockLabel, BlockedDensityMatrix,
    ProbeFamily, SymmetricDensityMatrix, C64,
};

/// Relative eigenvalue cutoff of the SLD sum.
pub const SLD_CUTOFF: f64 = 1e-12;

/// QFI of a state together with its block decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherResult {
    pub qfi: f64,
    /// Contribution `w_b F_b` of each block.
    pub per_block: Vec<(BlockLabel, f64)>,
    /// SLD of each block (for the unit-trace block matrix), when requested.
    pub sld: Option<Vec<DMatrix<C64>>>,
}

fn is_real(m: &DMatrix<C64>) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// Indices of rows holding at least one non-zero entry.
fn support(m: &DMatrix<C64>) -> Vec<usize> {
    (0..m.nrows())
        .filter(|&i| m.row(i).iter().any(|z| *z != C64::new(0.0, 0.0)))
        .collect()
}

/// QFI of one (possibly unnormalized) Hermitian block, its SLD and,
/// optionally, the derivative kernel `G = 2i[S^z, L] - L²` with
/// `dF = Tr(dM·G)`. `m_values` are the `S^z` eigenvalues of the block.
pub(crate) struct BlockFisher {
    pub qfi: f64,
    pub sld: DMatrix<C64>,
    pub kernel: Option<DMatrix<C64>>,
}

pub(crate) fn block_fisher(m: &DMatrix<C64>, want_kernel: bool) -> BlockFisher {
    let dim = m.nrows();
    let mz: Vec<f64> = (0..dim).map(|i| m_of_index(i, dim)).collect();
    let sup = support(m);
    let mut sld = DMatrix::<C64>::zeros(dim, dim);
    let mut kernel = want_kernel.then(|| DMatrix::<C64>::zeros(dim, dim));
    if sup.is_empty() {
        return BlockFisher { qfi: 0.0, sld, kernel };
    }
    let k = sup.len();
    let sub = DMatrix::from_fn(k, k, |a, b| m[(sup[a], sup[b])]);
    let msub: Vec<f64> = sup.iter().map(|&i| mz[i]).collect();
    let (qfi, l_sub) = if is_real(&sub) {
        real_sld(&sub.map(|z| z.re), &msub)
    } else {
        complex_sld(&sub, &msub)
    };
    for a in 0..k {
        for b in 0..k {
            sld[(sup[a], sup[b])] = l_sub[(a, b)];
        }
    }
    if let Some(g) = kernel.as_mut() {
        let l2 = &l_sub * &l_sub;
        for a in 0..k {
            for b in 0..k {
                let comm = l_sub[(a, b)] * (msub[a] - msub[b]);
                g[(sup[a], sup[b])] = C64::new(0.0, 2.0) * comm - l2[(a, b)];
            }
        }
    }
    BlockFisher { qfi, sld, kernel }
}

fn cutoff(p: &[f64]) -> f64 {
    SLD_CUTOFF * p.iter().copied().fold(0.0, f64::max)
}

fn real_sld(m: &DMatrix<f64>, mz: &[f64]) -> (f64, DMatrix<C64>) {
    let k = m.nrows();
    let (p, v) = sym_eigen(m);
    if p.iter().any(|x| x.is_nan()) {
        return (f64::NAN, DMatrix::zeros(k, k));
    }
    let v = &v;
    // ∂M = -i K with K real antisymmetric.
    let kmat = DMatrix::from_fn(k, k, |a, b| (mz[a] - mz[b]) * m[(a, b)]);
    let b = v.transpose() * &kmat * v;
    let eps = cutoff(&p);
    let mut qfi = 0.0;
    let mut r = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let s = p[i] + p[j];
            if s > eps {
                qfi += 2.0 * b[(i, j)] * b[(i, j)] / s;
                r[(i, j)] = 2.0 * b[(i, j)] / s;
            }
        }
    }
    // L = -i V R Vᵀ
    let l = v * r * v.transpose();
    (qfi, l.map(|x| C64::new(0.0, -x)))
}

fn complex_sld(m: &DMatrix<C64>, mz: &[f64]) -> (f64, DMatrix<C64>) {
    let k = m.nrows();
    let (p, v) = herm_eigen(m);
    if p.iter().any(|x| x.is_nan()) {
        return (f64::NAN, DMatrix::zeros(k, k));
    }
    let v = &v;
    let dm = DMatrix::from_fn(k, k, |a, b| C64::new(0.0, -(mz[a] - mz[b])) * m[(a, b)]);
    let a = v.adjoint() * dm * v;
    let eps = cutoff(&p);
    let mut qfi = 0.0;
    let mut l = DMatrix::<C64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let s = p[i] + p[j];
            if s > eps {
                qfi += 2.0 * a[(i, j)].norm_sqr() / s;
                l[(i, j)] = a[(i, j)] * (2.0 / s);
            }
        }
    }
    (qfi, v * l * v.adjoint())
}

/// QFI of a blocked state: `F = Σ_b w_b F(ρ_b)`.
pub fn qfi(state: &BlockedDensityMatrix) -> Result<FisherResult> {
    qfi_impl(state, false)
}

/// As [`qfi`], also returning the SLD of every block.
pub fn qfi_with_sld(state: &BlockedDensityMatrix) -> Result<FisherResult> {
    qfi_impl(state, true)
}

/// QFI of a state on the symmetric space.
pub fn qfi_symmetric(rho: &SymmetricDensityMatrix) -> Result<FisherResult> {
    qfi(&BlockedDensityMatrix::from_symmetric(rho))
}

fn qfi_impl(state: &BlockedDensityMatrix, keep_sld: bool) -> Result<FisherResult> {
    let mut per_block = Vec::with_capacity(state.blocks.len());
    let mut slds = Vec::new();
    let mut total = 0.0;
    for b in &state.blocks {
        if b.matrix.nrows() != b.matrix.ncols() {
            return invalid(format!("block {:?} is not square", b.label));
        }
        check_hermitian(&b.matrix, 1e-10)?;
        if b.weight < 0.0 || !b.weight.is_finite() {
            return invalid(format!("block {:?} has weight {}", b.label, b.weight));
        }
        let f = block_fisher(&b.matrix, false);
        if !f.qfi.is_finite() {
            return Err(Error::NonConvergence(format!("eigendecomposition of block {:?} failed", b.label)));
        }
        let contrib = b.weight * f.qfi;
        total += contrib;
        per_block.push((b.label, contrib));
        if keep_sld {
            slds.push(f.sld);
        }
    }
    Ok(FisherResult {
        qfi: total,
        per_block,
        sld: keep_sld.then_some(slds),
    })
}

/// Offset sums `c_d = Σ_{i-j=d} M_ij`, `d = 0..dim`.
fn offset_sums(m: &DMatrix<C64>) -> Vec<C64> {
    let dim = m.nrows();
    (0..dim)
        .map(|d| (d..dim).map(|i| m[(i, i - d)]).sum())
        .collect()
}

/// CFI of the canonical phase measurement, per block, by quadrature over
/// `grid_size` equally spaced outcomes. Blocks (spin sectors or loss
/// sectors) are measured separately, each in its own reduced space.
pub fn cfi_canonical_phase(state: &BlockedDensityMatrix, grid_size: usize) -> Result<f64> {
    let max_dim = state.blocks.iter().map(|b| b.dim()).max().unwrap_or(1);
    if grid_size < 8 * max_dim {
        return invalid(format!(
            "grid of {grid_size} points is too coarse; need at least {}",
            8 * max_dim
        ));
    }
    let h = 2.0 * PI / grid_size as f64;
    let mut total = 0.0;
    for b in &state.blocks {
        if b.weight == 0.0 {
            continue;
        }
        check_hermitian(&b.matrix, 1e-10)?;
        let c = offset_sums(&b.matrix);
        // p(u) = (1/2π)[c_0 + 2 Re Σ_d c_d e^{idu}], u = φ - θ.
        let mut vals = Vec::with_capacity(grid_size);
        let mut pmax: f64 = 0.0;
        for k in 0..grid_size {
            let u = -PI + (k as f64 + 0.5) * h;
            let (mut p, mut dp, mut ddp) = (c[0].re, 0.0, 0.0);
            for (d, cd) in c.iter().enumerate().skip(1) {
                let df = d as f64;
                let e = C64::from_polar(1.0, df * u);
                let z = cd * e;
                p += 2.0 * z.re;
                dp += 2.0 * (z * C64::new(0.0, df)).re;
                ddp -= 2.0 * df * df * z.re;
            }
            pmax = pmax.max(p);
            vals.push((p, dp, ddp));
        }
        let tiny = 1e-12 * pmax;
        let mut acc = 0.0;
        for (p, dp, ddp) in vals {
            if p > tiny {
                acc += dp * dp / p;
            } else {
                // Near a double zero p'²/p → 2p''.
                acc += (2.0 * ddp).max(0.0);
            }
        }
        total += b.weight * acc * h / (2.0 * PI);
    }
    Ok(total)
}

/// CFI of projective `S^x` measurement after an extra rotation
/// `e^{-iθS^z}`, per block.
pub fn cfi_sx(state: &BlockedDensityMatrix, theta: f64) -> Result<f64> {
    let mut total = 0.0;
    for b in &state.blocks {
        if b.weight == 0.0 {
            continue;
        }
        check_hermitian(&b.matrix, 1e-10)?;
        let dim = b.dim();
        let two_s = dim as i64 - 1;
        let mz: Vec<f64> = (0..dim).map(|i| m_of_index(i, dim)).collect();
        let rho = DMatrix::from_fn(dim, dim, |i, j| {
            b.matrix[(i, j)] * C64::from_polar(1.0, -theta * (mz[i] - mz[j]))
        });
        let drho = DMatrix::from_fn(dim, dim, |i, j| C64::new(0.0, -(mz[i] - mz[j])) * rho[(i, j)]);
        let mut probs = Vec::with_capacity(dim);
        for k in 0..dim {
            let v = wigner_d_column(dim, 2 * k as i64 - two_s, PI / 2.0);
            let quad = |m: &DMatrix<C64>| -> f64 {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..dim {
                    for j in 0..dim {
                        acc += m[(i, j)] * (v[i] * v[j]);
                    }
                }
                acc.re
            };
            probs.push((quad(&rho), quad(&drho)));
        }
        let pmax = probs.iter().map(|p| p.0).fold(0.0, f64::max);
        let acc: f64 = probs
            .iter()
            .filter(|(p, _)| *p > 1e-14 * pmax)
            .map(|(p, dp)| dp * dp / p)
            .sum();
        total += b.weight * acc;
    }
    Ok(total)
}

/// Sampled phase-error density on a midpoint grid over `(-π, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDistribution {
    pub theta: Vec<f64>,
    pub density: Vec<f64>,
}

impl PhaseDistribution {
    fn step(&self) -> f64 {
        2.0 * PI / self.theta.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.step()
    }

    /// `∫ θ² p(θ) dθ` (the distribution is centered at zero).
    pub fn variance(&self) -> f64 {
        self.theta
            .iter()
            .zip(&self.density)
            .map(|(t, p)| t * t * p)
            .sum::<f64>()
            * self.step()
    }
}

fn midpoint_grid(grid_size: usize) -> Vec<f64> {
    let h = 2.0 * PI / grid_size as f64;
    (0..grid_size).map(|k| -PI + (k as f64 + 0.5) * h).collect()
}

/// Closed-form error density of the cosine probe under canonical phase
/// measurement. At the removable singularity `cos δθ = cos(π/(N+1))` the
/// density is evaluated from the amplitude sum instead.
pub fn cosine_phase_density(n: usize, dth: f64) -> f64 {
    let nf = n as f64 + 1.0;
    let den = dth.cos() - (PI / nf).cos();
    if den.abs() < 1e-6 {
        let dim = n + 1;
        let pref = (2.0 / nf).sqrt();
        let amp: C64 = (0..dim)
            .map(|i| {
                let m = m_of_index(i, dim);
                C64::from_polar(pref * (PI * m / nf).cos(), m * dth)
            })
            .sum();
        return amp.norm_sqr() / (2.0 * PI);
    }
    let num = (PI / (2.0 * nf)).sin() * (dth / 2.0).cos() * (nf * dth / 2.0).cos();
    4.0 / (nf * PI) * (num / den).powi(2)
}

/// Samples [`cosine_phase_density`] on a midpoint grid.
pub fn cosine_phase_distribution(n: usize, grid_size: usize) -> Result<PhaseDistribution> {
    if n < 2 {
        return domain(format!("N must be at least 2, got {n}"));
    }
    if grid_size < 2 * (n + 1) {
        return invalid(format!("grid of {grid_size} points cannot resolve N={n}"));
    }
    let theta = midpoint_grid(grid_size);
    let density = theta.iter().map(|&t| cosine_phase_density(n, t)).collect();
    Ok(PhaseDistribution { theta, density })
}

/// Wrapped Gaussian density of variance `var` on `(-π, π]`.
pub fn wrapped_gaussian(var: f64, x: f64) -> f64 {
    if var == 0.0 {
        return 0.0;
    }
    let sd = var.sqrt();
    let images = (8.0 * sd / (2.0 * PI)).ceil() as i64 + 2;
    (-images..=images)
        .map(|k| {
            let y = x + 2.0 * PI * k as f64;
            (-y * y / (2.0 * var)).exp()
        })
        .sum::<f64>()
        / (2.0 * PI * var).sqrt()
}

/// Density at `theta` of the cosine-probe error convolved with a wrapped
/// Gaussian of variance `gamma0`, by quadrature over `grid_size` points.
pub fn convolved_phase_density(n: usize, gamma0: f64, theta: f64, grid_size: usize) -> f64 {
    if gamma0 == 0.0 {
        return cosine_phase_density(n, theta);
    }
    let h = 2.0 * PI / grid_size as f64;
    midpoint_grid(grid_size)
        .into_iter()
        .map(|u| cosine_phase_density(n, u) * wrapped_gaussian(gamma0, theta - u))
        .sum::<f64>()
        * h
}

/// Two-sided bound on the optimal `1/F` under collective dephasing:
/// `Γ⁰ + 1/N² ≤ 1/F ≤ (Γ⁰ + π²/N²)/(1 - 2π p̃(π))²`, with `p̃` the
/// cosine-probe error density convolved with the random-phase Gaussian.
pub fn dephasing_error_bounds(n: usize, gamma0: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return domain(format!("N must be at least 2, got {n}"));
    }
    if !gamma0.is_finite() || gamma0 < 0.0 {
        return domain(format!("Gamma0 must be non-negative, got {gamma0}"));
    }
    let n2 = (n * n) as f64;
    let lower = gamma0 + 1.0 / n2;
    let grid = (64 * (n + 1)).max(4096);
    let pt = convolved_phase_density(n, gamma0, PI, grid);
    let upper = (gamma0 + PI * PI / n2) / (1.0 - 2.0 * PI * pt).powi(2);
    Ok((lower, upper))
}

/// QFI of a built-in probe family under collective dephasing.
pub fn family_qfi_dephasing(family: &ProbeFamily, n: usize, gamma0: f64) -> Result<f64> {
    let probe = make_probe(family, n)?;
    let ch = crate::channels::Channel::collective_dephasing(gamma0)?;
    Ok(qfi(&ch.apply(&probe)?)?.qfi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::to_density;
    use approx::assert_relative_eq;

    #[test]
    fn noon_noiseless() {
        let rho = to_density(&make_probe(&ProbeFamily::Noon, 6).unwrap());
        assert_relative_eq!(qfi_symmetric(&rho).unwrap().qfi, 36.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut rho = to_density(&make_probe(&ProbeFamily::Cosine, 3).unwrap());
        rho.matrix[(0, 1)] += C64::new(0.1, 0.0);
        assert!(qfi_symmetric(&rho).is_err());
    }

    #[test]
    fn two_level_dephasing_law() {
        for n in 1..=12usize {
            for &g in &[0.0, 0.01, 0.05, 0.1] {
                let f = family_qfi_dephasing(&ProbeFamily::Noon, n, g).unwrap();
                let want = (n * n) as f64 * (-g * (n * n) as f64).exp();
                assert_relative_eq!(f, want, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn cosine_density_normalized() {
        for n in [2usize, 3, 10, 61] {
            let pd = cosine_phase_distribution(n, 4096).unwrap();
            assert!((pd.integral() - 1.0).abs() < 1e-12, "N={n}");
        }
    }

    #[test]
    fn sld_reproduces_derivative() {
        let p = make_probe(&ProbeFamily::Cosine, 5).unwrap();
        let ch = crate::channels::Channel::collective_dephasing(0.2).unwrap();
        let state = ch.apply(&p).unwrap();
        let res = qfi_with_sld(&state).unwrap();
        let rho = &state.blocks[0].matrix;
        let l = &res.sld.unwrap()[0];
        let dim = rho.nrows();
        let drho = DMatrix::from_fn(dim, dim, |i, j| C64::new(0.0, -(i as f64 - j as f64)) * rho[(i, j)]);
        let anti = (rho * l + l * rho) * C64::new(0.5, 0.0);
        let err = (&anti - &drho).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }
}
