//! Decoherence channels at finite `N`.
//!
//! Every channel here preserves the offset `m - m'` of a density-matrix
//! entry: collective dephasing multiplies entries by `exp(-Γ⁰(m-m')²/2)`,
//! relaxation and excitation (collective or individual) move weight along
//! the diagonals, and particle loss removes whole particles from one arm.
//! The exact maps are therefore assembled offset by offset. Relaxation and
//! excitation are integrated with fixed-step RK4 over the accumulated
//! exponents; loss is applied through its Kraus decomposition.
//!
//! All exponents are accumulated quantities (rate times duration), so each
//! evolution runs over a unit interval with the exponents as rates.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::spin::{
    coupling_weights, ln_binomial, Block, BlockLabel, BlockedDensityMatrix, ProbeState,
    SymmetricDensityMatrix, C64,
};

/// Largest accumulated exponent allowed per integration step.
pub const MAX_STEP_EXPONENT: f64 = 1e-3;
/// Largest product of step length and the fastest decay rate.
pub const MAX_STEP_STIFFNESS: f64 = 0.1;
/// Tolerance of the end-point comparison between `n` and `n/2` steps,
/// relative to the largest entry of the evolved state.
pub const RICHARDSON_TOL: f64 = 1e-8;

/// Accumulated decoherence exponents.
///
/// `gamma0`, `gamma_minus`, `gamma_plus` are the collective dephasing,
/// relaxation and excitation exponents; the `igamma*` fields are the
/// individual (per-particle) ones; `loss1`, `loss2` are the loss exponents of
/// the two arms, whose transmissions are `exp(-loss1)` and `exp(-loss2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub gamma0: f64,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub igamma0: f64,
    pub igamma_minus: f64,
    pub igamma_plus: f64,
    pub loss1: f64,
    pub loss2: f64,
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn collective_dephasing(gamma0: f64) -> Self {
        NoiseParams {
            gamma0,
            ..Self::default()
        }
    }

    pub fn individual(igamma0: f64, igamma_minus: f64, igamma_plus: f64) -> Self {
        NoiseParams {
            igamma0,
            igamma_minus,
            igamma_plus,
            ..Self::default()
        }
    }

    pub fn loss(gamma0: f64, loss1: f64, loss2: f64) -> Self {
        NoiseParams {
            gamma0,
            loss1,
            loss2,
            ..Self::default()
        }
    }

    fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("gamma0", self.gamma0),
            ("gamma_minus", self.gamma_minus),
            ("gamma_plus", self.gamma_plus),
            ("igamma0", self.igamma0),
            ("igamma_minus", self.igamma_minus),
            ("igamma_plus", self.igamma_plus),
            ("loss1", self.loss1),
            ("loss2", self.loss2),
        ]
    }

    /// All exponents must be finite and non-negative.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !v.is_finite() || v < 0.0 {
                return domain(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Total individual exponent `γ = γ⁰ + γ⁻ + γ⁺`.
    pub fn individual_total(&self) -> f64 {
        self.igamma0 + self.igamma_minus + self.igamma_plus
    }

    pub fn has_individual(&self) -> bool {
        self.individual_total() > 0.0
    }

    pub fn has_collective_transfer(&self) -> bool {
        self.gamma_minus + self.gamma_plus > 0.0
    }

    pub fn has_loss(&self) -> bool {
        self.loss1 + self.loss2 > 0.0
    }

    /// Whether the channel commutes with the reflection `m ↦ -m`.
    pub fn is_mirror_symmetric(&self) -> bool {
        self.gamma_minus == self.gamma_plus
            && self.igamma_minus == self.igamma_plus
            && self.loss1 == self.loss2
    }

    /// Dephasing "mass" `μ₀ = N²Γ⁰`.
    pub fn mu0(&self, n: usize) -> f64 {
        (n * n) as f64 * self.gamma0
    }
}

/// The three noise settings treated by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Collective dephasing, relaxation and excitation.
    Collective,
    /// Individual dephasing, relaxation and excitation, optionally with
    /// collective dephasing on top.
    Individual,
    /// Two-arm particle loss together with collective dephasing.
    Loss,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Collective => "collective",
            ChannelKind::Individual => "individual",
            ChannelKind::Loss => "loss",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "collective" | "dephasing" => Ok(ChannelKind::Collective),
            "individual" => Ok(ChannelKind::Individual),
            "loss" => Ok(ChannelKind::Loss),
            _ => invalid(format!("unknown channel kind `{s}`")),
        }
    }
}

/// A channel kind together with its exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub kind: ChannelKind,
    pub params: NoiseParams,
}

impl Channel {
    /// Checks that only exponents belonging to `kind` are non-zero.
    pub fn new(kind: ChannelKind, params: NoiseParams) -> Result<Self> {
        params.validate()?;
        let stray = match kind {
            ChannelKind::Collective => params.has_individual() || params.has_loss(),
            ChannelKind::Individual => params.has_collective_transfer() || params.has_loss(),
            ChannelKind::Loss => params.has_individual() || params.has_collective_transfer(),
        };
        if stray {
            return invalid(format!("exponents {params:?} do not belong to a {kind} channel"));
        }
        Ok(Channel { kind, params })
    }

    pub fn collective_dephasing(gamma0: f64) -> Result<Self> {
        Self::new(ChannelKind::Collective, NoiseParams::collective_dephasing(gamma0))
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        self.params.is_mirror_symmetric()
    }

    /// Precomputes the linear map for probes of `n` particles.
    pub fn prepare(&self, n: usize) -> Result<PreparedChannel> {
        PreparedChannel::new(self, n)
    }

    /// Applies the channel to a pure probe.
    pub fn apply(&self, probe: &ProbeState) -> Result<BlockedDensityMatrix> {
        let prepared = self.prepare(probe.n_qubits())?;
        Ok(prepared.to_blocked(prepared.apply_pure(probe.amplitudes())))
    }
}

/// `ρ_{mm'} ← ρ_{mm'}·exp(-Γ⁰(m-m')²/2)`.
pub fn collective_dephase(rho: &SymmetricDensityMatrix, gamma0: f64) -> Result<SymmetricDensityMatrix> {
    check_exponent("Gamma0", gamma0)?;
    let mut out = rho.clone();
    dephase_matrix(&mut out.matrix, gamma0);
    Ok(out)
}

/// Collective dephasing applied to each block of a blocked state.
pub fn collective_dephase_blocks(state: &BlockedDensityMatrix, gamma0: f64) -> Result<BlockedDensityMatrix> {
    check_exponent("Gamma0", gamma0)?;
    let mut out = state.clone();
    for b in &mut out.blocks {
        dephase_matrix(&mut b.matrix, gamma0);
    }
    Ok(out)
}

fn dephase_matrix(m: &mut DMatrix<C64>, gamma0: f64) {
    if gamma0 == 0.0 {
        return;
    }
    let d = m.nrows();
    for j in 0..d {
        for i in 0..d {
            let off = i as f64 - j as f64;
            m[(i, j)] *= (-gamma0 * off * off / 2.0).exp();
        }
    }
}

fn check_exponent(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return domain(format!("{name} must be finite and non-negative, got {v}"));
    }
    Ok(())
}

/// Lindblad rates over the unit integration interval.
#[derive(Debug, Clone, Copy, Default)]
struct Rates {
    coll_minus: f64,
    coll_plus: f64,
    ind0: f64,
    ind_minus: f64,
    ind_plus: f64,
}

impl Rates {
    fn from_params(p: &NoiseParams) -> Self {
        Rates {
            coll_minus: p.gamma_minus,
            coll_plus: p.gamma_plus,
            ind0: p.igamma0,
            ind_minus: p.igamma_minus,
            ind_plus: p.igamma_plus,
        }
    }

    fn total(&self) -> f64 {
        self.coll_minus + self.coll_plus + self.ind0 + self.ind_minus + self.ind_plus
    }

    fn is_zero(&self) -> bool {
        self.total() == 0.0
    }

    fn individual(&self) -> bool {
        self.ind0 + self.ind_minus + self.ind_plus > 0.0
    }

    /// Upper bound on the largest diagonal decay rate for `n` particles.
    fn stiffness(&self, n: usize) -> f64 {
        let s = n as f64 / 2.0;
        let nf = n as f64;
        (self.coll_minus + self.coll_plus) * (s + 0.5) * (s + 0.5)
            + self.ind0 * nf / 4.0
            + (self.ind_minus + self.ind_plus) * nf
    }
}

/// Number of RK4 steps satisfying both the per-step exponent cap and the
/// stiffness cap for the relaxation/excitation parts of `params` (always
/// even, at least 2).
pub fn required_steps(params: &NoiseParams, n: usize) -> usize {
    let r = Rates::from_params(params);
    steps_for(&r, n)
}

fn steps_for(r: &Rates, n: usize) -> usize {
    let a = (r.total() / MAX_STEP_EXPONENT).ceil() as usize;
    let b = (r.stiffness(n) / MAX_STEP_STIFFNESS).ceil() as usize;
    let s = a.max(b).max(2);
    s + s % 2
}

fn check_steps(r: &Rates, n: usize, steps: usize) -> Result<()> {
    if r.is_zero() {
        return Ok(());
    }
    if steps == 0 {
        return invalid("at least one integration step is required");
    }
    let per = r.total() / steps as f64;
    if per > MAX_STEP_EXPONENT * (1.0 + 1e-12) {
        return invalid(format!(
            "{steps} steps give a per-step exponent {per:.3e} above {MAX_STEP_EXPONENT:e}; use at least {}",
            steps_for(r, n)
        ));
    }
    let stiff = r.stiffness(n) / steps as f64;
    if stiff > MAX_STEP_STIFFNESS * (1.0 + 1e-12) {
        return invalid(format!(
            "{steps} steps give a per-step decay {stiff:.3e} above {MAX_STEP_STIFFNESS}; use at least {}",
            steps_for(r, n)
        ));
    }
    Ok(())
}

/// Layout of the entries with a fixed offset `d = i - j` across blocks of
/// dimensions `dims`: block `b` contributes rows `i = d..dims[b]`.
struct OffsetSlots {
    bases: Vec<usize>,
    len: usize,
}

impl OffsetSlots {
    fn new(dims: &[usize], d: usize) -> Self {
        let mut bases = Vec::with_capacity(dims.len());
        let mut len = 0;
        for &dim in dims {
            bases.push(len);
            len += dim.saturating_sub(d);
        }
        OffsetSlots { bases, len }
    }

    fn slot(&self, b: usize, i: usize, d: usize) -> usize {
        self.bases[b] + i - d
    }
}

/// Sparse real generator of the linear evolution of one offset.
struct Generator {
    diag: Vec<f64>,
    terms: Vec<(usize, usize, f64)>,
}

/// `⟨J M| j μ; ½ σ⟩` for `M = μ + σ`, `σ = ±½`, `J = j ± ½`.
fn cg_half(j: f64, sigma: f64, big_j: f64, big_m: f64) -> f64 {
    let den = 2.0 * j + 1.0;
    if big_j == j + 0.5 {
        if sigma > 0.0 {
            ((j + big_m + 0.5) / den).max(0.0).sqrt()
        } else {
            ((j - big_m + 0.5) / den).max(0.0).sqrt()
        }
    } else if sigma > 0.0 {
        -((j - big_m + 0.5) / den).max(0.0).sqrt()
    } else {
        ((j + big_m + 0.5) / den).max(0.0).sqrt()
    }
}

#[derive(Clone, Copy)]
enum Process {
    Dephase,
    Relax,
    Excite,
}

impl Process {
    /// Shift of `m` between output and input entries.
    fn delta(self) -> f64 {
        match self {
            Process::Dephase => 0.0,
            Process::Relax => 1.0,
            Process::Excite => -1.0,
        }
    }
}

/// Matrix element `⟨S' m| a_1 |S, m+Δ⟩` within one coupling of qubit 1 to
/// an `(N-1)`-qubit spin `j`, for the single-qubit operator of `process`.
fn reduced_element(process: Process, s: f64, j: f64, s_out: f64, m: f64) -> f64 {
    // (σ', σ, amplitude) pairs of the single-qubit operator.
    let pairs: &[(f64, f64, f64)] = match process {
        Process::Dephase => &[(0.5, 0.5, 0.5), (-0.5, -0.5, -0.5)],
        Process::Relax => &[(-0.5, 0.5, 1.0)],
        Process::Excite => &[(0.5, -0.5, 1.0)],
    };
    let mut acc = 0.0;
    for &(sp, sg, amp) in pairs {
        let mu = m - sp;
        let a = mu + sg;
        if mu.abs() > j + 1e-9 || a.abs() > s + 1e-9 {
            continue;
        }
        acc += cg_half(j, sp, s_out, m) * amp * cg_half(j, sg, s, a);
    }
    acc
}

impl Generator {
    /// Generator for offset `d` on spin blocks `two_s` of an `n`-particle
    /// system.
    fn build(n: usize, two_s: &[u32], d: usize, rates: &Rates) -> Generator {
        let dims: Vec<usize> = two_s.iter().map(|&t| t as usize + 1).collect();
        let slots = OffsetSlots::new(&dims, d);
        let mut diag = vec![0.0; slots.len];
        let mut terms = Vec::new();
        let nf = n as f64;
        let ind = [
            (Process::Dephase, rates.ind0),
            (Process::Relax, rates.ind_minus),
            (Process::Excite, rates.ind_plus),
        ];
        for (bo, &ts_out) in two_s.iter().enumerate() {
            let s_out = ts_out as f64 / 2.0;
            let dim = dims[bo];
            for i in d..dim {
                let to = slots.slot(bo, i, d);
                let m = i as f64 - s_out;
                let mp = m - d as f64;
                let c = |m: f64| (s_out + m) * (s_out - m + 1.0);
                let cp = |m: f64| (s_out - m) * (s_out + m + 1.0);
                let mut dg = -0.5 * rates.coll_minus * (c(m) + c(mp));
                dg -= 0.5 * rates.coll_plus * (cp(m) + cp(mp));
                dg -= rates.ind0 * nf / 4.0;
                dg -= 0.5 * rates.ind_minus * (nf + m + mp);
                dg -= 0.5 * rates.ind_plus * (nf - m - mp);
                diag[to] = dg;
                if rates.coll_minus > 0.0 && i + 1 < dim {
                    let f = |m: f64| ((s_out - m) * (s_out + m + 1.0)).sqrt();
                    let from = slots.slot(bo, i + 1, d);
                    terms.push((to, from, rates.coll_minus * f(m) * f(mp)));
                }
                if rates.coll_plus > 0.0 && i >= d + 1 {
                    let h = |m: f64| ((s_out + m) * (s_out - m + 1.0)).sqrt();
                    let from = slots.slot(bo, i - 1, d);
                    terms.push((to, from, rates.coll_plus * h(m) * h(mp)));
                }
                if !rates.individual() {
                    continue;
                }
                for (bi, &ts_in) in two_s.iter().enumerate() {
                    if (ts_in as i64 - ts_out as i64).abs() > 2 {
                        continue;
                    }
                    let s_in = ts_in as f64 / 2.0;
                    let (w_plus, w_minus) = coupling_weights(n as u32, ts_in);
                    for &(j, w) in &[(s_in + 0.5, w_plus), (s_in - 0.5, w_minus)] {
                        if j < 0.0 || w <= 0.0 || (s_out - j).abs() != 0.5 {
                            continue;
                        }
                        for &(process, rate) in &ind {
                            if rate == 0.0 {
                                continue;
                            }
                            let a = m + process.delta();
                            let b = mp + process.delta();
                            if a.abs() > s_in + 1e-9 || b.abs() > s_in + 1e-9 {
                                continue;
                            }
                            let g = reduced_element(process, s_in, j, s_out, m)
                                * reduced_element(process, s_in, j, s_out, mp);
                            if g == 0.0 {
                                continue;
                            }
                            let ia = (a + s_in).round() as usize;
                            let from = slots.slot(bi, ia, d);
                            terms.push((to, from, rate * nf * w * g));
                        }
                    }
                }
            }
        }
        Generator { diag, terms }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    /// `out = L x` for a row-major `len × k` block of columns.
    fn apply(&self, x: &[f64], k: usize, out: &mut [f64]) {
        for (r, &dg) in self.diag.iter().enumerate() {
            for c in 0..k {
                out[r * k + c] = dg * x[r * k + c];
            }
        }
        for &(to, from, coef) in &self.terms {
            for c in 0..k {
                out[to * k + c] += coef * x[from * k + c];
            }
        }
    }

    fn rk4(&self, x: &mut [f64], k: usize, steps: usize) {
        let n = x.len();
        let h = 1.0 / steps as f64;
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        for _ in 0..steps {
            self.apply(x, k, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            self.apply(&tmp, k, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            self.apply(&tmp, k, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            self.apply(&tmp, k, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }

    /// Integrates over the unit interval with `steps` steps and compares the
    /// result against a run with half as many steps. `scale` is the size of
    /// the largest entry of the whole state the columns belong to.
    fn integrate_checked(&self, x0: &[f64], k: usize, steps: usize, scale: f64) -> Result<Vec<f64>> {
        let mut fine = x0.to_vec();
        self.rk4(&mut fine, k, steps);
        let mut coarse = x0.to_vec();
        self.rk4(&mut coarse, k, (steps / 2).max(1));
        let err = fine
            .iter()
            .zip(&coarse)
            .fold(0.0f64, |a, (f, c)| a.max((f - c).abs()))
            / 15.0;
        if err > RICHARDSON_TOL * scale.max(1e-300) {
            return Err(Error::NonConvergence(format!(
                "RK4 end-point estimate {err:.3e} exceeds {RICHARDSON_TOL:e} with {steps} steps"
            )));
        }
        Ok(fine)
    }
}

/// Evolves a symmetric state under collective relaxation (`S⁻`) and
/// excitation (`S⁺`) with accumulated exponents `gamma_minus`, `gamma_plus`.
pub fn evolve_collective_relax_excite(
    rho: &SymmetricDensityMatrix,
    gamma_minus: f64,
    gamma_plus: f64,
    steps: usize,
) -> Result<SymmetricDensityMatrix> {
    check_exponent("GammaMinus", gamma_minus)?;
    check_exponent("GammaPlus", gamma_plus)?;
    let rates = Rates {
        coll_minus: gamma_minus,
        coll_plus: gamma_plus,
        ..Rates::default()
    };
    let n = rho.n_qubits;
    check_steps(&rates, n, steps)?;
    if rates.is_zero() {
        return Ok(rho.clone());
    }
    let blocks = evolve_blocks(n, &[n as u32], &[rho.matrix.clone()], &rates, steps)?;
    let mut matrix = blocks.into_iter().next().expect("one block");
    symmetrize(&mut matrix);
    Ok(SymmetricDensityMatrix { n_qubits: n, matrix })
}

/// Evolves a spin-blocked state under individual dephasing, relaxation and
/// excitation. The output carries every spin sector reachable from `N`
/// particles; blocks that receive no weight have weight zero.
pub fn evolve_individual(
    state: &BlockedDensityMatrix,
    gamma0: f64,
    gamma_minus: f64,
    gamma_plus: f64,
    steps: usize,
) -> Result<BlockedDensityMatrix> {
    check_exponent("gamma0", gamma0)?;
    check_exponent("gammaMinus", gamma_minus)?;
    check_exponent("gammaPlus", gamma_plus)?;
    let n = state.n_qubits;
    let spins = all_spins(n);
    let mut inputs: Vec<DMatrix<C64>> = spins
        .iter()
        .map(|&t| DMatrix::zeros(t as usize + 1, t as usize + 1))
        .collect();
    for b in &state.blocks {
        let BlockLabel::Spin { two_s } = b.label else {
            return invalid(format!("individual noise needs spin-labeled blocks, got {:?}", b.label));
        };
        let Some(pos) = spins.iter().position(|&t| t == two_s) else {
            return invalid(format!("spin 2S={two_s} impossible for N={n}"));
        };
        if b.dim() != two_s as usize + 1 || b.matrix.ncols() != b.dim() {
            return invalid(format!(
                "block 2S={two_s} has shape {}x{}",
                b.matrix.nrows(),
                b.matrix.ncols()
            ));
        }
        inputs[pos] += &b.matrix * C64::new(b.weight, 0.0);
    }
    let rates = Rates {
        ind0: gamma0,
        ind_minus: gamma_minus,
        ind_plus: gamma_plus,
        ..Rates::default()
    };
    check_steps(&rates, n, steps)?;
    let outputs = if rates.is_zero() {
        inputs
    } else {
        evolve_blocks(n, &spins, &inputs, &rates, steps)?
    };
    let blocks = spins
        .iter()
        .zip(outputs)
        .map(|(&two_s, mut m)| {
            symmetrize(&mut m);
            let mut b = Block {
                label: BlockLabel::Spin { two_s },
                weight: 1.0,
                matrix: m,
            };
            b.normalize();
            if b.matrix.trace().re.abs() <= 1e-300 {
                b.weight = 0.0;
            }
            b
        })
        .collect();
    Ok(BlockedDensityMatrix { n_qubits: n, blocks })
}

/// Spin labels `2S = N, N-2, …` of `N` particles.
pub fn all_spins(n: usize) -> Vec<u32> {
    (0..=n / 2).map(|k| (n - 2 * k) as u32).collect()
}

fn symmetrize(m: &mut DMatrix<C64>) {
    let d = m.nrows();
    for i in 0..d {
        m[(i, i)].im = 0.0;
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Integrates unnormalized blocks (spins `two_s`) over the unit interval.
fn evolve_blocks(
    n: usize,
    two_s: &[u32],
    blocks: &[DMatrix<C64>],
    rates: &Rates,
    steps: usize,
) -> Result<Vec<DMatrix<C64>>> {
    let dims: Vec<usize> = two_s.iter().map(|&t| t as usize + 1).collect();
    let mut out: Vec<DMatrix<C64>> = dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    let max_dim = dims.iter().copied().max().unwrap_or(0);
    let scale = blocks
        .iter()
        .flat_map(|m| m.iter())
        .fold(0.0f64, |a, z| a.max(z.norm()));
    for d in 0..max_dim {
        let gen = Generator::build(n, two_s, d, rates);
        let slots = OffsetSlots::new(&dims, d);
        // Two real columns: real and imaginary parts of the offset-d entries.
        let mut x = vec![0.0; 2 * gen.len()];
        for (b, m) in blocks.iter().enumerate() {
            for i in d..dims[b] {
                let s = slots.slot(b, i, d);
                x[2 * s] = m[(i, i - d)].re;
                x[2 * s + 1] = m[(i, i - d)].im;
            }
        }
        let y = gen.integrate_checked(&x, 2, steps, scale)?;
        for (b, m) in out.iter_mut().enumerate() {
            for i in d..dims[b] {
                let s = slots.slot(b, i, d);
                let v = C64::new(y[2 * s], y[2 * s + 1]);
                m[(i, i - d)] = v;
                m[(i - d, i)] = v.conj();
            }
        }
    }
    Ok(out)
}

/// Kraus amplitude of losing `l1` of `n1` particles from arm 1 and `l2` of
/// `n2` from arm 2.
fn kraus_amplitude(n1: usize, n2: usize, l1: usize, l2: usize, eta1: f64, eta2: f64) -> f64 {
    if l1 > n1 || l2 > n2 {
        return 0.0;
    }
    let arm = |n: usize, l: usize, eta: f64| -> f64 {
        if l == 0 {
            // η^n, exact also for η = 0 with n = 0.
            return eta.powi(n as i32);
        }
        let lost = 1.0 - eta;
        if lost == 0.0 {
            return 0.0;
        }
        if eta == 0.0 {
            return if l == n { lost.powi(l as i32) } else { 0.0 };
        }
        (ln_binomial(n as u64, l as u64) + (n - l) as f64 * eta.ln() + l as f64 * lost.ln()).exp()
    };
    (arm(n1, l1, eta1) * arm(n2, l2, eta2)).sqrt()
}

fn transmissions(gamma1: f64, gamma2: f64) -> Result<(f64, f64)> {
    check_exponent("gamma1", gamma1)?;
    check_exponent("gamma2", gamma2)?;
    Ok(((-gamma1).exp(), (-gamma2).exp()))
}

/// Two-arm loss resolved into Kraus branches `(l1, l2)`. Index `i` of the
/// input counts the particles in arm 1, so `N - i` are in arm 2. This is the
/// state when the environment records which arm lost each particle.
pub fn loss_branches(rho: &SymmetricDensityMatrix, gamma1: f64, gamma2: f64) -> Result<BlockedDensityMatrix> {
    let (eta1, eta2) = transmissions(gamma1, gamma2)?;
    let n = rho.n_qubits;
    let mut blocks = Vec::new();
    for l1 in 0..=n {
        for l2 in 0..=(n - l1) {
            let dim = n - l1 - l2 + 1;
            let amp: Vec<f64> = (0..dim)
                .map(|ip| kraus_amplitude(ip + l1, n - ip - l1, l1, l2, eta1, eta2))
                .collect();
            if amp.iter().all(|&a| a == 0.0) {
                continue;
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| rho.matrix[(i + l1, j + l1)] * (amp[i] * amp[j]));
            let mut b = Block {
                label: BlockLabel::Loss {
                    l1: l1 as u32,
                    l2: l2 as u32,
                },
                weight: 1.0,
                matrix: m,
            };
            b.normalize();
            blocks.push(b);
        }
    }
    Ok(BlockedDensityMatrix { n_qubits: n, blocks })
}

/// Two-arm loss on a pure probe. The output is split by the total number of
/// lost particles, which photon counting reveals; how the losses were
/// distributed between the arms is not resolved, so branches with equal
/// totals are summed. Sectors with zero weight are omitted.
pub fn apply_two_mode_loss(probe: &ProbeState, gamma1: f64, gamma2: f64) -> Result<BlockedDensityMatrix> {
    let channel = Channel::new(ChannelKind::Loss, NoiseParams::loss(0.0, gamma1, gamma2))?;
    let prepared = channel.prepare(probe.n_qubits())?;
    let mut out = prepared.to_blocked(prepared.apply_pure(probe.amplitudes()));
    out.blocks.retain(|b| b.weight > 0.0);
    Ok(out)
}

/// Converts a loss exponent to the parameter `r = N(e^γ - 1)` and the
/// transmission `e^{-γ} = N/(N + r)`.
pub fn loss_rate_conversion(gamma: f64, n: usize) -> Result<(f64, f64)> {
    check_exponent("gamma", gamma)?;
    if n == 0 {
        return domain("N must be at least 1");
    }
    Ok((n as f64 * gamma.exp_m1(), (-gamma).exp()))
}

/// Inverse of [`loss_rate_conversion`]: the exponent `ln(1 + r/N)`.
pub fn loss_exponent_from_r(r: f64, n: usize) -> Result<f64> {
    check_exponent("r", r)?;
    if n == 0 {
        return domain("N must be at least 1");
    }
    Ok((r / n as f64).ln_1p())
}

/// Continuum drift, diffusion and absorption of individual noise at
/// `x = m/N`, `y = S/N`, per unit of accumulated exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftDiffusion {
    pub v_x: f64,
    pub v_y: f64,
    pub d_xx: f64,
    pub d_xy: f64,
    pub d_yy: f64,
    /// Induced dephasing rate `μ̇ = Nγ̇/(4(y² - x²))`.
    pub absorption: f64,
}

/// Evaluates the continuum coefficients for the individual rates in
/// `rates` (`igamma0`, `igamma_minus`, `igamma_plus`).
pub fn drift_diffusion_at(x: f64, y: f64, rates: &NoiseParams, n: usize) -> Result<DriftDiffusion> {
    rates.validate()?;
    if !(x.is_finite() && y.is_finite()) || y > 0.5 || x.abs() >= y {
        return domain(format!("need |x| < y <= 1/2, got x={x}, y={y}"));
    }
    if n == 0 {
        return domain("N must be at least 1");
    }
    let (g0, gm, gp) = (rates.igamma0, rates.igamma_minus, rates.igamma_plus);
    let nf = n as f64;
    let y2 = y * y;
    let x2 = x * x;
    Ok(DriftDiffusion {
        v_x: -(0.5 + x) * gm + (0.5 - x) * gp,
        v_y: -(y2 - x2) / (2.0 * y) * g0 - (y2 + x * (1.0 + x)) / (2.0 * y) * gm
            - (y2 - x * (1.0 - x)) / (2.0 * y) * gp,
        d_xx: ((0.5 + x) * gm + (0.5 - x) * gp) / nf,
        d_xy: ((y2 + x * (1.0 + x)) / (2.0 * y) * gm - (y2 - x * (1.0 - x)) / (2.0 * y) * gp) / nf,
        d_yy: ((y2 - x2) / (4.0 * y2) * g0
            + ((y2 + x2) / (4.0 * y2) + x) * gm
            + ((y2 + x2) / (4.0 * y2) - x) * gp)
            / nf,
        absorption: nf * rates.individual_total() / (4.0 * (y2 - x2)),
    })
}

/// Map of one offset `d`: output rows `(block, i)` holding entries
/// `(i, i-d)` and the real matrix taking input entries `(j+d, j)`,
/// `j = 0..N+1-d`, to them.
struct OffsetMap {
    rows: Vec<(usize, usize)>,
    p: DMatrix<f64>,
}

/// A channel precomputed as a linear map from `S = N/2` density matrices to
/// blocked outputs. Output blocks are unnormalized: block `b` holds
/// `weight_b · ρ_b`.
pub struct PreparedChannel {
    n: usize,
    labels: Vec<BlockLabel>,
    dims: Vec<usize>,
    offsets: Vec<OffsetMap>,
    mirror_symmetric: bool,
}

impl PreparedChannel {
    fn new(channel: &Channel, n: usize) -> Result<Self> {
        if n == 0 {
            return domain("N must be at least 1");
        }
        let params = channel.params;
        params.validate()?;
        let rates = Rates::from_params(&params);
        let lossy = channel.kind == ChannelKind::Loss;
        let (labels, dims): (Vec<BlockLabel>, Vec<usize>) = if lossy {
            (0..=n)
                .map(|l| (BlockLabel::Lost { lost: l as u32 }, n - l + 1))
                .unzip()
        } else if rates.individual() {
            all_spins(n)
                .into_iter()
                .map(|t| (BlockLabel::Spin { two_s: t }, t as usize + 1))
                .unzip()
        } else {
            (vec![BlockLabel::Spin { two_s: n as u32 }], vec![n + 1])
        };
        let spins: Vec<u32> = if rates.individual() { all_spins(n) } else { vec![n as u32] };
        let steps = steps_for(&rates, n);
        let (eta1, eta2) = transmissions(params.loss1, params.loss2)?;
        let mut offsets = Vec::with_capacity(n + 1);
        for d in 0..=n {
            let cols = n + 1 - d;
            let factor = (-params.gamma0 * (d * d) as f64 / 2.0).exp();
            // Linear evolution within the spin blocks.
            let (ode_rows, ode) = if rates.is_zero() {
                let rows: Vec<(usize, usize)> = (d..=n).map(|i| (0, i)).collect();
                (rows, DMatrix::<f64>::identity(cols, cols))
            } else {
                let gen = Generator::build(n, &spins, d, &rates);
                let sdims: Vec<usize> = spins.iter().map(|&t| t as usize + 1).collect();
                let slots = OffsetSlots::new(&sdims, d);
                let mut x = vec![0.0; gen.len() * cols];
                for j in 0..cols {
                    x[slots.slot(0, j + d, d) * cols + j] = 1.0;
                }
                let y = gen.integrate_checked(&x, cols, steps, 1.0)?;
                let mut rows = Vec::with_capacity(gen.len());
                for (b, &dim) in sdims.iter().enumerate() {
                    for i in d..dim {
                        rows.push((b, i));
                    }
                }
                (rows, DMatrix::from_row_slice(gen.len(), cols, &y))
            };
            let (rows, p) = if lossy {
                // Loss acts on the S = N/2 output only (no individual noise here).
                let mut rows = Vec::new();
                let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
                for lost in 0..=n {
                    let dim = n - lost + 1;
                    for ip in d..dim {
                        let mut row = Vec::new();
                        for l1 in 0..=lost {
                            let l2 = lost - l1;
                            let i = ip + l1;
                            let j = i - d;
                            let a = kraus_amplitude(i, n - i, l1, l2, eta1, eta2)
                                * kraus_amplitude(j, n - j, l1, l2, eta1, eta2);
                            if a != 0.0 {
                                row.push((j, a));
                            }
                        }
                        rows.push((lost, ip));
                        entries.push(row);
                    }
                }
                let mut kraus = DMatrix::<f64>::zeros(rows.len(), cols);
                for (r, row) in entries.iter().enumerate() {
                    for &(j, a) in row {
                        kraus[(r, j)] += a;
                    }
                }
                // Compose with the spin-block evolution, whose rows are (0, i)
                // with i = j + d in the same order as the input columns.
                (rows, kraus * ode)
            } else {
                (ode_rows, ode)
            };
            offsets.push(OffsetMap { rows, p: p * factor });
        }
        Ok(PreparedChannel {
            n,
            labels,
            dims,
            offsets,
            mirror_symmetric: channel.is_mirror_symmetric(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[BlockLabel] {
        &self.labels
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        self.mirror_symmetric
    }

    /// Applies the map to a density matrix on the `S = N/2` space.
    pub fn apply(&self, rho: &DMatrix<C64>) -> Vec<DMatrix<C64>> {
        let mut out: Vec<DMatrix<C64>> = self.dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        for (d, om) in self.offsets.iter().enumerate() {
            let cols = self.n + 1 - d;
            let re = nalgebra::DVector::from_fn(cols, |j, _| rho[(j + d, j)].re);
            let im = nalgebra::DVector::from_fn(cols, |j, _| rho[(j + d, j)].im);
            let yr = &om.p * re;
            let yi = &om.p * im;
            for (r, &(b, i)) in om.rows.iter().enumerate() {
                let v = C64::new(yr[r], yi[r]);
                out[b][(i, i - d)] = v;
                if d > 0 {
                    out[b][(i - d, i)] = v.conj();
                }
            }
        }
        out
    }

    /// Applies the map to `|ψ⟩⟨ψ|`.
    pub fn apply_pure(&self, psi: &[C64]) -> Vec<DMatrix<C64>> {
        let d = psi.len();
        let rho = DMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj());
        self.apply(&rho)
    }

    /// Adjoint map: given one Hermitian matrix per output block, returns the
    /// Hermitian `H` with `Σ_b Tr(E(ρ)_b G_b) = Tr(ρ H)` for all `ρ`.
    pub fn adjoint(&self, g: &[DMatrix<C64>]) -> DMatrix<C64> {
        let dim = self.n + 1;
        let mut h = DMatrix::<C64>::zeros(dim, dim);
        for (d, om) in self.offsets.iter().enumerate() {
            let rows = om.rows.len();
            let gr = nalgebra::DVector::from_fn(rows, |r, _| {
                let (b, i) = om.rows[r];
                g[b][(i - d, i)].re
            });
            let gi = nalgebra::DVector::from_fn(rows, |r, _| {
                let (b, i) = om.rows[r];
                g[b][(i - d, i)].im
            });
            let hr = om.p.tr_mul(&gr);
            let hi = om.p.tr_mul(&gi);
            for j in 0..dim - d {
                let v = C64::new(hr[j], hi[j]);
                h[(j, j + d)] = v;
                if d > 0 {
                    h[(j + d, j)] = v.conj();
                }
            }
        }
        h
    }

    /// Wraps unnormalized output blocks as a [`BlockedDensityMatrix`].
    pub fn to_blocked(&self, blocks: Vec<DMatrix<C64>>) -> BlockedDensityMatrix {
        let blocks = self
            .labels
            .iter()
            .zip(blocks)
            .map(|(&label, matrix)| {
                let mut b = Block {
                    label,
                    weight: 1.0,
                    matrix,
                };
                b.normalize();
                if b.matrix.trace().re.abs() <= 1e-300 {
                    b.weight = 0.0;
                }
                b
            })
            .collect();
        BlockedDensityMatrix {
            n_qubits: self.n,
            blocks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{make_probe, to_density, ProbeFamily};
    use approx::assert_abs_diff_eq;

    #[test]
    fn dephasing_examples() {
        let rho = to_density(&make_probe(&ProbeFamily::Noon, 2).unwrap());
        let out = collective_dephase(&rho, 0.5).unwrap();
        assert_abs_diff_eq!(out.matrix[(0, 2)].re, 0.5 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(collective_dephase(&rho, 0.0).unwrap(), rho);
        assert!(matches!(collective_dephase(&rho, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn cg_rows_are_normalized() {
        for two_j in 0..8 {
            let j = two_j as f64 / 2.0;
            for two_big_m in -(two_j + 1)..=(two_j + 1) {
                if (two_big_m + two_j + 1) % 2 != 0 {
                    continue;
                }
                let big_m = two_big_m as f64 / 2.0;
                for &big_j in &[j + 0.5, j - 0.5] {
                    if big_j < 0.0 || big_m.abs() > big_j {
                        continue;
                    }
                    let mut norm = 0.0;
                    for &sg in &[0.5, -0.5] {
                        if (big_m - sg).abs() <= j {
                            norm += cg_half(j, sg, big_j, big_m).powi(2);
                        }
                    }
                    assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn single_qubit_amplitude_damping() {
        let rho = to_density(&ProbeState::from_real(1, &[0.0, 1.0]).unwrap());
        for &t in &[0.1, 0.5, 1.3] {
            let steps = required_steps(&NoiseParams { gamma_minus: t, ..Default::default() }, 1);
            let out = evolve_collective_relax_excite(&rho, t, 0.0, steps).unwrap();
            assert_abs_diff_eq!(out.matrix[(1, 1)].re, (-t).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn step_cap_is_enforced() {
        let rho = to_density(&make_probe(&ProbeFamily::Cosine, 4).unwrap());
        assert!(matches!(
            evolve_collective_relax_excite(&rho, 0.5, 0.0, 10),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn single_qubit_individual_dephasing() {
        let probe = make_probe(&ProbeFamily::SpinCoherent, 1).unwrap();
        let state = BlockedDensityMatrix::from_symmetric(&to_density(&probe));
        for &t in &[0.2, 1.0] {
            let steps = required_steps(&NoiseParams::individual(t, 0.0, 0.0), 1);
            let out = evolve_individual(&state, t, 0.0, 0.0, steps).unwrap();
            let b = out.block(BlockLabel::Spin { two_s: 1 }).unwrap();
            assert_abs_diff_eq!(b.weight * b.matrix[(0, 1)].re, 0.5 * (-t / 2.0).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn loss_conversion_examples() {
        let g = loss_exponent_from_r(10.0, 30).unwrap();
        let (r, t) = loss_rate_conversion(g, 30).unwrap();
        assert_abs_diff_eq!(r, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t, 0.75, epsilon = 1e-15);
        assert_eq!(loss_rate_conversion(0.0, 5).unwrap(), (0.0, 1.0));
        let (r, t) = loss_rate_conversion(2f64.ln(), 30).unwrap();
        assert_abs_diff_eq!(r, 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn drift_examples() {
        let n = 50;
        let dd = drift_diffusion_at(0.0, 0.5, &NoiseParams::individual(0.3, 0.0, 0.0), n).unwrap();
        assert_abs_diff_eq!(dd.absorption, n as f64 * 0.3, epsilon = 1e-12);
        let zero = drift_diffusion_at(0.1, 0.3, &NoiseParams::default(), n).unwrap();
        assert_eq!(zero.v_x, 0.0);
        assert_eq!(zero.d_yy, 0.0);
        assert_eq!(zero.absorption, 0.0);
        assert!(matches!(
            drift_diffusion_at(0.3, 0.3, &NoiseParams::default(), n),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn adjoint_matches_forward_map() {
        let ch = Channel::new(ChannelKind::Individual, NoiseParams::individual(0.05, 0.1, 0.02)).unwrap();
        let n = 5;
        let pc = ch.prepare(n).unwrap();
        let psi: Vec<C64> = (0..=n).map(|i| C64::new(1.0 + i as f64, 0.3 * i as f64)).collect();
        let out = pc.apply_pure(&psi);
        let g: Vec<DMatrix<C64>> = out
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let d = b.nrows();
                let a = DMatrix::from_fn(d, d, |i, j| C64::new((i + 2 * j + k) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
                &a + a.adjoint()
            })
            .collect();
        let lhs: C64 = out.iter().zip(&g).map(|(e, gb)| (e * gb).trace()).sum();
        let h = pc.adjoint(&g);
        let rho = DMatrix::from_fn(n + 1, n + 1, |i, j| psi[i] * psi[j].conj());
        let rhs = (&rho * h).trace();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }
}
