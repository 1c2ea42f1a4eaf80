//! Symmetric spin ensembles: probe states, rotation matrix elements and
//! density-matrix containers.
//!
//! Index convention, used throughout the crate: an amplitude or matrix index
//! `i` in a space of spin `S` (dimension `2S+1`) labels the `S^z` eigenvalue
//! `m = i - S`. For the fully symmetric space of `N` qubits, `S = N/2` and
//! `i = 0` is `m = -N/2`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};

pub type C64 = Complex64;



/// A half-integer quantum number stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(i64);

impl HalfInt {
    pub fn from_twice(twice: i64) -> Self {
        HalfInt(twice)
    }

    /// Converts a float that must be an exact multiple of one half.
    pub fn from_f64(x: f64) -> Result<Self> {
        let t = 2.0 * x;
        if !t.is_finite() || (t - t.round()).abs() > 1e-9 {
            return domain(format!("{x} is not a half-integer"));
        }
        Ok(HalfInt(t.round() as i64))
    }

    pub fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

/// `m` value of index `i` in a space of dimension `dim`.
#[inline]
pub fn m_of_index(i: usize, dim: usize) -> f64 {
    i as f64 - (dim as f64 - 1.0) / 2.0
}

/// `S^z` eigenvalues of a space of dimension `dim`, in index order.
pub fn sz_values(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| m_of_index(i, dim)).collect()
}

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(4097);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..=4096u32 {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    let table = ln_factorial_table();
    if (n as usize) < table.len() {
        table[n as usize]
    } else {
        let mut acc = table[table.len() - 1];
        for k in table.len() as u64..=n {
            acc += (k as f64).ln();
        }
        acc
    }
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Jacobi polynomial `P_n^{(a,b)}(x)` by the forward three-term recurrence.
fn jacobi(n: u64, a: f64, b: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = (a + 1.0) + 0.5 * (a + b + 2.0) * (x - 1.0);
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + a + b;
        let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (c * (c - 2.0) * x + a * a - b * b);
        let a3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
        let p2 = (a2 * p1 - a3 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Wigner small-d element `d^S_{m,m'}(β)` with all quantum numbers given as
/// twice their value. Evaluated through the Jacobi-polynomial form with
/// log-factorial prefactors, which stays accurate for `S` in the hundreds.
pub fn wigner_d_twice(two_s: i64, two_m: i64, two_mp: i64, beta: f64) -> f64 {
    // Notation: row index mu = m, column index nu = m'. All twice-valued.
    let (j2, mu2, nu2) = (two_s, two_m, two_mp);
    let cands = [
        (j2 + nu2, nu2, mu2), // k = j + m'
        (j2 - nu2, nu2, mu2), // k = j - m'
        (j2 + mu2, nu2, mu2), // k = j + m
        (j2 - mu2, nu2, mu2), // k = j - m
    ];
    let k2 = cands.iter().map(|c| c.0).min().unwrap();
    // Choose the branch by which of the four attains the minimum.
    let (a2, lambda2) = if k2 == j2 + nu2 {
        (mu2 - nu2, mu2 - nu2)
    } else if k2 == j2 - nu2 {
        (nu2 - mu2, 0)
    } else if k2 == j2 + mu2 {
        (nu2 - mu2, 0)
    } else {
        (mu2 - nu2, mu2 - nu2)
    };
    let k = (k2 / 2) as u64;
    let a = (a2 / 2) as u64;
    let b = j2 - k2 - a2 / 2; // 2j - 2k - a
    debug_assert!(b >= 0);
    let b = b as u64;
    let n_top = (j2 as u64) - k; // 2j - k
    let ln_pref = 0.5 * (ln_binomial(n_top, k + a) - ln_binomial(k + b, b));
    let (sh, ch) = ((beta / 2.0).sin(), (beta / 2.0).cos());
    if (a > 0 && sh == 0.0) || (b > 0 && ch == 0.0) {
        return 0.0;
    }
    // Powers are accumulated in log space; only their signs are tracked.
    let mut ln_trig = 0.0;
    if a > 0 {
        ln_trig += a as f64 * sh.abs().ln();
    }
    if b > 0 {
        ln_trig += b as f64 * ch.abs().ln();
    }
    let mut sign = if (lambda2 / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    if sh < 0.0 && a % 2 == 1 {
        sign = -sign;
    }
    if ch < 0.0 && b % 2 == 1 {
        sign = -sign;
    }
    let p = jacobi(k, a as f64, b as f64, beta.cos());
    sign * (ln_pref + ln_trig).exp() * p
}

/// Wigner small-d element `d^S_{m,m'}(β)` for half-integer arguments.
pub fn wigner_small_d(s: f64, m: f64, mp: f64, beta: f64) -> Result<f64> {
    let (s, m, mp) = (HalfInt::from_f64(s)?, HalfInt::from_f64(m)?, HalfInt::from_f64(mp)?);
    let (s2, m2, mp2) = (s.twice(), m.twice(), mp.twice());
    if s2 < 0 || m2.abs() > s2 || mp2.abs() > s2 || (s2 - m2) % 2 != 0 || (s2 - mp2) % 2 != 0 {
        return domain(format!(
            "invalid quantum numbers S={}, m={}, m'={}",
            s.value(),
            m.value(),
            mp.value()
        ));
    }
    Ok(wigner_d_twice(s2, m2, mp2, beta))
}

/// Column `d^S_{·,m'}(β)` as a vector over `m`, for a space of dimension `dim`.
pub fn wigner_d_column(dim: usize, two_mp: i64, beta: f64) -> Vec<f64> {
    let two_s = dim as i64 - 1;
    (0..dim)
        .map(|i| wigner_d_twice(two_s, 2 * i as i64 - two_s, two_mp, beta))
        .collect()
}

/// Built-in probe families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProbeFamily {
    Noon,
    Cosine,
    PhaseUniform,
    HollandBurnett,
    SpinCoherent,
    /// Weight `p` split over `m = ±N/2`, weight `1-p` at `m = 0`.
    Trident(f64),
    /// Weight `1-p` on `m = ±N/2` and weight `p` on the inner pair at
    /// `m ≈ ±q·N/2` (rounded to the nearest allowed `m`).
    Quad(f64, f64),
    /// `ψ(x) ∝ exp(-K x²/4)` sampled at `x = m/N`.
    Gaussian(f64),
    Custom(Vec<f64>),
}

impl ProbeFamily {
    /// The parameter-free families used as baselines and optimizer seeds.
    pub fn standard() -> Vec<ProbeFamily> {
        vec![
            ProbeFamily::Noon,
            ProbeFamily::Cosine,
            ProbeFamily::PhaseUniform,
            ProbeFamily::HollandBurnett,
            ProbeFamily::SpinCoherent,
        ]
    }

    pub fn name(&self) -> String {
        match self {
            ProbeFamily::Noon => "noon".into(),
            ProbeFamily::Cosine => "cosine".into(),
            ProbeFamily::PhaseUniform => "phase_uniform".into(),
            ProbeFamily::HollandBurnett => "holland_burnett".into(),
            ProbeFamily::SpinCoherent => "spin_coherent".into(),
            ProbeFamily::Trident(p) => format!("trident:{p}"),
            ProbeFamily::Quad(p, q) => format!("quad:{p}:{q}"),
            ProbeFamily::Gaussian(k) => format!("gaussian:{k}"),
            ProbeFamily::Custom(_) => "custom".into(),
        }
    }
}

impl fmt::Display for ProbeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ProbeFamily {
    type Err = Error;

    /// Parses `noon`, `cosine`, `phase_uniform`, `holland_burnett`,
    /// `spin_coherent`, `trident:p`, `quad:p:q`, `gaussian:K` and
    /// `custom:a,b,c,...`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default().to_ascii_lowercase();
        let args: Vec<&str> = parts.collect();
        let num = |i: usize| -> Result<f64> {
            args.get(i)
                .ok_or_else(|| Error::Validation(format!("family `{s}` is missing a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::Validation(format!("family `{s}`: {e}")))
        };
        let fam = match head.as_str() {
            "noon" | "ghz" => ProbeFamily::Noon,
            "cosine" => ProbeFamily::Cosine,
            "phase_uniform" | "phase" => ProbeFamily::PhaseUniform,
            "holland_burnett" | "hb" => ProbeFamily::HollandBurnett,
            "spin_coherent" | "coherent" => ProbeFamily::SpinCoherent,
            "trident" => ProbeFamily::Trident(num(0)?),
            "quad" => ProbeFamily::Quad(num(0)?, num(1)?),
            "gaussian" => ProbeFamily::Gaussian(num(0)?),
            "custom" => {
                let list = args.first().copied().unwrap_or_default();
                let v = list
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Validation(format!("custom amplitudes: {e}")))?;
                ProbeFamily::Custom(v)
            }
            _ => return invalid(format!("unknown probe family `{s}`")),
        };
        Ok(fam)
    }
}

/// Pure probe state in the symmetric space of `N` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeState {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl ProbeState {
    /// Builds a probe from amplitudes, normalizing them. Fails when the length
    /// is not `N+1` or the vector cannot be normalized.
    pub fn new(n_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if n_qubits == 0 {
            return domain("N must be at least 1");
        }
        if amplitudes.len() != n_qubits + 1 {
            return invalid(format!(
                "expected {} amplitudes for N={}, got {}",
                n_qubits + 1,
                n_qubits,
                amplitudes.len()
            ));
        }
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !norm2.is_finite() || norm2 <= 1e-300 {
            return invalid("amplitude vector is not normalizable");
        }
        let s = norm2.sqrt();
        Ok(ProbeState {
            n_qubits,
            amplitudes: amplitudes.into_iter().map(|a| a / s).collect(),
        })
    }

    pub fn from_real(n_qubits: usize, amplitudes: &[f64]) -> Result<Self> {
        Self::new(n_qubits, amplitudes.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn spin(&self) -> f64 {
        self.n_qubits as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.n_qubits + 1
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, m: f64) -> Option<C64> {
        let i = m + self.spin();
        if i < -1e-9 || (i - i.round()).abs() > 1e-9 {
            return None;
        }
        self.amplitudes.get(i.round() as usize).copied()
    }

    /// Real parts of the amplitudes.
    pub fn real_amplitudes(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.re).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &ProbeState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .norm_sqr()
    }
}

/// Constructs a probe of the given family for `N` qubits.
pub fn make_probe(family: &ProbeFamily, n: usize) -> Result<ProbeState> {
    if n == 0 {
        return domain("N must be at least 1");
    }
    let dim = n + 1;
    let nf = n as f64;
    let amps: Vec<f64> = match family {
        ProbeFamily::Noon => {
            let mut v = vec![0.0; dim];
            v[0] = std::f64::consts::FRAC_1_SQRT_2;
            v[n] = std::f64::consts::FRAC_1_SQRT_2;
            v
        }
        ProbeFamily::Cosine => {
            let pref = (2.0 / (nf + 1.0)).sqrt();
            (0..dim)
                .map(|i| pref * (PI * m_of_index(i, dim) / (nf + 1.0)).cos())
                .collect()
        }
        ProbeFamily::PhaseUniform => vec![1.0 / (dim as f64).sqrt(); dim],
        ProbeFamily::HollandBurnett => {
            if n % 2 != 0 {
                return domain(format!("Holland-Burnett probe needs even N, got {n}"));
            }
            wigner_d_column(dim, 0, PI / 2.0)
        }
        ProbeFamily::SpinCoherent => wigner_d_column(dim, n as i64, PI / 2.0),
        ProbeFamily::Trident(p) => {
            check_unit("trident p", *p)?;
            if n % 2 != 0 {
                return domain(format!("trident probe needs an m=0 level (even N), got {n}"));
            }
            let mut v = vec![0.0; dim];
            v[0] = (p / 2.0).sqrt();
            v[n] = (p / 2.0).sqrt();
            v[n / 2] = (1.0 - p).sqrt();
            v
        }
        ProbeFamily::Quad(p, q) => {
            check_unit("quad p", *p)?;
            check_unit("quad q", *q)?;
            let mut w = vec![0.0; dim];
            w[0] += (1.0 - p) / 2.0;
            w[n] += (1.0 - p) / 2.0;
            let inner = ((nf / 2.0) * (1.0 + q)).round() as usize;
            w[inner.min(n)] += p / 2.0;
            w[n - inner.min(n)] += p / 2.0;
            w.into_iter().map(f64::sqrt).collect()
        }
        ProbeFamily::Gaussian(k) => {
            if !(*k > 0.0) || !k.is_finite() {
                return domain(format!("gaussian width parameter must be positive, got {k}"));
            }
            (0..dim)
                .map(|i| {
                    let x = m_of_index(i, dim) / nf;
                    (-k * x * x / 4.0).exp()
                })
                .collect()
        }
        ProbeFamily::Custom(v) => {
            if v.iter().any(|a| !a.is_finite()) {
                return invalid("custom amplitudes must be finite");
            }
            v.clone()
        }
    };
    ProbeState::from_real(n, &amps)
}

fn check_unit(what: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("{what} must lie in [0, 1], got {x}"));
    }
    Ok(())
}

/// Variance of `S^z` in a pure probe. The noiseless QFI is four times this.
pub fn var_sz(probe: &ProbeState) -> f64 {
    let dim = probe.dim();
    let (mut m1, mut m2) = (0.0, 0.0);
    for (i, a) in probe.amplitudes.iter().enumerate() {
        let m = m_of_index(i, dim);
        let p = a.norm_sqr();
        m1 += m * p;
        m2 += m * m * p;
    }
    m2 - m1 * m1
}

/// Density matrix on the symmetric `S = N/2` space.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricDensityMatrix {
    pub n_qubits: usize,
    pub matrix: DMatrix<C64>,
}

impl SymmetricDensityMatrix {
    pub fn new(n_qubits: usize, matrix: DMatrix<C64>) -> Result<Self> {
        let rho = SymmetricDensityMatrix { n_qubits, matrix };
        rho.validate()?;
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.n_qubits + 1
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Checks shape, Hermiticity (1e-12), unit trace (1e-10) and positivity
    /// (eigenvalues ≥ -1e-10).
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.matrix.nrows() != d || self.matrix.ncols() != d {
            return invalid(format!(
                "density matrix for N={} must be {d}x{d}",
                self.n_qubits
            ));
        }
        check_hermitian(&self.matrix, 1e-12)?;
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return invalid(format!("trace {tr} differs from 1"));
        }
        let evals = hermitian_eigenvalues(&self.matrix);
        if let Some(min) = evals.iter().copied().reduce(f64::min) {
            if min < -1e-10 {
                return invalid(format!("negative eigenvalue {min}"));
            }
        }
        Ok(())
    }
}

pub fn check_hermitian(m: &DMatrix<C64>, tol: f64) -> Result<()> {
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol * scale {
                return invalid(format!("matrix is not Hermitian at ({i},{j})"));
            }
        }
    }
    Ok(())
}

pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    crate::linalg::herm_eigenvalues(m)
}

/// `ρ = |ψ⟩⟨ψ|`.
pub fn to_density(probe: &ProbeState) -> SymmetricDensityMatrix {
    let d = probe.dim();
    let a = &probe.amplitudes;
    SymmetricDensityMatrix {
        n_qubits: probe.n_qubits,
        matrix: DMatrix::from_fn(d, d, |i, j| a[i] * a[j].conj()),
    }
}

/// Label of a block in a [`BlockedDensityMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockLabel {
    /// Total-spin sector, stored as `2S`.
    Spin { two_s: u32 },
    /// Loss branch with `l1` and `l2` particles lost from the two arms.
    Loss { l1: u32, l2: u32 },
    /// Sector with `lost` particles missing in total, arms not resolved.
    Lost { lost: u32 },
}

/// A weighted Hermitian block. The block contributes `weight · matrix` to the
/// state; constructors keep `trace(matrix) = 1` unless the weight is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: BlockLabel,
    pub weight: f64,
    pub matrix: DMatrix<C64>,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn spin(&self) -> f64 {
        (self.dim() as f64 - 1.0) / 2.0
    }

    /// Rescales so the matrix has unit trace, moving the trace into the weight.
    pub fn normalize(&mut self) {
        let tr = self.matrix.trace().re;
        if tr.abs() > 1e-300 {
            self.weight *= tr;
            self.matrix /= C64::new(tr, 0.0);
        }
    }
}

/// Mixed state stored as a direct sum of weighted blocks, labeled either by
/// total spin or by loss branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockedDensityMatrix {
    pub n_qubits: usize,
    pub blocks: Vec<Block>,
}

impl BlockedDensityMatrix {
    /// Wraps a symmetric-space state as a single `S = N/2` block.
    pub fn from_symmetric(rho: &SymmetricDensityMatrix) -> Self {
        BlockedDensityMatrix {
            n_qubits: rho.n_qubits,
            blocks: vec![Block {
                label: BlockLabel::Spin {
                    two_s: rho.n_qubits as u32,
                },
                weight: 1.0,
                matrix: rho.matrix.clone(),
            }],
        }
    }

    /// `Σ w · trace(block)`.
    pub fn total_trace(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.weight * b.matrix.trace().re)
            .sum()
    }

    pub fn block(&self, label: BlockLabel) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    /// Total weight `w · trace` carried by a block label (0 when absent).
    pub fn weight_of(&self, label: BlockLabel) -> f64 {
        self.block(label)
            .map(|b| b.weight * b.matrix.trace().re)
            .unwrap_or(0.0)
    }

    pub fn normalize_blocks(&mut self) {
        for b in &mut self.blocks {
            b.normalize();
        }
    }

    /// Checks non-negative weights, Hermitian blocks, consistent dimensions
    /// for the labels and total weighted trace 1 within `trace_tol`.
    pub fn validate(&self, trace_tol: f64) -> Result<()> {
        for b in &self.blocks {
            if b.weight < 0.0 || !b.weight.is_finite() {
                return invalid(format!("block {:?} has weight {}", b.label, b.weight));
            }
            if b.matrix.nrows() != b.matrix.ncols() {
                return invalid(format!("block {:?} is not square", b.label));
            }
            let expected = match b.label {
                BlockLabel::Spin { two_s } => {
                    if two_s as usize > self.n_qubits || (self.n_qubits - two_s as usize) % 2 != 0 {
                        return invalid(format!("spin label 2S={two_s} impossible for N={}", self.n_qubits));
                    }
                    two_s as usize + 1
                }
                BlockLabel::Loss { l1, l2 } => {
                    let lost = (l1 + l2) as usize;
                    if lost > self.n_qubits {
                        return invalid(format!("loss branch ({l1},{l2}) exceeds N={}", self.n_qubits));
                    }
                    self.n_qubits - lost + 1
                }
                BlockLabel::Lost { lost } => {
                    if lost as usize > self.n_qubits {
                        return invalid(format!("{lost} lost particles exceeds N={}", self.n_qubits));
                    }
                    self.n_qubits - lost as usize + 1
                }
            };
            if b.matrix.nrows() != expected {
                return invalid(format!(
                    "block {:?} has dimension {}, expected {expected}",
                    b.label,
                    b.matrix.nrows()
                ));
            }
            check_hermitian(&b.matrix, 1e-10)?;
        }
        let tr = self.total_trace();
        if (tr - 1.0).abs() > trace_tol {
            return invalid(format!("weighted trace {tr} differs from 1"));
        }
        Ok(())
    }
}

/// Number of spin-`S` irreducible copies in `N` qubits,
/// `N!(2S+1)/((N/2+S+1)!(N/2-S)!)`, computed exactly. `None` on overflow.
pub fn spin_multiplicity(n: u32, two_s: u32) -> Option<u128> {
    if two_s > n || (n - two_s) % 2 != 0 {
        return Some(0);
    }
    let k = (n - two_s) / 2;
    let c = |n: u32, k: u32| -> Option<u128> {
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
        }
        Some(acc)
    };
    let hi = c(n, k)?;
    let lo = if k == 0 { 0 } else { c(n, k - 1)? };
    Some(hi - lo)
}

/// Relative weights `W_S^± = |Π_{S±1/2}^{(N-1)}| / |Π_S^{(N)}|` of the two ways
/// the remaining `N-1` qubits couple once one qubit is singled out.
pub fn coupling_weights(n: u32, two_s: u32) -> (f64, f64) {
    let s = two_s as f64 / 2.0;
    let nf = n as f64;
    let plus = (s + 1.0) * (nf - 2.0 * s) / ((2.0 * s + 1.0) * nf);
    let minus = s * (nf + 2.0 * (s + 1.0)) / ((2.0 * s + 1.0) * nf);
    (plus, minus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Direct factorial-sum evaluation, usable for small S only.
    fn wigner_sum(j2: i64, mu2: i64, nu2: i64, beta: f64) -> f64 {
        let f = |x: i64| -> f64 { ln_factorial((x / 2) as u64).exp() };
        let (jp, jm) = (j2 + mu2, j2 - mu2);
        let (kp, km) = (j2 + nu2, j2 - nu2);
        let pref = (f(jp) * f(jm) * f(kp) * f(km)).sqrt();
        let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
        let mut acc = 0.0;
        for k in 0..=j2 {
            let t1 = j2 + nu2 - 2 * k; // 2(j+m'-k)
            let t2 = mu2 - nu2 + 2 * k; // 2(m-m'+k)
            let t3 = j2 - mu2 - 2 * k; // 2(j-m-k)
            if t1 < 0 || t2 < 0 || t3 < 0 {
                continue;
            }
            let sign = if ((mu2 - nu2) / 2 + k) % 2 == 0 { 1.0 } else { -1.0 };
            let den = f(t1) * f(2 * k) * f(t2) * f(t3);
            let pc = j2 + (nu2 - mu2) / 2 - 2 * k;
            let ps = (mu2 - nu2) / 2 + 2 * k;
            acc += sign * pref / den * c.powi(pc as i32) * s.powi(ps as i32);
        }
        acc
    }

    #[test]
    fn wigner_matches_factorial_sum_small_spins() {
        for j2 in 0..=12i64 {
            for mu2 in (-j2..=j2).step_by(2) {
                for nu2 in (-j2..=j2).step_by(2) {
                    for &beta in &[0.3, PI / 2.0, 2.1, -0.7] {
                        let a = wigner_d_twice(j2, mu2, nu2, beta);
                        let b = wigner_sum(j2, mu2, nu2, beta);
                        assert!((a - b).abs() < 1e-12, "j2={j2} mu2={mu2} nu2={nu2}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn wigner_examples() {
        assert_abs_diff_eq!(
            wigner_small_d(0.5, 0.5, 0.5, PI / 2.0).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        for s2 in 0..20 {
            let s = s2 as f64 / 2.0;
            assert_abs_diff_eq!(wigner_small_d(s, s, s, 0.0).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(wigner_small_d(1.0, 0.0, 0.0, PI / 2.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wigner_small_d(1.0, 0.0, 0.0, 0.4).unwrap(), 0.4f64.cos(), epsilon = 1e-15);
        assert!(matches!(wigner_small_d(1.0, 2.0, 0.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(wigner_small_d(1.0, 0.5, 0.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(wigner_small_d(0.3, 0.0, 0.0, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn wigner_columns_orthonormal_up_to_spin_50() {
        for &two_s in &[1i64, 2, 7, 20, 51, 100] {
            let dim = two_s as usize + 1;
            for &beta in &[PI / 2.0, 1.1] {
                let cols: Vec<Vec<f64>> = (0..dim)
                    .map(|k| wigner_d_column(dim, 2 * k as i64 - two_s, beta))
                    .collect();
                for a in 0..dim {
                    for b in 0..dim {
                        let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                        let want = if a == b { 1.0 } else { 0.0 };
                        assert!((dot - want).abs() < 1e-10, "2S={two_s} a={a} b={b} dot={dot}");
                    }
                }
            }
        }
    }

    #[test]
    fn wigner_large_spin_is_normalized() {
        // N = 400 Holland-Burnett column.
        let col = wigner_d_column(401, 0, PI / 2.0);
        let n: f64 = col.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-10);
    }

    #[test]
    fn probe_examples() {
        let noon = make_probe(&ProbeFamily::Noon, 4).unwrap();
        let a = noon.real_amplitudes();
        assert_abs_diff_eq!(a[0], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(a[4], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(&a[1..4], &[0.0, 0.0, 0.0]);

        let cos = make_probe(&ProbeFamily::Cosine, 2).unwrap().real_amplitudes();
        let want = [(1.0f64 / 6.0).sqrt(), (2.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).sqrt()];
        for (x, y) in cos.iter().zip(want) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }

        let sc = make_probe(&ProbeFamily::SpinCoherent, 1).unwrap().real_amplitudes();
        assert_abs_diff_eq!(sc[0], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sc[1], 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn probe_errors() {
        assert!(matches!(
            make_probe(&ProbeFamily::HollandBurnett, 5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            make_probe(&ProbeFamily::Custom(vec![0.0; 4]), 3),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            make_probe(&ProbeFamily::Custom(vec![1.0; 3]), 3),
            Err(Error::Validation(_))
        ));
        assert!(matches!(make_probe(&ProbeFamily::Trident(1.5), 4), Err(Error::Domain(_))));
        assert!(matches!(make_probe(&ProbeFamily::Gaussian(-1.0), 4), Err(Error::Domain(_))));
        assert!(make_probe(&ProbeFamily::Noon, 0).is_err());
    }

    #[test]
    fn all_families_normalized() {
        let mut fams = ProbeFamily::standard();
        fams.extend([
            ProbeFamily::Trident(0.3),
            ProbeFamily::Quad(0.4, 0.5),
            ProbeFamily::Gaussian(40.0),
            ProbeFamily::Custom((0..11).map(|i| i as f64).collect()),
        ]);
        for n in [2usize, 10, 40, 400] {
            for f in &fams {
                if let ProbeFamily::Custom(v) = f {
                    if v.len() != n + 1 {
                        continue;
                    }
                }
                let p = make_probe(f, n).unwrap();
                assert!((p.norm_sqr() - 1.0).abs() < 1e-12, "{f} N={n}");
                assert_eq!(p.amplitudes().len(), n + 1);
            }
        }
    }

    #[test]
    fn family_names_round_trip() {
        for f in [
            ProbeFamily::Noon,
            ProbeFamily::Cosine,
            ProbeFamily::PhaseUniform,
            ProbeFamily::HollandBurnett,
            ProbeFamily::SpinCoherent,
            ProbeFamily::Trident(0.25),
            ProbeFamily::Quad(0.5, 0.25),
            ProbeFamily::Gaussian(12.5),
        ] {
            assert_eq!(f.name().parse::<ProbeFamily>().unwrap(), f);
        }
        assert!("bogus".parse::<ProbeFamily>().is_err());
        assert_eq!(
            "custom:1,0,1".parse::<ProbeFamily>().unwrap(),
            ProbeFamily::Custom(vec![1.0, 0.0, 1.0])
        );
    }

    #[test]
    fn var_sz_examples() {
        let noon = make_probe(&ProbeFamily::Noon, 10).unwrap();
        assert_abs_diff_eq!(var_sz(&noon), 25.0, epsilon = 1e-12);
        let sc = make_probe(&ProbeFamily::SpinCoherent, 10).unwrap();
        assert_abs_diff_eq!(var_sz(&sc), 2.5, epsilon = 1e-12);
        let n = 100.0;
        let c = make_probe(&ProbeFamily::Cosine, 100).unwrap();
        let cont = (n + 1.0) * (n + 1.0) * (1.0 / 12.0 - 1.0 / (2.0 * PI * PI));
        assert!((var_sz(&c) / cont - 1.0).abs() < 1e-3, "{} vs {cont}", var_sz(&c));
    }

    #[test]
    fn noon_variance_is_exactly_n_squared() {
        for n in 1..=64usize {
            let v = var_sz(&make_probe(&ProbeFamily::Noon, n).unwrap());
            // ⟨m²⟩ = N²/4 with both ends equally weighted.
            assert_eq!((4.0 * v).round() as usize, n * n);
            assert!((4.0 * v - (n * n) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn density_examples() {
        let rho = to_density(&make_probe(&ProbeFamily::Noon, 2).unwrap());
        rho.validate().unwrap();
        for &(i, j) in &[(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_abs_diff_eq!(rho.matrix[(i, j)].norm(), 0.5, epsilon = 1e-15);
        }
        let p = make_probe(&ProbeFamily::Gaussian(10.0), 12).unwrap();
        let rho = to_density(&p);
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-14);
        let mut ev = hermitian_eigenvalues(&rho.matrix);
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_abs_diff_eq!(ev[0], 1.0, epsilon = 1e-12);
        assert!(ev[1..].iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn multiplicities_sum_to_hilbert_dimension() {
        for n in 1..=100u32 {
            let mut total: u128 = 0;
            let mut two_s = n;
            loop {
                total += spin_multiplicity(n, two_s).unwrap() * (two_s as u128 + 1);
                if two_s < 2 {
                    break;
                }
                two_s -= 2;
            }
            assert_eq!(total, 1u128 << n, "N={n}");
        }
    }

    #[test]
    fn coupling_weights_match_multiplicity_ratios() {
        for n in 2..=30u32 {
            let mut two_s = n;
            loop {
                let (wp, wm) = coupling_weights(n, two_s);
                let den = spin_multiplicity(n, two_s).unwrap() as f64;
                let up = spin_multiplicity(n - 1, two_s + 1).unwrap() as f64;
                let dn = if two_s == 0 { 0.0 } else { spin_multiplicity(n - 1, two_s - 1).unwrap() as f64 };
                assert!((wp - up / den).abs() < 1e-12);
                assert!((wm - dn / den).abs() < 1e-12);
                if two_s < 2 {
                    break;
                }
                two_s -= 2;
            }
        }
    }
}
