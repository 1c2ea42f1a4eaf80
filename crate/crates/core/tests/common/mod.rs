//! Independent reference implementations used only by the tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qprobe::C64;

pub type CMat = DMatrix<C64>;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Single-site operators on `n` qubits in the computational basis; bit `k`
/// set means qubit `k` is up (`s_z = +1/2`).
pub struct Qubits {
    pub n: usize,
    pub dim: usize,
}

impl Qubits {
    pub fn new(n: usize) -> Self {
        Qubits { n, dim: 1 << n }
    }

    pub fn sz(&self, k: usize) -> CMat {
        CMat::from_fn(self.dim, self.dim, |a, b| {
            if a == b {
                c(if (a >> k) & 1 == 1 { 0.5 } else { -0.5 })
            } else {
                c(0.0)
            }
        })
    }

    /// `s⁻_k = |↓⟩⟨↑|` on qubit `k`.
    pub fn lower(&self, k: usize) -> CMat {
        CMat::from_fn(self.dim, self.dim, |a, b| {
            if (b >> k) & 1 == 1 && a == b ^ (1 << k) {
                c(1.0)
            } else {
                c(0.0)
            }
        })
    }

    pub fn raise(&self, k: usize) -> CMat {
        self.lower(k).adjoint()
    }

    pub fn total(&self, f: impl Fn(usize) -> CMat) -> CMat {
        let mut acc = CMat::zeros(self.dim, self.dim);
        for k in 0..self.n {
            acc += f(k);
        }
        acc
    }

    /// Embeds symmetric amplitudes `ψ_m` (index `i = m + N/2`, i.e. `i` up
    /// spins) as a state vector.
    pub fn symmetric_state(&self, psi: &[C64]) -> Vec<C64> {
        let mut v = vec![c(0.0); self.dim];
        for (i, &a) in psi.iter().enumerate() {
            let count = (0..self.dim).filter(|b| b.count_ones() as usize == i).count();
            for (b, slot) in v.iter_mut().enumerate() {
                if b.count_ones() as usize == i {
                    *slot = a / (count as f64).sqrt();
                }
            }
        }
        v
    }
}

/// `Σ rate (AρA† - {A†A, ρ}/2)`.
pub fn lindblad(ops: &[(f64, CMat)], rho: &CMat) -> CMat {
    let mut out = CMat::zeros(rho.nrows(), rho.ncols());
    for (rate, a) in ops {
        if *rate == 0.0 {
            continue;
        }
        let ad = a.adjoint();
        let ada = &ad * a;
        out += (a * rho * &ad - (&ada * rho + rho * &ada) * c(0.5)) * c(*rate);
    }
    out
}

/// RK4 over the unit interval with many small steps.
pub fn integrate(ops: &[(f64, CMat)], rho0: &CMat, steps: usize) -> CMat {
    let h = 1.0 / steps as f64;
    let mut rho = rho0.clone();
    for _ in 0..steps {
        let k1 = lindblad(ops, &rho);
        let k2 = lindblad(ops, &(&rho + &k1 * c(h / 2.0)));
        let k3 = lindblad(ops, &(&rho + &k2 * c(h / 2.0)));
        let k4 = lindblad(ops, &(&rho + &k3 * c(h)));
        rho += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
    }
    rho
}

/// Reduced blocks `B^S_{mm'} = Σ_ϖ ⟨S m ϖ|ρ|S m' ϖ⟩` of an `n`-qubit state,
/// returned as `(2S, B)` for every spin sector.
pub fn spin_blocks(q: &Qubits, rho: &CMat) -> Vec<(u32, CMat)> {
    let sz = q.total(|k| q.sz(k));
    let sm = q.total(|k| q.lower(k));
    let sp = sm.adjoint();
    let s2 = &sz * &sz + (&sp * &sm + &sm * &sp) * c(0.5);
    let spins: Vec<u32> = (0..=q.n / 2).map(|k| (q.n - 2 * k) as u32).collect();
    let id = CMat::identity(q.dim, q.dim);
    let mut out = Vec::new();
    for &ts in &spins {
        let s = ts as f64 / 2.0;
        let mut proj = id.clone();
        for &other in &spins {
            if other == ts {
                continue;
            }
            let so = other as f64 / 2.0;
            let num = &s2 - &id * c(so * (so + 1.0));
            proj = proj * num * c(1.0 / (s * (s + 1.0) - so * (so + 1.0)));
        }
        // Highest-weight subspace of the sector.
        let top = CMat::from_fn(q.dim, q.dim, |a, b| {
            if a == b && ((a.count_ones() as f64) - q.n as f64 / 2.0 - s).abs() < 1e-9 {
                c(1.0)
            } else {
                c(0.0)
            }
        });
        let hw = &proj * &top;
        let dim = ts as usize + 1;
        // lower[k] = (S⁻)^k, with norms of (S⁻)^k|S S⟩.
        let mut lowers = vec![id.clone()];
        let mut norms = vec![1.0];
        for k in 1..dim {
            lowers.push(&lowers[k - 1] * &sm);
            let m = s - k as f64 + 1.0;
            norms.push(norms[k - 1] * ((s + m) * (s - m + 1.0)).sqrt());
        }
        let mut b = CMat::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                // index i ↔ m = i - S, reached after S - m = dim-1-i lowerings
                let (ki, kj) = (dim - 1 - i, dim - 1 - j);
                let op = &lowers[kj] * &hw * lowers[ki].adjoint() * c(1.0 / (norms[ki] * norms[kj]));
                b[(i, j)] = (rho * op).trace();
            }
        }
        out.push((ts, b));
    }
    out
}

/// Two-mode loss integrated directly on photon-number sectors. Sector `n`
/// holds the `(n+1)×(n+1)` matrix indexed by the photon number of arm 1.
pub fn loss_master_equation(rho: &CMat, gamma1: f64, gamma2: f64, steps: usize) -> Vec<CMat> {
    let n = rho.nrows() - 1;
    let mut sectors: Vec<CMat> = (0..=n).map(|k| CMat::zeros(k + 1, k + 1)).collect();
    sectors[n] = rho.clone();
    let deriv = |s: &Vec<CMat>| -> Vec<CMat> {
        (0..=n)
            .map(|k| {
                CMat::from_fn(k + 1, k + 1, |i, j| {
                    let (fi, fj, fk) = (i as f64, j as f64, k as f64);
                    let mut v = -s[k][(i, j)] * (0.5 * gamma1 * (fi + fj) + 0.5 * gamma2 * (2.0 * fk - fi - fj));
                    if k < n {
                        v += s[k + 1][(i + 1, j + 1)] * (gamma1 * ((fi + 1.0) * (fj + 1.0)).sqrt());
                        v += s[k + 1][(i, j)] * (gamma2 * ((fk + 1.0 - fi) * (fk + 1.0 - fj)).sqrt());
                    }
                    v
                })
            })
            .collect()
    };
    let h = 1.0 / steps as f64;
    let axpy = |a: &Vec<CMat>, b: &Vec<CMat>, t: f64| -> Vec<CMat> {
        a.iter().zip(b).map(|(x, y)| x + y * c(t)).collect()
    };
    for _ in 0..steps {
        let k1 = deriv(&sectors);
        let k2 = deriv(&axpy(&sectors, &k1, h / 2.0));
        let k3 = deriv(&axpy(&sectors, &k2, h / 2.0));
        let k4 = deriv(&axpy(&sectors, &k3, h));
        for k in 0..=n {
            sectors[k] += (&k1[k] + &k2[k] * c(2.0) + &k3[k] * c(2.0) + &k4[k]) * c(h / 6.0);
        }
    }
    sectors
}

/// Deterministic pseudo-random complex probe amplitudes.
pub fn test_amplitudes(n: usize, seed: u64) -> Vec<C64> {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let v: Vec<C64> = (0..=n).map(|_| C64::new(next(), next())).collect();
    let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / norm).collect()
}
