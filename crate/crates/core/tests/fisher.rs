mod common;

use std::f64::consts::PI;

use common::test_amplitudes;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qprobe::channels::{collective_dephase, Channel, ChannelKind, NoiseParams};
use qprobe::fisher::{
    cfi_canonical_phase, cfi_sx, convolved_phase_density, cosine_phase_density, cosine_phase_distribution,
    dephasing_error_bounds, qfi, qfi_symmetric,
};
use qprobe::{make_probe, to_density, Block, BlockLabel, BlockedDensityMatrix, ProbeFamily, ProbeState, C64};

fn dephased(family: &ProbeFamily, n: usize, g0: f64) -> BlockedDensityMatrix {
    let p = make_probe(family, n).unwrap();
    Channel::collective_dephasing(g0).unwrap().apply(&p).unwrap()
}

fn pure(p: &ProbeState) -> BlockedDensityMatrix {
    BlockedDensityMatrix::from_symmetric(&to_density(p))
}

/// `|Σ_m ψ_m e^{imθ}|² / 2π`, i.e. `|⟨θ|ψ⟩|²(N+1)/2π` with a normalized
/// phase state.
fn povm_density(psi: &[C64], theta: f64) -> f64 {
    let dim = psi.len();
    let s = (dim as f64 - 1.0) / 2.0;
    let amp: C64 = psi
        .iter()
        .enumerate()
        .map(|(i, a)| a * C64::from_polar(1.0, (i as f64 - s) * theta))
        .sum();
    amp.norm_sqr() / (2.0 * PI)
}

#[test]
fn two_separable_qubits() {
    for &g in &[0.0, 0.1, 0.7, 2.0] {
        let one = qfi(&dephased(&ProbeFamily::Noon, 1, g)).unwrap().qfi;
        assert!((2.0 * one - 2.0 * (-g as f64).exp()).abs() < 1e-13, "Γ⁰={g}");
    }
}

#[test]
fn gaussian_profile_closed_form() {
    for &n in &[100usize, 160] {
        for &k in &[60.0, 100.0, 200.0] {
            for &mu0 in &[0.0, 2.0, 10.0] {
                let g0 = mu0 / (n * n) as f64;
                let f = qfi(&dephased(&ProbeFamily::Gaussian(k), n, g0)).unwrap().qfi;
                let want = 1.0 / (mu0 + k / 4.0);
                let got = f / (n * n) as f64;
                assert!((got / want - 1.0).abs() < 0.01, "N={n} K={k} μ₀={mu0}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn canonical_phase_saturates_qfi_for_real_symmetric_probes() {
    for family in [ProbeFamily::Noon, ProbeFamily::Cosine, ProbeFamily::Gaussian(12.0), ProbeFamily::SpinCoherent] {
        for n in [2usize, 7, 20] {
            let s = pure(&make_probe(&family, n).unwrap());
            let f = qfi(&s).unwrap().qfi;
            let c = cfi_canonical_phase(&s, 16 * (n + 1)).unwrap();
            assert!((c / f - 1.0).abs() < 1e-6, "{family} N={n}: {c} vs {f}");
        }
    }
}

#[test]
fn canonical_phase_dips_below_qfi_at_unit_mu0() {
    let n = 30;
    let s = dephased(&ProbeFamily::Cosine, n, 1.0 / 900.0);
    let f = qfi(&s).unwrap().qfi;
    let c = cfi_canonical_phase(&s, 64 * (n + 1)).unwrap();
    assert!(c < f * (1.0 - 1e-3), "{c} vs {f}");
}

#[test]
fn phase_insensitive_state_has_no_information() {
    let n = 5;
    let m = DMatrix::from_fn(n + 1, n + 1, |i, j| if i == j { C64::new(1.0 / (n + 1) as f64, 0.0) } else { C64::new(0.0, 0.0) });
    let s = BlockedDensityMatrix { n_qubits: n, blocks: vec![Block { label: BlockLabel::Spin { two_s: n as u32 }, weight: 1.0, matrix: m }] };
    assert_eq!(qfi(&s).unwrap().qfi, 0.0);
    assert!(cfi_canonical_phase(&s, 8 * (n + 1)).unwrap().abs() < 1e-15);
    assert!(cfi_sx(&s, 0.3).unwrap().abs() < 1e-15);
}

#[test]
fn canonical_grid_must_resolve_the_state() {
    let s = pure(&make_probe(&ProbeFamily::Cosine, 9).unwrap());
    assert!(cfi_canonical_phase(&s, 79).is_err());
    assert!(cfi_canonical_phase(&s, 80).is_ok());
}

/// Outcome probabilities of the `S^x` measurement by brute force: rotate
/// the state vector about z and project on `S^x` eigenvectors found by
/// diagonalising the `S^x` matrix.
fn sx_probabilities(psi: &[C64], theta: f64) -> Vec<f64> {
    let dim = psi.len();
    let s = (dim as f64 - 1.0) / 2.0;
    let mut sx = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim - 1 {
        let m = i as f64 - s;
        let v = 0.5 * ((s - m) * (s + m + 1.0)).sqrt();
        sx[(i + 1, i)] = v;
        sx[(i, i + 1)] = v;
    }
    let eig = nalgebra::SymmetricEigen::new(sx);
    let rotated: Vec<C64> = psi
        .iter()
        .enumerate()
        .map(|(i, a)| a * C64::from_polar(1.0, -theta * (i as f64 - s)))
        .collect();
    (0..dim)
        .map(|k| {
            let col = eig.eigenvectors.column(k);
            rotated.iter().zip(col.iter()).map(|(a, v)| a * v).sum::<C64>().norm_sqr()
        })
        .collect()
}

fn sx_cfi_fd(psi: &[C64], theta: f64, h: f64) -> f64 {
    let p = sx_probabilities(psi, theta);
    let pp = sx_probabilities(psi, theta + h);
    let pm = sx_probabilities(psi, theta - h);
    p.iter()
        .zip(pp.iter().zip(&pm))
        .filter(|(p, _)| **p > 1e-12)
        .map(|(p, (a, b))| ((a - b) / (2.0 * h)).powi(2) / p)
        .sum()
}

#[test]
fn spin_coherent_sx_is_shot_noise_limited() {
    let p = make_probe(&ProbeFamily::SpinCoherent, 10).unwrap();
    let c = cfi_sx(&pure(&p), PI / 2.0).unwrap();
    assert!((c - 10.0).abs() < 1e-9, "{c}");
    let fd = sx_cfi_fd(p.amplitudes(), PI / 2.0, 1e-5);
    assert!((fd - 10.0).abs() < 1e-4 * 10.0, "{fd}");
}

#[test]
fn sx_cfi_matches_finite_differences() {
    for seed in 0..6u64 {
        let n = 3 + seed as usize;
        let p = ProbeState::new(n, test_amplitudes(n, seed)).unwrap();
        for &theta in &[0.3, 1.1, 2.0] {
            let c = cfi_sx(&pure(&p), theta).unwrap();
            let fd = sx_cfi_fd(p.amplitudes(), theta, 1e-5);
            assert!((c - fd).abs() <= 1e-4 * c.max(1e-3), "N={n} θ={theta}: {c} vs {fd}");
        }
    }
}

#[test]
fn sx_measurement_is_blind_at_zero_for_real_symmetric_probes() {
    for family in [ProbeFamily::Cosine, ProbeFamily::Noon, ProbeFamily::Gaussian(8.0)] {
        let c = cfi_sx(&pure(&make_probe(&family, 8).unwrap()), 0.0).unwrap();
        assert!(c.abs() < 1e-10, "{family}: {c}");
    }
}

#[test]
fn sx_efficient_near_quarter_turn_at_large_mu0() {
    let n = 40;
    let s = dephased(&ProbeFamily::Cosine, n, 10.0 / (n * n) as f64);
    let f = qfi(&s).unwrap().qfi;
    let c = cfi_sx(&s, PI / 2.0).unwrap();
    assert!(c / f >= 0.95, "{}", c / f);
}

#[test]
fn cosine_distribution_matches_direct_povm() {
    let n = 60;
    let psi = make_probe(&ProbeFamily::Cosine, n).unwrap();
    let pd = cosine_phase_distribution(n, 6000).unwrap();
    for (t, p) in pd.theta.iter().zip(&pd.density) {
        assert!((p - povm_density(psi.amplitudes(), *t)).abs() < 1e-8, "θ={t}");
    }
    // the removable singularity
    let t0 = PI / (n + 1) as f64;
    assert!((cosine_phase_density(n, t0) - povm_density(psi.amplitudes(), t0)).abs() < 1e-8);
}

#[test]
fn cosine_distribution_variance_approaches_heisenberg() {
    let n = 60;
    let pd = cosine_phase_distribution(n, 200_000).unwrap();
    let bound = PI * PI / (n * n) as f64;
    let v = pd.variance();
    assert!(v <= bound && v >= 0.95 * bound, "{v} vs {bound}");
    for n in [2usize, 5, 17, 40] {
        let pd = cosine_phase_distribution(n, 50_000).unwrap();
        assert!((pd.integral() - 1.0).abs() < 1e-9);
        assert!(pd.density.iter().all(|&p| p >= 0.0));
    }
}

/// `p̃(θ) = (1/2π) Σ_d c_d e^{-d²Γ⁰/2} e^{idθ}` with `c_d` the amplitude
/// autocorrelation of the cosine probe.
fn convolved_fourier(n: usize, g0: f64, theta: f64) -> f64 {
    let psi: Vec<f64> = make_probe(&ProbeFamily::Cosine, n).unwrap().real_amplitudes();
    let mut acc = psi.iter().map(|a| a * a).sum::<f64>();
    for d in 1..=n {
        let c: f64 = (d..=n).map(|i| psi[i] * psi[i - d]).sum();
        acc += 2.0 * c * (-((d * d) as f64) * g0 / 2.0).exp() * (d as f64 * theta).cos();
    }
    acc / (2.0 * PI)
}

#[test]
fn convolution_matches_fourier_form() {
    for &n in &[4usize, 10, 30] {
        for &g in &[0.01, 0.3, 2.0] {
            for &t in &[0.0, 1.0, PI] {
                let a = convolved_phase_density(n, g, t, 8192);
                let b = convolved_fourier(n, g, t);
                assert!((a - b).abs() < 1e-10, "N={n} Γ⁰={g} θ={t}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn dephasing_bounds_behaviour() {
    let (lo, _) = dephasing_error_bounds(10, 0.0).unwrap();
    assert!((lo - 0.01).abs() < 1e-15);
    let n = 100;
    let g = 1e-4;
    let (_, up) = dephasing_error_bounds(n, g).unwrap();
    let base = g + PI * PI / 1e4;
    assert!((up / base - 1.0).abs() < 0.01, "{}", up / base);
    let (_, up) = dephasing_error_bounds(n, 2.0).unwrap();
    assert!(up / (2.0 + PI * PI / 1e4) > 2.0);
}

#[test]
fn dephasing_bounds_bracket_the_cosine_probe() {
    for &n in &[10usize, 30, 60] {
        for &mu0 in &[0.0, 0.5, 3.0, 20.0, 200.0, 2000.0] {
            let g = mu0 / (n * n) as f64;
            let (lo, up) = dephasing_error_bounds(n, g).unwrap();
            let f = qfi(&dephased(&ProbeFamily::Cosine, n, g)).unwrap().qfi;
            assert!(lo <= 1.0 / f * (1.0 + 1e-12), "N={n} μ₀={mu0}: {lo} vs {}", 1.0 / f);
            assert!(1.0 / f <= up, "N={n} μ₀={mu0}: {} vs {up}", 1.0 / f);
        }
    }
}

#[test]
fn zero_weight_block_changes_nothing() {
    let mut s = dephased(&ProbeFamily::Cosine, 6, 0.05);
    let before = qfi(&s).unwrap().qfi;
    s.blocks.push(Block {
        label: BlockLabel::Spin { two_s: 4 },
        weight: 0.0,
        matrix: DMatrix::from_fn(5, 5, |i, j| if i == j { C64::new(0.2, 0.0) } else { C64::new(0.0, 0.0) }),
    });
    assert_eq!(qfi(&s).unwrap().qfi, before);
}

fn rotate(s: &BlockedDensityMatrix, t: f64) -> BlockedDensityMatrix {
    let mut out = s.clone();
    for b in &mut out.blocks {
        let dim = b.matrix.nrows();
        b.matrix = DMatrix::from_fn(dim, dim, |i, j| b.matrix[(i, j)] * C64::from_polar(1.0, -t * (i as f64 - j as f64)));
    }
    out
}

fn states(n: usize, seed: u64, g0: f64, a: f64, l: f64) -> Vec<BlockedDensityMatrix> {
    let p = ProbeState::new(n, test_amplitudes(n, seed)).unwrap();
    let chans = [
        Channel::new(ChannelKind::Collective, NoiseParams { gamma0: g0, gamma_minus: a, ..Default::default() }).unwrap(),
        Channel::new(ChannelKind::Individual, NoiseParams::individual(g0, a, a / 2.0)).unwrap(),
        Channel::new(ChannelKind::Loss, NoiseParams::loss(g0, l, l / 3.0)).unwrap(),
    ];
    chans.iter().map(|c| c.apply(&p).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn information_ordering(n in 1usize..8, seed in 0u64..500, g0 in 0.0f64..0.3, a in 0.0f64..0.3, l in 0.0f64..0.8, t in -3.0f64..3.0) {
        for s in states(n, seed, g0, a, l) {
            let f = qfi(&s).unwrap().qfi;
            prop_assert!(f >= 0.0 && f <= (n * n) as f64 + 1e-9);
            let c = cfi_canonical_phase(&s, 16 * (n + 1)).unwrap();
            prop_assert!(c <= f + 1e-8, "canonical {} > {}", c, f);
            let x = cfi_sx(&s, t).unwrap();
            prop_assert!(x <= f + 1e-8, "sx {} > {}", x, f);
            let fr = qfi(&rotate(&s, t)).unwrap().qfi;
            prop_assert!((fr - f).abs() <= 1e-9 * f.max(1.0));
        }
    }

    #[test]
    fn pure_state_qfi_is_four_variances(n in 1usize..12, seed in 0u64..500) {
        let p = ProbeState::new(n, test_amplitudes(n, seed)).unwrap();
        let f = qfi_symmetric(&to_density(&p)).unwrap().qfi;
        prop_assert!((f - 4.0 * qprobe::var_sz(&p)).abs() < 1e-10 * f.max(1.0));
    }
}

/// `√ρ` of a Hermitian positive matrix via nalgebra's eigensolver.
fn sqrt_psd(m: &DMatrix<C64>) -> DMatrix<C64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| C64::new(v.max(0.0).sqrt(), 0.0)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

#[test]
fn dephased_cosine_matches_bures_fidelity_oracle() {
    // F_Q = 8(1 - √fid)/dθ² with √fid = Tr|√ρ √ρ_dθ|, extrapolated in dθ².
    let n = 40;
    let g = 100.0 / (n * n) as f64;
    let dephased_rho = collective_dephase(&to_density(&make_probe(&ProbeFamily::Cosine, n).unwrap()), g).unwrap();
    let rho = dephased_rho.matrix.clone();
    let sr = sqrt_psd(&rho);
    let bures = |dt: f64| -> f64 {
        let u = DMatrix::from_fn(n + 1, n + 1, |i, j| {
            if i == j { C64::from_polar(1.0, -dt * (i as f64 - n as f64 / 2.0)) } else { C64::new(0.0, 0.0) }
        });
        let s = sqrt_psd(&(&u * &rho * u.adjoint()));
        let tr: f64 = (&sr * s).svd(false, false).singular_values.iter().sum();
        8.0 * (1.0 - tr) / (dt * dt)
    };
    let (a, b) = (bures(2e-3), bures(1e-3));
    let oracle = (4.0 * b - a) / 3.0;
    let f = qfi_symmetric(&dephased_rho)
        .unwrap()
        .qfi;
    assert!((f - oracle).abs() < 1e-5 * f, "{f} vs {oracle}");
}
