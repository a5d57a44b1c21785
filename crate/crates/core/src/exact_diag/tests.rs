use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::*;
use crate::constants::LATTICE_CONSTANT;
use crate::geometry::{ArrayGeometry, Site, SubarrayLabel, SubarrayLayout};
use crate::potentials::DressingParams;
use crate::Exec;

fn line(n: usize, spacing: i64) -> ArrayGeometry {
    let sites = (0..n as i64).map(|i| Site::new(i * spacing, 0)).collect();
    ArrayGeometry::from_sites(LATTICE_CONSTANT, sites, vec![SubarrayLabel(0); n]).unwrap()
}

fn dense_expmv(m: &DMatrix<f64>, v: &[Complex64], t: f64) -> Vec<Complex64> {
    let eig = SymmetricEigen::new(m.clone());
    let q = &eig.eigenvectors;
    let n = v.len();
    let c: Vec<Complex64> = (0..n)
        .map(|k| {
            let proj: Complex64 = (0..n).map(|i| v[i] * q[(i, k)]).sum();
            proj * Complex64::from_polar(1.0, -eig.eigenvalues[k] * t)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|k| c[k] * q[(i, k)]).sum()).collect()
}

fn random_state(n: usize, seed: u64) -> QuantumState {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut a: Vec<Complex64> = (0..3usize.pow(n as u32))
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let nrm = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    a.iter_mut().for_each(|x| *x /= nrm);
    QuantumState::from_amplitudes(n, a).unwrap()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn cap_is_enforced_with_memory_estimate() {
    let g = ArrayGeometry::build_subarrays(SubarrayLayout::single(4, 4, 2)).unwrap();
    let err = Hamiltonian3::new(&g, 1.0).unwrap_err();
    match err {
        crate::Error::TooManyAtoms { requested, cap, bytes } => {
            assert_eq!((requested, cap), (16, 9));
            assert_eq!(bytes, 3u128.pow(16) * 16);
        }
        e => panic!("unexpected {e}"),
    }
    assert!(QuantumState::ground(10).is_err());
}

#[test]
fn hamiltonian_is_symmetric_and_matvec_matches_dense() {
    let p = DressingParams::typical();
    let h = Hamiltonian3::new(&line(3, 2), p.c6).unwrap();
    let op = h.at(Drive { omega_r: 1.3, delta: -0.7, omega_c: 0.4 });
    let m = op.to_dense();
    assert_eq!((&m - m.transpose()).norm(), 0.0);
    let x = random_state(3, 5);
    let mut y = vec![Complex64::default(); 27];
    op.apply(x.amplitudes(), &mut y, Exec::Sequential);
    for i in 0..27 {
        let d: Complex64 = (0..27).map(|j| x.amplitudes()[j] * m[(i, j)]).sum();
        assert!((d - y[i]).norm() < 1e-9 * (1.0 + d.norm()));
    }
    let mut z = vec![Complex64::default(); 27];
    op.apply(x.amplitudes(), &mut z, Exec::Parallel);
    assert_eq!(y, z);
}

#[test]
fn single_atom_clock_block() {
    let h = Hamiltonian3::new(&line(1, 1), 0.0).unwrap();
    let m = h.at(Drive { omega_r: 0.0, delta: 0.0, omega_c: 2.0 }).to_dense();
    let expect = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(m, expect);
}

/// Roots of the characteristic cubic of a real symmetric 3×3 matrix.
fn symmetric_3x3_eigenvalues(a: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = |i: usize, j: usize| (a[i][j] - if i == j { q } else { 0.0 }) / p;
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    [e1, 3.0 * q - e1 - e3, e3]
}

#[test]
fn pair_sector_matches_closed_form() {
    let (om, v) = (2.0, 5.0);
    let h = Hamiltonian3::from_pair_energies(2, &[0.0, v, v, 0.0]).unwrap();
    let m = h.at(Drive { omega_r: om, delta: 0.0, omega_c: 0.0 }).to_dense();
    let spectrum: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    let s = om / 2f64.sqrt();
    let sector = symmetric_3x3_eigenvalues([[0.0, s, 0.0], [s, 0.0, s], [0.0, s, v]]);
    for e in sector {
        assert!(spectrum.iter().any(|x| (x - e).abs() < 1e-12), "{e} not in {spectrum:?}");
    }
}

#[test]
fn propagation_basics() {
    let h = Hamiltonian3::new(&line(1, 1), 0.0).unwrap();
    let mut s = QuantumState::ground(1).unwrap();
    let before = s.clone();
    propagate(&mut s, &h, |_| Drive::default(), 1e-6, 1e-7, Integrator::Magnus4, KrylovOptions::default(), Exec::Sequential).unwrap();
    assert_eq!(s, before);

    let omega_c = 2.0 * PI * 250.0;
    let drive = Drive { omega_r: 0.0, delta: 0.0, omega_c };
    let t = PI / omega_c;
    propagate(&mut s, &h, |_| drive, t, t / 10.0, Integrator::Magnus4, KrylovOptions::default(), Exec::Sequential).unwrap();
    assert!((s.amplitudes()[1].norm_sqr() - 1.0).abs() < 1e-9);

    assert!(propagate(&mut s, &h, |_| drive, 1e-9, 1e-8, Integrator::Magnus4, KrylovOptions::default(), Exec::Sequential).is_err());
}

#[test]
fn krylov_and_block_agree_with_dense_exponential() {
    let p = DressingParams::typical();
    let h = Hamiltonian3::new(&line(3, 2), p.c6).unwrap();
    let drive = sequence_plateau(&p);
    let m = h.at(drive).to_dense();
    let psi = random_state(3, 11);
    let t = 0.37e-6;
    let reference = dense_expmv(&m, psi.amplitudes(), t);

    let mut k = psi.clone();
    expmv(&h.at(drive), k.amplitudes_mut(), t, KrylovOptions::default(), Exec::Sequential).unwrap();
    assert!(max_diff(k.amplitudes(), &reference) < 1e-9, "{}", max_diff(k.amplitudes(), &reference));

    let mut b = psi.clone();
    BlockPropagator::new(&h, drive, Exec::Parallel).unwrap().apply(b.amplitudes_mut(), t, Exec::Parallel);
    assert!(max_diff(b.amplitudes(), &reference) < 1e-10);
    assert!((b.norm() - 1.0).abs() < 1e-12);
}

fn sequence_plateau(p: &DressingParams) -> Drive {
    RampSchedule::plateau(p)
}

#[test]
fn energy_is_conserved_on_constant_segments() {
    let p = DressingParams::typical();
    let h = Hamiltonian3::new(&line(3, 2), p.c6).unwrap();
    let drive = sequence_plateau(&p);
    let op = h.at(drive);
    let mut s = random_state(3, 2);
    let e0 = op.expectation(s.amplitudes(), Exec::Sequential);
    BlockPropagator::new(&h, drive, Exec::Sequential).unwrap().apply(s.amplitudes_mut(), 3.3e-6, Exec::Sequential);
    let e1 = op.expectation(s.amplitudes(), Exec::Sequential);
    assert!((e1 - e0).abs() < 1e-8 * op.norm_bound());
}

#[test]
fn zero_interaction_time_is_css() {
    let g = ArrayGeometry::build_subarrays(SubarrayLayout::single(2, 2, 2)).unwrap();
    let run = run_sequence(&g, &DressingParams::typical(), &PulseSequence::spin_echo(0.0), SequenceOptions::default()).unwrap();
    assert!((run.squeezing.contrast - 1.0).abs() < 1e-12);
    assert!((run.squeezing.xi_w_sq - 1.0).abs() < 1e-12);
}

#[test]
fn echo_cancels_light_shifts_without_interactions() {
    let g = ArrayGeometry::build_subarrays(SubarrayLayout::single(1, 3, 2)).unwrap();
    for (om, de) in [(5.5e6, 11e6), (3e6, -20e6)] {
        let mut p = DressingParams::from_lab(om, de, 9.1e9, 250.0).unwrap();
        p.c6 = 0.0;
        let run = run_sequence(&g, &p, &PulseSequence::spin_echo(1.0e-6), SequenceOptions::default()).unwrap();
        assert!((run.squeezing.contrast - 1.0).abs() < 1e-9, "{}", run.squeezing.contrast);
        assert!((run.squeezing.xi_w_sq - 1.0).abs() < 1e-9);
        assert!((run.final_state.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn symmetric_geometry_gives_symmetric_sites() {
    let g = ArrayGeometry::build_subarrays(SubarrayLayout::single(2, 2, 2)).unwrap();
    let run = run_sequence(&g, &DressingParams::typical(), &PulseSequence::spin_echo(0.8e-6), SequenceOptions::default()).unwrap();
    for z in &run.sigma_z {
        assert!((z - run.sigma_z[0]).abs() < 1e-9);
    }
    assert!((run.final_state.norm() - 1.0).abs() < 1e-9);
}

#[test]
fn executed_readout_matches_quadrature_curve() {
    let g = line(3, 3);
    let p = DressingParams::typical();
    for alpha in [0.0, 0.4, 1.1, 2.5] {
        let run = run_sequence(&g, &p, &PulseSequence::spin_echo_with_readout(0.6e-6, alpha), SequenceOptions::default()).unwrap();
        let r = run.readout.as_ref().unwrap();
        let expect = run.squeezing.curve.at(alpha);
        // the ramps tilt the mean spin by ~1e-3 rad off −y, which the
        // physical readout does not follow
        assert!((r.var_ratio - expect).abs() < 1e-5, "α={alpha}: {} vs {expect}", r.var_ratio);
    }
}

#[test]
fn ideal_sudden_dressing_matches_plateau_ising() {
    // Without ramps the e-manifold light shift of an isolated atom is the
    // dressed energy; the echo removes it and the spin state stays a CSS.
    let g = line(1, 1);
    let p = DressingParams::typical();
    let opts = SequenceOptions { ramp: RampSchedule::sudden(), ..Default::default() };
    let run = run_sequence(&g, &p, &PulseSequence::spin_echo(0.5e-6), opts).unwrap();
    assert!((run.squeezing.contrast - 1.0).abs() < 1e-9);
}

#[test]
fn finite_clock_pulses_run() {
    let g = line(2, 2);
    let p = DressingParams::typical();
    let opts = SequenceOptions { finite_clock_pulses: true, ..Default::default() };
    let a = run_sequence(&g, &p, &PulseSequence::spin_echo(0.5e-6), opts).unwrap();
    let b = run_sequence(&g, &p, &PulseSequence::spin_echo(0.5e-6), SequenceOptions::default()).unwrap();
    assert!((a.final_state.norm() - 1.0).abs() < 1e-9);
    assert!((a.squeezing.xi_w_sq - b.squeezing.xi_w_sq).abs() < 1e-2);
}

#[test]
fn ramp_step_halving_converges() {
    let g = line(2, 2);
    let p = DressingParams::typical();
    let mut opts = SequenceOptions::default();
    let a = run_sequence(&g, &p, &PulseSequence::spin_echo(0.7e-6), opts).unwrap();
    opts.ramp.step /= 2.0;
    let b = run_sequence(&g, &p, &PulseSequence::spin_echo(0.7e-6), opts).unwrap();
    assert!((a.squeezing.xi_w_sq - b.squeezing.xi_w_sq).abs() < 1e-6);
    assert!((a.squeezing.contrast - b.squeezing.contrast).abs() < 1e-6);
}

#[test]
fn ramped_propagation_matches_dense_reference() {
    let g = line(2, 2);
    let p = DressingParams::typical();
    let h = Hamiltonian3::new(&g, p.c6).unwrap();
    let ramp = RampSchedule::default();
    let mut psi = QuantumState::ground(2).unwrap();
    psi.rotate_clock(PI / 2.0, 0.0);
    let mut k = psi.clone();
    let step = ramp.ramp_duration / ramp.n_steps() as f64;
    propagate(&mut k, &h, |t| ramp.up(&p, t), ramp.ramp_duration, step, Integrator::Midpoint, KrylovOptions::default(), Exec::Sequential).unwrap();
    let mut v = psi.amplitudes().to_vec();
    let n = ramp.n_steps();
    for s in 0..n {
        let m = h.at(ramp.up(&p, (s as f64 + 0.5) * step)).to_dense();
        v = dense_expmv(&m, &v, step);
    }
    let ov = k.overlap(&QuantumState::from_amplitudes(2, v).unwrap()).norm();
    assert!((1.0 - ov).abs() < 1e-8, "{ov}");
}

#[test]
fn cached_block_ramps_match_lanczos_propagation() {
    let g = line(3, 1);
    let p = DressingParams::typical();
    let h = Hamiltonian3::new(&g, p.c6).unwrap();
    let ramp = RampSchedule::default();
    let step = ramp.ramp_duration / ramp.n_steps() as f64;
    let t = 0.6e-6;
    let plateau = BlockPropagator::new(&h, RampSchedule::plateau(&p), Exec::Sequential).unwrap();
    let mut k = QuantumState::ground(3).unwrap();
    k.rotate_clock(PI / 2.0, 0.0);
    for half in 0..2 {
        if half == 1 {
            k.rotate_clock(PI, 0.0);
        }
        let kr = KrylovOptions::default();
        propagate(&mut k, &h, |s| ramp.up(&p, s), ramp.ramp_duration, step, Integrator::Magnus4, kr, Exec::Sequential).unwrap();
        plateau.apply(k.amplitudes_mut(), 0.5 * t, Exec::Sequential);
        propagate(&mut k, &h, |s| ramp.down(&p, s), ramp.ramp_duration, step, Integrator::Magnus4, kr, Exec::Sequential).unwrap();
    }
    // a zero budget forces every ramp step to be rebuilt
    for budget in [0, usize::MAX] {
        let opts = SequenceOptions { ramp_cache_bytes: budget, ..Default::default() };
        let run = run_sequence(&g, &p, &PulseSequence::spin_echo(t), opts).unwrap();
        let ov = run.final_state.overlap(&k).norm();
        assert!((1.0 - ov).abs() < 1e-10, "{ov}");
    }
}

#[test]
fn pair_shift_limits() {
    let mut p = DressingParams::typical();
    let far = dressed_pair_shift(&p, 1e-3).unwrap();
    assert!(far.abs() < 1e-3, "{far}");
    p.c6 = 0.0;
    assert_eq!(dressed_pair_shift(&p, 1e-6).unwrap().abs() < 1e-6, true);

    let weak = DressingParams::from_lab(1.0e6, 25e6, 9.1e9, 0.0).unwrap();
    assert!((weak.beta() - 0.02).abs() < 1e-12);
    let v = crate::potentials::weak_dressing_potential(&weak).unwrap();
    for r_lat in [1.0, 2.0, 4.0, 6.0] {
        let r = r_lat * LATTICE_CONSTANT;
        let exact = dressed_pair_shift(&weak, r).unwrap();
        let approx = v.at(r);
        assert!((exact / approx - 1.0).abs() < 0.02, "r={r_lat}: {exact} vs {approx}");
    }
}

#[test]
fn typical_pair_shift_is_near_fitted_value() {
    let p = DressingParams::typical();
    let v = dressed_pair_shift(&p, 2.0 * LATTICE_CONSTANT).unwrap();
    assert!((v - 46.4e3).abs() < (v - 80.6e3).abs(), "{v}");
    let mut prev = f64::INFINITY;
    for r in 2..=8 {
        let x = dressed_pair_shift(&p, r as f64 * LATTICE_CONSTANT).unwrap();
        assert!(x < prev && x > 0.0);
        prev = x;
    }
}

#[test]
fn state_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.bin");
    let s = random_state(2, 4);
    s.write_binary(&path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 9 * 16);
    assert_eq!(QuantumState::read_binary(2, &path).unwrap(), s);
}

