mod common;

use std::sync::OnceLock;

use common::*;
use nalgebra::SymmetricEigen;
use nkg_core::dynamics::*;
use nkg_core::error::Error;
use nkg_core::minimize::*;
use nkg_core::radial::RadialGrid;
use num_complex::Complex64;

fn nc_wave() -> &'static (RadialGrid, StandingWaveResult) {
    static WAVE: OnceLock<(RadialGrid, StandingWaveResult)> = OnceLock::new();
    WAVE.get_or_init(|| {
        let grid = RadialGrid::desk();
        let cfg = SolverConfig::default();
        let w = find_ground_state(&grid, &nc(), 10.0, cfg.n_starts, &cfg).unwrap();
        assert!(w.is_certified());
        (grid, w)
    })
}

/// Ground state plus a smooth complex kick, far from any standing wave.
fn generic_state(grid: &RadialGrid, wave: &StandingWaveResult) -> ComplexFieldState {
    let mut s = embed_standing_wave(wave);
    let a = smooth_field(grid, 0.1, 2.0);
    let b = smooth_field(grid, 0.15, 4.0);
    for j in 0..grid.len() {
        s.psi[j] += Complex64::new(a[j], -0.5 * b[j]);
        s.psi_t[j] += Complex64::new(0.3 * b[j], a[j]);
    }
    s
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn embedded_wave_carries_its_charge_and_energy() {
    let (grid, w) = nc_wave();
    let model = nc();
    let s = embed_standing_wave(w);
    assert!((charge(grid, &s) + w.sigma).abs() <= 1e-10 * w.sigma);
    let e = energy(grid, &model, &s);
    assert!((e - w.functionals.e_sigma).abs() <= 1e-10 * e, "{e} vs {}", w.functionals.e_sigma);

    let z = embed_profile(&grid.zeros(), 0.7);
    assert_eq!(z, ComplexFieldState::zeros(grid));
    assert_eq!(energy(grid, &model, &z), 0.0);
}

#[test]
fn orbit_distance_ignores_the_phase() {
    let (grid, w) = nc_wave();
    let s = embed_standing_wave(w);
    assert!(orbit_distance(grid, &s.rotated(1.3), w) < 1e-12);
    let g = generic_state(grid, w);
    let d = orbit_distance(grid, &g, w);
    assert!(d > 0.0);
    for theta in [0.4, 2.0, -3.0] {
        assert!((orbit_distance(grid, &g.rotated(theta), w) - d).abs() < 1e-12 * d);
    }
    // a δ-sized bump moves the state by about δ
    let mut p = s.clone();
    let bump = smooth_field(grid, 1.0, 2.0);
    let zero = vec![Complex64::new(0.0, 0.0); grid.len()];
    let as_complex: Vec<Complex64> = bump.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let norm = x_norm(grid, &as_complex, &zero);
    for j in 0..grid.len() {
        p.psi[j] += Complex64::new(1e-2 * bump[j] / norm, 0.0);
    }
    let d = orbit_distance(grid, &p, w);
    assert!(d > 0.0 && d <= 1e-2 * (1.0 + 1e-9));
}

#[test]
fn unstable_steps_are_refused() {
    let (grid, _) = nc_wave();
    let model = nc();
    let limit = cfl_limit(grid, &model);
    assert!(limit < grid.h());
    assert!(default_dt(grid, &model) <= 0.5 * grid.h());
    for dt in [2.0 * grid.h(), grid.h(), limit * (1.0 + 1e-9), 0.0, -1.0, f64::NAN] {
        assert!(matches!(Integrator::new(grid, &model, dt), Err(Error::Cfl { .. })), "dt = {dt}");
    }
    assert!(Integrator::new(grid, &model, limit).is_ok());
}

#[test]
fn standing_wave_keeps_its_modulus() {
    let (grid, w) = nc_wave();
    let model = nc();
    let dt = 0.25 * grid.h();
    let (end, log) = evolve(grid, &model, &embed_standing_wave(w), dt, 1000, 100).unwrap();
    assert!((end.time - 1000.0 * dt).abs() < 1e-12);
    let err = end.psi.iter().zip(&w.u).map(|(p, u)| (p.norm() - u).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    // the phase turns at rate ω
    let z = end.psi[0] / w.u[0];
    let expected = Complex64::from_polar(1.0, -w.omega * end.time);
    assert!((z - expected).norm() < 1e-5);
    assert!(log.max_energy_drift < 1e-10 && log.max_charge_drift < 1e-10);
    // the leapfrog frequency differs from ω at O(dt²), which shows in ψ_t
    let d1 = orbit_distance(grid, &end, w);
    let (fine, _) = evolve(grid, &model, &embed_standing_wave(w), 0.5 * dt, 2000, 2000).unwrap();
    let d2 = orbit_distance(grid, &fine, w);
    assert!(d1 < 1e-3 && (d1 / d2 - 4.0).abs() < 0.2, "{d1} {d2}");
}

#[test]
fn integrator_is_time_reversible() {
    let (grid, w) = nc_wave();
    let model = nc();
    let start = generic_state(grid, w);
    let (mid, _) = evolve(grid, &model, &start, 0.25 * grid.h(), 500, 500).unwrap();
    let back = ComplexFieldState { psi_t: mid.psi_t.iter().map(|v| -v).collect(), ..mid };
    let (end, _) = evolve(grid, &model, &back, 0.25 * grid.h(), 500, 500).unwrap();
    assert!(max_diff(&end.psi, &start.psi) < 1e-10);
    let vt: Vec<Complex64> = end.psi_t.iter().map(|v| -v).collect();
    assert!(max_diff(&vt, &start.psi_t) < 1e-10);
}

#[test]
fn evolution_commutes_with_the_gauge_action() {
    let (grid, w) = nc_wave();
    let model = nc();
    let start = generic_state(grid, w);
    let dt = 0.25 * grid.h();
    let (a, _) = evolve(grid, &model, &start, dt, 300, 300).unwrap();
    // multiplication by i is exact in floating point
    let times_i = |v: &[Complex64]| -> Vec<Complex64> { v.iter().map(|z| Complex64::new(-z.im, z.re)).collect() };
    let turned = ComplexFieldState { psi: times_i(&start.psi), psi_t: times_i(&start.psi_t), time: 0.0 };
    let (b, _) = evolve(grid, &model, &turned, dt, 300, 300).unwrap();
    assert_eq!(times_i(&a.psi), b.psi);
    assert_eq!(times_i(&a.psi_t), b.psi_t);
    // other angles agree to round-off
    for theta in [0.7, 2.9] {
        let (c, _) = evolve(grid, &model, &start.rotated(theta), dt, 300, 300).unwrap();
        let r = a.rotated(theta);
        let (dp, dv) = (max_diff(&c.psi, &r.psi), max_diff(&c.psi_t, &r.psi_t));
        assert!(dp < 1e-11 && dv < 1e-11, "{dp} {dv}");
    }
}

#[test]
fn energy_drift_is_second_order_and_charge_is_exact() {
    let (grid, w) = nc_wave();
    let model = nc();
    let start = generic_state(grid, w);
    let t = 2.0;
    let mut drifts = Vec::new();
    for div in [4.0, 8.0, 16.0] {
        let dt = grid.h() / div;
        let n = (t / dt).round() as usize;
        let (_, log) = evolve(grid, &model, &start, dt, n, 1).unwrap();
        assert!(log.max_charge_drift < 1e-12, "{}", log.max_charge_drift);
        drifts.push(log.max_energy_drift);
    }
    let slopes: Vec<f64> = drifts.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
    assert!(drifts[0] < 1e-5 && slopes.iter().all(|s| *s >= 1.9), "{drifts:?} {slopes:?}");
}

#[test]
fn linear_modes_oscillate_at_the_discrete_frequency() {
    let grid = RadialGrid::new(3, 30.0, 256).unwrap();
    let model = kg();
    let n = grid.cells();
    let m = dense_mass(&grid);
    let a = dense_stiffness(&grid);
    let l = m.clone().cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * &a * li.transpose();
    let eig = SymmetricEigen::new(0.5 * (&c + c.transpose()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|i, j| eig.eigenvalues[*i].total_cmp(&eig.eigenvalues[*j]));
    let dt = default_dt(&grid, &model);
    for k in [0, 5, 40] {
        let lambda = eig.eigenvalues[order[k]];
        let v: nalgebra::DVector<f64> = li.transpose() * eig.eigenvectors.column(order[k]);
        let scale = 1e-3 / v.abs().max();
        let mut psi: Vec<Complex64> = (0..n).map(|j| Complex64::new(scale * v[j], 0.0)).collect();
        psi.push(Complex64::new(0.0, 0.0));
        let start = ComplexFieldState { psi, psi_t: vec![Complex64::new(0.0, 0.0); n + 1], time: 0.0 };
        let freq = (lambda + model.omega * model.omega).sqrt();
        let theta = (1.0 - 0.5 * (freq * dt).powi(2)).acos();
        assert!((theta / dt - freq).abs() < 1e-2 * freq);
        let steps = 400;
        let (end, _) = evolve(&grid, &model, &start, dt, steps, steps).unwrap();
        let expected = (steps as f64 * theta).cos();
        let err = end.psi.iter().zip(&start.psi).map(|(p, q)| (p.re - expected * q.re).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9 * scale, "mode {k}: {err}");
    }
}

#[test]
fn zero_perturbation_stays_on_the_orbit() {
    let (grid, w) = nc_wave();
    let model = nc();
    let opts = StabilityOptions { delta: 0.0, t_final: Some(5.0), n_trials: 2, ..Default::default() };
    let rep = stability_experiment(grid, &model, w, &opts).unwrap();
    assert_eq!(rep.completed, 2);
    for t in &rep.trials {
        assert_eq!(t.initial_distance, 0.0);
        // only the O(dt²) frequency mismatch of the discrete standing wave
        assert!(t.max_distance < 1e-3, "{}", t.max_distance);
    }
    assert_eq!(rep.max_ratio, Some(0.0));
}

#[test]
fn perturbed_ground_state_stays_close_over_a_short_window() {
    let (grid, w) = nc_wave();
    let model = nc();
    let opts = StabilityOptions { delta: 1e-2, t_final: Some(20.0), n_trials: 2, ..Default::default() };
    let rep = stability_experiment(grid, &model, w, &opts).unwrap();
    assert_eq!(rep.failed, 0);
    for t in &rep.trials {
        assert!((t.perturbation_norm - 1e-2).abs() < 1e-3);
        assert!(t.initial_distance > 0.0 && t.initial_distance <= 1e-2 * (1.0 + 1e-9));
    }
    assert!(rep.max_ratio.unwrap() <= 10.0);

    let mut bad = w.clone();
    bad.certificate.status = CertificateStatus::Saddle;
    assert!(stability_experiment(grid, &model, &bad, &opts).is_err());
}

#[test]
fn runs_are_deterministic() {
    let (grid, w) = nc_wave();
    let model = nc();
    let start = generic_state(grid, w);
    let a = evolve(grid, &model, &start, 0.25 * grid.h(), 200, 10).unwrap();
    let b = evolve(grid, &model, &start, 0.25 * grid.h(), 200, 10).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(serde_json::to_string(&a.1).unwrap(), serde_json::to_string(&b.1).unwrap());
    let opts = StabilityOptions { t_final: Some(2.0), n_trials: 3, seed: 9, ..Default::default() };
    let x = perturbation_trials(grid, &model, w, &opts).unwrap();
    let y = perturbation_trials(grid, &model, w, &opts).unwrap();
    assert_eq!(serde_json::to_string(&x).unwrap(), serde_json::to_string(&y).unwrap());
}
