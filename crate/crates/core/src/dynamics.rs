//! Radial NKG dynamics ψ_tt − Δψ + F′(|ψ|)ψ/|ψ| = 0 with P1 elements in space
//! and Störmer–Verlet in time, energy and charge logs, and orbital-stability
//! trials around standing waves.
//!
//! The semi-discrete system is M ψ_tt = −Aψ − Ω²Mψ − b(ψ) with
//! b_j = ∫ R′(|ψ|)/|ψ| ψ φ_j; R′(s)/s → R″(0) = 0 at s = 0.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Ldl;
use crate::minimize::StandingWaveResult;
use crate::nonlinearity::NonlinearityModel;
use crate::radial::RadialGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexFieldState {
    pub psi: Vec<Complex64>,
    pub psi_t: Vec<Complex64>,
    pub time: f64,
}

impl ComplexFieldState {
    pub fn zeros(grid: &RadialGrid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { psi: z.clone(), psi_t: z, time: 0.0 }
    }

    pub fn check(&self, grid: &RadialGrid) -> Result<()> {
        if self.psi.len() != grid.len() || self.psi_t.len() != grid.len() {
            return Err(Error::Field("state does not match the grid".into()));
        }
        if self.psi[grid.cells()].norm() != 0.0 || self.psi_t[grid.cells()].norm() != 0.0 {
            return Err(Error::Field("state must vanish at r_max".into()));
        }
        if self.psi.iter().chain(&self.psi_t).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Field("state has non-finite entries".into()));
        }
        Ok(())
    }

    /// e^{iθ}Ψ.
    pub fn rotated(&self, theta: f64) -> Self {
        let z = Complex64::from_polar(1.0, theta);
        Self {
            psi: self.psi.iter().map(|x| z * x).collect(),
            psi_t: self.psi_t.iter().map(|x| z * x).collect(),
            time: self.time,
        }
    }

    fn is_finite(&self) -> bool {
        self.psi.iter().chain(&self.psi_t).all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// ψ = u, ψ_t = −iωu.
pub fn embed_standing_wave(wave: &StandingWaveResult) -> ComplexFieldState {
    embed_profile(&wave.u, wave.omega)
}

pub fn embed_profile(u: &[f64], omega: f64) -> ComplexFieldState {
    ComplexFieldState {
        psi: u.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        psi_t: u.iter().map(|&x| Complex64::new(0.0, -omega * x)).collect(),
        time: 0.0,
    }
}

fn split(z: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (z.iter().map(|x| x.re).collect(), z.iter().map(|x| x.im).collect())
}

/// Re(aᴴ T b) and Im(aᴴ T b) for a real matrix product with free-node vectors.
fn form(grid: &RadialGrid, mul: impl Fn(&[f64]) -> Vec<f64>, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let n = grid.cells();
    let (br, bi) = split(b);
    let (tr, ti) = (mul(&br), mul(&bi));
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..n {
        s += a[j].conj() * Complex64::new(tr[j], ti[j]);
    }
    s
}

fn mass_form(grid: &RadialGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    form(grid, |x| grid.mass_mul(x), a, b)
}

fn h1_form(grid: &RadialGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    form(grid, |x| grid.mass_mul(x), a, b) + form(grid, |x| grid.stiffness_mul(x), a, b)
}

/// 𝓔 = ∫ ½|ψ_t|² + ½|∇ψ|² + F(|ψ|).
pub fn energy(grid: &RadialGrid, model: &NonlinearityModel, state: &ComplexFieldState) -> f64 {
    let w2 = model.omega * model.omega;
    let kin = 0.5 * mass_form(grid, &state.psi_t, &state.psi_t).re;
    let grad = 0.5 * form(grid, |x| grid.stiffness_mul(x), &state.psi, &state.psi).re;
    let mass = 0.5 * w2 * mass_form(grid, &state.psi, &state.psi).re;
    let (qt, qw) = grid.quad_rule();
    let nq = qt.len();
    let mut pot = 0.0;
    for j in 0..grid.cells() {
        let (l, r) = (state.psi[j], state.psi[j + 1]);
        for q in 0..nq {
            let z = l + (r - l) * qt[q];
            pot += qw[j * nq + q] * model.r_value(z.norm_sqr().sqrt());
        }
    }
    kin + grad + mass + pot
}

/// 𝓗 = Im ∫ ψ_t ψ̄.
pub fn charge(grid: &RadialGrid, state: &ComplexFieldState) -> f64 {
    mass_form(grid, &state.psi, &state.psi_t).im
}

/// Largest eigenvalue of M⁻¹A, by bisection on the inertia of A − λM below the element bound.
pub fn max_frequency_squared(grid: &RadialGrid) -> f64 {
    let n = grid.cells();
    let (mut lo, mut hi) = (0.0, grid.element_frequency_bound() * (1.0 + 1e-12));
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        match grid.stiffness().add_scaled(-mid, grid.mass()).negative_count() {
            Some(c) if c >= n => hi = mid,
            _ => lo = mid,
        }
    }
    hi
}

/// Largest admissible leapfrog step: min(h, 2/√(λ_max(M⁻¹A) + Ω²)).
pub fn cfl_limit(grid: &RadialGrid, model: &NonlinearityModel) -> f64 {
    let w2 = model.omega * model.omega;
    grid.h().min(2.0 / (max_frequency_squared(grid) + w2).sqrt())
}

pub fn default_dt(grid: &RadialGrid, model: &NonlinearityModel) -> f64 {
    (0.5 * grid.h()).min(0.9 * cfl_limit(grid, model))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConservationLog {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub charge: Vec<f64>,
    pub energy_drift: Vec<f64>,
    pub charge_drift: Vec<f64>,
    /// true when the initial charge is 0 and charge drifts are absolute
    pub charge_drift_absolute: bool,
    pub max_energy_drift: f64,
    pub max_charge_drift: f64,
}

impl ConservationLog {
    fn push(&mut self, t: f64, e: f64, h: f64) {
        if self.times.is_empty() {
            self.charge_drift_absolute = h == 0.0;
        }
        self.times.push(t);
        self.energy.push(e);
        self.charge.push(h);
        let (e0, h0) = (self.energy[0], self.charge[0]);
        let de = if e0 != 0.0 { (e - e0).abs() / e0.abs() } else { (e - e0).abs() };
        let dh = if self.charge_drift_absolute { (h - h0).abs() } else { (h - h0).abs() / h0.abs() };
        self.energy_drift.push(de);
        self.charge_drift.push(dh);
        self.max_energy_drift = self.max_energy_drift.max(de);
        self.max_charge_drift = self.max_charge_drift.max(dh);
    }
}

/// Velocity Verlet on the semi-discrete system.
pub struct Integrator<'a> {
    grid: &'a RadialGrid,
    model: &'a NonlinearityModel,
    dt: f64,
    mass: Ldl,
}

impl<'a> Integrator<'a> {
    pub fn new(grid: &'a RadialGrid, model: &'a NonlinearityModel, dt: f64) -> Result<Self> {
        let limit = cfl_limit(grid, model);
        if !(dt > 0.0) || dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
        let mass = grid.mass().factor().expect("mass matrix is positive definite");
        Ok(Self { grid, model, dt, mass })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// ψ_tt = −M⁻¹(Aψ + b(ψ)) − Ω²ψ.
    pub fn acceleration(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let g = self.grid;
        let n = g.cells();
        let (pr, pi) = split(psi);
        let mut yr = g.stiffness_mul(&pr);
        let mut yi = g.stiffness_mul(&pi);
        let (qt, qw) = g.quad_rule();
        let nq = qt.len();
        let c0 = self.model.r_derivs(0.0)[2];
        for j in 0..n {
            let (l, r) = (psi[j], psi[j + 1]);
            for q in 0..nq {
                let t = qt[q];
                let z = l + (r - l) * t;
                let s = z.norm_sqr().sqrt();
                let c = if s > 0.0 { self.model.r_derivs(s)[1] / s } else { c0 };
                let f = z * (qw[j * nq + q] * c);
                yr[j] += f.re * (1.0 - t);
                yi[j] += f.im * (1.0 - t);
                if j + 1 < n {
                    yr[j + 1] += f.re * t;
                    yi[j + 1] += f.im * t;
                }
            }
        }
        let xr = self.mass.solve(&yr);
        let xi = self.mass.solve(&yi);
        let w2 = self.model.omega * self.model.omega;
        let mut a: Vec<Complex64> = (0..n).map(|j| -Complex64::new(xr[j], xi[j]) - psi[j] * w2).collect();
        a.push(Complex64::new(0.0, 0.0));
        a
    }

    /// One step; `acc` holds ψ_tt at the current state and is updated.
    pub fn step(&self, state: &mut ComplexFieldState, acc: &mut Vec<Complex64>) {
        let h = 0.5 * self.dt;
        for (v, a) in state.psi_t.iter_mut().zip(acc.iter()) {
            *v += a * h;
        }
        for (p, v) in state.psi.iter_mut().zip(&state.psi_t) {
            *p += v * self.dt;
        }
        *acc = self.acceleration(&state.psi);
        for (v, a) in state.psi_t.iter_mut().zip(acc.iter()) {
            *v += a * h;
        }
        state.time += self.dt;
    }

    /// Evolve `n_steps`, logging energy and charge every `stride` steps (and at the end),
    /// calling `observe` at each logged state.
    pub fn run(
        &self,
        state: &ComplexFieldState,
        n_steps: usize,
        stride: usize,
        mut observe: impl FnMut(&ComplexFieldState),
    ) -> Result<(ComplexFieldState, ConservationLog)> {
        state.check(self.grid)?;
        let stride = stride.max(1);
        let mut s = state.clone();
        let mut log = ConservationLog::default();
        let mut acc = self.acceleration(&s.psi);
        log.push(s.time, energy(self.grid, self.model, &s), charge(self.grid, &s));
        observe(&s);
        for k in 1..=n_steps {
            self.step(&mut s, &mut acc);
            if !s.is_finite() {
                return Err(Error::NonFinite { step: k });
            }
            if k % stride == 0 || k == n_steps {
                log.push(s.time, energy(self.grid, self.model, &s), charge(self.grid, &s));
                observe(&s);
            }
        }
        Ok((s, log))
    }
}

pub fn evolve(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    state: &ComplexFieldState,
    dt: f64,
    n_steps: usize,
    stride: usize,
) -> Result<(ComplexFieldState, ConservationLog)> {
    Integrator::new(grid, model, dt)?.run(state, n_steps, stride, |_| {})
}

/// ‖(a, b)‖ in discrete H¹ × L².
pub fn x_norm(grid: &RadialGrid, psi: &[Complex64], psi_t: &[Complex64]) -> f64 {
    (h1_form(grid, psi, psi).re + mass_form(grid, psi_t, psi_t).re).max(0.0).sqrt()
}

/// min over θ of ‖Ψ − e^{iθ}(u, −iωu)‖ in H¹ × L²; θ* = arg⟨(u, −iωu), Ψ⟩.
pub fn orbit_distance(grid: &RadialGrid, state: &ComplexFieldState, wave: &StandingWaveResult) -> f64 {
    orbit_distance_to(grid, state, &embed_standing_wave(wave))
}

pub fn orbit_distance_to(grid: &RadialGrid, state: &ComplexFieldState, orbit: &ComplexFieldState) -> f64 {
    let c = h1_form(grid, &orbit.psi, &state.psi) + mass_form(grid, &orbit.psi_t, &state.psi_t);
    let z = if c.norm() > 0.0 { c / c.norm() } else { Complex64::new(1.0, 0.0) };
    let dp: Vec<Complex64> = state.psi.iter().zip(&orbit.psi).map(|(a, b)| a - z * b).collect();
    let dv: Vec<Complex64> = state.psi_t.iter().zip(&orbit.psi_t).map(|(a, b)| a - z * b).collect();
    x_norm(grid, &dp, &dv)
}

/// Deterministic substream keyed by (seed, name).
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    ChargePreserving,
    ChargePerturbing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityOptions {
    pub delta: f64,
    /// Final time; None means 100/Ω.
    pub t_final: Option<f64>,
    pub n_trials: usize,
    /// None means the default step min(h/2, 0.9·CFL limit).
    pub dt: Option<f64>,
    /// Steps between orbit-distance samples.
    pub stride: usize,
    pub seed: u64,
    pub bumps: usize,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self { delta: 1e-2, t_final: None, n_trials: 5, dt: None, stride: 10, seed: 0, bumps: 4 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityTrial {
    pub index: usize,
    pub kind: PerturbationKind,
    pub perturbation_norm: f64,
    pub initial_distance: f64,
    pub charge_shift: f64,
    pub max_distance: f64,
    pub final_distance: f64,
    pub ratio: f64,
    /// First time the distance exceeded 10δ.
    pub escape_time: Option<f64>,
    pub max_energy_drift: f64,
    pub max_charge_drift: f64,
    /// (t, distance) samples
    pub distances: Vec<(f64, f64)>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub metric: String,
    pub delta: f64,
    pub t_final: f64,
    pub dt: f64,
    pub steps: usize,
    pub omega: f64,
    pub sigma: f64,
    pub trials: Vec<StabilityTrial>,
    pub completed: usize,
    pub failed: usize,
    /// max over completed trials of (max distance)/δ; 0 when δ = 0
    pub max_ratio: Option<f64>,
}

/// Smooth random radial field: Gaussian bumps with centers inside `reach`.
fn random_field(grid: &RadialGrid, rng: &mut ChaCha8Rng, reach: f64, bumps: usize) -> Vec<Complex64> {
    let params: Vec<(Complex64, f64, f64)> = (0..bumps)
        .map(|_| {
            let a = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            let c = rng.gen_range(0.0..reach);
            let w = rng.gen_range(0.5..2.0);
            (a, c, w)
        })
        .collect();
    let mut f: Vec<Complex64> = (0..grid.len())
        .map(|j| {
            let r = grid.node(j);
            params.iter().map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp()).sum()
        })
        .collect();
    f[grid.cells()] = Complex64::new(0.0, 0.0);
    f
}

/// Radius holding all but 1e-6 of the wave's mass, at least 1.
fn support_radius(grid: &RadialGrid, u: &[f64]) -> f64 {
    let w = grid.weights();
    let total: f64 = u.iter().zip(w).map(|(x, w)| w * x * x).sum();
    let mut acc = 0.0;
    for (j, (x, wj)) in u.iter().zip(w).enumerate() {
        acc += wj * x * x;
        if acc >= (1.0 - 1e-6) * total {
            return grid.node(j).max(1.0);
        }
    }
    grid.r_max()
}

fn add(a: &ComplexFieldState, p: &[Complex64], v: &[Complex64], scale: f64) -> ComplexFieldState {
    ComplexFieldState {
        psi: a.psi.iter().zip(p).map(|(x, y)| x + y * scale).collect(),
        psi_t: a.psi_t.iter().zip(v).map(|(x, y)| x + y * scale).collect(),
        time: a.time,
    }
}

/// Wave plus a perturbation of X-norm δ; charge-preserving perturbations are λq + βW with β
/// solving H((1+β)W + λq) = H(W) and λ fixed so the norm is δ.
fn perturb(
    grid: &RadialGrid,
    wave: &ComplexFieldState,
    rng: &mut ChaCha8Rng,
    kind: PerturbationKind,
    delta: f64,
    reach: f64,
    bumps: usize,
) -> Result<ComplexFieldState> {
    let qp = random_field(grid, rng, reach, bumps);
    let qv = random_field(grid, rng, reach, bumps);
    let nq = x_norm(grid, &qp, &qv);
    if delta == 0.0 || nq == 0.0 {
        return Ok(wave.clone());
    }
    let qp: Vec<Complex64> = qp.iter().map(|z| z / nq).collect();
    let qv: Vec<Complex64> = qv.iter().map(|z| z / nq).collect();
    match kind {
        PerturbationKind::ChargePerturbing => Ok(add(wave, &qp, &qv, delta)),
        PerturbationKind::ChargePreserving => {
            let hw = charge(grid, wave);
            if hw == 0.0 {
                return Err(Error::Domain("charge-preserving perturbation needs a charged wave".into()));
            }
            let q = ComplexFieldState { psi: qp.clone(), psi_t: qv.clone(), time: 0.0 };
            // 2B(W, q) = H(W + q) − H(W) − H(q)
            let b2 = charge(grid, &add(wave, &qp, &qv, 1.0)) - hw - charge(grid, &q);
            let hq = charge(grid, &q);
            let mut lambda = delta;
            let mut out = wave.clone();
            for _ in 0..50 {
                // H_W t² + λ·2B t + λ²H(q) − H_W = 0, root near t = 1
                let (a, b, c) = (hw, lambda * b2, lambda * lambda * hq - hw);
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return Err(Error::Domain("no charge-preserving perturbation of this size".into()));
                }
                let sq = disc.sqrt();
                let t = [(-b + sq) / (2.0 * a), (-b - sq) / (2.0 * a)]
                    .into_iter()
                    .min_by(|x, y| (x - 1.0).abs().total_cmp(&(y - 1.0).abs()))
                    .unwrap();
                let beta = t - 1.0;
                let pp: Vec<Complex64> = qp.iter().zip(&wave.psi).map(|(x, w)| x * lambda + w * beta).collect();
                let pv: Vec<Complex64> = qv.iter().zip(&wave.psi_t).map(|(x, w)| x * lambda + w * beta).collect();
                let norm = x_norm(grid, &pp, &pv);
                out = add(wave, &pp, &pv, 1.0);
                if (norm - delta).abs() <= 1e-12 * delta {
                    break;
                }
                lambda *= delta / norm;
            }
            Ok(out)
        }
    }
}

fn trial_kind(i: usize) -> PerturbationKind {
    if i % 2 == 0 {
        PerturbationKind::ChargePreserving
    } else {
        PerturbationKind::ChargePerturbing
    }
}

/// Perturb, evolve and track orbit distances for any stationary wave (minimum or not).
pub fn perturbation_trials(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    wave: &StandingWaveResult,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    if !(opts.delta >= 0.0 && opts.delta.is_finite()) || opts.n_trials < 1 || opts.bumps < 1 {
        return Err(Error::Domain("stability options need delta >= 0, n_trials >= 1, bumps >= 1".into()));
    }
    if wave.u.len() != grid.len() {
        return Err(Error::Field("wave does not match the grid".into()));
    }
    if !wave.converged {
        return Err(Error::Domain("wave is not a converged stationary state".into()));
    }
    let dt = opts.dt.unwrap_or_else(|| default_dt(grid, model));
    let integ = Integrator::new(grid, model, dt)?;
    let t_final = opts.t_final.unwrap_or(100.0 / model.omega);
    if !(t_final >= 0.0) {
        return Err(Error::Domain(format!("final time must be nonnegative, got {t_final}")));
    }
    let steps = (t_final / dt).ceil() as usize;
    let base = embed_standing_wave(wave);
    let reach = support_radius(grid, &wave.u);
    let trials: Vec<StabilityTrial> = (0..opts.n_trials)
        .into_par_iter()
        .map(|i| {
            let kind = trial_kind(i);
            let mut rng = substream(opts.seed, &format!("stability/{i}"));
            let mut trial = StabilityTrial {
                index: i,
                kind,
                perturbation_norm: 0.0,
                initial_distance: 0.0,
                charge_shift: 0.0,
                max_distance: 0.0,
                final_distance: 0.0,
                ratio: 0.0,
                escape_time: None,
                max_energy_drift: 0.0,
                max_charge_drift: 0.0,
                distances: Vec::new(),
                error: None,
            };
            let start = match perturb(grid, &base, &mut rng, kind, opts.delta, reach, opts.bumps) {
                Ok(s) => s,
                Err(e) => {
                    trial.error = Some(e.to_string());
                    return trial;
                }
            };
            let dp: Vec<Complex64> = start.psi.iter().zip(&base.psi).map(|(a, b)| a - b).collect();
            let dv: Vec<Complex64> = start.psi_t.iter().zip(&base.psi_t).map(|(a, b)| a - b).collect();
            trial.perturbation_norm = x_norm(grid, &dp, &dv);
            trial.charge_shift = charge(grid, &start) - charge(grid, &base);
            let mut distances = Vec::new();
            let run = integ.run(&start, steps, opts.stride, |s| {
                distances.push((s.time, orbit_distance_to(grid, s, &base)));
            });
            trial.initial_distance = distances.first().map(|d| d.1).unwrap_or(0.0);
            trial.max_distance = distances.iter().map(|d| d.1).fold(0.0, f64::max);
            trial.final_distance = distances.last().map(|d| d.1).unwrap_or(0.0);
            trial.escape_time = distances.iter().find(|d| d.1 > 10.0 * opts.delta && opts.delta > 0.0).map(|d| d.0);
            trial.ratio = if opts.delta > 0.0 { trial.max_distance / opts.delta } else { 0.0 };
            match run {
                Ok((_, log)) => {
                    trial.max_energy_drift = log.max_energy_drift;
                    trial.max_charge_drift = log.max_charge_drift;
                }
                Err(e) => trial.error = Some(e.to_string()),
            }
            trial.distances = distances;
            trial
        })
        .collect();
    let completed = trials.iter().filter(|t| t.error.is_none()).count();
    let max_ratio = trials.iter().filter(|t| t.error.is_none()).map(|t| t.ratio).fold(None, |m: Option<f64>, r| {
        Some(m.map_or(r, |m| m.max(r)))
    });
    Ok(StabilityReport {
        metric: "discrete H1 x L2".into(),
        delta: opts.delta,
        t_final,
        dt,
        steps,
        omega: wave.omega,
        sigma: wave.sigma,
        failed: trials.len() - completed,
        completed,
        trials,
        max_ratio,
    })
}

/// Orbital-stability experiment around a certified local minimum.
pub fn stability_experiment(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    wave: &StandingWaveResult,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    if !wave.is_certified() {
        return Err(Error::Domain("stability experiment needs a certified local minimum".into()));
    }
    perturbation_trials(grid, model, wave, opts)
}
