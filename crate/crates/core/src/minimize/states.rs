use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::certify::{certificate_at, LocalMinCertificate, STATIONARITY_TOL};
use super::engine::{Coupling, DescentOutcome, DescentStatus, Problem, SolverConfig};
use crate::error::{Error, Result};
use crate::nonlinearity::{
    decompose_negative_set, truncate, well_levels, Interval, NonlinearityModel, DEFAULT_ROOT_TOL,
};
use crate::radial::{
    ball_volume, compute_functionals, make_bump, static_residual, BumpStyle, FunctionalValues,
    RadialGrid,
};

pub const DEDUP_TOL: f64 = 1e-2;
const CERT_EIGS: usize = 3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StandingWaveResult {
    pub u: Vec<f64>,
    pub omega: f64,
    pub sigma: f64,
    pub functionals: FunctionalValues,
    pub residual: f64,
    pub converged: bool,
    pub status: DescentStatus,
    /// Mass fraction beyond 0.9 r_max; large values mean the profile spread to the wall.
    pub boundary_fraction: f64,
    pub spread: bool,
    pub hylomorphic: bool,
    pub j0_negative: bool,
    pub certificate: LocalMinCertificate,
    pub linf: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub energy_history: Vec<f64>,
}

impl StandingWaveResult {
    pub fn is_certified(&self) -> bool {
        self.converged && self.certificate.status == super::certify::CertificateStatus::Certified
    }
}

pub fn boundary_fraction(grid: &RadialGrid, u: &[f64]) -> f64 {
    let w = grid.weights();
    let cut = 0.9 * grid.r_max();
    let mut outer = 0.0;
    let mut total = 0.0;
    for (j, (x, wj)) in u.iter().zip(w).enumerate() {
        let m = wj * x * x;
        total += m;
        if grid.node(j) > cut {
            outer += m;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

pub(crate) fn assemble(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    sigma: f64,
    out: DescentOutcome,
    cfg: &SolverConfig,
) -> Result<StandingWaveResult> {
    let f = compute_functionals(grid, &out.u, model, sigma)?;
    let omega = f.omega;
    let residual = static_residual(grid, &out.u, omega, model)?;
    let bf = boundary_fraction(grid, &out.u);
    let spread = bf > cfg.spread_tol;
    let converged = out.status == DescentStatus::Converged && residual <= cfg.grad_tol && !spread;
    let certificate = if converged {
        certificate_at(grid, model, &out.u, sigma, CERT_EIGS, cfg.seed)
    } else if spread {
        LocalMinCertificate::unknown("profile spread to the domain boundary")
    } else {
        LocalMinCertificate::unknown(format!("descent ended with status {:?}", out.status))
    };
    let linf = out.u.iter().cloned().fold(0.0, f64::max);
    Ok(StandingWaveResult {
        omega,
        sigma,
        residual,
        converged,
        status: out.status,
        boundary_fraction: bf,
        spread,
        hylomorphic: f.lambda < model.omega,
        j0_negative: f.j0 < 0.0,
        certificate,
        linf,
        iterations: out.iterations,
        energy_history: out.history,
        functionals: f,
        u: out.u,
    })
}

fn run_charge(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    sigma: f64,
    init: &[f64],
    cfg: &SolverConfig,
    basin: bool,
) -> Result<StandingWaveResult> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    cfg.validate()?;
    if init.len() != grid.len() {
        return Err(Error::Field("initial profile does not match the grid".into()));
    }
    let p = Problem { grid, model, coupling: Coupling::Charge { sigma }, basin };
    let out = p.run(init, cfg)?;
    assemble(grid, model, sigma, out, cfg)
}

/// Descend E_σ from `init`.
pub fn minimize_energy(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    sigma: f64,
    init: &[f64],
    config: &SolverConfig,
) -> Result<StandingWaveResult> {
    run_charge(grid, model, sigma, init, config, false)
}

pub fn certify_local_min(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    result: &StandingWaveResult,
    n_eigs: usize,
) -> Result<LocalMinCertificate> {
    let omega = result.sigma / grid.mass_dot(&result.u, &result.u);
    let res = static_residual(grid, &result.u, omega, model)?;
    if res > STATIONARITY_TOL {
        return Err(Error::NotStationary(res));
    }
    Ok(certificate_at(grid, model, &result.u, result.sigma, n_eigs, 0))
}

/// Newton iteration for −Δu + F′(u) = ω²u at fixed ω from `init`, reported at σ = ωK.
/// Nothing forces a minimizer; unstable-branch states come out with a saddle certificate.
pub fn solve_at_frequency(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    omega: f64,
    init: &[f64],
    config: &SolverConfig,
) -> Result<StandingWaveResult> {
    if !(omega > 0.0 && omega < model.omega) {
        return Err(Error::Domain(format!("frequency must lie in (0, {}), got {omega}", model.omega)));
    }
    config.validate()?;
    if init.len() != grid.len() {
        return Err(Error::Field("initial profile does not match the grid".into()));
    }
    let n = grid.cells();
    let c = model.omega * model.omega - omega * omega;
    let mut u = init.to_vec();
    u[n] = 0.0;
    let mut res = static_residual(grid, &u, omega, model)?;
    let mut status = DescentStatus::MaxIters;
    let mut iterations = 0;
    for it in 0..config.max_iters.min(200) {
        iterations = it;
        if res <= config.grad_tol {
            status = DescentStatus::Converged;
            break;
        }
        let (_, b) = grid.potential_and_load(model, &u);
        let au = grid.stiffness_mul(&u);
        let mu = grid.mass_mul(&u);
        let rhs: Vec<f64> = (0..n).map(|i| -(au[i] + b[i] + c * mu[i])).collect();
        let jac = grid.stiffness().add_scaled(1.0, &grid.hessian_potential(model, &u)).add_scaled(c, grid.mass());
        let d = grid.solve(&jac, &rhs).ok_or_else(|| Error::NoGroundState("singular Jacobian".into()))?;
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if let Ok(r) = static_residual(grid, &trial, omega, model) {
                if r < res {
                    next = Some((trial, r));
                    break;
                }
            }
            step *= 0.5;
        }
        match next {
            Some((t, r)) => {
                u = t;
                res = r;
            }
            None => {
                status = DescentStatus::Stalled;
                break;
            }
        }
        iterations = it + 1;
    }
    if res <= config.grad_tol {
        status = DescentStatus::Converged;
    }
    let k = grid.mass_dot(&u, &u);
    if !(k > 0.0) {
        return Err(Error::ZeroMass);
    }
    let sigma = omega * k;
    let f = compute_functionals(grid, &u, model, sigma)?;
    let out = DescentOutcome {
        value: f.e_sigma,
        j0: f.j0,
        k,
        residual: res,
        iterations,
        status,
        history: vec![f.e_sigma],
        u,
    };
    assemble(grid, model, sigma, out, config)
}

/// Stationary-state record for a given profile at charge σ, e.g. one read back from disk.
pub fn evaluate_profile(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    u: &[f64],
    sigma: f64,
    config: &SolverConfig,
) -> Result<StandingWaveResult> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    grid.check_field(u)?;
    let f = compute_functionals(grid, u, model, sigma)?;
    let residual = static_residual(grid, u, f.omega, model)?;
    let status = if residual <= config.grad_tol { DescentStatus::Converged } else { DescentStatus::Stalled };
    let out = DescentOutcome {
        value: f.e_sigma,
        j0: f.j0,
        k: f.k,
        residual,
        iterations: 0,
        status,
        history: vec![f.e_sigma],
        u: u.to_vec(),
    };
    assemble(grid, model, sigma, out, config)
}

/// Follow a branch of stationary states through `omegas`, each Newton solve started from the previous profile.
/// Stops at the first failure or non-converged state.
pub fn continue_in_frequency(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    start: &[f64],
    omegas: &[f64],
    config: &SolverConfig,
) -> Vec<StandingWaveResult> {
    let mut out = Vec::new();
    let mut u = start.to_vec();
    for &w in omegas {
        match solve_at_frequency(grid, model, w, &u, config) {
            Ok(r) if r.converged => {
                u = r.u.clone();
                out.push(r);
            }
            _ => break,
        }
    }
    out
}

/// Plateau levels used to seed descents: R/s² minimizers per negative interval.
pub fn seed_levels(model: &NonlinearityModel) -> (Vec<f64>, Vec<Interval>) {
    let scan = model.default_scan_max();
    match decompose_negative_set(model, scan, DEFAULT_ROOT_TOL) {
        Ok(d) if d.count() > 0 => (well_levels(model, &d), d.intervals),
        _ => (vec![1.0], vec![]),
    }
}

/// Inner radius of a unit-ramp bump at level s with K close to `k`.
fn radius_for_mass(grid: &RadialGrid, s: f64, k: f64) -> f64 {
    let unit = ball_volume(grid.dimension(), 1.0);
    let r = (k / (s * s * unit)).powf(1.0 / grid.dimension() as f64);
    r.max(2.0 * grid.h())
}

fn catalog(grid: &RadialGrid, levels: &[f64], sigma: f64, omega: f64, n: usize, k_span: (f64, f64)) -> Vec<Vec<f64>> {
    let per = n.div_ceil(levels.len()).max(1);
    let mut out = Vec::new();
    let kc = sigma / omega;
    let limit = 0.75 * grid.r_max();
    for i in 0..per {
        let t = if per == 1 { 0.5 } else { i as f64 / (per - 1) as f64 };
        let k = kc * k_span.0 * (k_span.1 / k_span.0).powf(t);
        for &s in levels {
            let r = radius_for_mass(grid, s, k);
            if r + 1.0 >= limit {
                continue;
            }
            if let Ok(u) = make_bump(grid, s, r, BumpStyle::UnitRamp) {
                out.push(u);
            }
        }
    }
    out.truncate(n.max(1));
    out
}

/// Unit-ramp bumps with K = k exactly, at each level and at fractions of it (wider, flatter profiles).
pub(crate) fn mass_catalog(grid: &RadialGrid, levels: &[f64], k: f64, n: usize) -> Vec<Vec<f64>> {
    let limit = 0.75 * grid.r_max();
    let mut out = Vec::new();
    for frac in [1.0, 0.5, 0.25, 0.125, 0.0625] {
        for &s0 in levels {
            let s = s0 * frac;
            let r = radius_for_mass(grid, s, k);
            if r + 1.0 >= limit {
                continue;
            }
            if let Ok(mut u) = make_bump(grid, s, r, BumpStyle::UnitRamp) {
                let c = (k / grid.mass_dot(&u, &u)).sqrt();
                u.iter_mut().for_each(|x| *x *= c);
                out.push(u);
            }
        }
    }
    out.truncate(n.max(1));
    out
}

fn best_of(results: Vec<(usize, Result<StandingWaveResult>)>) -> (Option<StandingWaveResult>, Vec<String>) {
    let mut best: Option<(usize, StandingWaveResult)> = None;
    let mut notes = Vec::new();
    for (i, r) in results {
        match r {
            Ok(r) if r.converged => {
                let better = match &best {
                    None => true,
                    Some((bi, b)) => {
                        let (e, be) = (r.functionals.e_sigma, b.functionals.e_sigma);
                        e < be || (e == be && i < *bi)
                    }
                };
                if better {
                    best = Some((i, r));
                }
            }
            Ok(r) => notes.push(format!(
                "start {i}: {:?}, residual {:.2e}, boundary fraction {:.2e}",
                r.status, r.residual, r.boundary_fraction
            )),
            Err(e) => notes.push(format!("start {i}: {e}")),
        }
    }
    (best.map(|b| b.1), notes)
}

/// Lowest-energy converged state over a multistart bump catalog.
pub fn find_ground_state(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    sigma: f64,
    n_starts: usize,
    config: &SolverConfig,
) -> Result<StandingWaveResult> {
    if n_starts < 1 {
        return Err(Error::Domain("n_starts must be >= 1".into()));
    }
    let (levels, _) = seed_levels(model);
    let inits = catalog(grid, &levels, sigma, model.omega, n_starts, (0.1, 10.0));
    if inits.is_empty() {
        return Err(Error::NoGroundState("no initial profile fits inside the domain".into()));
    }
    let results: Vec<(usize, Result<StandingWaveResult>)> = inits
        .par_iter()
        .enumerate()
        .map(|(i, u0)| (i, minimize_energy(grid, model, sigma, u0, config)))
        .collect();
    let (best, notes) = best_of(results);
    best.ok_or_else(|| Error::NoGroundState(notes.join("; ")))
}

/// Minimizer of E_σ inside {J₀ < 0}, with basin-exit monitoring.
pub fn find_bound_state_in_basin(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    sigma: f64,
    config: &SolverConfig,
) -> Result<StandingWaveResult> {
    let mut inits = inits_for_basin(grid, model, sigma, config);
    inits.extend(constrained_inits(grid, model, sigma, config));
    basin_from(grid, model, sigma, config, &inits)
}

pub(crate) fn basin_from(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    sigma: f64,
    config: &SolverConfig,
    inits: &[Vec<f64>],
) -> Result<StandingWaveResult> {
    if inits.is_empty() {
        return Err(Error::BasinExit("no initial profile with J0 < 0 fits inside the domain".into()));
    }
    let results: Vec<(usize, Result<StandingWaveResult>)> = inits
        .par_iter()
        .enumerate()
        .map(|(i, u0)| {
            let r = run_charge(grid, model, sigma, u0, config, true).and_then(|r| {
                if r.j0_negative {
                    Ok(r)
                } else {
                    Err(Error::BasinExit(format!("start {i} ended with J0 = {}", r.functionals.j0)))
                }
            });
            (i, r)
        })
        .collect();
    let (best, notes) = best_of(results);
    best.ok_or_else(|| Error::BasinExit(notes.join("; ")))
}

pub fn inits_for_basin(grid: &RadialGrid, model: &NonlinearityModel, sigma: f64, config: &SolverConfig) -> Vec<Vec<f64>> {
    let (levels, _) = seed_levels(model);
    let mut inits = Vec::new();
    for span in [(0.1, 10.0), (1.0, 100.0), (10.0, 1000.0)] {
        for u in catalog(grid, &levels, sigma, model.omega, 3 * config.n_starts, span) {
            if crate::radial::basic_functionals(grid, &u, model).j0 < 0.0 {
                inits.push(u);
            }
        }
        if inits.len() >= config.n_starts {
            break;
        }
    }
    inits.truncate(config.n_starts);
    inits
}

/// Minimizers of J₀ on {K = k} for k at and above σ/Ω that lie inside {J₀ < 0}.
fn constrained_inits(grid: &RadialGrid, model: &NonlinearityModel, sigma: f64, config: &SolverConfig) -> Vec<Vec<f64>> {
    let kc = sigma / model.omega;
    [1.0, 1.05, 1.2, 1.5, 2.0]
        .par_iter()
        .filter_map(|f| super::constrained::inf_j0_at_mass(grid, model, f * kc, config).ok())
        .filter(|c| c.j0 < 0.0 && !c.spread)
        .map(|c| c.u)
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WellState {
    pub well: usize,
    /// L∞ window (ξ_i, η_i) the state must fall in.
    pub window: Interval,
    pub state: StandingWaveResult,
    /// E_σ of the same profile under the truncated model.
    pub e_sigma_truncated: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WellFailure {
    pub well: usize,
    pub window: Interval,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub sigma: f64,
    pub intervals: Vec<Interval>,
    pub states: Vec<WellState>,
    pub failures: Vec<WellFailure>,
}

impl MultiplicityReport {
    pub fn certified_count(&self) -> usize {
        self.states.iter().filter(|s| s.state.is_certified()).count()
    }
}

pub fn relative_l2_distance(grid: &RadialGrid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    grid.l2_norm(&d) / grid.l2_norm(a).max(grid.l2_norm(b))
}

/// One state per negative interval via the truncated models R̃_i.
pub fn find_multiple_states(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    sigma: f64,
    config: &SolverConfig,
) -> Result<MultiplicityReport> {
    let scan = model.default_scan_max();
    let dec = decompose_negative_set(model, scan, DEFAULT_ROOT_TOL)?;
    if dec.count() == 0 {
        return Err(Error::Domain("the negative set of R is empty".into()));
    }
    let levels = well_levels(model, &dec);
    let jobs: Vec<(usize, Result<(WellState, f64)>)> = (0..dec.count())
        .into_par_iter()
        .map(|i| (i, well_state(grid, model, &dec, i, levels[i], sigma, config)))
        .collect();
    let mut states: Vec<WellState> = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in jobs {
        let window = dec.intervals[i].clone();
        match r {
            Ok((s, _)) => {
                let dup = states.iter().any(|o| relative_l2_distance(grid, &o.state.u, &s.state.u) <= DEDUP_TOL);
                if dup {
                    failures.push(WellFailure { well: i + 1, window, reason: "duplicate of an earlier well's state".into() });
                } else {
                    states.push(s);
                }
            }
            Err(e) => failures.push(WellFailure { well: i + 1, window, reason: e.to_string() }),
        }
    }
    Ok(MultiplicityReport { sigma, intervals: dec.intervals.clone(), states, failures })
}

fn well_state(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    dec: &crate::nonlinearity::NegativeSetDecomposition,
    i: usize,
    level: f64,
    sigma: f64,
    config: &SolverConfig,
) -> Result<(WellState, f64)> {
    let iv = &dec.intervals[i];
    let truncated = if iv.eta.is_finite() { truncate(model, dec, i + 1)? } else { model.clone() };
    let inits: Vec<Vec<f64>> = catalog(grid, &[level], sigma, model.omega, 3 * config.n_starts, (0.1, 10.0))
        .into_iter()
        .filter(|u| crate::radial::basic_functionals(grid, u, &truncated).j0 < 0.0)
        .take(config.n_starts)
        .collect();
    let inits = if inits.is_empty() {
        catalog(grid, &[level], sigma, model.omega, config.n_starts, (0.1, 10.0))
    } else {
        inits
    };
    if inits.is_empty() {
        return Err(Error::NoGroundState("no initial profile in this well fits inside the domain".into()));
    }
    let results: Vec<(usize, Result<StandingWaveResult>)> = inits
        .par_iter()
        .enumerate()
        .map(|(i, u0)| {
            let r = minimize_energy(grid, &truncated, sigma, u0, config).and_then(|r| {
                if r.converged && !(r.linf > iv.xi && r.linf < iv.eta) {
                    Err(Error::Window { linf: r.linf, lo: iv.xi, hi: iv.eta })
                } else {
                    Ok(r)
                }
            });
            (i, r)
        })
        .collect();
    let (best, notes) = best_of(results);
    let tr = best.ok_or_else(|| Error::NoGroundState(notes.join("; ")))?;
    // re-certify under the original model: identical values below the cut
    let rerun = assemble(
        grid,
        model,
        sigma,
        DescentOutcome {
            u: tr.u.clone(),
            value: tr.functionals.e_sigma,
            j0: tr.functionals.j0,
            k: tr.functionals.k,
            residual: tr.residual,
            iterations: tr.iterations,
            status: tr.status,
            history: tr.energy_history.clone(),
        },
        config,
    )?;
    let e_tr = tr.functionals.e_sigma;
    Ok((WellState { well: i + 1, window: iv.clone(), state: rerun, e_sigma_truncated: e_tr }, e_tr))
}
