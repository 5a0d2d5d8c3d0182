//! Projected descent on J₀(u) + φ(K(u)) for nonnegative radial profiles.
//!
//! φ is either the charge term ½(Ω²K + σ²/K) (reduced energy E_σ) or an
//! augmented-Lagrangian penalty for K = k. Steps are Newton steps when the
//! Hessian is positive definite, shifted Newton steps otherwise, and
//! metric-preconditioned gradient steps when Newton is disabled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, RankOneUpdate};
use crate::nonlinearity::NonlinearityModel;
use crate::radial::RadialGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Fixed,
    Armijo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    H1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub step_rule: StepRule,
    pub metric: Metric,
    /// Relative residual ‖∇E‖/‖u‖ (mass norm) at which a run is converged.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub positivity: bool,
    pub seed: u64,
    pub newton: bool,
    pub fixed_step: f64,
    pub n_starts: usize,
    /// Mass fraction in r > 0.9 r_max above which a profile counts as spread.
    pub spread_tol: f64,
    pub basin_rejections: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_rule: StepRule::Armijo,
            metric: Metric::H1,
            grad_tol: 1e-9,
            max_iters: 4000,
            positivity: true,
            seed: 0,
            newton: true,
            fixed_step: 0.5,
            n_starts: 8,
            spread_tol: 1e-6,
            basin_rejections: 40,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.max_iters < 1 || !(self.fixed_step > 0.0) || self.n_starts < 1 {
            return Err(Error::Domain("solver config needs grad_tol > 0, max_iters >= 1, fixed_step > 0, n_starts >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Coupling {
    Charge { sigma: f64 },
    Penalty { target: f64, multiplier: f64, rho: f64 },
}

impl Coupling {
    /// φ(K), φ'(K), φ''(K).
    fn phi(&self, omega2: f64, k: f64) -> (f64, f64, f64) {
        match *self {
            Coupling::Charge { sigma } => {
                let s2 = sigma * sigma;
                (0.5 * (omega2 * k + s2 / k), 0.5 * (omega2 - s2 / (k * k)), s2 / (k * k * k))
            }
            Coupling::Penalty { target, multiplier, rho } => {
                let d = k - target;
                (multiplier * d + 0.5 * rho * d * d, multiplier + rho * d, rho)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentStatus {
    Converged,
    MaxIters,
    Stalled,
    BasinExit,
}

#[derive(Clone, Debug)]
pub struct DescentOutcome {
    pub u: Vec<f64>,
    pub value: f64,
    pub j0: f64,
    pub k: f64,
    pub residual: f64,
    pub iterations: usize,
    pub status: DescentStatus,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

pub(crate) struct Problem<'a> {
    pub grid: &'a RadialGrid,
    pub model: &'a NonlinearityModel,
    pub coupling: Coupling,
    pub basin: bool,
}

/// Relative size of rounding noise in objective values.
pub const NOISE: f64 = 1e-12;
/// Accepted steps without progress in value or residual before a run counts as stalled.
const STALL_STEPS: usize = 50;

struct Eval {
    value: f64,
    j0: f64,
    k: f64,
    /// nodal differential
    diff: Vec<f64>,
    /// magnitude of the summed terms, for rounding-level comparisons
    scale: f64,
}

impl<'a> Problem<'a> {
    fn eval(&self, u: &[f64]) -> Eval {
        let g = self.grid;
        let au = g.stiffness_mul(u);
        let mu = g.mass_mul(u);
        let n = g.cells();
        let kin = 0.5 * dot(&au[..n], &u[..n]);
        let k = dot(&mu[..n], &u[..n]);
        let (p, b) = g.potential_and_load(self.model, u);
        let w2 = self.model.omega * self.model.omega;
        let (phi, dphi, _) = self.coupling.phi(w2, k);
        let mut diff: Vec<f64> = (0..g.len()).map(|i| au[i] + b[i] + 2.0 * dphi * mu[i]).collect();
        diff[n] = 0.0;
        Eval { value: kin + p + phi, j0: kin + p, k, diff, scale: kin + p.abs() + phi.abs() }
    }

    fn residual(&self, e: &Eval) -> f64 {
        let g = self.grid.mass_solve(&e.diff);
        let nu = e.k.max(0.0).sqrt();
        if nu == 0.0 {
            return f64::INFINITY;
        }
        self.grid.l2_norm(&g) / nu
    }

    /// Newton direction if H is positive definite, else a shifted one. Returns (d, was_pure_newton).
    fn newton_direction(&self, u: &[f64], e: &Eval, shift: &mut f64) -> Option<(Vec<f64>, bool)> {
        let g = self.grid;
        let w2 = self.model.omega * self.model.omega;
        let (_, dphi, ddphi) = self.coupling.phi(w2, e.k);
        let t = g.stiffness().add_scaled(1.0, &g.hessian_potential(self.model, u)).add_scaled(2.0 * dphi, g.mass());
        let mu = g.mass_mul(u);
        let v: Vec<f64> = mu.iter().map(|x| 2.0 * x).collect();
        let rhs: Vec<f64> = e.diff.iter().map(|x| -x).collect();
        if let Some(f) = (RankOneUpdate { t: &t, v: &v, c: ddphi }).factor() {
            if f.negative_count() == 0 {
                let mut d = f.solve(&rhs);
                d.push(0.0);
                *shift *= 0.25;
                return Some((d, true));
            }
        }
        let mut mu_s = shift.max(1e-4 * w2);
        for _ in 0..60 {
            let ts = t.add_scaled(mu_s, g.mass());
            if let Some(f) = (RankOneUpdate { t: &ts, v: &v, c: ddphi }).factor() {
                if f.negative_count() == 0 {
                    let mut d = f.solve(&rhs);
                    d.push(0.0);
                    *shift = mu_s;
                    return Some((d, false));
                }
            }
            mu_s *= 4.0;
        }
        None
    }

    fn gradient_direction(&self, e: &Eval, metric: Metric) -> Vec<f64> {
        let g = self.grid;
        let rhs: Vec<f64> = e.diff.iter().map(|x| -x).collect();
        match metric {
            Metric::L2 => g.mass_solve(&rhs),
            Metric::H1 => {
                let t = g.stiffness().add_scaled(1.0, g.mass());
                g.solve(&t, &rhs).expect("A + M is positive definite")
            }
        }
    }

    pub fn run(&self, init: &[f64], cfg: &SolverConfig) -> Result<DescentOutcome> {
        let g = self.grid;
        let n = g.cells();
        let mut u = init.to_vec();
        u[n] = 0.0;
        if cfg.positivity {
            for x in u.iter_mut() {
                *x = x.max(0.0);
            }
        }
        let mut e = self.eval(&u);
        if !(e.k > 0.0) {
            return Err(Error::ZeroMass);
        }
        let k0 = e.k;
        let mut history = vec![e.value];
        let mut alpha: f64 = 1.0;
        let mut shift = 1e-2 * self.model.omega * self.model.omega;
        let mut rejections = 0usize;
        let mut status = DescentStatus::MaxIters;
        let mut residual = self.residual(&e);
        let mut iterations = 0;
        let mut best_residual = residual;
        let mut idle = 0usize;
        for it in 0..cfg.max_iters {
            iterations = it;
            if residual < cfg.grad_tol {
                status = DescentStatus::Converged;
                break;
            }
            let (d, pure) = if cfg.newton {
                match self.newton_direction(&u, &e, &mut shift) {
                    Some(x) => x,
                    None => (self.gradient_direction(&e, cfg.metric), false),
                }
            } else {
                (self.gradient_direction(&e, cfg.metric), false)
            };
            let mut step = match (cfg.step_rule, cfg.newton) {
                (StepRule::Fixed, _) => cfg.fixed_step,
                (StepRule::Armijo, true) => 1.0,
                (StepRule::Armijo, false) => (2.0 * alpha).min(1e6_f64),
            };
            let fudge = NOISE * e.scale.max(1e-300);
            let mut accepted = None;
            for _ in 0..80 {
                let mut trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                trial[n] = 0.0;
                if cfg.positivity {
                    for x in trial.iter_mut() {
                        *x = x.max(0.0);
                    }
                }
                let et = self.eval(&trial);
                if !(et.k > 0.0) || !et.value.is_finite() {
                    step *= 0.5;
                    continue;
                }
                if self.basin && et.j0 >= 0.0 {
                    rejections += 1;
                    if rejections >= cfg.basin_rejections {
                        return Ok(DescentOutcome {
                            value: e.value,
                            j0: e.j0,
                            k: e.k,
                            residual,
                            iterations: it,
                            status: DescentStatus::BasinExit,
                            history,
                            u,
                        });
                    }
                    step *= 0.5;
                    continue;
                }
                let delta: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
                let slope = dot(&e.diff[..n], &delta[..n]);
                let ok = match cfg.step_rule {
                    StepRule::Fixed => et.value <= e.value + fudge,
                    StepRule::Armijo => {
                        et.value <= e.value + 1e-4 * slope
                            || (pure && slope < 0.0 && et.value <= e.value + fudge && self.residual(&et) < residual)
                    }
                };
                if ok {
                    accepted = Some((trial, et));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((trial, et)) => {
                    if self.basin {
                        rejections = 0;
                    }
                    let progress = et.value < e.value - fudge;
                    alpha = step;
                    u = trial;
                    e = et;
                    history.push(e.value);
                    residual = self.residual(&e);
                    if progress || residual < 0.5 * best_residual {
                        idle = 0;
                    } else {
                        idle += 1;
                        if idle >= STALL_STEPS {
                            status = DescentStatus::Stalled;
                            iterations = it + 1;
                            break;
                        }
                    }
                    best_residual = best_residual.min(residual);
                    if e.k < 1e-12 * k0 {
                        return Err(Error::Collapse);
                    }
                }
                None => {
                    status = DescentStatus::Stalled;
                    break;
                }
            }
            iterations = it + 1;
        }
        if residual < cfg.grad_tol {
            status = DescentStatus::Converged;
        }
        Ok(DescentOutcome { value: e.value, j0: e.j0, k: e.k, residual, iterations, status, history, u })
    }
}
