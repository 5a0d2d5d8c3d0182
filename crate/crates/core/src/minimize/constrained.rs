//! inf J₀ subject to K = k by an augmented Lagrangian on the descent engine.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{Coupling, DescentStatus, Problem, SolverConfig};
use super::states::{boundary_fraction, mass_catalog, seed_levels};
use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearityModel;
use crate::radial::{basic_functionals, RadialGrid};

pub const RHO_MAX: f64 = 1e6;
const CONSTRAINT_TOL: f64 = 1e-10;
const OUTER_ITERS: usize = 40;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstrainedMin {
    pub k_target: f64,
    pub u: Vec<f64>,
    pub j0: f64,
    pub k: f64,
    pub kinetic: f64,
    /// Lagrange multiplier λ of dJ₀ + 2λ M u = 0; equals ½(Ω² − ω²) at solutions of the static equation.
    pub multiplier: f64,
    pub rho: f64,
    pub residual: f64,
    pub converged: bool,
    pub boundary_fraction: f64,
    pub spread: bool,
}

/// Minimize J₀ on {K = k} from `init`.
pub fn minimize_j0_at_mass(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    k: f64,
    init: &[f64],
    config: &SolverConfig,
) -> Result<ConstrainedMin> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("mass level must be positive, got {k}")));
    }
    config.validate()?;
    let w2 = model.omega * model.omega;
    let mut rho = (w2 / k).min(RHO_MAX);
    let mut multiplier = 0.0;
    let mut u = init.to_vec();
    let mut last_violation = f64::INFINITY;
    let mut out = None;
    for _ in 0..OUTER_ITERS {
        let p = Problem { grid, model, coupling: Coupling::Penalty { target: k, multiplier, rho }, basin: false };
        let o = p.run(&u, config)?;
        let violation = (o.k - k).abs() / k;
        let inner_ok = o.status == DescentStatus::Converged;
        u = o.u.clone();
        out = Some(o);
        if inner_ok && violation <= CONSTRAINT_TOL {
            break;
        }
        multiplier += rho * (out.as_ref().unwrap().k - k);
        if violation > 0.25 * last_violation {
            rho = (rho * 10.0).min(RHO_MAX);
        }
        last_violation = violation;
    }
    let o = out.expect("at least one outer iteration");
    let b = basic_functionals(grid, &o.u, model);
    let bf = boundary_fraction(grid, &o.u);
    let violation = (o.k - k).abs() / k;
    let residual = o.residual.max(violation);
    Ok(ConstrainedMin {
        k_target: k,
        j0: b.j0,
        k: b.k,
        kinetic: b.kinetic,
        multiplier: multiplier + rho * (o.k - k),
        rho,
        residual,
        converged: o.status == DescentStatus::Converged && residual <= config.grad_tol.max(CONSTRAINT_TOL),
        boundary_fraction: bf,
        spread: bf > config.spread_tol,
        u: o.u,
    })
}

/// Multistart over bumps with K near k; the lowest J₀ among finished runs.
pub fn inf_j0_at_mass(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    k: f64,
    config: &SolverConfig,
) -> Result<ConstrainedMin> {
    let (levels, _) = seed_levels(model);
    let inits = mass_catalog(grid, &levels, k, config.n_starts);
    if inits.is_empty() {
        return Err(Error::Geometry(format!("no initial profile with K = {k} fits inside the domain")));
    }
    let runs: Vec<(usize, Result<ConstrainedMin>)> = inits
        .par_iter()
        .enumerate()
        .map(|(i, u0)| (i, minimize_j0_at_mass(grid, model, k, u0, config)))
        .collect();
    let mut best: Option<ConstrainedMin> = None;
    let mut errors = Vec::new();
    for (i, r) in runs {
        match r {
            Ok(c) => {
                let better = match &best {
                    None => true,
                    Some(b) => (c.converged && !b.converged) || (c.converged == b.converged && c.j0 < b.j0),
                };
                if better {
                    best = Some(c);
                }
            }
            Err(e) => errors.push(format!("start {i}: {e}")),
        }
    }
    best.ok_or_else(|| Error::NoGroundState(errors.join("; ")))
}
