//! Radial profiles on [0, r_max]: piecewise-linear finite elements with exact
//! r^(N-1) moments, Dirichlet at r_max.
//!
//! Nodal vectors have length M + 1; the last entry is the boundary node and is
//! kept at zero. Matrices act on the M free nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, SymTridiag};
use crate::nonlinearity::NonlinearityModel;
use crate::quadrature::{gauss_legendre, integrate};

pub const DEFAULT_DIMENSION: u32 = 3;
pub const DEFAULT_R_MAX: f64 = 60.0;
pub const DEFAULT_CELLS: usize = 2048;
pub const DEFAULT_QUAD_POINTS: usize = 4;

/// Surface area of the unit sphere in R^N.
pub fn sphere_area(n: u32) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

pub fn ball_volume(n: u32, r: f64) -> f64 {
    sphere_area(n) * r.powi(n as i32) / n as f64
}

#[derive(Clone, Debug)]
pub struct RadialGrid {
    dimension: u32,
    r_max: f64,
    cells: usize,
    h: f64,
    weights: Vec<f64>,
    mass: SymTridiag,
    stiffness: SymTridiag,
    qt: Vec<f64>,
    qw: Vec<f64>,
    /// max over cells of the largest eigenvalue of the element pencil (A_e, M_e)
    element_bound: f64,
}

impl RadialGrid {
    pub fn new(dimension: u32, r_max: f64, cells: usize) -> Result<Self> {
        Self::with_quadrature(dimension, r_max, cells, DEFAULT_QUAD_POINTS)
    }

    pub fn desk() -> Self {
        Self::new(DEFAULT_DIMENSION, DEFAULT_R_MAX, DEFAULT_CELLS).expect("default grid")
    }

    pub fn with_quadrature(dimension: u32, r_max: f64, cells: usize, quad_points: usize) -> Result<Self> {
        if dimension < 1 {
            return Err(Error::Grid("dimension must be positive".into()));
        }
        if !(r_max > 0.0 && r_max.is_finite()) || cells < 2 || quad_points < 1 {
            return Err(Error::Grid(format!("need r_max > 0, cells >= 2, got {r_max}, {cells}")));
        }
        let h = r_max / cells as f64;
        let sa = sphere_area(dimension);
        let nm1 = dimension as i32 - 1;
        let (ex, ew) = gauss_legendre(((dimension as usize + 3) / 2).max(8));
        let mut weights = vec![0.0; cells + 1];
        let mut mdiag = vec![0.0; cells + 1];
        let mut moff = vec![0.0; cells];
        let mut adiag = vec![0.0; cells + 1];
        let mut aoff = vec![0.0; cells];
        let mut element_bound: f64 = 0.0;
        for j in 0..cells {
            let r0 = j as f64 * h;
            let r1 = (j + 1) as f64 * h;
            let (mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0);
            for (t, w) in ex.iter().zip(&ew) {
                let r = r0 + t * h;
                let wr = sa * h * w * r.powi(nm1);
                m00 += wr * (1.0 - t) * (1.0 - t);
                m01 += wr * (1.0 - t) * t;
                m11 += wr * t * t;
            }
            mdiag[j] += m00;
            mdiag[j + 1] += m11;
            moff[j] += m01;
            weights[j] += m00 + m01;
            weights[j + 1] += m01 + m11;
            let shell = sa * (r1.powi(dimension as i32) - r0.powi(dimension as i32)) / dimension as f64;
            let a = shell / (h * h);
            adiag[j] += a;
            adiag[j + 1] += a;
            aoff[j] -= a;
            element_bound = element_bound.max(a * (m00 + m11 + 2.0 * m01) / (m00 * m11 - m01 * m01));
        }
        mdiag.truncate(cells);
        adiag.truncate(cells);
        moff.truncate(cells - 1);
        aoff.truncate(cells - 1);
        let (qt, qx) = gauss_legendre(quad_points);
        let mut qw = Vec::with_capacity(cells * quad_points);
        for j in 0..cells {
            for (t, w) in qt.iter().zip(&qx) {
                let r = (j as f64 + t) * h;
                qw.push(sa * h * w * r.powi(nm1));
            }
        }
        Ok(Self {
            dimension,
            r_max,
            cells,
            h,
            weights,
            mass: SymTridiag { diag: mdiag, off: moff },
            stiffness: SymTridiag { diag: adiag, off: aoff },
            qt,
            qw,
            element_bound,
        })
    }

    pub fn dimension(&self) -> u32 {
        self.dimension
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    /// Number of cells M; there are M + 1 nodes.
    pub fn cells(&self) -> usize {
        self.cells
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> usize {
        self.cells + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.h
    }
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|j| self.node(j)).collect()
    }
    /// Lumped r^(N-1) weights including the sphere factor; they sum to the ball volume.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn mass(&self) -> &SymTridiag {
        &self.mass
    }
    pub fn stiffness(&self) -> &SymTridiag {
        &self.stiffness
    }
    pub fn quad_points(&self) -> usize {
        self.qt.len()
    }
    /// Gauss nodes on [0, 1] and the per-cell weights (cell-major, sphere factor included).
    pub(crate) fn quad_rule(&self) -> (&[f64], &[f64]) {
        (&self.qt, &self.qw)
    }
    /// Upper bound on the largest eigenvalue of M⁻¹A (element-wise bound).
    pub fn element_frequency_bound(&self) -> f64 {
        self.element_bound
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    pub fn from_fn(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut u: Vec<f64> = (0..=self.cells).map(|j| f(self.node(j))).collect();
        u[self.cells] = 0.0;
        u
    }

    fn apply(&self, t: &SymTridiag, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        t.mul_into(u, &mut y);
        y
    }

    pub fn mass_mul(&self, u: &[f64]) -> Vec<f64> {
        self.apply(&self.mass, u)
    }

    pub fn stiffness_mul(&self, u: &[f64]) -> Vec<f64> {
        self.apply(&self.stiffness, u)
    }

    /// Solve T x = rhs on the free nodes; the boundary entry of x is 0.
    pub fn solve(&self, t: &SymTridiag, rhs: &[f64]) -> Option<Vec<f64>> {
        let mut x = t.solve(rhs)?;
        x.push(0.0);
        Some(x)
    }

    pub fn mass_solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.solve(&self.mass, rhs).expect("mass matrix is positive definite")
    }

    pub fn mass_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(&self.mass_mul(u)[..self.cells], &v[..self.cells])
    }

    pub fn stiffness_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(&self.stiffness_mul(u)[..self.cells], &v[..self.cells])
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.mass_dot(u, u).max(0.0).sqrt()
    }

    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        (self.mass_dot(u, u) + self.stiffness_dot(u, u)).max(0.0).sqrt()
    }

    /// Σ over cells and Gauss points of w·g(u_h(r_q), j, t_q).
    #[inline]
    pub(crate) fn for_each_quad(&self, u: &[f64], mut g: impl FnMut(usize, f64, f64, f64)) {
        let nq = self.qt.len();
        for j in 0..self.cells {
            let ul = u[j];
            let ur = if j + 1 < self.cells { u[j + 1] } else { 0.0 };
            for q in 0..nq {
                let t = self.qt[q];
                g(j, t, self.qw[j * nq + q], ul + (ur - ul) * t);
            }
        }
    }

    /// ∫R(u) and the load vector b_i = ∫R'(u)φ_i (R extended evenly to s < 0).
    pub fn potential_and_load(&self, model: &NonlinearityModel, u: &[f64]) -> (f64, Vec<f64>) {
        let mut p = 0.0;
        let mut b = vec![0.0; self.len()];
        self.for_each_quad(u, |j, t, w, s| {
            let [r, r1, _] = model.r_derivs(s.abs());
            let r1 = if s < 0.0 { -r1 } else { r1 };
            p += w * r;
            b[j] += w * r1 * (1.0 - t);
            b[j + 1] += w * r1 * t;
        });
        b[self.cells] = 0.0;
        (p, b)
    }

    pub fn potential(&self, model: &NonlinearityModel, u: &[f64]) -> f64 {
        let mut p = 0.0;
        self.for_each_quad(u, |_, _, w, s| p += w * model.r_value(s.abs()));
        p
    }

    /// Tridiagonal matrix of ∫ c(u) φ_i φ_j for a pointwise coefficient c.
    pub fn weighted_mass(&self, u: &[f64], coef: impl Fn(f64) -> f64) -> SymTridiag {
        let mut t = SymTridiag::zeros(self.cells);
        let n = self.cells;
        self.for_each_quad(u, |j, tq, w, s| {
            let c = w * coef(s);
            let a = 1.0 - tq;
            t.diag[j] += c * a * a;
            if j + 1 < n {
                t.diag[j + 1] += c * tq * tq;
                t.off[j] += c * a * tq;
            }
        });
        t
    }

    pub fn hessian_potential(&self, model: &NonlinearityModel, u: &[f64]) -> SymTridiag {
        self.weighted_mass(u, |s| model.r_derivs(s.abs())[2])
    }

    /// Same nodal values on the grid stretched by `lambda`.
    pub fn stretched(&self, lambda: f64) -> Result<Self> {
        Self::with_quadrature(self.dimension, lambda * self.r_max, self.cells, self.qt.len())
    }

    /// Linear interpolation of the nodal profile at radius r (0 beyond r_max).
    pub fn interpolate(&self, u: &[f64], r: f64) -> f64 {
        if r >= self.r_max || r < 0.0 {
            return 0.0;
        }
        let x = r / self.h;
        let j = (x.floor() as usize).min(self.cells - 1);
        let t = x - j as f64;
        u[j] * (1.0 - t) + u[j + 1] * t
    }

    pub fn resample(&self, u: &[f64], target: &RadialGrid) -> Vec<f64> {
        target.from_fn(|r| self.interpolate(u, r))
    }

    pub fn check_field(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::Field(format!("field has {} values, grid has {} nodes", u.len(), self.len())));
        }
        if u[self.cells] != 0.0 {
            return Err(Error::Field("field does not vanish at r_max".into()));
        }
        if let Some(j) = u.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Field(format!("u[{j}] = {} is negative or non-finite", u[j])));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicFunctionals {
    pub kinetic: f64,
    pub potential: f64,
    pub j0: f64,
    pub k: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValues {
    pub j0: f64,
    pub k: f64,
    pub e_sigma: f64,
    pub lambda: f64,
    /// M-norm of the L² gradient of E_σ.
    pub grad_norm: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub omega: f64,
}

pub fn basic_functionals(grid: &RadialGrid, u: &[f64], model: &NonlinearityModel) -> BasicFunctionals {
    let kinetic = 0.5 * grid.stiffness_dot(u, u);
    let potential = grid.potential(model, u);
    BasicFunctionals { kinetic, potential, j0: kinetic + potential, k: grid.mass_dot(u, u) }
}

pub fn reduced_energy(model: &NonlinearityModel, j0: f64, k: f64, sigma: f64) -> f64 {
    j0 + 0.5 * (model.omega * model.omega * k + sigma * sigma / k)
}

pub fn compute_functionals(grid: &RadialGrid, u: &[f64], model: &NonlinearityModel, sigma: f64) -> Result<FunctionalValues> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let b = basic_functionals(grid, u, model);
    if b.k <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let e = reduced_energy(model, b.j0, b.k, sigma);
    let g = gradient_e_sigma(grid, u, model, sigma)?;
    Ok(FunctionalValues {
        j0: b.j0,
        k: b.k,
        e_sigma: e,
        lambda: e / sigma,
        grad_norm: grid.l2_norm(&g),
        kinetic: b.kinetic,
        potential: b.potential,
        omega: sigma / b.k,
    })
}

/// Nodal differential ∂E_σ/∂u_i.
pub fn differential_e_sigma(grid: &RadialGrid, u: &[f64], model: &NonlinearityModel, sigma: f64) -> Result<Vec<f64>> {
    let k = grid.mass_dot(u, u);
    if k <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let (_, b) = grid.potential_and_load(model, u);
    let au = grid.stiffness_mul(u);
    let mu = grid.mass_mul(u);
    let c = model.omega * model.omega - sigma * sigma / (k * k);
    let mut g: Vec<f64> = (0..grid.len()).map(|i| au[i] + b[i] + c * mu[i]).collect();
    g[grid.cells()] = 0.0;
    Ok(g)
}

/// L² representative −Δu + R'(u) + (Ω² − σ²/K²)u in the mass inner product.
pub fn gradient_e_sigma(grid: &RadialGrid, u: &[f64], model: &NonlinearityModel, sigma: f64) -> Result<Vec<f64>> {
    let d = differential_e_sigma(grid, u, model, sigma)?;
    Ok(grid.mass_solve(&d))
}

pub fn static_residual(grid: &RadialGrid, u: &[f64], omega: f64, model: &NonlinearityModel) -> Result<f64> {
    let nu = grid.l2_norm(u);
    if nu == 0.0 {
        return Err(Error::ZeroMass);
    }
    let (_, b) = grid.potential_and_load(model, u);
    let au = grid.stiffness_mul(u);
    let rhs: Vec<f64> = au.iter().zip(&b).map(|(a, b)| a + b).collect();
    let mut w = grid.mass_solve(&rhs);
    let c = model.omega * model.omega - omega * omega;
    for (wi, ui) in w.iter_mut().zip(u) {
        *wi += c * ui;
    }
    w[grid.cells()] = 0.0;
    Ok(grid.l2_norm(&w) / nu)
}

pub fn decay_diagnostic(grid: &RadialGrid, u: &[f64], beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < grid.r_max()) {
        return Err(Error::Domain(format!("beta must lie in (0, r_max), got {beta}")));
    }
    let norm = grid.h1_norm(u);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let e = (grid.dimension() as f64 - 1.0) / 2.0;
    let mut sup: f64 = 0.0;
    for j in 0..grid.len() {
        let r = grid.node(j);
        if r >= beta {
            sup = sup.max(u[j].abs() * r.powf(e));
        }
    }
    Ok(sup / norm)
}

#[derive(Clone, Debug)]
pub struct Rescaled {
    pub grid: RadialGrid,
    pub u: Vec<f64>,
    pub predicted_k: f64,
    pub predicted_kinetic: f64,
    pub predicted_potential: f64,
    pub predicted_j0: f64,
}

pub const DEFAULT_EXTENSION_CAP: f64 = 16.0;

/// u_λ(r) = u(r/λ), represented on the grid stretched by λ.
pub fn rescale(grid: &RadialGrid, u: &[f64], model: &NonlinearityModel, lambda: f64, cap: f64) -> Result<Rescaled> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if lambda > cap {
        return Err(Error::Grid(format!("lambda = {lambda} exceeds the extension cap {cap}")));
    }
    let b = basic_functionals(grid, u, model);
    let n = grid.dimension() as i32;
    let ln = lambda.powi(n);
    let lk = lambda.powi(n - 2);
    Ok(Rescaled {
        grid: grid.stretched(lambda)?,
        u: u.to_vec(),
        predicted_k: ln * b.k,
        predicted_kinetic: lk * b.kinetic,
        predicted_potential: ln * b.potential,
        predicted_j0: lk * b.kinetic + ln * b.potential,
    })
}

/// u(r/λ) interpolated back onto the same grid; exact for integer λ.
pub fn rescale_in_place(grid: &RadialGrid, u: &[f64], lambda: f64) -> Vec<f64> {
    if lambda == 1.0 {
        return u.to_vec();
    }
    grid.from_fn(|r| grid.interpolate(u, r / lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpStyle {
    /// Plateau on [0, r], linear ramp to 0 on [r, r + 1].
    UnitRamp,
    /// Plateau on [0, r], linear ramp to 0 on [r, 2r].
    ProportionalRamp,
}

impl BumpStyle {
    pub fn outer(self, r_inner: f64) -> f64 {
        match self {
            BumpStyle::UnitRamp => r_inner + 1.0,
            BumpStyle::ProportionalRamp => 2.0 * r_inner,
        }
    }

    pub fn profile(self, s: f64, r_inner: f64, r: f64) -> f64 {
        let outer = self.outer(r_inner);
        if r <= r_inner {
            s
        } else if r >= outer {
            0.0
        } else {
            s * (outer - r) / (outer - r_inner)
        }
    }
}

pub fn make_bump(grid: &RadialGrid, s_level: f64, r_inner: f64, style: BumpStyle) -> Result<Vec<f64>> {
    if !(s_level >= 0.0 && r_inner > 0.0) {
        return Err(Error::Domain(format!("need s_level >= 0 and r_inner > 0, got {s_level}, {r_inner}")));
    }
    let outer = style.outer(r_inner);
    if outer >= grid.r_max() {
        return Err(Error::Geometry(format!("bump reaches r = {outer} >= r_max = {}", grid.r_max())));
    }
    Ok(grid.from_fn(|r| style.profile(s_level, r_inner, r)))
}

/// Functionals of a bump by one-dimensional quadrature, independent of any grid.
pub fn analytic_bump(model: &NonlinearityModel, s: f64, r_inner: f64, style: BumpStyle) -> BasicFunctionals {
    let n = model.dimension;
    let sa = sphere_area(n);
    let outer = style.outer(r_inner);
    let width = outer - r_inner;
    let nm1 = n as i32 - 1;
    let shell = sa * (outer.powi(n as i32) - r_inner.powi(n as i32)) / n as f64;
    let kinetic = 0.5 * (s / width).powi(2) * shell;
    let vol = ball_volume(n, r_inner);
    let ramp = |f: &dyn Fn(f64) -> f64| {
        sa * integrate(&|r: f64| f(style.profile(s, r_inner, r)) * r.powi(nm1), r_inner, outer, 32, 8)
    };
    let k = s * s * vol + ramp(&|v| v * v);
    let potential = model.r_value(s) * vol + ramp(&|v| model.r_value(v));
    BasicFunctionals { kinetic, potential, j0: kinetic + potential, k }
}
