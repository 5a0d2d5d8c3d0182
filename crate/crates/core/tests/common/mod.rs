#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use nkg_core::nonlinearity::{NonlinearityModel, Well};
use nkg_core::radial::{differential_e_sigma, RadialGrid};

pub fn nc() -> NonlinearityModel {
    NonlinearityModel::polynomial(1.0, 3, 3.0, 5.0, vec![0.0, 0.0, 0.0, -1.0, 0.0, 1.0]).unwrap()
}

pub fn p4() -> NonlinearityModel {
    NonlinearityModel::polynomial(1.0, 3, 4.0, 5.0, vec![0.0, 0.0, 0.0, 0.0, -1.0, 1.0]).unwrap()
}

pub fn zc() -> NonlinearityModel {
    NonlinearityModel::wells(1.0, 3, 3.0, 5.0, vec![Well { center: 2.0, width: 1.0, depth: 0.5 }]).unwrap()
}

pub fn wells2() -> NonlinearityModel {
    NonlinearityModel::wells(
        1.0,
        3,
        3.0,
        5.0,
        vec![Well { center: 1.0, width: 0.5, depth: 0.3 }, Well { center: 2.5, width: 0.5, depth: 0.4 }],
    )
    .unwrap()
}

pub fn kg() -> NonlinearityModel {
    NonlinearityModel::polynomial(1.0, 3, 3.0, 5.0, vec![]).unwrap()
}

pub fn gap() -> NonlinearityModel {
    NonlinearityModel::polynomial(1.0, 3, 4.0, 5.0, vec![0.0, 0.0, 0.0, 0.0, -0.1, 0.1]).unwrap()
}

pub fn rel_l2(grid: &RadialGrid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    grid.l2_norm(&d) / grid.l2_norm(b)
}

pub fn smooth_field(grid: &RadialGrid, amp: f64, width: f64) -> Vec<f64> {
    let rm = grid.r_max();
    let mut u = grid.from_fn(|r| amp * (-(r / width).powi(2)).exp() * (1.0 - r / rm));
    let n = grid.cells();
    u[n] = 0.0;
    u
}

enum Shot {
    Over,
    Under,
    Open,
}

/// Positive decaying solution of u'' + (N-1)/r u' = (Ω² - ω²)u + R'(u) by shooting on u(0),
/// sampled at the grid nodes. `bracket` must hold one undershooting and one overshooting amplitude.
pub fn shooting_profile(grid: &RadialGrid, model: &NonlinearityModel, omega: f64, bracket: (f64, f64)) -> Vec<f64> {
    let n = grid.dimension() as f64;
    let c = model.omega * model.omega - omega * omega;
    let g = |u: f64| c * u + model.r_derivs(u.max(0.0))[1];
    let sub = 16;
    let dr = grid.h() / sub as f64;
    let steps = grid.cells() * sub;
    let rhs = |r: f64, u: f64, v: f64| -> (f64, f64) {
        if r == 0.0 {
            (v, g(u) / n)
        } else {
            (v, g(u) - (n - 1.0) * v / r)
        }
    };
    let shoot = |a: f64| -> (Shot, Vec<f64>) {
        let mut nodes = vec![a];
        let (mut u, mut v) = (a, 0.0);
        for i in 0..steps {
            let r = i as f64 * dr;
            let (k1u, k1v) = rhs(r, u, v);
            let (k2u, k2v) = rhs(r + 0.5 * dr, u + 0.5 * dr * k1u, v + 0.5 * dr * k1v);
            let (k3u, k3v) = rhs(r + 0.5 * dr, u + 0.5 * dr * k2u, v + 0.5 * dr * k2v);
            let (k4u, k4v) = rhs(r + dr, u + dr * k3u, v + dr * k3v);
            u += dr / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            v += dr / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            if (i + 1) % sub == 0 {
                nodes.push(u);
            }
            if u < 0.0 {
                return (Shot::Over, nodes);
            }
            if v > 0.0 && i > sub {
                return (Shot::Under, nodes);
            }
        }
        (Shot::Open, nodes)
    };
    let (mut lo, mut hi) = bracket;
    assert!(matches!(shoot(lo).0, Shot::Under), "lower amplitude must undershoot");
    assert!(matches!(shoot(hi).0, Shot::Over), "upper amplitude must overshoot");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(mid).0 {
            Shot::Under => lo = mid,
            _ => hi = mid,
        }
    }
    let (_, a) = shoot(lo);
    let (_, b) = shoot(hi);
    // keep the stretch where both trajectories agree, then continue with the Yukawa tail
    let top = a[0];
    let mut cut = 0;
    while cut + 1 < a.len().min(b.len()) && (a[cut + 1] - b[cut + 1]).abs() < 1e-9 * top && a[cut + 1] > 0.0 {
        cut += 1;
    }
    let kappa = c.sqrt();
    let rc = grid.node(cut);
    let uc = a[cut];
    let mut u: Vec<f64> = (0..grid.len())
        .map(|j| {
            if j <= cut {
                a[j]
            } else {
                let r = grid.node(j);
                uc * (rc / r).powf(0.5 * (n - 1.0)) * (-kappa * (r - rc)).exp()
            }
        })
        .collect();
    u[grid.cells()] = 0.0;
    u
}

/// Dense matrix of a linear map on the free nodes, column by column.
pub fn dense_of(n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n + 1];
    for j in 0..n {
        e[j] = 1.0;
        let col = f(&e);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Generalized eigenvalues of (H, M), ascending, by Cholesky reduction.
pub fn generalized_eigenvalues(h: &DMatrix<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let l = m.clone().cholesky().expect("mass matrix is positive definite").l();
    let li = l.clone().try_inverse().expect("invertible");
    let c = &li * h * li.transpose();
    let c = 0.5 * (&c + c.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Hessian of E_σ by central differences of the nodal differential.
pub fn fd_hessian(grid: &RadialGrid, model: &NonlinearityModel, u: &[f64], sigma: f64) -> DMatrix<f64> {
    let n = grid.cells();
    let scale = u.iter().cloned().fold(0.0, f64::max);
    let t = 1e-5 * scale;
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        up[j] += t;
        dn[j] -= t;
        let gp = differential_e_sigma(grid, &up, model, sigma).unwrap();
        let gm = differential_e_sigma(grid, &dn, model, sigma).unwrap();
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * t);
        }
    }
    0.5 * (&h + h.transpose())
}

pub fn dense_mass(grid: &RadialGrid) -> DMatrix<f64> {
    dense_of(grid.cells(), |x| grid.mass_mul(x))
}

pub fn dense_stiffness(grid: &RadialGrid) -> DMatrix<f64> {
    dense_of(grid.cells(), |x| grid.stiffness_mul(x))
}
