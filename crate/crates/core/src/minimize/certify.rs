//! Second-variation certificates: smallest eigenvalues of the Hessian of E_σ
//! in the mass inner product, by shift-invert Lanczos, cross-checked by the
//! exact inertia of the shifted Hessian.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, RankOneUpdate, SymTridiag};
use crate::nonlinearity::NonlinearityModel;
use crate::radial::RadialGrid;

pub const CERTIFICATE_TOL: f64 = -1e-8;
/// Relative residual above which a profile is not treated as a critical point.
pub const STATIONARITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    Certified,
    Saddle,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalMinCertificate {
    pub status: CertificateStatus,
    /// Smallest eigenvalues found, ascending.
    pub eigenvalues: Vec<f64>,
    /// Number of eigenvalues below the certificate tolerance (Sylvester inertia).
    pub negative_count: Option<usize>,
    pub note: String,
}

impl LocalMinCertificate {
    pub fn unknown(note: impl Into<String>) -> Self {
        Self { status: CertificateStatus::Unknown, eigenvalues: vec![], negative_count: None, note: note.into() }
    }

    pub fn smallest(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }
}

/// Tridiagonal part T and rank-one part c v vᵀ of the Hessian of E_σ at u.
pub struct Hessian {
    pub t: SymTridiag,
    pub v: Vec<f64>,
    pub c: f64,
    /// Lower bound of the generalized spectrum.
    pub lower: f64,
}

pub fn hessian_e_sigma(grid: &RadialGrid, model: &NonlinearityModel, u: &[f64], sigma: f64) -> Hessian {
    let n = grid.cells();
    let mu = grid.mass_mul(u);
    let k = dot(&mu[..n], &u[..n]);
    let w2 = model.omega * model.omega;
    let two_dphi = w2 - sigma * sigma / (k * k);
    let c = sigma * sigma / (k * k * k);
    let t = grid
        .stiffness()
        .add_scaled(1.0, &grid.hessian_potential(model, u))
        .add_scaled(two_dphi, grid.mass());
    let mut rmin = f64::INFINITY;
    grid.for_each_quad(u, |_, _, _, s| rmin = rmin.min(model.r_derivs(s.abs())[2]));
    let v: Vec<f64> = mu[..n].iter().map(|x| 2.0 * x).collect();
    Hessian { t, v, c, lower: rmin.min(0.0) + two_dphi }
}

/// Number of generalized eigenvalues of (H, M) below `level`.
pub fn count_below(grid: &RadialGrid, h: &Hessian, level: f64) -> Option<usize> {
    let ts = h.t.add_scaled(-level, grid.mass());
    RankOneUpdate { t: &ts, v: &h.v, c: h.c }.factor().map(|f| f.negative_count())
}

/// Smallest `n_eigs` generalized eigenvalues of (H, M); None when Lanczos does not converge.
pub fn smallest_eigenvalues(grid: &RadialGrid, h: &Hessian, n_eigs: usize, seed: u64) -> Option<Vec<f64>> {
    let n = grid.cells();
    let shift = h.lower - 1.0;
    let ts = h.t.add_scaled(-shift, grid.mass());
    let fac = RankOneUpdate { t: &ts, v: &h.v, c: h.c }.factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_6e63_7a6f_7321);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    q.push(0.0);
    let nrm = grid.l2_norm(&q);
    q.iter_mut().for_each(|x| *x /= nrm);
    let max_m = n.min(300);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_m);
    let mut mbasis: Vec<Vec<f64>> = Vec::with_capacity(max_m);
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let want = n_eigs.max(1);
    for j in 0..max_m {
        let mq = grid.mass_mul(&q);
        let mut w = fac.solve(&mq);
        w.push(0.0);
        basis.push(q.clone());
        mbasis.push(mq);
        let a = dot(&mbasis[j][..n], &w[..n]);
        alphas.push(a);
        for _ in 0..2 {
            for (b, mb) in basis.iter().zip(&mbasis) {
                let c = dot(&mb[..n], &w[..n]);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = grid.l2_norm(&w);
        let m = j + 1;
        if m >= want && (m % 5 == 0 || beta < 1e-14 || m == max_m) {
            let mut tm = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                tm[(i, i)] = alphas[i];
                if i + 1 < m {
                    tm[(i, i + 1)] = betas[i];
                    tm[(i + 1, i)] = betas[i];
                }
            }
            let eig = tm.symmetric_eigen();
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let conv = idx.iter().take(want).all(|&i| {
                let theta = eig.eigenvalues[i];
                theta > 0.0 && (beta * eig.eigenvectors[(m - 1, i)]).abs() <= 1e-10 * theta
            });
            if conv || beta < 1e-14 {
                let mut lams: Vec<f64> = idx.iter().take(want.min(m)).map(|&i| shift + 1.0 / eig.eigenvalues[i]).collect();
                lams.sort_by(|a, b| a.total_cmp(b));
                return Some(lams);
            }
        }
        if beta < 1e-14 {
            break;
        }
        betas.push(beta);
        q = w.iter().map(|x| x / beta).collect();
    }
    None
}

pub(crate) fn certificate_at(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    u: &[f64],
    sigma: f64,
    n_eigs: usize,
    seed: u64,
) -> LocalMinCertificate {
    let h = hessian_e_sigma(grid, model, u, sigma);
    let tol = CERTIFICATE_TOL * model.omega * model.omega;
    let neg = count_below(grid, &h, tol);
    match smallest_eigenvalues(grid, &h, n_eigs, seed) {
        None => LocalMinCertificate {
            status: CertificateStatus::Unknown,
            eigenvalues: vec![],
            negative_count: neg,
            note: "Lanczos did not converge".into(),
        },
        Some(eigs) => {
            let lam = eigs[0];
            let status = match neg {
                Some(0) if lam >= tol => CertificateStatus::Certified,
                Some(c) if c > 0 && lam < tol => CertificateStatus::Saddle,
                _ => CertificateStatus::Unknown,
            };
            let note = match status {
                CertificateStatus::Unknown => "eigenvalue estimate and inertia disagree".into(),
                _ => String::new(),
            };
            LocalMinCertificate { status, eigenvalues: eigs, negative_count: neg, note }
        }
    }
}
