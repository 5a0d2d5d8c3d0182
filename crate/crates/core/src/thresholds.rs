//! Estimates of k̄, σ_g and σ_b, bump-family upper bounds on σ_g and the
//! small-frequency criterion.
//!
//! J_k = |inf{J₀(u) : K(u) = k}| is sampled by constrained minimization.
//! Below k̄ the infimum is 0 and not attained, so minimizers spread towards
//! the wall and J₀ stays above −margin. The curve gives
//! g(k) = Ωk − √(2kJ_k) whose infimum over k ≥ k̄ is σ_g. Every sampled
//! minimizer and every bump with J₀ < 0 is a profile, so its g value is an
//! upper bound. Lower bounds use that J_k/k is non-decreasing (rescaling).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimize::{find_bound_state_in_basin, inf_j0_at_mass, SolverConfig};
use crate::nonlinearity::{decompose_negative_set, well_levels, NonlinearityModel, DEFAULT_ROOT_TOL};
use crate::radial::{analytic_bump, BumpStyle, RadialGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdOptions {
    /// Reference charge; the default k-grid spans [1e-3, 1e3]·σ_ref/Ω.
    pub sigma_ref: f64,
    pub k_points: usize,
    pub k_span: (f64, f64),
    /// Explicit k-grid, overriding `k_points`/`k_span`.
    pub k_grid: Option<Vec<f64>>,
    /// J₀ > −margin·Ω²k counts as J_k = 0.
    pub margin: f64,
    pub kbar_rel_tol: f64,
    pub sigma_g_rel_tol: f64,
    pub max_refinements: usize,
    pub sigma_probes: usize,
    pub sigma_rel_width: f64,
    /// Plateau levels of the proportional-ramp family go down to this value.
    pub bump_s_min: f64,
    pub bump_levels: usize,
    pub bump_radii: usize,
    pub bump_r_span: (f64, f64),
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            sigma_ref: 1.0,
            k_points: 24,
            k_span: (1e-3, 1e3),
            k_grid: None,
            margin: 1e-6,
            kbar_rel_tol: 1e-3,
            sigma_g_rel_tol: 1e-3,
            max_refinements: 64,
            sigma_probes: 20,
            sigma_rel_width: 1e-3,
            bump_s_min: 1e-6,
            bump_levels: 16,
            bump_radii: 200,
            bump_r_span: (0.05, 1e6),
        }
    }
}

impl ThresholdOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_ref > 0.0
            && self.k_points >= 2
            && 0.0 < self.k_span.0
            && self.k_span.0 < self.k_span.1
            && self.margin >= 0.0
            && self.kbar_rel_tol > 0.0
            && self.sigma_g_rel_tol > 0.0
            && self.sigma_rel_width > 0.0
            && self.bump_s_min > 0.0
            && self.bump_levels >= 1
            && self.bump_radii >= 2
            && 0.0 < self.bump_r_span.0
            && self.bump_r_span.0 < self.bump_r_span.1;
        if !ok {
            return Err(Error::Domain("invalid threshold options".into()));
        }
        if let Some(g) = &self.k_grid {
            if g.is_empty() || g.iter().any(|k| !(*k > 0.0)) || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Domain("k_grid must be positive and strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn k_values(&self, omega: f64) -> Vec<f64> {
        if let Some(g) = &self.k_grid {
            return g.clone();
        }
        let base = self.sigma_ref / omega;
        let (a, b) = self.k_span;
        (0..self.k_points)
            .map(|i| base * a * (b / a).powf(i as f64 / (self.k_points - 1) as f64))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JkSample {
    pub k: f64,
    /// Lowest J₀ found on {K = k}.
    pub j0: f64,
    /// |inf J₀| when below the margin, else 0.
    pub jk: f64,
    pub kinetic: f64,
    pub multiplier: f64,
    pub converged: bool,
    pub spread: bool,
    /// False when the solve failed or contradicts an analytic certificate.
    pub valid: bool,
    /// Ωk − √(2kJ_k) for J_k > 0.
    pub g: Option<f64>,
    #[serde(skip)]
    pub u: Vec<f64>,
}

impl JkSample {
    pub fn negative(&self) -> bool {
        self.jk > 0.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpBound {
    pub style: BumpStyle,
    pub s: f64,
    pub r_inner: f64,
    pub k: f64,
    pub j0: f64,
    /// ΩK − √(2K|J₀|); None when J₀ ≥ 0 (not an upper bound).
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpFamily {
    pub style: BumpStyle,
    pub s_levels: Vec<f64>,
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KbarEstimate {
    pub bracket: Bracket,
    /// Smallest K among bumps with J₀ < 0, a grid-free upper bound.
    pub analytic_hi: Option<f64>,
    /// Sampled k above the bracket where the solver found no negative J₀.
    pub unresolved: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaG {
    pub bracket: Bracket,
    /// k at which the upper end is realized (None when it comes from a bump).
    pub argmin_k: Option<f64>,
    pub source: String,
    /// min over negative samples of ∫|∇u|²/(2Ω).
    pub gradient_bound: Option<f64>,
    pub refinements: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaProbe {
    pub sigma: f64,
    pub predicate: bool,
    pub e_sigma: Option<f64>,
    /// ½(Ω²k̄ + σ²/k̄).
    pub rhs: f64,
    pub j0: Option<f64>,
    pub lambda: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaB {
    pub bracket: Bracket,
    pub probes: Vec<SigmaProbe>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmallOmegaReport {
    pub holds: bool,
    pub inconclusive: bool,
    /// Largest 2|J₀|/(K − k̄) found.
    pub sup_ratio: f64,
    pub omega_squared: f64,
    pub kbar: f64,
    pub witness: Option<SmallOmegaWitness>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmallOmegaWitness {
    pub source: String,
    pub k: f64,
    pub j0: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub omega: f64,
    pub kbar: KbarEstimate,
    pub jk_curve: Vec<JkSample>,
    pub sigma_g: SigmaG,
    pub sigma_b: SigmaB,
    pub small_omega: SmallOmegaReport,
    /// Best bump bound per (family, level).
    pub bump_bounds: Vec<BumpBound>,
    /// (s, best proportional-ramp bound at that level) for s = 1e-4, 1e-5, 1e-6.
    pub nc_refinement: Vec<(f64, Option<f64>)>,
    pub notes: Vec<String>,
}

impl ThresholdReport {
    /// Structural inequalities that must hold within the reported brackets.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let tol = 1e-9 * (1.0 + self.sigma_g.bracket.hi.abs());
        if self.sigma_b.bracket.hi > self.sigma_g.bracket.hi + tol {
            v.push(format!("sigma_b.hi = {} exceeds sigma_g.hi = {}", self.sigma_b.bracket.hi, self.sigma_g.bracket.hi));
        }
        if self.sigma_b.bracket.lo < 0.0 || self.sigma_g.bracket.lo < 0.0 {
            v.push("negative threshold".into());
        }
        if let Some(b) = self.bump_bounds.iter().filter_map(|b| b.bound).reduce(f64::min) {
            if self.sigma_g.bracket.hi > b + tol {
                v.push(format!("sigma_g.hi = {} exceeds the bump bound {b}", self.sigma_g.bracket.hi));
            }
        }
        if self.kbar.bracket.lo > 0.0 && self.sigma_g.bracket.lo >= self.omega * self.kbar.bracket.hi {
            v.push("sigma_g is not below Omega * kbar".into());
        }
        for s in self.jk_curve.iter().filter(|s| s.valid) {
            if s.k < self.kbar.bracket.lo && s.negative() {
                v.push(format!("J_k > 0 at k = {} below kbar.lo", s.k));
            }
            if s.k > self.kbar.bracket.hi && !s.negative() {
                v.push(format!("J_k = 0 at k = {} above kbar.hi", s.k));
            }
        }
        v
    }
}

fn sample_jk(grid: &RadialGrid, model: &NonlinearityModel, k: f64, config: &SolverConfig, margin: f64) -> JkSample {
    let w2 = model.omega * model.omega;
    match inf_j0_at_mass(grid, model, k, config) {
        Ok(c) => {
            let negative = c.j0 < -margin * w2 * k;
            let jk = if negative { -c.j0 } else { 0.0 };
            let valid = c.converged || (c.spread && !negative);
            JkSample {
                k,
                j0: c.j0,
                jk,
                kinetic: c.kinetic,
                multiplier: c.multiplier,
                converged: c.converged,
                spread: c.spread,
                valid,
                g: negative.then(|| model.omega * k - (2.0 * k * jk).sqrt()),
                u: c.u,
            }
        }
        Err(_) => JkSample {
            k,
            j0: f64::NAN,
            jk: 0.0,
            kinetic: f64::NAN,
            multiplier: f64::NAN,
            converged: false,
            spread: false,
            valid: false,
            g: None,
            u: vec![],
        },
    }
}

/// Sample J_k over `k_grid`.
pub fn jk_curve(grid: &RadialGrid, model: &NonlinearityModel, k_grid: &[f64], config: &SolverConfig, margin: f64) -> Vec<JkSample> {
    k_grid.par_iter().map(|&k| sample_jk(grid, model, k, config, margin)).collect()
}

fn insert_sorted(curve: &mut Vec<JkSample>, s: JkSample) {
    let pos = curve.partition_point(|c| c.k < s.k);
    curve.insert(pos, s);
}

fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn plateau_levels(model: &NonlinearityModel) -> Vec<f64> {
    match decompose_negative_set(model, model.default_scan_max(), DEFAULT_ROOT_TOL) {
        Ok(d) if d.count() > 0 => well_levels(model, &d),
        _ => vec![],
    }
}

/// Default families: unit ramps at the well levels and proportional ramps with levels down to `bump_s_min`.
pub fn default_bump_families(model: &NonlinearityModel, opts: &ThresholdOptions) -> Vec<BumpFamily> {
    let levels = plateau_levels(model);
    let radii = geometric(opts.bump_r_span.0, opts.bump_r_span.1, opts.bump_radii);
    let mut out = Vec::new();
    if levels.is_empty() {
        return out;
    }
    out.push(BumpFamily { style: BumpStyle::UnitRamp, s_levels: levels.clone(), radii: radii.clone() });
    let top = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut small = geometric(top, opts.bump_s_min, opts.bump_levels);
    for s in [1e-4, 1e-5, 1e-6] {
        if s >= opts.bump_s_min && s < top && !small.contains(&s) {
            small.push(s);
        }
    }
    small.sort_by(|a, b| b.total_cmp(a));
    out.push(BumpFamily { style: BumpStyle::ProportionalRamp, s_levels: small, radii });
    out
}

/// ΩK − √(2K|J₀|) for every family member, by one-dimensional quadrature.
pub fn bump_upper_bounds(model: &NonlinearityModel, family: &BumpFamily) -> Vec<BumpBound> {
    let mut out = Vec::with_capacity(family.s_levels.len() * family.radii.len());
    for &s in &family.s_levels {
        for &r in &family.radii {
            let b = analytic_bump(model, s, r, family.style);
            let bound = (b.j0 < 0.0).then(|| model.omega * b.k - (2.0 * b.k * (-b.j0)).sqrt());
            out.push(BumpBound { style: family.style, s, r_inner: r, k: b.k, j0: b.j0, bound });
        }
    }
    out
}

fn best_per_level(bounds: &[BumpBound]) -> Vec<BumpBound> {
    let mut out: Vec<BumpBound> = Vec::new();
    for b in bounds.iter().filter(|b| b.bound.is_some()) {
        match out.iter_mut().find(|o| o.style == b.style && o.s == b.s) {
            Some(o) if o.bound.unwrap() > b.bound.unwrap() => *o = b.clone(),
            Some(_) => {}
            None => out.push(b.clone()),
        }
    }
    out
}

/// Smallest K over family members with J₀ < 0; the first negative radius per level is refined by bisection.
fn analytic_kbar_bound(model: &NonlinearityModel, families: &[BumpFamily]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for f in families {
        for &s in &f.s_levels {
            let j = |r: f64| analytic_bump(model, s, r, f.style);
            let first = f.radii.iter().position(|&r| j(r).j0 < 0.0);
            let Some(i) = first else { continue };
            let mut hi = f.radii[i];
            if i > 0 {
                let mut lo = f.radii[i - 1];
                for _ in 0..60 {
                    let m = 0.5 * (lo + hi);
                    if j(m).j0 < 0.0 {
                        hi = m;
                    } else {
                        lo = m;
                    }
                }
            }
            // K grows with r past the sign change, so the first negative member is the smallest
            let k = j(hi).k;
            best = Some(best.map_or(k, |b: f64| b.min(k)));
        }
    }
    best
}

/// Continue the proportional-ramp family to smaller plateau levels while its mass bound keeps
/// shrinking (as it does when J₀ < 0 is reachable at vanishing amplitude), until it drops below `k_floor`.
fn extended_kbar_bound(model: &NonlinearityModel, families: &[BumpFamily], k_floor: f64) -> Option<f64> {
    let mut best = analytic_kbar_bound(model, families);
    let Some(base) = families.iter().find(|f| f.style == BumpStyle::ProportionalRamp) else { return best };
    let mut s = base.s_levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let radii = geometric(base.radii[0], 1e14, 400);
    let mut prev = best;
    while best.map_or(false, |b| b >= k_floor) && s > 1e-30 {
        s *= 0.1;
        let f = BumpFamily { style: BumpStyle::ProportionalRamp, s_levels: vec![s], radii: radii.clone() };
        let Some(k) = analytic_kbar_bound(model, &[f]) else { break };
        if prev.map_or(false, |p| k > 0.9 * p) {
            break;
        }
        best = Some(best.map_or(k, |b| b.min(k)));
        prev = Some(k);
    }
    best
}

/// A sample with no negative J₀ at a mass where a bump already has J₀ < 0 is a resolution failure.
fn mark_unresolved(s: &mut JkSample, analytic_hi: Option<f64>) -> bool {
    if s.valid && !s.negative() && analytic_hi.map_or(false, |h| s.k >= h) {
        s.valid = false;
        return true;
    }
    false
}

/// Bracket k̄ from the sign of the sampled J_k, then bisect inside the bracket.
pub fn estimate_kbar(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    k_grid: &[f64],
    config: &SolverConfig,
    opts: &ThresholdOptions,
) -> Result<(KbarEstimate, Vec<JkSample>)> {
    if k_grid.is_empty() || k_grid.iter().any(|k| !(*k > 0.0)) || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("k_grid must be positive and strictly increasing".into()));
    }
    let families = default_bump_families(model, opts);
    let analytic_hi = extended_kbar_bound(model, &families, k_grid[0]);
    let mut curve = jk_curve(grid, model, k_grid, config, opts.margin);
    let (bracket, unresolved) = kbar_bracket(&mut curve, analytic_hi);
    let mut bracket = bracket;
    if bracket.lo > 0.0 && bracket.hi.is_finite() {
        while bracket.hi - bracket.lo > opts.kbar_rel_tol * bracket.hi {
            let k = (bracket.lo * bracket.hi).sqrt();
            let mut s = sample_jk(grid, model, k, config, opts.margin);
            mark_unresolved(&mut s, analytic_hi);
            let (valid, neg) = (s.valid, s.negative());
            insert_sorted(&mut curve, s);
            if !valid {
                break;
            }
            if neg {
                bracket.hi = k;
            } else {
                bracket.lo = k;
            }
        }
    }
    Ok((KbarEstimate { bracket, analytic_hi, unresolved }, curve))
}

fn kbar_bracket(curve: &mut [JkSample], analytic_hi: Option<f64>) -> (Bracket, Vec<f64>) {
    let grid_hi = curve.iter().filter(|s| s.valid && s.negative()).map(|s| s.k).reduce(f64::min);
    let hi = match (grid_hi, analytic_hi) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => f64::INFINITY,
    };
    // J₀ ≥ 0 above a certified negative level means the domain cannot resolve that mass
    let mut unresolved = Vec::new();
    for s in curve.iter_mut() {
        if mark_unresolved(s, Some(hi)) {
            unresolved.push(s.k);
        }
    }
    let lo = curve.iter().filter(|s| s.valid && !s.negative() && s.k < hi).map(|s| s.k).fold(0.0, f64::max);
    (Bracket { lo, hi }, unresolved)
}

/// Lower bound of g on [a, b] given the sample J_b at the right end.
fn cell_lower_bound(omega: f64, a: f64, b: f64, jb: f64) -> f64 {
    let ratio = (2.0 * jb / b).max(0.0);
    a * (omega - ratio.sqrt()).max(0.0)
}

/// σ_g bracket by branch and bound on the sampled curve; new samples are inserted into `curve`.
pub fn estimate_sigma_g(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    kbar: &KbarEstimate,
    curve: &mut Vec<JkSample>,
    bump_bounds: &[BumpBound],
    config: &SolverConfig,
    opts: &ThresholdOptions,
) -> Result<SigmaG> {
    let omega = model.omega;
    let any_negative = curve.iter().any(|s| s.valid && s.negative()) || bump_bounds.iter().any(|b| b.bound.is_some());
    if !any_negative {
        return Err(Error::Threshold("no profile with J0 < 0 found, so sigma_g is undefined".into()));
    }
    let sup_ratio = tail_ratio(model);
    let mut refinements = 0;
    loop {
        let (hi, argmin_k, source) = sigma_g_upper(curve, bump_bounds);
        let cells = lower_cells(omega, kbar, curve, sup_ratio);
        let lo = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min).min(hi).max(0.0);
        let tol = opts.sigma_g_rel_tol * hi;
        // the tail cannot be split, so refine the worst finite cell that still matters
        let split = cells
            .iter()
            .filter(|c| c.1.is_finite() && c.0 > 0.0 && c.1 / c.0 > 1.0 + 1e-9 && c.2 < hi - tol)
            .min_by(|x, y| x.2.total_cmp(&y.2))
            .map(|c| (c.0, c.1));
        let done = hi - lo <= tol || refinements >= opts.max_refinements || kbar.bracket.lo == 0.0;
        if done || split.is_none() {
            let gradient_bound = curve
                .iter()
                .filter(|s| s.valid && s.negative())
                .map(|s| 2.0 * s.kinetic / (2.0 * omega))
                .reduce(f64::min);
            let lo = if kbar.bracket.lo == 0.0 { 0.0 } else { lo };
            return Ok(SigmaG { bracket: Bracket { lo, hi }, argmin_k, source, gradient_bound, refinements });
        }
        let (a, b) = split.unwrap();
        let k = (a * b).sqrt();
        let mut s = sample_jk(grid, model, k, config, opts.margin);
        mark_unresolved(&mut s, Some(kbar.bracket.hi));
        insert_sorted(curve, s);
        refinements += 1;
    }
}

fn sigma_g_upper(curve: &[JkSample], bump_bounds: &[BumpBound]) -> (f64, Option<f64>, String) {
    let mut best = (f64::INFINITY, None, String::from("none"));
    for s in curve.iter().filter(|s| s.valid) {
        if let Some(g) = s.g {
            if g < best.0 {
                best = (g, Some(s.k), format!("constrained minimizer at k = {}", s.k));
            }
        }
    }
    for b in bump_bounds {
        if let Some(g) = b.bound {
            if g < best.0 {
                best = (g, None, format!("{:?} bump s = {}, r = {}", b.style, b.s, b.r_inner));
            }
        }
    }
    best
}

/// sup R⁻(s)/s², which bounds J_k/k from above for every k.
fn tail_ratio(model: &NonlinearityModel) -> f64 {
    let smax = model.default_scan_max();
    let n = 20000;
    let mut m: f64 = 0.0;
    for i in 1..=n {
        let s = smax * i as f64 / n as f64;
        m = m.max(-model.r_value(s) / (s * s));
    }
    2.0 * m
}

/// (a, b, lower bound of g on [a, b]) for the cells covering [k̄.lo, ∞).
fn lower_cells(omega: f64, kbar: &KbarEstimate, curve: &[JkSample], sup_ratio: f64) -> Vec<(f64, f64, f64)> {
    let pts: Vec<&JkSample> = curve.iter().filter(|s| s.valid).collect();
    let start = kbar.bracket.lo;
    let mut out = Vec::new();
    let mut a = start;
    for s in pts.iter().filter(|s| s.k > start) {
        out.push((a, s.k, cell_lower_bound(omega, a, s.k, s.jk)));
        a = s.k;
    }
    let tail = a * (omega - sup_ratio.sqrt()).max(0.0);
    out.push((a, f64::INFINITY, tail));
    out
}

/// Bisection on σ ∈ (0, σ_g] of inf_{J₀<0} E_σ < ½(Ω²k̄ + σ²/k̄).
pub fn estimate_sigma_b(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    kbar: f64,
    sigma_g: f64,
    config: &SolverConfig,
    opts: &ThresholdOptions,
) -> Result<SigmaB> {
    if !(kbar > 0.0) {
        return Err(Error::Threshold("sigma_b bisection needs kbar > 0".into()));
    }
    if !(sigma_g > 0.0) {
        return Err(Error::Threshold("sigma_b bisection needs sigma_g > 0".into()));
    }
    let mut probes = Vec::new();
    let top = probe(grid, model, kbar, sigma_g, config);
    let top_ok = top.predicate;
    probes.push(top);
    if !top_ok {
        return Ok(SigmaB {
            bracket: Bracket { lo: sigma_g, hi: sigma_g },
            probes,
            note: "predicate false at sigma_g; no flip found in (0, sigma_g]".into(),
        });
    }
    let (mut lo, mut hi) = (0.0, sigma_g);
    for _ in 0..opts.sigma_probes {
        if hi - lo < opts.sigma_rel_width * sigma_g {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = probe(grid, model, kbar, mid, config);
        if p.predicate {
            hi = mid;
        } else {
            lo = mid;
        }
        probes.push(p);
    }
    let note = if lo == 0.0 {
        "predicate true down to the smallest probe".into()
    } else {
        String::new()
    };
    Ok(SigmaB { bracket: Bracket { lo, hi }, probes, note })
}

fn probe(grid: &RadialGrid, model: &NonlinearityModel, kbar: f64, sigma: f64, config: &SolverConfig) -> SigmaProbe {
    let rhs = 0.5 * (model.omega * model.omega * kbar + sigma * sigma / kbar);
    match find_bound_state_in_basin(grid, model, sigma, config) {
        Ok(r) => {
            let e = r.functionals.e_sigma;
            SigmaProbe {
                sigma,
                predicate: e < rhs,
                e_sigma: Some(e),
                rhs,
                j0: Some(r.functionals.j0),
                lambda: Some(r.functionals.lambda),
                note: if r.is_certified() { "certified".into() } else { format!("{:?}", r.certificate.status) },
            }
        }
        Err(e) => SigmaProbe { sigma, predicate: false, e_sigma: None, rhs, j0: None, lambda: None, note: e.to_string() },
    }
}

/// Largest 2|J₀|/(K − k̄) over bumps and sampled minimizers with J₀ < 0 and K > k̄.
pub fn check_small_omega(
    model: &NonlinearityModel,
    kbar: f64,
    curve: &[JkSample],
    families: &[BumpFamily],
) -> Result<SmallOmegaReport> {
    if !(kbar > 0.0) {
        return Err(Error::Threshold("the small-frequency criterion needs kbar > 0".into()));
    }
    let w2 = model.omega * model.omega;
    let mut best: Option<SmallOmegaWitness> = None;
    let mut consider = |source: String, k: f64, j0: f64| {
        if j0 < 0.0 && k > kbar {
            let ratio = -2.0 * j0 / (k - kbar);
            if best.as_ref().map_or(true, |b| ratio > b.ratio) {
                best = Some(SmallOmegaWitness { source, k, j0, ratio });
            }
        }
    };
    for s in curve.iter().filter(|s| s.valid && s.negative()) {
        consider(format!("constrained minimizer at k = {}", s.k), s.k, s.j0);
    }
    for f in families {
        for b in bump_upper_bounds(model, f) {
            consider(format!("{:?} bump s = {}, r = {}", b.style, b.s, b.r_inner), b.k, b.j0);
        }
    }
    Ok(match best {
        Some(w) => SmallOmegaReport {
            holds: w.ratio > w2,
            inconclusive: false,
            sup_ratio: w.ratio,
            omega_squared: w2,
            kbar,
            witness: Some(w),
        },
        None => SmallOmegaReport {
            holds: false,
            inconclusive: true,
            sup_ratio: 0.0,
            omega_squared: w2,
            kbar,
            witness: None,
        },
    })
}

/// Full report: J_k curve, k̄, σ_g, σ_b, bump bounds and the small-frequency criterion.
pub fn compute_thresholds(
    grid: &RadialGrid,
    model: &NonlinearityModel,
    config: &SolverConfig,
    opts: &ThresholdOptions,
) -> Result<ThresholdReport> {
    opts.validate()?;
    config.validate()?;
    if plateau_levels(model).is_empty() {
        return Err(Error::Threshold("R has no negative set (H2 fails), so the thresholds are undefined".into()));
    }
    let mut notes = Vec::new();
    let families = default_bump_families(model, opts);
    let all_bounds: Vec<BumpBound> = families.iter().flat_map(|f| bump_upper_bounds(model, f)).collect();
    let bump_bounds = best_per_level(&all_bounds);
    let nc_refinement = [1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&s| {
            let b = all_bounds
                .iter()
                .filter(|b| b.style == BumpStyle::ProportionalRamp && b.s >= s)
                .filter_map(|b| b.bound)
                .reduce(f64::min);
            (s, b)
        })
        .collect();
    let k_grid = opts.k_values(model.omega);
    let (kbar, mut curve) = estimate_kbar(grid, model, &k_grid, config, opts)?;
    if !kbar.unresolved.is_empty() {
        notes.push(format!(
            "{} sampled masses above the certified kbar bound showed no negative J0 (domain too small to resolve them)",
            kbar.unresolved.len()
        ));
    }
    let sigma_g = estimate_sigma_g(grid, model, &kbar, &mut curve, &bump_bounds, config, opts)?;
    let kbar_mid = if kbar.bracket.lo > 0.0 { kbar.bracket.mid() } else { 0.0 };
    let sigma_b = if kbar_mid > 0.0 {
        estimate_sigma_b(grid, model, kbar_mid, sigma_g.bracket.hi, config, opts)?
    } else {
        SigmaB {
            bracket: Bracket { lo: 0.0, hi: sigma_g.bracket.hi },
            probes: vec![],
            note: "kbar = 0: no bisection needed".into(),
        }
    };
    let small_omega = if kbar.bracket.lo > 0.0 {
        check_small_omega(model, kbar.bracket.lo, &curve, &families)?
    } else {
        SmallOmegaReport {
            holds: false,
            inconclusive: true,
            sup_ratio: 0.0,
            omega_squared: model.omega * model.omega,
            kbar: 0.0,
            witness: None,
        }
    };
    let report = ThresholdReport {
        omega: model.omega,
        kbar,
        jk_curve: curve,
        sigma_g,
        sigma_b,
        small_omega,
        bump_bounds,
        nc_refinement,
        notes,
    };
    let mut report = report;
    for v in report.invariant_violations() {
        report.notes.push(format!("invariant violated: {v}"));
    }
    Ok(report)
}
