//! Nonlinearity models F(s) = ½Ω²s² + R(s), hypothesis checks and the
//! truncated models used for multiplicity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ROOT_TOL: f64 = 1e-10;
pub const DEFAULT_INTERVAL_CAP: usize = 64;

/// A smooth compactly supported well `-depth * s^2 * (1 - x^2)^3`, `x = (s - center) / width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub center: f64,
    pub width: f64,
    pub depth: f64,
}

impl Well {
    fn derivs(&self, s: f64) -> [f64; 3] {
        let x = (s - self.center) / self.width;
        if x.abs() >= 1.0 {
            return [0.0; 3];
        }
        let w = self.width;
        let one = 1.0 - x * x;
        let b = one * one * one;
        let b1 = -6.0 * x * one * one;
        let b2 = -6.0 * one * one + 24.0 * x * x * one;
        let g = s * s * b;
        let g1 = 2.0 * s * b + s * s * b1 / w;
        let g2 = 2.0 * b + 4.0 * s * b1 / w + s * s * b2 / (w * w);
        [-self.depth * g, -self.depth * g1, -self.depth * g2]
    }
}

/// R̃ = base on [0, cut], cubic continuation with nonnegative slope beyond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub base: RSpec,
    pub cut: f64,
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
    pub tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RSpec {
    /// R(s) = Σ c_k s^k.
    Polynomial { coefficients: Vec<f64> },
    Wells { wells: Vec<Well> },
    Truncated(Box<Truncation>),
}

impl RSpec {
    /// (R, R', R'') at s >= 0, no range checks.
    pub fn derivs(&self, s: f64) -> [f64; 3] {
        match self {
            RSpec::Polynomial { coefficients } => {
                let mut r = 0.0;
                let mut r1 = 0.0;
                let mut r2 = 0.0;
                for &c in coefficients.iter().rev() {
                    r2 = r2 * s + 2.0 * r1;
                    r1 = r1 * s + r;
                    r = r * s + c;
                }
                [r, r1, r2]
            }
            RSpec::Wells { wells } => {
                let mut out = [0.0; 3];
                for w in wells {
                    let d = w.derivs(s);
                    out[0] += d[0];
                    out[1] += d[1];
                    out[2] += d[2];
                }
                out
            }
            RSpec::Truncated(t) => {
                if s <= t.cut {
                    t.base.derivs(s)
                } else {
                    let d = s - t.cut;
                    [
                        t.value + t.slope * d + 0.5 * t.curvature * d * d + t.tail * d * d * d / 3.0,
                        t.slope + t.curvature * d + t.tail * d * d,
                        t.curvature + 2.0 * t.tail * d,
                    ]
                }
            }
        }
    }

    fn natural_scale(&self) -> f64 {
        match self {
            RSpec::Polynomial { coefficients } => {
                let lead = coefficients.iter().rposition(|c| *c != 0.0);
                match lead {
                    Some(n) if n > 0 => {
                        let an = coefficients[n].abs();
                        let bound = coefficients[..n]
                            .iter()
                            .map(|c| c.abs() / an)
                            .fold(0.0, f64::max);
                        2.0 * (1.0 + bound)
                    }
                    _ => 10.0,
                }
            }
            RSpec::Wells { wells } => {
                let top = wells.iter().map(|w| w.center + w.width).fold(0.0, f64::max);
                if top > 0.0 {
                    1.5 * top
                } else {
                    10.0
                }
            }
            RSpec::Truncated(t) => t.base.natural_scale().max(2.0 * t.cut),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RSpec::Polynomial { coefficients } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidModel("non-finite polynomial coefficient".into()));
                }
            }
            RSpec::Wells { wells } => {
                for w in wells {
                    if !(w.width > 0.0 && w.center.is_finite() && w.depth.is_finite()) {
                        return Err(Error::InvalidModel(format!("bad well {w:?}")));
                    }
                }
            }
            RSpec::Truncated(t) => {
                t.base.validate()?;
                let vals = [t.cut, t.value, t.slope, t.curvature, t.tail];
                if vals.iter().any(|v| !v.is_finite()) || t.cut <= 0.0 || t.tail < 0.0 {
                    return Err(Error::InvalidModel("bad truncation parameters".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityModel {
    pub omega: f64,
    pub dimension: u32,
    #[serde(rename = "p")]
    pub p_exponent: f64,
    #[serde(rename = "q")]
    pub q_exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    pub r: RSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub r: f64,
    pub dr: f64,
    pub d2r: f64,
    pub f: f64,
    pub df: f64,
}

impl NonlinearityModel {
    pub fn new(omega: f64, dimension: u32, p: f64, q: f64, r: RSpec) -> Result<Self> {
        let m = Self { omega, dimension, p_exponent: p, q_exponent: q, s_max: None, r };
        m.validate()?;
        Ok(m)
    }

    pub fn polynomial(omega: f64, dimension: u32, p: f64, q: f64, coefficients: Vec<f64>) -> Result<Self> {
        Self::new(omega, dimension, p, q, RSpec::Polynomial { coefficients })
    }

    pub fn wells(omega: f64, dimension: u32, p: f64, q: f64, wells: Vec<Well>) -> Result<Self> {
        Self::new(omega, dimension, p, q, RSpec::Wells { wells })
    }

    pub fn critical_exponent(&self) -> f64 {
        let n = self.dimension as f64;
        2.0 * n / (n - 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidModel(format!("omega must be positive, got {}", self.omega)));
        }
        if self.dimension < 3 {
            return Err(Error::InvalidModel(format!("dimension must be >= 3, got {}", self.dimension)));
        }
        let crit = self.critical_exponent();
        let (p, q) = (self.p_exponent, self.q_exponent);
        if !(2.0 < p && p <= q && q < crit) {
            return Err(Error::InvalidModel(format!(
                "need 2 < p <= q < {crit}, got p = {p}, q = {q}"
            )));
        }
        if let Some(m) = self.s_max {
            if !(m > 0.0) {
                return Err(Error::InvalidModel("s_max must be positive".into()));
            }
        }
        self.r.validate()
    }

    #[inline]
    pub fn r_derivs(&self, s: f64) -> [f64; 3] {
        self.r.derivs(s)
    }

    #[inline]
    pub fn r_value(&self, s: f64) -> f64 {
        self.r.derivs(s)[0]
    }

    pub fn evaluate(&self, s: f64) -> Result<Evaluation> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("s must be nonnegative, got {s}")));
        }
        if let Some(max) = self.s_max {
            if s > max {
                return Err(Error::Range { s, max });
            }
        }
        let [r, dr, d2r] = self.r.derivs(s);
        let w2 = self.omega * self.omega;
        Ok(Evaluation { r, dr, d2r, f: 0.5 * w2 * s * s + r, df: w2 * s + dr })
    }

    /// Scan range covering the sign structure of R.
    pub fn default_scan_max(&self) -> f64 {
        let s = self.r.natural_scale();
        match self.s_max {
            Some(m) => s.min(m),
            None => s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub ok: bool,
    /// For `ok`: the supporting sample. Otherwise: the violating sample.
    pub s: f64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NcStatus {
    Holds,
    Fails,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcReport {
    pub status: NcStatus,
    pub fitted_exponent: Option<f64>,
    pub fit_residual: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZcReport {
    pub holds: bool,
    /// Zero of F when `holds`, otherwise the point of closest approach of F/(½Ω²s²) to 0.
    pub s1: f64,
    pub f_at_s1: f64,
    pub min_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub h0: Witness,
    pub h1: Witness,
    pub h2: Witness,
    pub h3: Witness,
    /// Fitted c1 = c2 in |R''| <= c1 s^(p-2) + c2 s^(q-2) over the scan.
    pub h3_constant: f64,
    pub nc: NcReport,
    pub zc: ZcReport,
    /// F(s) >= c1 s^2 on (0, delta]: (delta, c1).
    pub coercivity: Option<(f64, f64)>,
    pub s_scan_max: f64,
}

impl ConditionReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.h0.ok && self.h1.ok && self.h2.ok && self.h3.ok
    }
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    /// Geometric fit window for (NC): [lo, hi] in absolute s.
    pub nc_window: (f64, f64),
    pub nc_points: usize,
    /// Max deviation of the log-log fit (natural log units) before `undetermined`.
    pub nc_fit_tol: f64,
    /// Distance of the fitted exponent from 2 + 4/N below which the verdict is `undetermined`.
    pub nc_margin: f64,
    pub zc_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { nc_window: (1e-5, 1e-2), nc_points: 64, nc_fit_tol: 0.05, nc_margin: 0.02, zc_tol: 1e-8 }
    }
}

fn sample_points(s_max: f64, samples: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (1..=samples).map(|i| s_max * i as f64 / samples as f64).collect();
    let lo = (s_max * 1e-8).ln();
    let hi = (s_max / samples as f64).ln();
    for i in 0..samples {
        pts.push((lo + (hi - lo) * i as f64 / samples as f64).exp());
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    pts
}

pub fn check_conditions(model: &NonlinearityModel, s_scan_max: f64, samples: usize) -> Result<ConditionReport> {
    check_conditions_with(model, s_scan_max, samples, &CheckOptions::default())
}

pub fn check_conditions_with(
    model: &NonlinearityModel,
    s_scan_max: f64,
    samples: usize,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    if !(s_scan_max > 0.0) || samples < 100 {
        return Err(Error::Checker("need s_scan_max > 0 and samples >= 100".into()));
    }
    let s_scan_max = match model.s_max {
        Some(m) => s_scan_max.min(m),
        None => s_scan_max,
    };
    let pts = sample_points(s_scan_max, samples);
    let vals: Vec<[f64; 3]> = pts.iter().map(|&s| model.r_derivs(s)).collect();
    check_smoothness(model, &pts, &vals)?;

    let w2 = model.omega * model.omega;
    let [r0, r0p, r0pp] = model.r_derivs(0.0);
    let h0_val = r0.abs().max(r0p.abs()).max(r0pp.abs());
    let h0 = Witness { ok: h0_val <= 1e-14, s: 0.0, value: h0_val };

    // (H1): F >= 0.
    let mut h1 = Witness { ok: true, s: 0.0, value: 0.0 };
    let mut worst = f64::INFINITY;
    for (s, v) in pts.iter().zip(&vals) {
        let f = 0.5 * w2 * s * s + v[0];
        let ratio = f / (0.5 * w2 * s * s);
        if ratio < -1e-10 && h1.ok {
            h1 = Witness { ok: false, s: *s, value: f };
        }
        if h1.ok && ratio < worst {
            worst = ratio;
            h1.s = *s;
            h1.value = f;
        }
    }

    // (H2): witness at the minimum of R.
    let (imin, rmin) = vals
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v[0]))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let h2 = Witness { ok: rmin < 0.0, s: pts[imin], value: rmin };

    // (H3): |R''| / (s^(p-2) + s^(q-2)).
    let (p, q) = (model.p_exponent, model.q_exponent);
    let ratio = |s: f64, r2: f64| r2.abs() / (s.powf(p - 2.0) + s.powf(q - 2.0));
    let mut c = 0.0;
    let mut c_at = pts[0];
    for (s, v) in pts.iter().zip(&vals) {
        let r = ratio(*s, v[2]);
        if r > c {
            c = r;
            c_at = *s;
        }
    }
    let exps_ok = 2.0 < p && p <= q && q < model.critical_exponent();
    let tiny = pts[0];
    let blowup = ratio(tiny, model.r_derivs(tiny)[2]) > 10.0 * ratio(1e3 * tiny, model.r_derivs(1e3 * tiny)[2]) + 1e-300;
    let h3 = if exps_ok && c.is_finite() && !blowup {
        Witness { ok: true, s: c_at, value: c }
    } else {
        Witness { ok: false, s: if blowup { tiny } else { c_at }, value: c }
    };

    let nc = nc_status(model, &pts, &vals, s_scan_max, opts);
    let zc = zc_status(model, &pts, &vals, opts);

    let mut coercivity = None;
    let mut running = f64::INFINITY;
    for (s, v) in pts.iter().zip(&vals) {
        let f = 0.5 * w2 * s * s + v[0];
        running = running.min(f / (s * s));
        if running >= 0.25 * w2 {
            coercivity = Some((*s, running));
        } else {
            break;
        }
    }

    Ok(ConditionReport { h0, h1, h2, h3, h3_constant: c, nc, zc, coercivity, s_scan_max })
}

fn check_smoothness(model: &NonlinearityModel, pts: &[f64], vals: &[[f64; 3]]) -> Result<()> {
    if let RSpec::Truncated(t) = &model.r {
        let b = t.base.derivs(t.cut);
        let own = [t.value, t.slope, t.curvature];
        for k in 0..3 {
            let scale = b[k].abs().max(own[k].abs()).max(1e-12);
            if (b[k] - own[k]).abs() > 1e-6 * scale.max(1.0) {
                return Err(Error::Checker(format!(
                    "derivative {k} jumps at the cut s = {} ({} vs {}), R is not C2",
                    t.cut, b[k], own[k]
                )));
            }
        }
    }
    let s1 = vals.iter().map(|v| v[1].abs()).fold(0.0, f64::max);
    let s2 = vals.iter().map(|v| v[2].abs()).fold(0.0, f64::max);
    for (i, &s) in pts.iter().enumerate().step_by(7) {
        let h = 1e-6 * s.max(1e-3);
        if s < 2.0 * h {
            continue;
        }
        let a = model.r_derivs(s + h);
        let b = model.r_derivs(s - h);
        let fd1 = (a[0] - b[0]) / (2.0 * h);
        let fd2 = (a[1] - b[1]) / (2.0 * h);
        if (fd1 - vals[i][1]).abs() > 1e-4 * s1 + 1e-10 || (fd2 - vals[i][2]).abs() > 1e-3 * s2 + 1e-10 {
            return Err(Error::Checker(format!(
                "analytic derivatives disagree with finite differences at s = {s}; R is not C2"
            )));
        }
    }
    Ok(())
}

fn nc_status(
    model: &NonlinearityModel,
    pts: &[f64],
    vals: &[[f64; 3]],
    s_scan_max: f64,
    opts: &CheckOptions,
) -> NcReport {
    // alpha: extent of the initial negative run on the scan.
    let mut alpha = None;
    for (s, v) in pts.iter().zip(vals) {
        if v[0] >= 0.0 {
            break;
        }
        alpha = Some(*s);
    }
    let (lo, hi) = opts.nc_window;
    let hi = hi.min(s_scan_max);
    let m = opts.nc_points.max(8);
    let samples: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let s = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (m - 1) as f64).exp();
            (s, model.r_value(s))
        })
        .collect();
    let mut rep = classify_nc(&samples, model.dimension, opts);
    rep.alpha = alpha;
    rep
}

/// (NC) verdict from samples (s, R(s)) on an increasing geometric grid near 0.
pub fn classify_nc(samples: &[(f64, f64)], dimension: u32, opts: &CheckOptions) -> NcReport {
    let n = dimension as f64;
    let border = 2.0 + 4.0 / n;
    let report = |status, fitted_exponent, fit_residual, epsilon, note: String| NcReport {
        status,
        fitted_exponent,
        fit_residual,
        epsilon,
        alpha: None,
        note,
    };
    let mut xs = Vec::with_capacity(samples.len());
    let mut ys = Vec::with_capacity(samples.len());
    for (i, &(s, r)) in samples.iter().enumerate() {
        if r >= 0.0 {
            if i == 0 {
                return report(NcStatus::Fails, None, None, None, format!("R({s:e}) = {r:e} >= 0 at the smallest fit sample"));
            }
            break;
        }
        xs.push(s.ln());
        ys.push((-r).ln());
    }
    if xs.len() < 8 || xs.last().unwrap() - xs[0] < std::f64::consts::LN_10 {
        return report(
            NcStatus::Undetermined,
            None,
            None,
            None,
            "negative run near 0 shorter than one decade of the fit window".into(),
        );
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let resid = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).abs())
        .fold(0.0, f64::max);
    if resid > opts.nc_fit_tol {
        return report(
            NcStatus::Undetermined,
            Some(slope),
            Some(resid),
            None,
            "log-log fit residual above tolerance (not a clean power law near 0)".into(),
        );
    }
    if (slope - border).abs() < opts.nc_margin {
        return report(
            NcStatus::Undetermined,
            Some(slope),
            Some(resid),
            None,
            format!("fitted exponent within {} of 2 + 4/N", opts.nc_margin),
        );
    }
    if slope < border {
        let eps = if slope > 2.0 { slope - 2.0 + 0.5 * (border - slope) } else { 2.0 / n };
        report(
            NcStatus::Holds,
            Some(slope),
            Some(resid),
            Some(eps),
            format!("fitted exponent {slope:.4} < 2 + 4/N = {border:.4}"),
        )
    } else {
        report(
            NcStatus::Fails,
            Some(slope),
            Some(resid),
            None,
            format!("fitted exponent {slope:.4} > 2 + 4/N = {border:.4}"),
        )
    }
}

fn zc_status(model: &NonlinearityModel, pts: &[f64], vals: &[[f64; 3]], opts: &CheckOptions) -> ZcReport {
    let w2 = model.omega * model.omega;
    let phi = |s: f64| {
        let r = model.r_value(s);
        1.0 + 2.0 * r / (w2 * s * s)
    };
    // sign change of F: bisect to the first zero
    for i in 1..pts.len() {
        let f_prev = 0.5 * w2 * pts[i - 1] * pts[i - 1] + vals[i - 1][0];
        let f_cur = 0.5 * w2 * pts[i] * pts[i] + vals[i][0];
        if f_prev >= 0.0 && f_cur < 0.0 {
            let f = |s: f64| 0.5 * w2 * s * s + model.r_value(s);
            let s1 = bisect(&f, pts[i - 1], pts[i], 1e-14);
            return ZcReport { holds: true, s1, f_at_s1: f(s1), min_ratio: phi(pts[i]).min(0.0) };
        }
    }
    let (imin, _) = pts
        .iter()
        .enumerate()
        .map(|(i, &s)| (i, phi(s)))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let a = pts[imin.saturating_sub(1)];
    let b = pts[(imin + 1).min(pts.len() - 1)];
    let s1 = golden_min(&phi, a, b, 200);
    let m = phi(s1);
    let f1 = 0.5 * w2 * s1 * s1 + model.r_value(s1);
    ZcReport { holds: m <= opts.zc_tol, s1, f_at_s1: f1, min_ratio: m }
}

pub(crate) fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub(crate) fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub xi: f64,
    /// `f64::INFINITY` when R stays negative up to the scan limit.
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeSetDecomposition {
    pub intervals: Vec<Interval>,
    pub s_scan_max: f64,
    pub root_tol: f64,
}

impl NegativeSetDecomposition {
    pub fn count(&self) -> usize {
        self.intervals.len()
    }
}

pub fn decompose_negative_set(model: &NonlinearityModel, s_scan_max: f64, root_tol: f64) -> Result<NegativeSetDecomposition> {
    decompose_with_cap(model, s_scan_max, root_tol, DEFAULT_INTERVAL_CAP)
}

pub fn decompose_with_cap(
    model: &NonlinearityModel,
    s_scan_max: f64,
    root_tol: f64,
    cap: usize,
) -> Result<NegativeSetDecomposition> {
    if !(s_scan_max > 0.0 && root_tol > 0.0) {
        return Err(Error::Checker("need s_scan_max > 0 and root_tol > 0".into()));
    }
    let n = 8192;
    let pts = sample_points(s_scan_max, n);
    let neg = |s: f64| model.r_value(s) < 0.0;
    let f = |s: f64| model.r_value(s);
    let mut intervals = Vec::new();
    let mut start: Option<f64> = if neg(pts[0]) { Some(0.0) } else { None };
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        match (neg(a), neg(b)) {
            (false, true) => start = Some(bisect_nonneg(&f, a, b, root_tol)),
            (true, false) => {
                let eta = bisect_nonneg(&f, a, b, root_tol);
                intervals.push(Interval { xi: start.take().unwrap_or(0.0), eta });
                if intervals.len() > cap {
                    return Err(Error::IntervalCap { cap, s_scan_max });
                }
            }
            _ => {}
        }
    }
    if let Some(xi) = start {
        intervals.push(Interval { xi, eta: f64::INFINITY });
        if intervals.len() > cap {
            return Err(Error::IntervalCap { cap, s_scan_max });
        }
    }
    Ok(NegativeSetDecomposition { intervals, s_scan_max, root_tol })
}

/// Bisection on a sign change of f; returns the bracket end where f >= 0, refined
/// until the bracket is below `tol` and |f| there is below `tol` (or the bracket is exhausted).
fn bisect_nonneg(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (mut neg, mut pos) = if f(a) < 0.0 { (a, b) } else { (b, a) };
    for _ in 0..400 {
        let m = 0.5 * (neg + pos);
        if m == neg || m == pos {
            break;
        }
        if (pos - neg).abs() <= tol && f(pos).abs() <= tol {
            break;
        }
        if f(m) < 0.0 {
            neg = m;
        } else {
            pos = m;
        }
    }
    pos
}

/// R̃: R on [0, η_i], cubic continuation with nonnegative slope beyond.
pub fn truncate(model: &NonlinearityModel, decomposition: &NegativeSetDecomposition, cut_index: usize) -> Result<NonlinearityModel> {
    let l = decomposition.count();
    if cut_index == 0 || cut_index > l {
        return Err(Error::Truncation(format!("cut index {cut_index} outside 1..={l}")));
    }
    let eta = decomposition.intervals[cut_index - 1].eta;
    if !eta.is_finite() {
        return Err(Error::Truncation(format!("cut level of interval {cut_index} is not finite")));
    }
    if let RSpec::Truncated(t) = &model.r {
        if eta >= t.cut - 10.0 * decomposition.root_tol {
            return Ok(model.clone());
        }
    }
    if model.q_exponent < 3.0 {
        return Err(Error::Truncation(format!(
            "cubic continuation needs q >= 3 for the growth cap, model has q = {}",
            model.q_exponent
        )));
    }
    let [v, s1, c] = model.r_derivs(eta);
    if s1 < 0.0 {
        return Err(Error::Truncation(format!("R'(eta) = {s1} < 0 at the cut")));
    }
    if v < -1e-6 * (0.5 * model.omega * model.omega * eta * eta) {
        return Err(Error::Truncation(format!("R(eta) = {v} would break (H1)")));
    }
    let floor = c.abs().max(model.omega * model.omega);
    let tail = if c < 0.0 {
        if s1 <= 0.0 {
            return Err(Error::Truncation("R' = 0 and R'' < 0 at the cut: no monotone C2 continuation".into()));
        }
        (c * c / (4.0 * s1) * (1.0 + 1e-9)).max(floor)
    } else {
        floor
    };
    let mut out = model.clone();
    out.r = RSpec::Truncated(Box::new(Truncation {
        base: model.r.clone(),
        cut: eta,
        value: v,
        slope: s1,
        curvature: c,
        tail,
    }));
    out.validate()?;
    Ok(out)
}

/// Minimizers of R(s)/s² on each negative interval (the plateau level of a thin-wall profile).
pub fn well_levels(model: &NonlinearityModel, decomposition: &NegativeSetDecomposition) -> Vec<f64> {
    let mut out = Vec::new();
    for iv in &decomposition.intervals {
        let lo = iv.xi.max(1e-6 * decomposition.s_scan_max);
        let hi = if iv.eta.is_finite() { iv.eta } else { decomposition.s_scan_max };
        let g = |s: f64| model.r_value(s) / (s * s);
        let n = 400;
        let (mut best, mut bs) = (f64::INFINITY, lo);
        for k in 0..=n {
            let s = lo + (hi - lo) * k as f64 / n as f64;
            let v = g(s);
            if v < best {
                best = v;
                bs = s;
            }
        }
        let step = (hi - lo) / n as f64;
        let s = golden_min(&g, (bs - step).max(lo), (bs + step).min(hi), 100);
        out.push(s);
    }
    out
}
