use std::path::Path;

use serde::{Deserialize, Serialize};

use nkg_core::dynamics::{
    cfl_limit, default_dt, embed_standing_wave, perturbation_trials, stability_experiment, ConservationLog,
    Integrator, StabilityOptions,
};
use nkg_core::io::{read_profile, write_profile, write_state};
use nkg_core::minimize::{
    evaluate_profile, find_bound_state_in_basin, find_ground_state, find_multiple_states, DescentStatus,
    LocalMinCertificate, StandingWaveResult,
};
use nkg_core::nonlinearity::{check_conditions, decompose_negative_set, Interval, DEFAULT_ROOT_TOL};
use nkg_core::radial::FunctionalValues;
use nkg_core::thresholds::compute_thresholds;

use crate::config::{Loaded, WaveSource};
use crate::output::{tag, Output};
use crate::Failure;

/// JSON record of a standing wave; the profile lives in the CSV named by `profile`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveSummary {
    pub kind: String,
    pub sigma: f64,
    pub omega: f64,
    pub functionals: FunctionalValues,
    pub residual: f64,
    pub converged: bool,
    pub certified: bool,
    pub status: DescentStatus,
    pub boundary_fraction: f64,
    pub spread: bool,
    pub hylomorphic: bool,
    pub j0_negative: bool,
    pub certificate: LocalMinCertificate,
    pub linf: f64,
    pub iterations: usize,
    pub profile: String,
}

impl WaveSummary {
    fn new(kind: &str, w: &StandingWaveResult, profile: &str) -> Self {
        Self {
            kind: kind.into(),
            sigma: w.sigma,
            omega: w.omega,
            functionals: w.functionals,
            residual: w.residual,
            converged: w.converged,
            certified: w.is_certified(),
            status: w.status,
            boundary_fraction: w.boundary_fraction,
            spread: w.spread,
            hylomorphic: w.hylomorphic,
            j0_negative: w.j0_negative,
            certificate: w.certificate.clone(),
            linf: w.linf,
            iterations: w.iterations,
            profile: profile.into(),
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.json`; returns the JSON file name.
fn save_wave(l: &Loaded, out: &Output, stem: &str, kind: &str, w: &StandingWaveResult) -> Result<String, Failure> {
    let csv = format!("{stem}.csv");
    out.write_with(&csv, |b| write_profile(b, &l.grid, &w.u, &l.model_hash))?;
    let json = format!("{stem}.json");
    out.write_json(&json, "wave", &WaveSummary::new(kind, w, &csv))?;
    Ok(json)
}

#[derive(Serialize)]
struct CheckOutput {
    hypotheses_hold: bool,
    h0_ok: bool,
    h1_ok: bool,
    h2_ok: bool,
    h3_ok: bool,
    nc_status: nkg_core::nonlinearity::NcStatus,
    zc_holds: bool,
    conditions: nkg_core::nonlinearity::ConditionReport,
    negative_set: Option<Vec<Interval>>,
    negative_set_error: Option<String>,
}

pub fn check(l: &Loaded, out: &Output) -> Result<u8, Failure> {
    let scan = l.config.check.s_scan_max.unwrap_or_else(|| l.model.default_scan_max());
    let report = check_conditions(&l.model, scan, l.config.check.samples)?;
    let dec = decompose_negative_set(&l.model, scan, DEFAULT_ROOT_TOL);
    let ok = report.hypotheses_hold();
    let res = CheckOutput {
        hypotheses_hold: ok,
        h0_ok: report.h0.ok,
        h1_ok: report.h1.ok,
        h2_ok: report.h2.ok,
        h3_ok: report.h3.ok,
        nc_status: report.nc.status,
        zc_holds: report.zc.holds,
        negative_set: dec.as_ref().ok().map(|d| d.intervals.clone()),
        negative_set_error: dec.as_ref().err().map(|e| e.to_string()),
        conditions: report,
    };
    out.write_json("check.json", "check", &res)?;
    println!(
        "H0 {} H1 {} H2 {} H3 {}; NC {:?}; ZC {}; negative intervals: {}",
        res.h0_ok,
        res.h1_ok,
        res.h2_ok,
        res.h3_ok,
        res.nc_status,
        res.zc_holds,
        res.negative_set.as_ref().map_or("error".to_string(), |v| v.len().to_string())
    );
    Ok(if ok { 0 } else { 2 })
}

#[derive(Serialize)]
struct IndexEntry {
    sigma: f64,
    kind: String,
    file: Option<String>,
    converged: bool,
    certified: bool,
    error: Option<String>,
}

pub fn solve(l: &Loaded, out: &Output) -> Result<u8, Failure> {
    let charges = l.config.solve.charges();
    if charges.is_empty() {
        return Err(Failure::config("solve needs solve.sigma or solve.sigmas"));
    }
    let cfg = &l.config.solver;
    let mut index = Vec::new();
    for &sigma in &charges {
        let mut runs = vec![("ground", find_ground_state(&l.grid, &l.model, sigma, cfg.n_starts, cfg))];
        if l.config.solve.basin {
            runs.push(("basin", find_bound_state_in_basin(&l.grid, &l.model, sigma, cfg)));
        }
        for (kind, r) in runs {
            let entry = match r {
                Ok(w) => {
                    let file = save_wave(l, out, &format!("solve_sigma_{}_{kind}", tag(sigma)), kind, &w)?;
                    println!(
                        "sigma {sigma} {kind}: omega {:.6} E {:.6} Lambda {:.6} hylomorphic {} certificate {:?}",
                        w.omega, w.functionals.e_sigma, w.functionals.lambda, w.hylomorphic, w.certificate.status
                    );
                    IndexEntry {
                        sigma,
                        kind: kind.into(),
                        file: Some(file),
                        converged: w.converged,
                        certified: w.is_certified(),
                        error: None,
                    }
                }
                Err(e) => {
                    eprintln!("sigma {sigma} {kind}: {e}");
                    IndexEntry { sigma, kind: kind.into(), file: None, converged: false, certified: false, error: Some(e.to_string()) }
                }
            };
            index.push(entry);
        }
    }
    out.write_json("solve_index.json", "solve", &index)?;
    Ok(if index.iter().any(|e| e.certified) { 0 } else { 3 })
}

fn has_negative_set(l: &Loaded) -> Result<Vec<Interval>, Failure> {
    let dec = decompose_negative_set(&l.model, l.model.default_scan_max(), DEFAULT_ROOT_TOL)?;
    Ok(dec.intervals)
}

pub fn thresholds(l: &Loaded, out: &Output) -> Result<u8, Failure> {
    if has_negative_set(l)?.is_empty() {
        return Err(Failure::new(2, "R has no negative set (H2 fails), so the thresholds are undefined"));
    }
    let r = compute_thresholds(&l.grid, &l.model, &l.config.solver, &l.config.thresholds)?;
    out.write_json("thresholds.json", "thresholds", &r)?;
    out.write_with("jk_curve.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["k", "j0", "jk", "g", "kinetic", "multiplier", "converged", "spread", "valid"])
            .map_err(csv_err)?;
        for s in &r.jk_curve {
            w.write_record([
                s.k.to_string(),
                s.j0.to_string(),
                s.jk.to_string(),
                s.g.map_or(String::new(), |g| g.to_string()),
                s.kinetic.to_string(),
                s.multiplier.to_string(),
                s.converged.to_string(),
                s.spread.to_string(),
                s.valid.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_with("bump_bounds.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["style", "s", "r_inner", "k", "j0", "bound"]).map_err(csv_err)?;
        for s in &r.bump_bounds {
            w.write_record([
                format!("{:?}", s.style),
                s.s.to_string(),
                s.r_inner.to_string(),
                s.k.to_string(),
                s.j0.to_string(),
                s.bound.map_or(String::new(), |g| g.to_string()),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!(
        "kbar [{:.6e}, {:.6e}]  sigma_g [{:.6e}, {:.6e}]  sigma_b [{:.6e}, {:.6e}]  small-omega criterion {}",
        r.kbar.bracket.lo,
        r.kbar.bracket.hi,
        r.sigma_g.bracket.lo,
        r.sigma_g.bracket.hi,
        r.sigma_b.bracket.lo,
        r.sigma_b.bracket.hi,
        r.small_omega.holds
    );
    for n in &r.notes {
        println!("note: {n}");
    }
    Ok(0)
}

fn csv_err(e: csv::Error) -> nkg_core::Error {
    nkg_core::Error::Parse(e.to_string())
}

#[derive(Serialize)]
struct WellEntry {
    well: usize,
    window: Interval,
    linf: f64,
    certified: bool,
    e_sigma_truncated: f64,
    file: String,
}

#[derive(Serialize)]
struct MultiplicityPoint {
    sigma: f64,
    certified: usize,
    states: Vec<WellEntry>,
    failures: Vec<nkg_core::minimize::WellFailure>,
    error: Option<String>,
}

#[derive(Serialize)]
struct MultiplicitySummary {
    ell: usize,
    intervals: Vec<Interval>,
    points: Vec<MultiplicityPoint>,
    /// grid charges with at least ell certified states
    sigmas_with_ell: Vec<f64>,
    /// [min, max] of those charges
    interval: Option<(f64, f64)>,
}

pub fn multiplicity(l: &Loaded, out: &Output) -> Result<u8, Failure> {
    let intervals = has_negative_set(l)?;
    let ell = intervals.len();
    if ell < 2 {
        return Err(Failure::new(2, format!("the negative set has {ell} interval(s); use solve for fewer than two")));
    }
    let sigmas = &l.config.multiplicity.sigmas;
    if sigmas.is_empty() {
        return Err(Failure::config("multiplicity needs multiplicity.sigmas"));
    }
    let mut points = Vec::new();
    for &sigma in sigmas {
        match find_multiple_states(&l.grid, &l.model, sigma, &l.config.solver) {
            Ok(rep) => {
                let mut states = Vec::new();
                for s in &rep.states {
                    let stem = format!("multiplicity_sigma_{}_well_{}", tag(sigma), s.well);
                    let file = save_wave(l, out, &stem, &format!("well_{}", s.well), &s.state)?;
                    states.push(WellEntry {
                        well: s.well,
                        window: s.window.clone(),
                        linf: s.state.linf,
                        certified: s.state.is_certified(),
                        e_sigma_truncated: s.e_sigma_truncated,
                        file,
                    });
                }
                let certified = rep.certified_count();
                println!("sigma {sigma}: {certified} certified state(s) of {ell}");
                points.push(MultiplicityPoint { sigma, certified, states, failures: rep.failures, error: None });
            }
            Err(e) => {
                eprintln!("sigma {sigma}: {e}");
                points.push(MultiplicityPoint {
                    sigma,
                    certified: 0,
                    states: vec![],
                    failures: vec![],
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let sigmas_with_ell: Vec<f64> = points.iter().filter(|p| p.certified >= ell).map(|p| p.sigma).collect();
    let interval = sigmas_with_ell.iter().fold(None, |acc: Option<(f64, f64)>, &s| {
        Some(acc.map_or((s, s), |(a, b)| (a.min(s), b.max(s))))
    });
    let found = !sigmas_with_ell.is_empty();
    out.write_json("multiplicity.json", "multiplicity", &MultiplicitySummary { ell, intervals, points, sigmas_with_ell, interval })?;
    Ok(if found { 0 } else { 3 })
}

fn load_wave(l: &Loaded, src: &WaveSource) -> Result<StandingWaveResult, Failure> {
    let cfg = &l.config.solver;
    if let Some(p) = &src.wave {
        let path = l.resolve(p);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::config(format!("cannot read wave {}: {e}", path.display())))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("wave {}: {e}", path.display())))?;
        let summary: WaveSummary = serde_json::from_value(v.get("result").cloned().unwrap_or(v))
            .map_err(|e| Failure::config(format!("wave {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        return profile_wave(l, &dir.join(&summary.profile), summary.sigma);
    }
    if let Some(p) = &src.profile {
        let sigma = src.sigma.ok_or_else(|| Failure::config("a profile source needs sigma"))?;
        return profile_wave(l, &l.resolve(p), sigma);
    }
    let sigma = src
        .sigma
        .or(l.config.solve.sigma)
        .ok_or_else(|| Failure::config("wave source needs wave, profile + sigma, or sigma"))?;
    Ok(find_ground_state(&l.grid, &l.model, sigma, cfg.n_starts, cfg)?)
}

fn profile_wave(l: &Loaded, path: &Path, sigma: f64) -> Result<StandingWaveResult, Failure> {
    let f = std::fs::File::open(path).map_err(|e| Failure::config(format!("cannot read profile {}: {e}", path.display())))?;
    let data = read_profile(f)?;
    if !data.header.matches(&l.grid) {
        return Err(Failure::config(format!("profile {} was written on a different grid", path.display())));
    }
    if data.header.model_hash != l.model_hash {
        return Err(Failure::config(format!("profile {} was computed for a different model", path.display())));
    }
    Ok(evaluate_profile(&l.grid, &l.model, &data.u, sigma, &l.config.solver)?)
}

fn resolve_dt(l: &Loaded, dt: Option<f64>, dt_over_h: Option<f64>) -> f64 {
    dt.or(dt_over_h.map(|f| f * l.grid.h())).unwrap_or_else(|| default_dt(&l.grid, &l.model))
}

#[derive(Serialize)]
struct EvolveOutput {
    sigma: f64,
    omega: f64,
    wave_certified: bool,
    dt: f64,
    h: f64,
    cfl_limit: f64,
    steps: usize,
    final_time: f64,
    energy_tol: f64,
    charge_tol: f64,
    passed: bool,
    max_energy_drift: f64,
    max_charge_drift: f64,
    log: ConservationLog,
    final_state: String,
    snapshots: Vec<String>,
}

pub fn evolve(l: &Loaded, out: &Output) -> Result<u8, Failure> {
    let c = &l.config.evolve;
    let dt = resolve_dt(l, c.dt, c.dt_over_h);
    let integ = Integrator::new(&l.grid, &l.model, dt)?;
    let wave = load_wave(l, &c.source)?;
    let start = embed_standing_wave(&wave);
    let mut snaps = Vec::new();
    let (fin, log) = integ.run(&start, c.steps, c.stride, |s| {
        let step = (s.time / dt).round() as usize;
        if c.snapshot_stride > 0 && step % c.snapshot_stride == 0 {
            snaps.push((step, s.clone()));
        }
    })?;
    let mut snapshots = Vec::new();
    for (step, s) in &snaps {
        let name = format!("snapshot_{step:08}.csv");
        out.write_with(&name, |b| write_state(b, &l.grid, s, &l.model_hash))?;
        snapshots.push(name);
    }
    out.write_with("final_state.csv", |b| write_state(b, &l.grid, &fin, &l.model_hash))?;
    let passed = log.max_energy_drift < c.energy_tol && log.max_charge_drift < c.charge_tol;
    println!(
        "{} steps of dt {dt:.6e}: max energy drift {:.3e}, max charge drift {:.3e}",
        c.steps, log.max_energy_drift, log.max_charge_drift
    );
    let res = EvolveOutput {
        sigma: wave.sigma,
        omega: wave.omega,
        wave_certified: wave.is_certified(),
        dt,
        h: l.grid.h(),
        cfl_limit: cfl_limit(&l.grid, &l.model),
        steps: c.steps,
        final_time: fin.time,
        energy_tol: c.energy_tol,
        charge_tol: c.charge_tol,
        passed,
        max_energy_drift: log.max_energy_drift,
        max_charge_drift: log.max_charge_drift,
        log,
        final_state: "final_state.csv".into(),
        snapshots,
    };
    out.write_json("evolve.json", "evolve", &res)?;
    Ok(if passed { 0 } else { 5 })
}

pub fn stability(l: &Loaded, out: &Output) -> Result<u8, Failure> {
    let c = &l.config.stability;
    let dt = resolve_dt(l, c.dt, c.dt_over_h);
    Integrator::new(&l.grid, &l.model, dt)?;
    let wave = load_wave(l, &c.source)?;
    let opts = StabilityOptions {
        delta: c.delta,
        t_final: c.t_final,
        n_trials: c.n_trials,
        dt: Some(dt),
        stride: c.stride,
        seed: l.config.seed,
        bumps: c.bumps,
    };
    let rep = if c.allow_uncertified {
        perturbation_trials(&l.grid, &l.model, &wave, &opts)?
    } else {
        if !wave.is_certified() {
            return Err(Failure::new(3, "the wave is not a certified local minimum (set stability.allow_uncertified)"));
        }
        stability_experiment(&l.grid, &l.model, &wave, &opts)?
    };
    out.write_json("stability.json", "stability", &rep)?;
    println!(
        "{} of {} trials completed; max ratio {}",
        rep.completed,
        rep.trials.len(),
        rep.max_ratio.map_or("n/a".into(), |r| format!("{r:.4}"))
    );
    Ok(if rep.failed == 0 { 0 } else { 5 })
}
