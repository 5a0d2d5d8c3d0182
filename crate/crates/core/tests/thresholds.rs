mod common;

use common::*;
use nkg_core::minimize::SolverConfig;
use nkg_core::radial::{analytic_bump, BumpStyle, RadialGrid};
use nkg_core::thresholds::*;

fn report(model: &nkg_core::nonlinearity::NonlinearityModel) -> ThresholdReport {
    compute_thresholds(&RadialGrid::desk(), model, &SolverConfig::default(), &ThresholdOptions::default()).unwrap()
}

#[test]
fn nc_thresholds_vanish() {
    let model = nc();
    let r = report(&model);
    assert_eq!(r.kbar.bracket.lo, 0.0);
    assert_eq!(r.sigma_g.bracket.lo, 0.0);
    assert!(r.sigma_g.bracket.hi < 0.05 * model.omega);
    assert!(r.sigma_b.bracket.lo == 0.0 && r.sigma_b.bracket.hi <= r.sigma_g.bracket.hi);
    let levels: Vec<f64> = r.nc_refinement.iter().map(|(_, b)| b.expect("bound at every level")).collect();
    assert_eq!(levels.len(), 3);
    assert!(levels[0] > levels[1] && levels[1] > levels[2], "{levels:?}");
    assert!(r.invariant_violations().is_empty(), "{:?}", r.invariant_violations());
}

#[test]
fn zc_small_frequency_ratio_approaches_omega_squared() {
    let model = zc();
    let r = report(&model);
    assert!(r.kbar.bracket.lo > 0.0);
    let w2 = model.omega * model.omega;
    assert!(r.small_omega.sup_ratio > w2 * (1.0 - 1e-3), "{:?}", r.small_omega);
    assert!(r.small_omega.sup_ratio <= w2 * (1.0 + 1e-9));
    assert!(r.invariant_violations().is_empty(), "{:?}", r.invariant_violations());
}

#[test]
fn shallow_well_fails_small_frequency_criterion() {
    let model = gap();
    let opts = ThresholdOptions::default();
    let families = default_bump_families(&model, &opts);
    let kmin = families
        .iter()
        .flat_map(|f| bump_upper_bounds(&model, f))
        .filter(|b| b.j0 < 0.0)
        .map(|b| b.k)
        .fold(f64::INFINITY, f64::min);
    assert!(kmin.is_finite());
    let r = check_small_omega(&model, 0.5 * kmin, &[], &families).unwrap();
    assert!(!r.holds && !r.inconclusive);
    // every catalog member obeys |J0| <= (1/4) Ω² K
    for f in &families {
        for b in bump_upper_bounds(&model, f) {
            assert!(-b.j0 <= 0.25 * model.omega * model.omega * b.k);
        }
    }
    assert!(check_small_omega(&model, 0.0, &[], &families).is_err());
}

#[test]
fn bump_bounds_behave_as_in_the_constructions() {
    let model = nc();
    let radii: Vec<f64> = (0..60).map(|i| 0.1 * 1.4f64.powi(i)).collect();
    let best: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&s| {
            let fam = BumpFamily { style: BumpStyle::ProportionalRamp, s_levels: vec![s], radii: radii.clone() };
            bump_upper_bounds(&model, &fam).iter().filter_map(|b| b.bound).fold(f64::INFINITY, f64::min)
        })
        .collect();
    // small amplitudes push the charge bound toward zero
    assert!(best.iter().all(|b| b.is_finite() && *b >= 0.0), "{best:?}");
    assert!(best.windows(2).all(|w| w[1] < w[0]), "{best:?}");
    assert!(best[3] < 0.1 * best[0], "{best:?}");

    let model = p4();
    let fam = BumpFamily { style: BumpStyle::UnitRamp, s_levels: vec![0.8], radii: radii.clone() };
    let bounds = bump_upper_bounds(&model, &fam);
    let negative: Vec<&BumpBound> = bounds.iter().filter(|b| b.bound.is_some()).collect();
    assert!(negative.len() > 10);
    for w in negative.windows(2) {
        assert!(w[1].k > w[0].k);
    }
    assert!(negative.iter().all(|b| b.bound.unwrap().is_finite() && b.bound.unwrap() > 0.0));
    assert!(bounds.iter().filter(|b| b.j0 >= 0.0).all(|b| b.bound.is_none()));
}

#[test]
fn empty_negative_set_is_rejected() {
    let model = nkg_core::nonlinearity::NonlinearityModel::polynomial(1.0, 3, 3.0, 5.0, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
    let e = compute_thresholds(&RadialGrid::desk(), &model, &SolverConfig::default(), &ThresholdOptions::default());
    assert!(e.is_err());
}

#[test]
fn kbar_sign_change_on_the_quartic_curve() {
    let grid = RadialGrid::desk();
    let model = p4();
    let cfg = SolverConfig::default();
    let ks = [20.0, 40.0, 80.0, 160.0];
    let curve = jk_curve(&grid, &model, &ks, &cfg, 1e-6);
    assert!(curve.iter().all(|s| s.valid));
    assert!(!curve[0].negative() && !curve[1].negative());
    assert!(curve[2].negative() && curve[3].negative());
    // J_k grows beyond kbar
    assert!(curve[3].jk > curve[2].jk);
}

#[test]
fn plateau_bumps_approach_omega_squared_from_below() {
    let model = zc();
    let w2 = model.omega * model.omega;
    let kbar = 50.0;
    let mut last = f64::NEG_INFINITY;
    for r in [10.0, 20.0, 40.0, 80.0, 160.0, 320.0] {
        let b = analytic_bump(&model, 2.0, r, BumpStyle::UnitRamp);
        assert!(b.j0 < 0.0 && b.k > kbar);
        let ratio = -2.0 * b.j0 / (b.k - kbar);
        // 2|J0|/(K - k) > Ω² exactly when ∫|∇u|² + 2∫F < Ω² k
        let gradient_plus_f = 2.0 * b.kinetic + 2.0 * b.potential + w2 * b.k;
        assert_eq!(ratio > w2, gradient_plus_f < w2 * kbar);
        assert!(ratio < w2 && ratio > last, "r = {r}: {ratio}");
        last = ratio;
    }
    assert!(last > 0.98 * w2);
}
