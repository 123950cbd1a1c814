mod common;

use approx::assert_abs_diff_eq;
use common::*;
use didlab::drdid::event_study;
use didlab::panel::{Country, Outcome, PreparedPanel};
use didlab::spatial::*;
use didlab::{Error, Quarter};
use proptest::prelude::*;

fn options(theta: Option<f64>) -> ReOptions {
    ReOptions { covariates: vec![], theta, ..ReOptions::default() }
}

#[test]
fn theta_zero_is_pooled_ols() {
    let panel = share_panel(1, 60, 0.03, false, true);
    let fit = random_effects_distance(&panel, &options(Some(0.0))).unwrap();
    let (x, y, _) = re_rows(&panel);
    let beta = lstsq(&x, &y);
    for (label, b) in RE_TERMS.iter().zip(&beta) {
        let got = fit.coefficient(label).unwrap();
        assert!((got - b).abs() <= 1e-8 * (1.0 + b.abs()), "{label}: {got} vs {b}");
    }
}

#[test]
fn zero_household_variance_is_pooled_ols() {
    let panel = share_panel(2, 60, 0.0, true, true);
    let fit = random_effects_distance(&panel, &options(None)).unwrap();
    assert!(fit.clamped);
    assert_eq!(fit.sigma2_alpha, 0.0);
    let (x, y, _) = re_rows(&panel);
    for (label, b) in RE_TERMS.iter().zip(lstsq(&x, &y)) {
        assert!((fit.coefficient(label).unwrap() - b).abs() <= 1e-8 * (1.0 + b.abs()));
    }
}

#[test]
fn theta_one_is_the_within_estimator() {
    let panel = share_panel(3, 60, 0.05, false, true);
    let fit = random_effects_distance(&panel, &options(Some(1.0))).unwrap();
    let (x, y, owner) = re_rows(&panel);
    let n = panel.n_households();
    let t = panel.n_quarters() as f64;
    let mut xm = vec![vec![0.0; 6]; n];
    let mut ym = vec![0.0; n];
    for ((row, v), &h) in x.iter().zip(&y).zip(&owner) {
        for j in 0..6 {
            xm[h][j] += row[j] / t;
        }
        ym[h] += v / t;
    }
    let wx: Vec<Vec<f64>> = x.iter().zip(&owner).map(|(row, &h)| (3..6).map(|j| row[j] - xm[h][j]).collect()).collect();
    let wy: Vec<f64> = y.iter().zip(&owner).map(|(v, &h)| v - ym[h]).collect();
    let beta = lstsq(&wx, &wy);
    for (label, b) in RE_TERMS[3..].iter().zip(&beta) {
        assert_abs_diff_eq!(fit.coefficient(label).unwrap(), *b, epsilon = 1e-8 * (1.0 + b.abs()));
    }
    for label in &RE_TERMS[..3] {
        assert_eq!(fit.coefficient(label), None, "{label} should not be identified");
    }
}

#[test]
fn tax_interactions_unidentified_without_tax_quarters() {
    let panel = share_panel(4, 40, 0.02, false, false);
    let opts = ReOptions { last_quarter: q(2011, 3), ..options(None) };
    let fit = random_effects_distance(&panel, &opts).unwrap();
    for label in ["tax", "dist_x_tax", "dist2_x_tax"] {
        let c = fit.coefficients.iter().find(|c| c.label == label).unwrap();
        assert_eq!((c.estimate, c.se), (None, None));
    }
    assert!(fit.coefficient("dist").is_some());
    assert_eq!(fit.crossover_km, None);
}

#[test]
fn estimated_crossover_near_planted() {
    let panel = share_panel(5, 400, 0.03, false, true);
    let fit = random_effects_distance(&panel, &options(None)).unwrap();
    let planted = didlab::simulate::crossover(0.06, -0.001, 1e-6).unwrap();
    let got = fit.crossover_km.unwrap();
    assert!((got - planted).abs() < 15.0, "{got} vs {planted}");
    assert!(fit.sigma2_alpha > 0.0 && fit.sigma2_eps > 0.0);
    assert_eq!(fit.curve.first().unwrap().0, 0.0);
}

#[test]
fn bucket_examples() {
    let danes = vec![dane(0, 40.0), dane(1, 60.0)];
    let t = bucket_distances(&danes, Country::DK, &DK_EDGES).unwrap();
    assert_eq!(t.buckets[0].label, "<50 km");
    assert_eq!(t.buckets[0].fraction, 0.5);
    let at_edge = bucket_distances(&[dane(0, 50.0)], Country::DK, &DK_EDGES).unwrap();
    assert_eq!(at_edge.buckets[1].label, "50-100 km");
    assert_eq!(at_edge.buckets[1].n_households, 1);
    let mut missing = dane(2, 0.0);
    missing.distance_km = None;
    let t = bucket_distances(&[dane(0, 300.0), missing], Country::DK, &DK_EDGES).unwrap();
    assert_eq!(t.missing, 1);
    assert_eq!(t.buckets.last().unwrap().label, ">=250 km");
    assert_eq!(t.buckets.last().unwrap().fraction, 1.0);
}

#[test]
fn share_abroad_means() {
    let quarters = Quarter::study_grid();
    let hh = vec![dane(0, 10.0), dane(1, 70.0)];
    let p = panel_with(quarters, hh, |_, _| Some(1.0), |h, _| Some(if h == 0 { 0.5 } else { 0.0 }));
    let rows = share_abroad_series(&p, Country::DK, &DK_EDGES).unwrap();
    assert_eq!(rows[0].means, [Some(0.5); 3]);
    assert_eq!(rows[1].means, [Some(0.0); 3]);
    assert_eq!(rows[2].means, [None; 3]);
}

fn regional_panel(seed: u64) -> PreparedPanel {
    let mut p = random_constant_panel(seed, 40, 40);
    for (i, h) in p.households.iter_mut().enumerate() {
        h.distance_km = Some((i % 7) as f64 * 30.0);
        if h.country == Country::DK {
            h.region = if i % 2 == 0 { "Funen".into() } else { "Zealand/Capital".into() };
        }
    }
    p
}

#[test]
fn one_region_reproduces_full_sample() {
    let p = regional_panel(6);
    let s = spec(Outcome::Weight);
    let full = event_study(&p, &s).unwrap();
    let regions = regional_att_by(&p, &s, |_| "all".to_string()).unwrap();
    assert_eq!(regions.len(), 1);
    let r = regions[0].result.as_ref().unwrap();
    assert_eq!(r.points, full.points);
    assert_eq!(r.windows, full.windows);
}

#[test]
fn regions_are_flagged_low_n() {
    let p = regional_panel(7);
    let rows = regional_att(&p, &spec(Outcome::Weight)).unwrap();
    assert_eq!(rows.iter().map(|r| r.region.as_str()).collect::<Vec<_>>(), vec!["Funen", "Zealand/Capital"]);
    assert!(rows.iter().all(|r| r.low_n && r.n_treated == 20 && r.headline().is_some()));
}

#[test]
fn atn_arms_and_row_format() {
    let p = regional_panel(8);
    let s = spec(Outcome::PricePer100);
    let r = atn_estimate(&p, ATN_BORDER_KM, &s).unwrap();
    assert_eq!(r.n_border + r.n_far, 40);
    let row = atn_row(&r);
    assert_eq!(row[0], PRODUCT);
    for cell in &row[1..] {
        let (_, decimals) = cell.split_once('.').unwrap();
        assert_eq!(decimals.len(), 3, "{cell}");
    }
    assert!(matches!(atn_estimate(&p, 1000.0, &s), Err(Error::InsufficientData(_))));
    let formatted = atn_row(&AtnResult { estimate: 0.173, se: 0.799, p_value: 0.557, product: "butter".into(), ..r });
    assert_eq!(formatted.join(", "), "butter, 0.173, 0.799, 0.557");
}

proptest! {
    #[test]
    fn bucket_fractions_partition(distances in proptest::collection::vec(0.0f64..400.0, 1..60), rot in 0usize..60) {
        let danes: Vec<_> = distances.iter().enumerate().map(|(i, &d)| dane(i, d)).collect();
        let t = bucket_distances(&danes, Country::DK, &DK_EDGES).unwrap();
        let total: f64 = t.buckets.iter().map(|b| b.fraction).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert_eq!(t.buckets.iter().map(|b| b.n_households).sum::<usize>(), danes.len());
        let mut rotated = danes.clone();
        rotated.rotate_left(rot % danes.len());
        let u = bucket_distances(&rotated, Country::DK, &DK_EDGES).unwrap();
        prop_assert_eq!(t.buckets, u.buckets);
    }
}
