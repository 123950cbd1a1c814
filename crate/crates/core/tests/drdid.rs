mod common;

use approx::assert_abs_diff_eq;
use common::*;
use didlab::drdid::*;
use didlab::numerics::normal_quantile;
use didlab::panel::{Country, Covariate, Gender, Outcome};
use didlab::{Error, Quarter, Window};
use proptest::prelude::*;

fn two_quarter_panel(treated: &[f64], control: &[f64]) -> didlab::panel::PreparedPanel {
    let mut rows = Vec::new();
    for (i, d) in treated.iter().enumerate() {
        rows.push((household(&format!("t{i}"), Country::DK), vec![0.0, *d]));
    }
    for (i, d) in control.iter().enumerate() {
        rows.push((household(&format!("c{i}"), Country::DE), vec![0.0, *d]));
    }
    panel_from_rows(vec![q(2011, 3), q(2011, 4)], rows)
}

fn unconditional(treated: &[f64], control: &[f64]) -> Result<AttEstimate, Error> {
    let p = two_quarter_panel(treated, control);
    att_q_unconditional(&p, &Sample::countries(&p), Outcome::Weight, q(2011, 4), q(2011, 3))
}

#[test]
fn unconditional_hand_means() {
    assert_eq!(unconditional(&[5.0, 5.0], &[3.0, 3.0]).unwrap().estimate, 2.0);
    assert_eq!(unconditional(&[1.0, 4.0, 7.0], &[7.0, 1.0, 4.0]).unwrap().estimate, 0.0);
    // Two treated households with the same change behave like one.
    assert_eq!(unconditional(&[7.0, 7.0], &[1.0, 3.0]).unwrap().estimate, 5.0);
}

#[test]
fn unconditional_influence_matches_textbook_form() {
    let (t, c) = ([4.0, 9.0, 5.0], [1.0, 2.0, 6.0, 3.0]);
    let est = unconditional(&t, &c).unwrap();
    let (m1, m0) = (6.0, 3.0);
    let expected: Vec<f64> = t.iter().map(|d| (d - m1) / 3.0).chain(c.iter().map(|d| -(d - m0) / 4.0)).collect();
    for (a, b) in est.influence.iter().zip(&expected) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn arm_with_one_household_is_insufficient() {
    assert!(matches!(unconditional(&[5.0], &[1.0, 3.0]), Err(Error::InsufficientData(_))));
    assert!(matches!(unconditional(&[], &[1.0, 3.0]), Err(Error::InsufficientData(_))));
}

/// Four treated and four comparison households with a gender indicator as the
/// only covariate: p(x) is the treated share within the gender and m(x) the
/// comparison mean change within the gender, so the estimator can be summed
/// out by hand.
#[test]
fn dr_equals_explicit_summation() {
    let genders_t = [Gender::Female, Gender::Female, Gender::Female, Gender::Male];
    let genders_c = [Gender::Female, Gender::Female, Gender::Male, Gender::Male];
    let dy_t = [12.0, 9.0, 15.0, 4.0];
    let dy_c = [3.0, 5.0, 1.0, 2.5];
    let mut rows = Vec::new();
    for (i, (&g, &d)) in genders_t.iter().zip(&dy_t).enumerate() {
        let mut p = household(&format!("t{i}"), Country::DK);
        p.diary_keeper_gender = Some(g);
        rows.push((p, vec![0.0, d]));
    }
    for (i, (&g, &d)) in genders_c.iter().zip(&dy_c).enumerate() {
        let mut p = household(&format!("c{i}"), Country::DE);
        p.diary_keeper_gender = Some(g);
        rows.push((p, vec![0.0, d]));
    }
    let panel = panel_from_rows(vec![q(2011, 3), q(2011, 4)], rows);
    let sample = Sample::countries(&panel);
    let nuisance = fit_nuisance(&panel, &sample, &[Covariate::Gender], &[Covariate::Gender]).unwrap();
    let (est, _) = att_q_dr(&panel, &nuisance, Outcome::Weight, q(2011, 4), q(2011, 3)).unwrap();

    let share = |g: Gender| {
        let t = genders_t.iter().filter(|&&x| x == g).count() as f64;
        let c = genders_c.iter().filter(|&&x| x == g).count() as f64;
        t / (t + c)
    };
    let m = |g: Gender| {
        let v: Vec<f64> = genders_c.iter().zip(&dy_c).filter(|(&x, _)| x == g).map(|(_, &d)| d).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let treated_part: f64 = genders_t.iter().zip(&dy_t).map(|(&g, &d)| d - m(g)).sum::<f64>() / 4.0;
    let (mut num, mut den) = (0.0, 0.0);
    for (&g, &d) in genders_c.iter().zip(&dy_c) {
        let w = share(g) / (1.0 - share(g));
        num += w * (d - m(g));
        den += w;
    }
    assert_abs_diff_eq!(est.estimate, treated_part - num / den, epsilon = 1e-8);
    assert_eq!((est.n_treated, est.n_control), (4, 4));
}

#[test]
fn constant_covariates_give_the_treated_share() {
    let panel = two_quarter_panel(&[1.0, 2.0, 3.0], &[1.0, 2.0]);
    let sample = Sample::countries(&panel);
    let fit = fit_nuisance(&panel, &sample, &Covariate::ALL, &Covariate::ALL).unwrap();
    assert_abs_diff_eq!(fit.propensity.coefficients[0], 1.5f64.ln(), epsilon = 1e-8);
    assert!(fit.clamped.iter().all(|p| (p - 0.6).abs() < 1e-8));
}

#[test]
fn propensity_needs_both_arms() {
    let panel = two_quarter_panel(&[1.0, 2.0], &[]);
    let sample = Sample::countries(&panel);
    assert!(matches!(fit_nuisance(&panel, &sample, &Covariate::ALL, &Covariate::ALL), Err(Error::InsufficientData(_))));
}

#[test]
fn constant_covariates_collapse_to_unconditional() {
    for seed in 0..5 {
        let panel = random_constant_panel(seed, 12, 9);
        let mut s = spec(Outcome::Weight);
        let dr = event_study(&panel, &s).unwrap();
        s.conditional = false;
        let un = event_study(&panel, &s).unwrap();
        for (a, b) in dr.points.iter().zip(&un.points) {
            assert_abs_diff_eq!(a.estimate, b.estimate, epsilon = 1e-10);
        }
    }
}

fn point(quarter: Quarter, estimate: f64) -> AttPoint {
    att_point(quarter, estimate, 1.0, 0.95, 10, 10)
}

#[test]
fn aggregate_of_constant_and_linear_points() {
    let tax = Window::tax();
    let influence = InfluenceMatrix { quarters: tax.quarters.clone(), columns: vec![vec![0.1, -0.1, 0.2]; 5] };
    let flat: Vec<AttPoint> = tax.quarters.iter().map(|&x| point(x, 3.0)).collect();
    assert_abs_diff_eq!(aggregate(&flat, &influence, &tax).unwrap().estimate, 3.0, epsilon = 1e-12);
    let ramp: Vec<AttPoint> = tax.quarters.iter().zip(1..).map(|(&x, v)| point(x, v as f64)).collect();
    let agg = aggregate(&ramp, &influence, &tax).unwrap();
    assert_abs_diff_eq!(agg.estimate, 3.0, epsilon = 1e-12);
    // Identical influence in every quarter: the mean has the same se.
    assert_abs_diff_eq!(agg.se, se_from_influence(&influence.columns[0]), epsilon = 1e-12);
    assert!(matches!(aggregate(&ramp[..4], &influence, &tax), Err(Error::MissingQuarter { .. })));
}

#[test]
fn percent_change() {
    assert_eq!(pct_change(0.0, 562.67).unwrap(), 0.0);
    assert_eq!(pct_change(562.67, 562.67).unwrap(), 100.0);
    assert!(matches!(pct_change(1.0, 0.0), Err(Error::UndefinedPercent)));
}

fn influence_with_se(target: f64, n: usize) -> Vec<f64> {
    // Alternating ±a has se = a·sqrt(n·n/(n-1)).
    let a = target / (n as f64 * n as f64 / (n as f64 - 1.0)).sqrt();
    (0..n).map(|i| if i % 2 == 0 { a } else { -a }).collect()
}

#[test]
fn wald_zero_and_single_point() {
    let qq = q(2010, 2);
    let col = influence_with_se(2.0, 40);
    let se = se_from_influence(&col);
    assert_abs_diff_eq!(se, 2.0, epsilon = 1e-12);
    let inf = InfluenceMatrix { quarters: vec![qq], columns: vec![col] };
    let zero = att_point(qq, 0.0, se, 0.95, 20, 20);
    let w = wald_pretrend(std::slice::from_ref(&zero), &inf).unwrap();
    assert_eq!((w.statistic, w.p_value), (0.0, 1.0));
    let edge = att_point(qq, 1.96 * se, se, 0.95, 20, 20);
    let w = wald_pretrend(&[edge], &inf).unwrap();
    assert_eq!(w.dof, 1);
    assert!((w.p_value - 0.05).abs() < 1e-2, "{}", w.p_value);
    let post = att_point(q(2012, 1), 1.0, se, 0.95, 20, 20);
    assert!(matches!(wald_pretrend(&[post], &inf), Err(Error::InsufficientData(_))));
}

#[test]
fn zero_influence_gives_zero_width_bands() {
    let quarters = vec![q(2012, 1), q(2012, 2)];
    let inf = InfluenceMatrix { quarters: quarters.clone(), columns: vec![vec![0.0; 10]; 2] };
    let mut pts: Vec<AttPoint> = quarters.iter().map(|&x| att_point(x, 4.0, 0.0, 0.95, 5, 5)).collect();
    simultaneous_bands(&mut pts, &inf, 200, 0.95, 1).unwrap();
    for p in &pts {
        assert_eq!(p.simultaneous_ci, (4.0, 4.0));
    }
}

#[test]
fn one_quarter_band_is_pointwise() {
    let mut rng = didlab::numerics::RngStream::new(3, 0).rng();
    let col: Vec<f64> = (0..2000).map(|_| normal(&mut rng) / 2000.0).collect();
    let se = se_from_influence(&col);
    let inf = InfluenceMatrix { quarters: vec![q(2012, 1)], columns: vec![col] };
    let mut pts = vec![att_point(q(2012, 1), 1.0, se, 0.95, 1000, 1000)];
    let crit = simultaneous_bands(&mut pts, &inf, 4000, 0.95, 9).unwrap().unwrap();
    assert!((crit - normal_quantile(0.975)).abs() < 0.1, "{crit}");
}

#[test]
fn bootstrap_is_thread_count_invariant() {
    let panel = random_constant_panel(5, 30, 30);
    let mut s = spec(Outcome::Weight);
    s.bootstrap_reps = 300;
    s.seed = 17;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| event_study(&panel, &s).unwrap())
    };
    let (a, b) = (run(1), run(8));
    assert_eq!(a.critical_value, b.critical_value);
    for (x, y) in a.points.iter().zip(&b.points) {
        assert_eq!(x.simultaneous_ci, y.simultaneous_ci);
    }
}

#[test]
fn anticipation_needs_two_households_per_arm() {
    let mut rows = Vec::new();
    let quarters = Quarter::study_grid();
    rows.push((household("dk", Country::DK), vec![1.0; quarters.len()]));
    for i in 0..3 {
        rows.push((household(&format!("de{i}"), Country::DE), vec![i as f64; quarters.len()]));
    }
    let panel = panel_from_rows(quarters, rows);
    let r = anticipation_check(&panel, &spec(Outcome::Weight), &Sample::countries(&panel));
    assert!(matches!(r, Err(Error::InsufficientData(_))));
}

#[test]
fn anticipation_points_use_2011q1() {
    let panel = random_constant_panel(8, 20, 20);
    let pts = anticipation_check(&panel, &spec(Outcome::Weight), &Sample::countries(&panel)).unwrap();
    let quarters: Vec<Quarter> = pts.iter().map(|p| p.quarter).collect();
    assert_eq!(quarters, vec![q(2011, 2), q(2011, 3)]);
}

#[test]
fn subgroups() {
    let mut panel = random_constant_panel(2, 20, 20);
    let s = spec(Outcome::Weight);
    let full = event_study(&panel, &s).unwrap();
    // Everyone is medium income: one group, identical to the full sample.
    let groups = subgroup_estimate(&panel, &s, &Sample::countries(&panel));
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].0, IncomeGroup::Medium);
    assert_eq!(groups[0].1.points, full.points);
    // A group with only Danish households is skipped.
    for p in panel.households.iter_mut().filter(|p| p.country == Country::DK).take(5) {
        p.income_level = Some(didlab::panel::IncomeLevel::VeryHigh);
    }
    let groups = subgroup_estimate(&panel, &s, &Sample::countries(&panel));
    assert_eq!(groups.iter().map(|g| g.0).collect::<Vec<_>>(), vec![IncomeGroup::Medium]);
}

#[test]
fn windows_equal_point_means() {
    let panel = random_constant_panel(4, 25, 25);
    let r = event_study(&panel, &spec(Outcome::Weight)).unwrap();
    for w in &r.spec.windows {
        let mean = w.quarters.iter().map(|x| r.point(*x).unwrap().estimate).sum::<f64>() / w.quarters.len() as f64;
        assert_abs_diff_eq!(r.window(&w.name).unwrap().estimate, mean, epsilon = 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shift_equivariance(seed in 0u64..1000, c in -50.0f64..50.0) {
        let panel = random_constant_panel(seed, 8, 8);
        let s = spec(Outcome::Weight);
        let base = event_study(&panel, &s).unwrap();
        let shifted = panel_with(
            panel.quarters.clone(),
            panel.households.clone(),
            |h, qi| {
                let v = panel.value(Outcome::Weight, h, qi)?;
                let bump = panel.households[h].country == Country::DK && !panel.quarters[qi].is_pre_tax();
                Some(if bump { v + c } else { v })
            },
            |_, _| None,
        );
        let moved = event_study(&shifted, &s).unwrap();
        for (a, b) in base.points.iter().zip(&moved.points) {
            let expected = if a.quarter.is_pre_tax() { a.estimate } else { a.estimate + c };
            prop_assert!((b.estimate - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn bands_contain_pointwise(seed in 0u64..1000) {
        let panel = random_constant_panel(seed, 10, 10);
        let mut s = spec(Outcome::Weight);
        s.bootstrap_reps = 100;
        s.seed = seed;
        let r = event_study(&panel, &s).unwrap();
        for p in &r.points {
            prop_assert!(p.simultaneous_ci.0 <= p.pointwise_ci.0 && p.pointwise_ci.1 <= p.simultaneous_ci.1);
        }
    }

    #[test]
    fn aggregation_is_linear(values in proptest::collection::vec(-100.0f64..100.0, 5), cols in proptest::collection::vec(-1.0f64..1.0, 15)) {
        let tax = Window::tax();
        let points: Vec<AttPoint> = tax.quarters.iter().zip(&values).map(|(&x, &v)| point(x, v)).collect();
        let columns: Vec<Vec<f64>> = cols.chunks(3).map(<[f64]>::to_vec).collect();
        let inf = InfluenceMatrix { quarters: tax.quarters.clone(), columns };
        let agg = aggregate(&points, &inf, &tax).unwrap();
        prop_assert!((agg.estimate - values.iter().sum::<f64>() / 5.0).abs() < 1e-10);
    }
}
