use approx::assert_abs_diff_eq;
use didlab::drdid::{anticipation_check, att_q_unconditional, event_study, subgroup_estimate, EstimationSpec, Sample};
use didlab::panel::*;
use didlab::simulate::*;
use didlab::spatial::{atn_estimate, regional_att_by, share_abroad_series, Phase, DK_EDGES};
use didlab::{Error, Quarter, Window};

fn q(y: i32, n: u8) -> Quarter {
    Quarter::new(y, n).unwrap()
}

fn prepared(config: &SimConfig, seed: u64) -> (PreparedPanel, SimTruth) {
    let sim = simulate_panel(config, seed).unwrap();
    let table = build_profile_table(sim.households, PRETAX_PROFILE_CUTOFF_YEAR);
    let (panel, _) = prepare_panel(&sim.purchases, &table, &config.product, &PrepSettings::default()).unwrap();
    (panel, sim.truth)
}

fn quiet(n: usize) -> SimConfig {
    SimConfig { n_dk: n, n_de: n, household_sd: 0.0, noise_sd: 0.0, covariate_trends: false, ..SimConfig::default() }
}

fn spec(outcome: Outcome) -> EstimationSpec {
    let mut s = EstimationSpec::new("butter", outcome);
    s.bootstrap_reps = 0;
    s
}

fn within(est: f64, se: f64, truth: f64, k: f64) -> bool {
    (est - truth).abs() <= k * se
}

#[test]
fn no_noise_no_effects_gives_identical_constants() {
    let mut c = quiet(20);
    c.att_tax = 0.0;
    c.de.baseline = c.dk.baseline;
    c.dk.seasonal = [0.0; 4];
    c.de.seasonal = [0.0; 4];
    let sim = simulate_panel(&c, 1).unwrap();
    let table = build_profile_table(sim.households, PRETAX_PROFILE_CUTOFF_YEAR);
    let settings = PrepSettings { detrend: false, ..PrepSettings::default() };
    let (panel, _) = prepare_panel(&sim.purchases, &table, "butter", &settings).unwrap();
    for h in 0..panel.n_households() {
        for qi in 0..panel.n_quarters() {
            assert_abs_diff_eq!(panel.level(Outcome::Weight, h, qi).unwrap(), c.dk.baseline, epsilon = 1e-9);
        }
    }
}

#[test]
fn noiseless_flat_effect_is_recovered_exactly() {
    let (panel, _) = prepared(&quiet(30), 2);
    let sample = Sample::countries(&panel);
    for x in Window::tax().quarters {
        let e = att_q_unconditional(&panel, &sample, Outcome::Weight, x, q(2011, 1)).unwrap();
        assert_abs_diff_eq!(e.estimate, 10.0, epsilon = 1e-9);
    }
}

#[test]
fn files_round_trip() {
    let c = SimConfig { n_dk: 40, n_de: 40, never_purchaser_share: 0.1, ..SimConfig::default() };
    let sim = simulate_panel(&c, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_purchases(&dir.path().join("p.csv"), &sim.purchases).unwrap();
    write_households(&dir.path().join("h.csv"), &sim.households).unwrap();
    let purchases = read_purchases(&dir.path().join("p.csv")).unwrap();
    let households = read_households(&dir.path().join("h.csv")).unwrap();
    assert_eq!(purchases.len(), sim.purchases.len());
    for (a, b) in purchases.iter().zip(&sim.purchases) {
        assert_eq!((&a.household_id, a.date, &a.product, a.packages, a.abroad), (&b.household_id, b.date, &b.product, b.packages, b.abroad));
        assert!((a.weight - b.weight).abs() <= 1e-9 * b.weight.max(1.0));
    }
    assert_eq!(households, sim.households);
    let table = build_profile_table(households, PRETAX_PROFILE_CUTOFF_YEAR);
    let (_, report) = prepare_panel(&purchases, &table, "butter", &PrepSettings::default()).unwrap();
    assert_eq!(report.households_without_profile, 0);
    assert_eq!(report.households_missing_covariates, 0);
    assert_eq!(report.households_retained + report.households_never_purchasing, 80);
    assert!(report.households_never_purchasing > 0);
}

#[test]
fn simulation_is_deterministic_across_thread_counts() {
    let c = SimConfig { n_dk: 50, n_de: 50, ..SimConfig::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_panel(&c, 4).unwrap())
    };
    let (a, b) = (run(1), run(8));
    assert_eq!(a.purchases, b.purchases);
    assert_eq!(a.households, b.households);
    assert_ne!(simulate_panel(&c, 5).unwrap().purchases, a.purchases);
}

#[test]
fn truth_windows_are_means_of_planted_effects() {
    let c = SimConfig { n_dk: 20, n_de: 20, att_post: -3.0, ..SimConfig::default() };
    let truth = simulate_panel(&c, 6).unwrap().truth;
    let r = q(2011, 1);
    for w in [Window::tax(), Window::post()] {
        let per: Vec<f64> = w.quarters.iter().map(|&x| truth.att(Outcome::Weight, x, r).unwrap()).collect();
        assert_eq!(truth.window(Outcome::Weight, &w, r).unwrap(), per.iter().sum::<f64>() / per.len() as f64);
    }
    assert!(matches!(truth.att(Outcome::Amount, q(2012, 1), r), Err(Error::InvalidConfig(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = SimConfig { noise_sd: -1.0, ..SimConfig::default() };
    assert!(matches!(simulate_panel(&bad, 1), Err(Error::InvalidConfig(_))));
    let c = SimConfig { n_dk: 20, n_de: 20, ..SimConfig::default() };
    let one = monte_carlo(&c, &spec(Outcome::Weight), &PrepSettings::default(), 1, 1);
    assert!(matches!(one, Err(Error::InvalidConfig(_))));
}

#[test]
fn replications_get_distinct_seeds() {
    let c = SimConfig { n_dk: 60, n_de: 60, ..SimConfig::default() };
    let report = monte_carlo(&c, &spec(Outcome::Weight), &PrepSettings::default(), 2, 9).unwrap();
    assert_eq!((report.failures, report.runs.len()), (0, 2));
    assert_ne!(report.runs[0].seed, report.runs[1].seed);
    assert_ne!(report.runs[0].windows[0].1, report.runs[1].windows[0].1);
    let dir = tempfile::tempdir().unwrap();
    write_mc_report(&dir.path().join("mc.csv"), &report).unwrap();
    let text = std::fs::read_to_string(dir.path().join("mc.csv")).unwrap();
    assert!(text.starts_with("statistic,window,value\n"));
}

#[test]
fn income_specific_effects() {
    let c = SimConfig { n_dk: 900, n_de: 900, income_multipliers: [-5.0, 0.0, 0.0], ..SimConfig::default() };
    let (panel, truth) = prepared(&c, 10);
    let s = spec(Outcome::Weight);
    let groups = subgroup_estimate(&panel, &s, &Sample::countries(&panel));
    assert_eq!(groups.len(), 3);
    for (g, r) in groups {
        let t = truth.att_income_group(Outcome::Weight, g.as_str(), q(2012, 1), q(2011, 1)).unwrap();
        let p = r.point(q(2012, 1)).unwrap();
        assert!(within(p.estimate, p.se, t, 2.0), "{}: {} vs {t}", g.as_str(), p.estimate);
    }
}

#[test]
fn anticipation_bump_is_found() {
    let c = SimConfig { n_dk: 600, n_de: 600, anticipation_bump: 20.0, ..SimConfig::default() };
    let (panel, truth) = prepared(&c, 11);
    let pts = anticipation_check(&panel, &spec(Outcome::Weight), &Sample::countries(&panel)).unwrap();
    let t = truth.att(Outcome::Weight, q(2011, 3), q(2011, 1)).unwrap();
    assert!(within(pts[1].estimate, pts[1].se, t, 2.0), "{} vs {t}", pts[1].estimate);
    assert!(t > 15.0);
}

#[test]
fn border_spillover_on_prices() {
    let c = SimConfig { n_dk: 100, n_de: 1200, border_spillover: 2.0, ..SimConfig::default() };
    let (panel, truth) = prepared(&c, 12);
    let r = atn_estimate(&panel, 50.0, &spec(Outcome::PricePer100)).unwrap();
    let t = truth.spillover_window(&Window::tax(), q(2011, 1)).unwrap();
    assert!(within(r.estimate, r.se, t, 2.0), "{} ({}) vs {t}", r.estimate, r.se);
}

#[test]
fn border_region_with_halved_effect() {
    let c = SimConfig { n_dk: 1500, n_de: 1000, border_multiplier: 0.5, att_tax: 40.0, ..SimConfig::default() };
    let (panel, truth) = prepared(&c, 13);
    let s = spec(Outcome::Weight);
    let region = |p: &HouseholdProfile| if p.distance_km.unwrap() < 50.0 { "border".to_string() } else { "inland".to_string() };
    let rows = regional_att_by(&panel, &s, region).unwrap();
    let border = rows.iter().find(|r| r.region == "border").unwrap();
    let ids: Vec<&str> = panel
        .households
        .iter()
        .filter(|p| p.country == Country::DK && p.distance_km.unwrap() < 50.0)
        .map(|p| p.household_id.as_str())
        .collect();
    let t = truth.att_subset(Outcome::Weight, &ids, q(2012, 1), q(2011, 1)).unwrap();
    let p = border.result.as_ref().unwrap().point(q(2012, 1)).unwrap();
    assert!(within(p.estimate, p.se, t, 2.0), "{} vs {t}", p.estimate);
}

#[test]
fn share_abroad_phase_means_match_planted_curve() {
    let c = SimConfig { n_dk: 2000, n_de: 50, ..SimConfig::default() };
    let (panel, truth) = prepared(&c, 14);
    let rows = share_abroad_series(&panel, Country::DK, &DK_EDGES).unwrap();
    let near = &rows[0];
    for (i, phase) in Phase::ALL.iter().enumerate() {
        let expected = truth.expected_share_abroad(0.0, 50.0, c.dk.distance_km, *phase == Phase::Tax).unwrap();
        let got = near.means[i].unwrap();
        assert!((got - expected).abs() < 0.15 * expected, "{phase:?}: {got} vs {expected}");
    }
}

#[test]
fn default_config_recovers_planted_effect() {
    let (panel, truth) = prepared(&SimConfig { n_dk: 800, n_de: 800, ..SimConfig::default() }, 15);
    let r = event_study(&panel, &spec(Outcome::Weight)).unwrap();
    let tax = r.window("tax").unwrap();
    let t = truth.window(Outcome::Weight, &Window::tax(), q(2011, 1)).unwrap();
    assert_eq!(t, 10.0);
    assert!(within(tax.estimate, tax.se, t, 2.0), "{} vs {t}", tax.estimate);
}
