mod common;

use chrono::{Days, NaiveDate};
use common::household;
use didlab::panel::*;
use didlab::Quarter;
use proptest::prelude::*;

fn record(h: usize, day: u64, product: &str, weight: f64, abroad: bool) -> PurchaseRecord {
    let country = if h.is_multiple_of(2) { Country::DK } else { Country::DE };
    PurchaseRecord {
        household_id: format!("{country}{h}"),
        country,
        date: NaiveDate::from_ymd_opt(2009, 1, 1).unwrap() + Days::new(day),
        product: product.into(),
        weight,
        packages: if weight > 0.0 { 1 + (weight / 250.0) as u32 } else { 0 },
        expenditure: weight * 0.8,
        abroad,
    }
}

fn records() -> impl Strategy<Value = Vec<PurchaseRecord>> {
    proptest::collection::vec((0usize..8, 0u64..2190, prop_oneof![Just("butter"), Just("cheese")], 0.0f64..900.0, any::<bool>()), 1..120)
        .prop_map(|v| v.into_iter().map(|(h, d, p, w, a)| record(h, d, p, w, a)).collect())
}

fn table(ids: impl Iterator<Item = usize>) -> ProfileTable {
    let profiles = ids
        .map(|h| {
            let country = if h.is_multiple_of(2) { Country::DK } else { Country::DE };
            let mut p = household(&format!("{country}{h}"), country);
            p.income_midpoint = Some(1000.0 + 137.0 * h as f64);
            p
        })
        .collect();
    build_profile_table(profiles, PRETAX_PROFILE_CUTOFF_YEAR)
}

fn panel_bytes(panel: &PreparedPanel) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = write_panel(dir.path(), panel).unwrap();
    std::fs::read(path).unwrap()
}

#[test]
fn preparation_is_byte_identical_on_rerun() {
    let recs: Vec<_> = (0..200).map(|i| record(i % 8, (i as u64 * 37) % 2190, "butter", 100.0 + i as f64, i % 5 == 0)).collect();
    let t = table(0..8);
    let settings = PrepSettings::default();
    let (a, ra) = prepare_panel(&recs, &t, "butter", &settings).unwrap();
    let (b, rb) = prepare_panel(&recs, &t, "butter", &settings).unwrap();
    assert_eq!(panel_bytes(&a), panel_bytes(&b));
    assert_eq!(ra, rb);
    assert_eq!(a.config_fingerprint, settings.fingerprint("butter"));
}

#[test]
fn detrended_panel_has_zero_season_means() {
    let recs: Vec<_> = (0..400).map(|i| record(i % 8, (i as u64 * 53) % 2190, "butter", 50.0 + (i * 7 % 300) as f64, false)).collect();
    let (panel, _) = prepare_panel(&recs, &table(0..8), "butter", &PrepSettings::default()).unwrap();
    for outcome in Outcome::ALL {
        let mut sums = [[0.0; 4]; 2];
        let mut counts = [[0usize; 4]; 2];
        for h in 0..panel.n_households() {
            for qi in 0..panel.n_quarters() {
                if let Some(v) = panel.adjusted_entry(outcome, h, qi) {
                    let c = panel.households[h].country.index();
                    sums[c][panel.quarters[qi].season()] += v;
                    counts[c][panel.quarters[qi].season()] += 1;
                }
            }
        }
        for c in 0..2 {
            for s in 0..4 {
                if counts[c][s] > 0 {
                    assert!((sums[c][s] / counts[c][s] as f64).abs() < 1e-10, "{outcome} {c} {s}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detrend_residual_means_vanish(values in proptest::collection::vec((proptest::option::of(-1e4f64..1e4), any::<bool>(), 0usize..4), 1..200)) {
        let v: Vec<Option<f64>> = values.iter().map(|x| x.0).collect();
        let c: Vec<Country> = values.iter().map(|x| if x.1 { Country::DK } else { Country::DE }).collect();
        let s: Vec<usize> = values.iter().map(|x| x.2).collect();
        let r = seasonal_detrend(&v, &c, &s).unwrap();
        let mut sums = [[0.0; 4]; 2];
        let mut counts = [[0usize; 4]; 2];
        for ((res, country), season) in r.residuals.iter().zip(&c).zip(&s) {
            if let Some(x) = res {
                sums[country.index()][*season] += x;
                counts[country.index()][*season] += 1;
            }
        }
        for ci in 0..2 {
            for si in 0..4 {
                if counts[ci][si] > 0 {
                    prop_assert!((sums[ci][si] / counts[ci][si] as f64).abs() < 1e-10 * 1e4);
                }
            }
        }
        prop_assert_eq!(r.residuals.iter().map(Option::is_some).collect::<Vec<_>>(), v.iter().map(Option::is_some).collect::<Vec<_>>());
    }

    #[test]
    fn quintiles_ignore_input_order(incomes in proptest::collection::vec(1.0f64..1e5, 1..50), rot in 0usize..50) {
        let mut ps: Vec<HouseholdProfile> = incomes
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let country = if i % 3 == 0 { Country::DE } else { Country::DK };
                let mut p = household(&format!("h{i:03}"), country);
                p.income_midpoint = Some(x.round());
                p
            })
            .collect();
        let mut other = ps.clone();
        other.rotate_left(rot % ps.len());
        other.reverse();
        income_quintiles(&mut ps);
        income_quintiles(&mut other);
        other.sort_by(|a, b| a.household_id.cmp(&b.household_id));
        prop_assert_eq!(ps, other);
    }

    #[test]
    fn cells_are_consistent(recs in records()) {
        let grid = Quarter::study_grid();
        if let Ok(agg) = aggregate_quarterly(&recs, "butter", &grid) {
            for c in &agg.cells {
                prop_assert_eq!(c.price_per_100.is_some(), c.weight > 0.0);
                if let Some(s) = c.share_abroad {
                    prop_assert!((0.0..=1.0).contains(&s));
                }
            }
        }
    }

    #[test]
    fn other_products_do_not_matter(recs in records()) {
        let t = table(0..8);
        let settings = PrepSettings::default();
        let only: Vec<PurchaseRecord> = recs.iter().filter(|r| r.product == "butter").cloned().collect();
        match (prepare_panel(&recs, &t, "butter", &settings), prepare_panel(&only, &t, "butter", &settings)) {
            (Ok((a, _)), Ok((b, _))) => prop_assert_eq!(panel_bytes(&a), panel_bytes(&b)),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a.err(), b.err()),
        }
    }

    #[test]
    fn tukey_flags_exactly_outside_fences(values in proptest::collection::vec(-1e3f64..1e3, 4..80), k in 0.5f64..4.0) {
        let flags = tukey_outliers(&values, k).unwrap();
        let q1 = didlab::numerics::quantile(&values, 0.25).unwrap();
        let q3 = didlab::numerics::quantile(&values, 0.75).unwrap();
        let iqr = q3 - q1;
        let slack = 1e-9 * q1.abs().max(q3.abs());
        for (v, f) in values.iter().zip(flags) {
            prop_assert_eq!(f, *v < q1 - k * iqr - slack || *v > q3 + k * iqr + slack);
        }
    }
}
