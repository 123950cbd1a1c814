#![allow(dead_code)]

use didlab::drdid::EstimationSpec;
use didlab::numerics::RngStream;
use didlab::panel::{Country, Gender, HouseholdProfile, IncomeLevel, Outcome, PanelCell, PreparedPanel};
use didlab::Quarter;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub const PRODUCT: &str = "test";

pub fn q(year: i32, n: u8) -> Quarter {
    Quarter::new(year, n).unwrap()
}

/// A household identical to every other one in its covariates.
pub fn household(id: &str, country: Country) -> HouseholdProfile {
    HouseholdProfile {
        household_id: id.into(),
        country,
        region: if country == Country::DK { "Zealand/Capital".into() } else { "Hamburg".into() },
        head_age_band: Some("35-49".into()),
        n_children_under_15: Some(1),
        diary_keeper_gender: Some(Gender::Female),
        isced: Some("3".into()),
        income_midpoint: Some(3000.0),
        income_level: Some(IncomeLevel::Medium),
        household_size: Some(3),
        distance_km: Some(100.0),
        profile_year: 2010,
    }
}

/// Panel whose estimation value for every outcome is `value(h, qi)`; the
/// share bought abroad is `share(h, qi)`. Not seasonally adjusted.
pub fn panel_with(
    quarters: Vec<Quarter>,
    households: Vec<HouseholdProfile>,
    value: impl Fn(usize, usize) -> Option<f64>,
    share: impl Fn(usize, usize) -> Option<f64>,
) -> PreparedPanel {
    let nq = quarters.len();
    let mut cells = Vec::new();
    let mut adjusted = vec![Vec::new(); Outcome::ALL.len()];
    for h in 0..households.len() {
        for (qi, &quarter) in quarters.iter().enumerate() {
            let v = value(h, qi);
            let mut cell = PanelCell::empty(h, quarter);
            cell.weight = 1.0;
            cell.amount = 1.0;
            cell.expenditure = 1.0;
            cell.price_per_100 = Some(100.0);
            cell.avg_package_size = Some(1.0);
            cell.share_abroad = share(h, qi);
            cells.push(cell);
            for a in adjusted.iter_mut() {
                a.push(v);
            }
        }
    }
    let masks = vec![vec![false; households.len() * nq]; Outcome::ALL.len()];
    PreparedPanel::from_parts(PRODUCT.into(), quarters, households, cells, adjusted, masks, false, String::new()).unwrap()
}

/// Panel from one outcome row per household.
pub fn panel_from_rows(quarters: Vec<Quarter>, rows: Vec<(HouseholdProfile, Vec<f64>)>) -> PreparedPanel {
    let (households, values): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    panel_with(quarters, households, |h, qi| Some(values[h][qi]), |_, _| None)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random panel over the full study grid with identical covariates, random
/// household levels, noise and a DK effect after the tax starts.
pub fn random_constant_panel(seed: u64, n_dk: usize, n_de: usize) -> PreparedPanel {
    let mut rng = RngStream::new(seed, 0).rng();
    let quarters = Quarter::study_grid();
    let mut rows = Vec::new();
    for (country, n) in [(Country::DK, n_dk), (Country::DE, n_de)] {
        for i in 0..n {
            let level = 50.0 * normal(&mut rng) + if country == Country::DK { 20.0 } else { 0.0 };
            let values = quarters
                .iter()
                .map(|qq| {
                    let effect = if country == Country::DK && !qq.is_pre_tax() { 5.0 } else { 0.0 };
                    level + effect + 10.0 * normal(&mut rng)
                })
                .collect();
            rows.push((household(&format!("{country}{i}"), country), values));
        }
    }
    panel_from_rows(quarters, rows)
}

pub fn spec(outcome: Outcome) -> EstimationSpec {
    let mut s = EstimationSpec::new(PRODUCT, outcome);
    s.bootstrap_reps = 0;
    s
}

pub fn dane(i: usize, d: f64) -> HouseholdProfile {
    let mut p = household(&format!("DK{i}"), Country::DK);
    p.distance_km = Some(d);
    p
}

/// Danish share-abroad panel over 2009Q1..2012Q4 with a planted quadratic in
/// distance and tax, household intercepts and noise.
pub fn share_panel(seed: u64, n: usize, household_sd: f64, center_noise: bool, tax_active: bool) -> PreparedPanel {
    let quarters = Quarter::range(q(2009, 1), q(2012, 4));
    let mut rng = RngStream::new(seed, 0).rng();
    let households: Vec<_> = (0..n).map(|i| dane(i, 200.0 * (i as f64 + 0.5) / n as f64)).collect();
    let mut shares = Vec::new();
    for p in &households {
        let d = p.distance_km.unwrap();
        let alpha = household_sd * normal(&mut rng);
        let mut noise: Vec<f64> = quarters.iter().map(|_| 0.02 * normal(&mut rng)).collect();
        if center_noise {
            let m = noise.iter().sum::<f64>() / noise.len() as f64;
            noise.iter_mut().for_each(|e| *e -= m);
        }
        for (qq, e) in quarters.iter().zip(noise) {
            let tax = if tax_active && qq.is_tax() { 1.0 } else { 0.0 };
            let mean = 0.3 - 0.001 * d + 2e-6 * d * d + tax * (0.06 - 0.001 * d + 1e-6 * d * d);
            shares.push(mean + alpha + e);
        }
    }
    let nq = quarters.len();
    panel_with(quarters, households, |_, _| Some(1.0), |h, qi| Some(shares[h * nq + qi]))
}

pub fn re_rows(panel: &PreparedPanel) -> (Vec<Vec<f64>>, Vec<f64>, Vec<usize>) {
    let (mut x, mut y, mut owner) = (Vec::new(), Vec::new(), Vec::new());
    for h in 0..panel.n_households() {
        let d = panel.households[h].distance_km.unwrap();
        for (qi, qq) in panel.quarters.iter().enumerate() {
            let t = if qq.is_tax() { 1.0 } else { 0.0 };
            x.push(vec![1.0, d, d * d, t, d * t, d * d * t]);
            y.push(panel.cell(h, qi).share_abroad.unwrap());
            owner.push(h);
        }
    }
    (x, y, owner)
}

/// Least squares by SVD, independent of the library's solver.
pub fn lstsq(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j]);
    let svd = m.svd(true, true);
    svd.solve(&DVector::from_column_slice(y), 1e-12).unwrap().iter().copied().collect()
}
