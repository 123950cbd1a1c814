use std::collections::BTreeMap;

use super::types::{Country, HouseholdProfile, IncomeLevel};
use crate::numerics::quantile;

/// Last calendar year whose questionnaire counts as pre-tax (the tax starts
/// in the fourth quarter of 2011).
pub const PRETAX_PROFILE_CUTOFF_YEAR: i32 = 2011;

/// The most recent profile not later than `cutoff_year`.
pub fn select_pretax_profile(annual: &[HouseholdProfile], cutoff_year: i32) -> Option<&HouseholdProfile> {
    annual
        .iter()
        .filter(|p| p.profile_year <= cutoff_year)
        .max_by_key(|p| p.profile_year)
}

/// Assign country-specific income quintiles from income midpoints.
///
/// Cut points are the 0.2/0.4/0.6/0.8 quantiles of the country's midpoints;
/// a household takes the first level whose cut point it does not exceed, so
/// ties share the lower level. Missing midpoints leave the level missing;
/// their count is returned.
pub fn income_quintiles(profiles: &mut [HouseholdProfile]) -> usize {
    let mut missing = 0;
    for country in [Country::DK, Country::DE] {
        let incomes: Vec<f64> = profiles
            .iter()
            .filter(|p| p.country == country)
            .filter_map(|p| p.income_midpoint)
            .collect();
        if incomes.is_empty() {
            continue;
        }
        let cuts: Vec<f64> = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .map(|&p| quantile(&incomes, p).expect("non-empty incomes"))
            .collect();
        for p in profiles.iter_mut().filter(|p| p.country == country) {
            p.income_level = p.income_midpoint.map(|v| {
                let bucket = cuts.iter().position(|&c| v <= c).unwrap_or(4);
                IncomeLevel::ALL[bucket]
            });
        }
    }
    for p in profiles.iter_mut().filter(|p| p.income_midpoint.is_none()) {
        p.income_level = None;
        missing += 1;
    }
    missing
}

/// One pre-tax profile per household, with income quintiles.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileTable {
    /// Sorted by household id.
    pub profiles: Vec<HouseholdProfile>,
    pub annual_rows: usize,
    pub excluded_no_pretax: usize,
    pub missing_income: usize,
}

impl ProfileTable {
    pub fn get(&self, id: &str) -> Option<&HouseholdProfile> {
        self.profiles
            .binary_search_by(|p| p.household_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.profiles[i])
    }
}

/// Reduce annual questionnaires to the pre-tax profile of each household and
/// assign income quintiles over all retained households of each country.
pub fn build_profile_table(annual: Vec<HouseholdProfile>, cutoff_year: i32) -> ProfileTable {
    let annual_rows = annual.len();
    let mut by_id: BTreeMap<String, Vec<HouseholdProfile>> = BTreeMap::new();
    for p in annual {
        by_id.entry(p.household_id.clone()).or_default().push(p);
    }
    let mut excluded = 0;
    let mut profiles = Vec::with_capacity(by_id.len());
    for rows in by_id.values() {
        match select_pretax_profile(rows, cutoff_year) {
            Some(p) => profiles.push(p.clone()),
            None => excluded += 1,
        }
    }
    let missing_income = income_quintiles(&mut profiles);
    ProfileTable { profiles, annual_rows, excluded_no_pretax: excluded, missing_income }
}
