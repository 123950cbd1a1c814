use std::cmp::Ordering;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::types::{Gender, HouseholdProfile, IncomeLevel};
use crate::error::{Error, Result};
use crate::numerics::DesignMatrix;

/// Pre-tax household characteristics available as controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    AgeBand,
    Children,
    Gender,
    Isced,
    IncomeLevel,
    HouseholdSize,
}

impl Covariate {
    pub const ALL: [Covariate; 6] = [
        Covariate::AgeBand,
        Covariate::Children,
        Covariate::Gender,
        Covariate::Isced,
        Covariate::IncomeLevel,
        Covariate::HouseholdSize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::AgeBand => "age_band",
            Covariate::Children => "children",
            Covariate::Gender => "gender",
            Covariate::Isced => "isced",
            Covariate::IncomeLevel => "income_level",
            Covariate::HouseholdSize => "household_size",
        }
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Covariate> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown covariate {s:?}")))
    }
}

/// An encoded design row, labels aligned with values.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateVector {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

/// Orders labels by their first embedded integer, then lexicographically, so
/// that `"18-29" < "30-39" < "100+"` and ISCED `"2" < "10"`.
fn level_order(a: &str, b: &str) -> Ordering {
    fn lead(s: &str) -> Option<u64> {
        let digits: String = s.chars().skip_while(|c| !c.is_ascii_digit()).take_while(char::is_ascii_digit).collect();
        digits.parse().ok()
    }
    match (lead(a), lead(b)) {
        (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => a.cmp(b),
    }
}

/// Reference-coded design for household covariates.
///
/// Categorical levels are learned from the households the encoder is fitted
/// on. References: youngest age band, male diary keeper, lowest observed
/// ISCED level, very-low income.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateEncoder {
    age_levels: Vec<String>,
    isced_levels: Vec<String>,
}

impl CovariateEncoder {
    pub fn fit<'a>(profiles: impl IntoIterator<Item = &'a HouseholdProfile>) -> CovariateEncoder {
        let mut age_levels: Vec<String> = Vec::new();
        let mut isced_levels: Vec<String> = Vec::new();
        for p in profiles {
            if let Some(a) = &p.head_age_band {
                if !age_levels.contains(a) {
                    age_levels.push(a.clone());
                }
            }
            if let Some(i) = &p.isced {
                if !isced_levels.contains(i) {
                    isced_levels.push(i.clone());
                }
            }
        }
        age_levels.sort_by(|a, b| level_order(a, b));
        isced_levels.sort_by(|a, b| level_order(a, b));
        CovariateEncoder { age_levels, isced_levels }
    }

    pub fn age_levels(&self) -> &[String] {
        &self.age_levels
    }

    pub fn isced_levels(&self) -> &[String] {
        &self.isced_levels
    }

    /// Column labels, starting with the intercept.
    pub fn labels(&self, set: &[Covariate]) -> Vec<String> {
        let mut labels = vec!["intercept".to_string()];
        for cov in Covariate::ALL.into_iter().filter(|c| set.contains(c)) {
            match cov {
                Covariate::AgeBand => labels.extend(self.age_levels.iter().skip(1).map(|l| format!("age_band={l}"))),
                Covariate::Children => labels.push("children_u15".into()),
                Covariate::Gender => labels.push("female".into()),
                Covariate::Isced => labels.extend(self.isced_levels.iter().skip(1).map(|l| format!("isced={l}"))),
                Covariate::IncomeLevel => {
                    labels.extend(IncomeLevel::ALL.iter().skip(1).map(|l| format!("income={}", l.as_str())))
                }
                Covariate::HouseholdSize => labels.push("household_size".into()),
            }
        }
        labels
    }

    /// Encode the covariates in `set` (always in canonical order, intercept
    /// first). Returns `Ok(None)` when one of them is missing.
    pub fn encode(&self, profile: &HouseholdProfile, set: &[Covariate]) -> Result<Option<Vec<f64>>> {
        let mut row = vec![1.0];
        for cov in Covariate::ALL.into_iter().filter(|c| set.contains(c)) {
            match cov {
                Covariate::AgeBand => {
                    let Some(a) = &profile.head_age_band else { return Ok(None) };
                    one_hot(&mut row, &self.age_levels, a, "age_band")?;
                }
                Covariate::Children => {
                    let Some(c) = profile.n_children_under_15 else { return Ok(None) };
                    row.push(c as f64);
                }
                Covariate::Gender => {
                    let Some(g) = profile.diary_keeper_gender else { return Ok(None) };
                    row.push(if g == Gender::Female { 1.0 } else { 0.0 });
                }
                Covariate::Isced => {
                    let Some(i) = &profile.isced else { return Ok(None) };
                    one_hot(&mut row, &self.isced_levels, i, "isced")?;
                }
                Covariate::IncomeLevel => {
                    let Some(l) = profile.income_level else { return Ok(None) };
                    row.extend(IncomeLevel::ALL.iter().skip(1).map(|&x| if x == l { 1.0 } else { 0.0 }));
                }
                Covariate::HouseholdSize => {
                    let Some(s) = profile.household_size else { return Ok(None) };
                    row.push(s as f64);
                }
            }
        }
        Ok(Some(row))
    }

    /// Design over several households; fails if any of them lacks a covariate.
    pub fn design(&self, profiles: &[&HouseholdProfile], set: &[Covariate]) -> Result<DesignMatrix> {
        let labels = self.labels(set);
        let mut values = Vec::with_capacity(profiles.len() * labels.len());
        for p in profiles {
            let row = self.encode(p, set)?.ok_or_else(|| {
                Error::invalid(format!("household {} lacks a covariate needed for conditional estimation", p.household_id))
            })?;
            values.extend(row);
        }
        DesignMatrix::new(profiles.len(), labels.len(), values, labels)
    }
}

fn one_hot(row: &mut Vec<f64>, levels: &[String], value: &str, covariate: &str) -> Result<()> {
    let idx = levels.iter().position(|l| l == value).ok_or_else(|| Error::UnknownLevel {
        covariate: covariate.to_string(),
        level: value.to_string(),
    })?;
    row.extend((1..levels.len()).map(|j| if j == idx { 1.0 } else { 0.0 }));
    Ok(())
}

/// Encode all six controls of one household with an encoder fitted on its
/// panel.
pub fn encode_covariates(encoder: &CovariateEncoder, profile: &HouseholdProfile) -> Result<CovariateVector> {
    let values = encoder
        .encode(profile, &Covariate::ALL)?
        .ok_or_else(|| Error::invalid(format!("household {} has missing covariates", profile.household_id)))?;
    Ok(CovariateVector { labels: encoder.labels(&Covariate::ALL), values })
}
