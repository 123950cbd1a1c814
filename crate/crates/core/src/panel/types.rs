use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quarter::Quarter;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Country {
    /// Denmark, the taxed arm.
    DK,
    /// Northern Germany, the control arm.
    DE,
}

impl Country {
    pub fn index(self) -> usize {
        match self {
            Country::DK => 0,
            Country::DE => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Country::DK => "DK",
            Country::DE => "DE",
        }
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Country {
    type Err = Error;

    fn from_str(s: &str) -> Result<Country> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DK" => Ok(Country::DK),
            "DE" => Ok(Country::DE),
            other => Err(Error::invalid(format!("unknown country {other:?} (expected DK or DE)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Gender> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            other => Err(Error::invalid(format!("unknown gender {other:?}"))),
        }
    }
}

/// Country-specific income quintile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IncomeLevel {
    VeryLow,
    Low,
    Medium,
    High,
    VeryHigh,
}

impl IncomeLevel {
    pub const ALL: [IncomeLevel; 5] =
        [IncomeLevel::VeryLow, IncomeLevel::Low, IncomeLevel::Medium, IncomeLevel::High, IncomeLevel::VeryHigh];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IncomeLevel::VeryLow => "very_low",
            IncomeLevel::Low => "low",
            IncomeLevel::Medium => "medium",
            IncomeLevel::High => "high",
            IncomeLevel::VeryHigh => "very_high",
        }
    }
}

impl FromStr for IncomeLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<IncomeLevel> {
        IncomeLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown income level {s:?}")))
    }
}

/// Outcomes that are seasonally adjusted and can be estimated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Weight,
    Amount,
    Expenditure,
    PricePer100,
    AvgPackageSize,
}

impl Outcome {
    pub const ALL: [Outcome; 5] =
        [Outcome::Weight, Outcome::Amount, Outcome::Expenditure, Outcome::PricePer100, Outcome::AvgPackageSize];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Weight => "weight",
            Outcome::Amount => "amount",
            Outcome::Expenditure => "expenditure",
            Outcome::PricePer100 => "price_per_100",
            Outcome::AvgPackageSize => "avg_package_size",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Outcome> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.as_str() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown outcome {s:?}")))
    }
}

/// One shopping event from a purchase diary.
#[derive(Clone, Debug, PartialEq)]
pub struct PurchaseRecord {
    pub household_id: String,
    pub country: Country,
    pub date: NaiveDate,
    pub product: String,
    /// Grams or millilitres.
    pub weight: f64,
    pub packages: u32,
    /// Euro cents.
    pub expenditure: f64,
    pub abroad: bool,
}

impl PurchaseRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::invalid(format!("weight must be a finite value >= 0, got {}", self.weight)));
        }
        if !(self.expenditure >= 0.0) || !self.expenditure.is_finite() {
            return Err(Error::invalid(format!("expenditure must be a finite value >= 0, got {}", self.expenditure)));
        }
        if self.packages > 0 && self.weight == 0.0 {
            return Err(Error::invalid("packages recorded with zero weight"));
        }
        Ok(())
    }
}

/// Pre-tax covariates of one household. Covariates may be missing; such
/// households still enter unconditional estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct HouseholdProfile {
    pub household_id: String,
    pub country: Country,
    pub region: String,
    pub head_age_band: Option<String>,
    pub n_children_under_15: Option<u32>,
    pub diary_keeper_gender: Option<Gender>,
    pub isced: Option<String>,
    pub income_midpoint: Option<f64>,
    pub income_level: Option<IncomeLevel>,
    pub household_size: Option<u32>,
    pub distance_km: Option<f64>,
    pub profile_year: i32,
}

/// One household-quarter cell. Levels are after day-count reweighting.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelCell {
    /// Index into [`PreparedPanel::households`].
    pub household: usize,
    pub quarter: Quarter,
    pub weight: f64,
    pub amount: f64,
    pub expenditure: f64,
    /// Euro cents per 100 g/ml; present iff weight > 0.
    pub price_per_100: Option<f64>,
    pub avg_package_size: Option<f64>,
    pub share_abroad: Option<f64>,
}

impl PanelCell {
    pub fn empty(household: usize, quarter: Quarter) -> PanelCell {
        PanelCell {
            household,
            quarter,
            weight: 0.0,
            amount: 0.0,
            expenditure: 0.0,
            price_per_100: None,
            avg_package_size: None,
            share_abroad: None,
        }
    }

    pub fn outcome(&self, outcome: Outcome) -> Option<f64> {
        match outcome {
            Outcome::Weight => Some(self.weight),
            Outcome::Amount => Some(self.amount),
            Outcome::Expenditure => Some(self.expenditure),
            Outcome::PricePer100 => self.price_per_100,
            Outcome::AvgPackageSize => self.avg_package_size,
        }
    }

    pub fn purchased(&self) -> bool {
        self.weight > 0.0
    }
}

/// The product-specific panel, ready for estimation.
///
/// Cells are stored household-major over a balanced quarter grid. For every
/// outcome the panel keeps the seasonally adjusted value of each cell that
/// entered the adjustment regression, plus the outlier mask; the value used
/// for estimation is the adjusted one where the cell is not masked.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPanel {
    pub product: String,
    pub quarters: Vec<Quarter>,
    pub households: Vec<HouseholdProfile>,
    pub cells: Vec<PanelCell>,
    adjusted: Vec<Vec<Option<f64>>>,
    outlier_mask: Vec<Vec<bool>>,
    pub detrended: bool,
    pub config_fingerprint: String,
}

impl PreparedPanel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        product: String,
        quarters: Vec<Quarter>,
        households: Vec<HouseholdProfile>,
        cells: Vec<PanelCell>,
        adjusted: Vec<Vec<Option<f64>>>,
        outlier_mask: Vec<Vec<bool>>,
        detrended: bool,
        config_fingerprint: String,
    ) -> Result<PreparedPanel> {
        let n = households.len() * quarters.len();
        if cells.len() != n {
            return Err(Error::invalid(format!("panel has {} cells, expected {n} for a balanced grid", cells.len())));
        }
        if adjusted.len() != Outcome::ALL.len() || outlier_mask.len() != Outcome::ALL.len() {
            return Err(Error::invalid("adjusted values and masks are needed for every outcome"));
        }
        if adjusted.iter().any(|v| v.len() != n) || outlier_mask.iter().any(|v| v.len() != n) {
            return Err(Error::invalid("adjusted values or masks do not cover every cell"));
        }
        for (idx, cell) in cells.iter().enumerate() {
            let (h, qi) = (idx / quarters.len(), idx % quarters.len());
            if cell.household != h || cell.quarter != quarters[qi] {
                return Err(Error::invalid(format!("cell {idx} is out of household-major order")));
            }
            if cell.price_per_100.is_some() != (cell.weight > 0.0) {
                return Err(Error::invalid(format!(
                    "household {} quarter {}: price must be present exactly when weight > 0",
                    households[h].household_id, cell.quarter
                )));
            }
        }
        Ok(PreparedPanel { product, quarters, households, cells, adjusted, outlier_mask, detrended, config_fingerprint })
    }

    pub fn n_households(&self) -> usize {
        self.households.len()
    }

    pub fn n_quarters(&self) -> usize {
        self.quarters.len()
    }

    pub fn quarter_index(&self, q: Quarter) -> Option<usize> {
        let first = *self.quarters.first()?;
        let idx = q.since(first);
        (idx >= 0 && (idx as usize) < self.quarters.len()).then_some(idx as usize)
    }

    fn slot(&self, household: usize, qi: usize) -> usize {
        household * self.quarters.len() + qi
    }

    pub fn cell(&self, household: usize, qi: usize) -> &PanelCell {
        &self.cells[self.slot(household, qi)]
    }

    /// Value used for estimation: adjusted, and absent when masked.
    pub fn value(&self, outcome: Outcome, household: usize, qi: usize) -> Option<f64> {
        let s = self.slot(household, qi);
        if self.outlier_mask[outcome.index()][s] {
            None
        } else {
            self.adjusted[outcome.index()][s]
        }
    }

    /// Reweighted level before seasonal adjustment, absent when masked.
    pub fn level(&self, outcome: Outcome, household: usize, qi: usize) -> Option<f64> {
        let s = self.slot(household, qi);
        if self.outlier_mask[outcome.index()][s] {
            None
        } else {
            self.cells[s].outcome(outcome)
        }
    }

    /// Adjusted value whether or not it is masked; `None` when the cell did not
    /// enter the seasonal regression.
    pub fn adjusted_entry(&self, outcome: Outcome, household: usize, qi: usize) -> Option<f64> {
        self.adjusted[outcome.index()][self.slot(household, qi)]
    }

    pub fn is_outlier(&self, outcome: Outcome, household: usize, qi: usize) -> bool {
        self.outlier_mask[outcome.index()][self.slot(household, qi)]
    }

    /// Number of cells per (country, season) that entered the seasonal
    /// regression for `outcome`.
    pub fn detrend_counts(&self, outcome: Outcome) -> [[usize; 4]; 2] {
        let mut counts = [[0usize; 4]; 2];
        for (s, v) in self.adjusted[outcome.index()].iter().enumerate() {
            if v.is_some() {
                let cell = &self.cells[s];
                counts[self.households[cell.household].country.index()][cell.quarter.season()] += 1;
            }
        }
        counts
    }

    pub fn household_index(&self, id: &str) -> Option<usize> {
        self.households.iter().position(|h| h.household_id == id)
    }
}
