use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::aggregate::{aggregate_quarterly, reweight_quarter_days};
use super::clean::{seasonal_detrend, tukey_outliers};
use super::profiles::{ProfileTable, PRETAX_PROFILE_CUTOFF_YEAR};
use super::types::{Country, Outcome, PanelCell, PreparedPanel, PurchaseRecord};
use crate::error::{Error, Result};
use crate::quarter::Quarter;

/// Where Tukey screening sits relative to seasonal adjustment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierOrder {
    /// Fences on reweighted levels; flagged cells stay out of the seasonal
    /// regression.
    #[default]
    BeforeDetrend,
    /// Fences on seasonal residuals; every cell enters the regression.
    AfterDetrend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepSettings {
    pub tukey_k: f64,
    pub outlier_order: OutlierOrder,
    pub detrend: bool,
    pub first_quarter: Quarter,
    pub last_quarter: Quarter,
    pub profile_cutoff_year: i32,
}

impl Default for PrepSettings {
    fn default() -> Self {
        PrepSettings {
            tukey_k: 3.0,
            outlier_order: OutlierOrder::BeforeDetrend,
            detrend: true,
            first_quarter: Quarter::STUDY_START,
            last_quarter: Quarter::STUDY_END,
            profile_cutoff_year: PRETAX_PROFILE_CUTOFF_YEAR,
        }
    }
}

impl PrepSettings {
    pub fn grid(&self) -> Result<Vec<Quarter>> {
        if self.first_quarter > self.last_quarter {
            return Err(Error::InvalidConfig(format!(
                "first quarter {} is after last quarter {}",
                self.first_quarter, self.last_quarter
            )));
        }
        Ok(Quarter::range(self.first_quarter, self.last_quarter))
    }

    /// Hex SHA-256 over the settings and the product.
    pub fn fingerprint(&self, product: &str) -> String {
        let mut h = Sha256::new();
        h.update(b"didlab-prep-v1\0");
        h.update(product.as_bytes());
        h.update(b"\0");
        h.update(self.tukey_k.to_bits().to_le_bytes());
        h.update([self.outlier_order as u8, self.detrend as u8]);
        h.update(self.first_quarter.to_string().as_bytes());
        h.update(self.last_quarter.to_string().as_bytes());
        h.update(self.profile_cutoff_year.to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Observation counts per pipeline stage for one product.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrepReport {
    pub product: String,
    pub purchase_records: usize,
    pub records_outside_window: usize,
    pub product_records: usize,
    pub annual_profile_rows: usize,
    pub households_without_pretax_profile: usize,
    pub households_missing_income: usize,
    pub households_purchasing: usize,
    pub households_never_purchasing: usize,
    pub households_without_profile: usize,
    pub households_retained: usize,
    pub households_missing_covariates: usize,
    pub cells: usize,
    pub purchase_cells: usize,
    /// Indexed by [`Outcome::index`].
    pub outlier_cells: [usize; 5],
}

impl PrepReport {
    pub fn rows(&self) -> Vec<(String, usize)> {
        let mut rows: Vec<(String, usize)> = [
            ("purchase_records", self.purchase_records),
            ("records_outside_window", self.records_outside_window),
            ("product_records", self.product_records),
            ("annual_profile_rows", self.annual_profile_rows),
            ("households_without_pretax_profile", self.households_without_pretax_profile),
            ("households_missing_income", self.households_missing_income),
            ("households_purchasing", self.households_purchasing),
            ("households_never_purchasing", self.households_never_purchasing),
            ("households_without_profile", self.households_without_profile),
            ("households_retained", self.households_retained),
            ("households_missing_covariates", self.households_missing_covariates),
            ("cells", self.cells),
            ("purchase_cells", self.purchase_cells),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        rows.extend(Outcome::ALL.iter().map(|o| (format!("outlier_cells_{o}"), self.outlier_cells[o.index()])));
        rows
    }
}

/// Tukey's fences only look at quarters with a purchase.
fn screened(cell: &PanelCell, value: Option<f64>) -> Option<f64> {
    value.filter(|_| cell.purchased())
}

fn fence_mask(values: &[Option<f64>], cells: &[PanelCell], countries: &[Country], k: f64) -> Result<Vec<bool>> {
    let mut mask = vec![false; values.len()];
    for country in [Country::DK, Country::DE] {
        let idx: Vec<usize> = (0..values.len())
            .filter(|&i| countries[i] == country && screened(&cells[i], values[i]).is_some())
            .collect();
        let vals: Vec<f64> = idx.iter().map(|&i| values[i].expect("screened")).collect();
        for (&i, flag) in idx.iter().zip(tukey_outliers(&vals, k)?) {
            mask[i] = flag;
        }
    }
    Ok(mask)
}

/// Build the product panel from raw purchases and the pre-tax profile table.
///
/// Households that never buy the product, or have no pre-tax profile, are
/// dropped and counted in the report.
pub fn prepare_panel(
    records: &[PurchaseRecord],
    profiles: &ProfileTable,
    product: &str,
    settings: &PrepSettings,
) -> Result<(PreparedPanel, PrepReport)> {
    if !(settings.tukey_k > 0.0) {
        return Err(Error::InvalidConfig(format!("tukey_k must be > 0, got {}", settings.tukey_k)));
    }
    let grid = settings.grid()?;
    let agg = aggregate_quarterly(records, product, &grid)?;
    let mut report = PrepReport {
        product: product.to_string(),
        purchase_records: records.len(),
        records_outside_window: agg.records_outside_window,
        product_records: agg.records_used,
        annual_profile_rows: profiles.annual_rows,
        households_without_pretax_profile: profiles.excluded_no_pretax,
        households_missing_income: profiles.missing_income,
        households_purchasing: agg.household_ids.len(),
        households_never_purchasing: agg.never_purchasers,
        ..PrepReport::default()
    };

    let nq = grid.len();
    let mut households = Vec::new();
    let mut cells = Vec::new();
    for (h, id) in agg.household_ids.iter().enumerate() {
        let Some(profile) = profiles.get(id) else {
            report.households_without_profile += 1;
            continue;
        };
        if profile.country != agg.countries[h] {
            return Err(Error::invalid(format!(
                "household {id} is {} in the purchases but {} in the household file",
                agg.countries[h], profile.country
            )));
        }
        let new_h = households.len();
        households.push(profile.clone());
        cells.extend(agg.cells[h * nq..(h + 1) * nq].iter().map(|c| PanelCell { household: new_h, ..c.clone() }));
    }
    if households.is_empty() {
        return Err(Error::insufficient(format!("product {product} has no purchasing household with a pre-tax profile")));
    }
    report.households_retained = households.len();
    report.households_missing_covariates = households
        .iter()
        .filter(|p| {
            p.head_age_band.is_none()
                || p.n_children_under_15.is_none()
                || p.diary_keeper_gender.is_none()
                || p.isced.is_none()
                || p.income_level.is_none()
                || p.household_size.is_none()
        })
        .count();

    reweight_quarter_days(&mut cells);
    report.cells = cells.len();
    report.purchase_cells = cells.iter().filter(|c| c.purchased()).count();

    let countries: Vec<Country> = cells.iter().map(|c| households[c.household].country).collect();
    let seasons: Vec<usize> = cells.iter().map(|c| c.quarter.season()).collect();
    let mut adjusted = Vec::with_capacity(Outcome::ALL.len());
    let mut masks = Vec::with_capacity(Outcome::ALL.len());
    for outcome in Outcome::ALL {
        let raw: Vec<Option<f64>> = cells.iter().map(|c| c.outcome(outcome)).collect();
        let (adj, mask) = match settings.outlier_order {
            OutlierOrder::BeforeDetrend => {
                let mask = fence_mask(&raw, &cells, &countries, settings.tukey_k)?;
                let kept: Vec<Option<f64>> = raw.iter().zip(&mask).map(|(v, &m)| if m { None } else { *v }).collect();
                let adj = if settings.detrend { seasonal_detrend(&kept, &countries, &seasons)?.residuals } else { kept };
                (adj, mask)
            }
            OutlierOrder::AfterDetrend => {
                let adj = if settings.detrend { seasonal_detrend(&raw, &countries, &seasons)?.residuals } else { raw };
                let mask = fence_mask(&adj, &cells, &countries, settings.tukey_k)?;
                (adj, mask)
            }
        };
        report.outlier_cells[outcome.index()] = mask.iter().filter(|&&m| m).count();
        adjusted.push(adj);
        masks.push(mask);
    }

    let panel = PreparedPanel::from_parts(
        product.to_string(),
        grid,
        households,
        cells,
        adjusted,
        masks,
        settings.detrend,
        settings.fingerprint(product),
    )?;
    Ok((panel, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::profiles::build_profile_table;
    use crate::panel::types::{Gender, HouseholdProfile};
    use chrono::NaiveDate;

    fn profile(id: &str, country: Country) -> HouseholdProfile {
        HouseholdProfile {
            household_id: id.into(),
            country,
            region: "r".into(),
            head_age_band: Some("30-39".into()),
            n_children_under_15: Some(0),
            diary_keeper_gender: Some(Gender::Male),
            isced: Some("3".into()),
            income_midpoint: Some(2000.0),
            income_level: None,
            household_size: Some(2),
            distance_km: None,
            profile_year: 2010,
        }
    }

    fn buy(id: &str, country: Country, y: i32, m: u32, product: &str, weight: f64) -> PurchaseRecord {
        PurchaseRecord {
            household_id: id.into(),
            country,
            date: NaiveDate::from_ymd_opt(y, m, 15).unwrap(),
            product: product.into(),
            weight,
            packages: 1,
            expenditure: weight,
            abroad: false,
        }
    }

    fn fixture() -> (Vec<PurchaseRecord>, ProfileTable) {
        let mut recs = Vec::new();
        for (i, c) in [(0, Country::DK), (1, Country::DK), (2, Country::DE), (3, Country::DE)] {
            for y in 2009..=2014 {
                for m in [2, 5, 8, 11] {
                    recs.push(buy(&format!("h{i}"), c, y, m, "butter", 100.0 + (i * 10 + m as usize) as f64));
                }
            }
        }
        recs.push(buy("h9", Country::DE, 2010, 2, "cheese", 50.0));
        let profiles: Vec<_> = ["h0", "h1"]
            .iter()
            .map(|id| profile(id, Country::DK))
            .chain(["h2", "h3", "h9"].iter().map(|id| profile(id, Country::DE)))
            .collect();
        (recs, build_profile_table(profiles, PRETAX_PROFILE_CUTOFF_YEAR))
    }

    #[test]
    fn never_purchaser_is_counted() {
        let (recs, table) = fixture();
        let (panel, report) = prepare_panel(&recs, &table, "butter", &PrepSettings::default()).unwrap();
        assert_eq!(panel.n_households(), 4);
        assert_eq!(report.households_never_purchasing, 1);
        assert_eq!(report.cells, 4 * 24);
    }

    #[test]
    fn residual_means_vanish() {
        let (recs, table) = fixture();
        let (panel, _) = prepare_panel(&recs, &table, "butter", &PrepSettings::default()).unwrap();
        for o in Outcome::ALL {
            let mut sums = [[0.0; 4]; 2];
            for h in 0..panel.n_households() {
                for qi in 0..panel.n_quarters() {
                    if let Some(v) = panel.adjusted_entry(o, h, qi) {
                        sums[panel.households[h].country.index()][panel.quarters[qi].season()] += v;
                    }
                }
            }
            assert!(sums.iter().flatten().all(|s| s.abs() < 1e-9), "{o}: {sums:?}");
        }
    }

    #[test]
    fn unknown_product_is_empty() {
        let (recs, table) = fixture();
        assert!(matches!(
            prepare_panel(&recs, &table, "bacon", &PrepSettings::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fingerprint_tracks_settings() {
        let a = PrepSettings::default();
        let b = PrepSettings { tukey_k: 1.5, ..a.clone() };
        assert_ne!(a.fingerprint("butter"), b.fingerprint("butter"));
        assert_eq!(a.fingerprint("butter"), PrepSettings::default().fingerprint("butter"));
    }
}
