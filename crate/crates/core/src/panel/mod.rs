//! Preparation of the quarterly household panel.
//!
//! Raw purchase diaries are aggregated to household-quarter cells for one
//! product, rescaled to a common quarter length, screened for outliers with
//! Tukey's fences and seasonally adjusted per country. Household profiles
//! are reduced to the most recent pre-tax observation and income bands are
//! mapped onto country-specific quintiles.
//!
//! The pipeline order is fixed: aggregate, reweight, outlier mask, seasonal
//! adjustment (the mask can be moved after the adjustment with
//! [`OutlierOrder::AfterDetrend`]).

mod aggregate;
mod clean;
mod encode;
mod io;
mod prepare;
mod profiles;
mod types;

pub use aggregate::{aggregate_quarterly, reweight_quarter_days, QuarterlyAggregate};
pub use clean::{seasonal_detrend, tukey_outliers, DetrendResult};
pub use encode::{encode_covariates, Covariate, CovariateEncoder, CovariateVector};
pub use io::{
    read_households, read_panel, read_profiles, read_purchases, write_csv_atomic, write_households, write_panel, write_prep_report,
    write_profiles, write_purchases, write_text_atomic, HOUSEHOLD_COLUMNS, PURCHASE_COLUMNS,
};
pub use prepare::{prepare_panel, OutlierOrder, PrepReport, PrepSettings};
pub use profiles::{build_profile_table, income_quintiles, select_pretax_profile, ProfileTable, PRETAX_PROFILE_CUTOFF_YEAR};
pub use types::{Country, Gender, HouseholdProfile, IncomeLevel, Outcome, PanelCell, PreparedPanel, PurchaseRecord};

/// DKK per EUR used to convert Danish expenditure to Euro cents.
pub const DKK_PER_EUR: f64 = 7.4405;
