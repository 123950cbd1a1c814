use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;

use crate::drdid::{estimate_on, EstimationSpec, EventStudyResult, Sample};
use crate::error::{Error, Result};
use crate::panel::{write_csv_atomic, Country, HouseholdProfile, PreparedPanel};

/// Regions with fewer treated households are estimated but flagged.
pub const LOW_N_HOUSEHOLDS: usize = 30;
/// Default ATN border threshold (km).
pub const ATN_BORDER_KM: f64 = 50.0;
const SIGNIFICANCE: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct RegionalAtt {
    pub region: String,
    pub n_treated: usize,
    pub low_n: bool,
    /// Event study against the full German control; `Err` text when the
    /// region could not be estimated.
    pub result: std::result::Result<EventStudyResult, String>,
}

impl RegionalAtt {
    /// `(estimate, se, p)` of the first window of the spec.
    pub fn headline(&self) -> Option<(f64, f64, f64)> {
        let r = self.result.as_ref().ok()?;
        let w = r.windows.first()?;
        Some((w.estimate, w.se, w.p_value))
    }
}

/// Re-estimate with the Danish households of each region as the treated arm
/// and every German household as control. `region_of` maps a Danish
/// household to its region.
pub fn regional_att_by(
    panel: &PreparedPanel,
    spec: &EstimationSpec,
    region_of: impl Fn(&HouseholdProfile) -> String + Sync,
) -> Result<Vec<RegionalAtt>> {
    spec.validate()?;
    let base = Sample::countries(panel);
    let regions: BTreeSet<String> =
        panel.households.iter().filter(|p| p.country == Country::DK).map(&region_of).collect();
    if regions.is_empty() {
        return Err(Error::insufficient("no Danish households to partition into regions"));
    }
    let regions: Vec<String> = regions.into_iter().collect();
    Ok(regions
        .par_iter()
        .map(|region| {
            let sample = base.filter(|h| {
                let p = &panel.households[h];
                p.country == Country::DE || region_of(p) == *region
            });
            let n_treated = sample.n_treated();
            if n_treated < LOW_N_HOUSEHOLDS {
                log::warn!("region {region} has only {n_treated} treated households");
            }
            RegionalAtt {
                region: region.clone(),
                n_treated,
                low_n: n_treated < LOW_N_HOUSEHOLDS,
                result: estimate_on(panel, spec, &sample).map_err(|e| e.to_string()),
            }
        })
        .collect())
}

/// [`regional_att_by`] over the region column of the household profiles.
pub fn regional_att(panel: &PreparedPanel, spec: &EstimationSpec) -> Result<Vec<RegionalAtt>> {
    regional_att_by(panel, spec, |p| p.region.clone())
}

/// `product,region,att,se,p,significant,n_treated,low_n`; failed regions
/// have empty estimates.
pub fn write_regional_att(path: &Path, rows: &[(String, RegionalAtt)]) -> Result<()> {
    let body = rows.iter().map(|(product, r)| {
        let (att, se, p, sig) = match r.headline() {
            Some((a, s, p)) => (a.to_string(), s.to_string(), p.to_string(), u8::from(p < SIGNIFICANCE).to_string()),
            None => Default::default(),
        };
        vec![product.clone(), r.region.clone(), att, se, p, sig, r.n_treated.to_string(), u8::from(r.low_n).to_string()]
    });
    write_csv_atomic(path, &["product", "region", "att", "se", "p", "significant", "n_treated", "low_n"], body)
}

/// Spillover estimate on German households near the border.
#[derive(Clone, Debug)]
pub struct AtnResult {
    pub product: String,
    pub threshold_km: f64,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub n_border: usize,
    pub n_far: usize,
    pub result: EventStudyResult,
}

/// Doubly robust DID with German households closer than `threshold_km` as the
/// treated arm and the remaining Germans as controls. The headline is the
/// first window of `spec` (the tax window by default).
pub fn atn_estimate(panel: &PreparedPanel, threshold_km: f64, spec: &EstimationSpec) -> Result<AtnResult> {
    if !(threshold_km > 0.0) {
        return Err(Error::invalid(format!("border threshold must be > 0 km, got {threshold_km}")));
    }
    let mut members = Vec::new();
    let mut treated = Vec::new();
    for (h, p) in panel.households.iter().enumerate() {
        if p.country != Country::DE {
            continue;
        }
        if let Some(d) = p.distance_km {
            members.push(h);
            treated.push(d < threshold_km);
        }
    }
    let sample = Sample { members, treated };
    let (n_border, n_far) = (sample.n_treated(), sample.n_control());
    if n_border == 0 || n_far == 0 {
        return Err(Error::insufficient(format!(
            "spillover needs German households on both sides of {threshold_km} km ({n_border} near, {n_far} far)"
        )));
    }
    let result = estimate_on(panel, spec, &sample)?;
    let w = result.windows.first().ok_or_else(|| Error::InvalidConfig("spillover needs at least one window".into()))?;
    let (estimate, se, p_value) = (w.estimate, w.se, w.p_value);
    Ok(AtnResult { product: panel.product.clone(), threshold_km, estimate, se, p_value, n_border, n_far, result })
}

/// `product,atn,se,p` with three decimals, e.g. `butter,0.173,0.799,0.557`.
pub fn atn_row(r: &AtnResult) -> [String; 4] {
    [r.product.clone(), format!("{:.3}", r.estimate), format!("{:.3}", r.se), format!("{:.3}", r.p_value)]
}

pub fn write_atn(path: &Path, rows: &[AtnResult]) -> Result<()> {
    write_csv_atomic(path, &["product", "atn", "se", "p"], rows.iter().map(atn_row))
}
