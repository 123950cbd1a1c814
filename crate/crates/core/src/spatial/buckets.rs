use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::{write_csv_atomic, Country, HouseholdProfile, PreparedPanel};
use crate::quarter::Quarter;

/// Bucket edges for Danish households (km).
pub const DK_EDGES: [f64; 5] = [50.0, 100.0, 150.0, 200.0, 250.0];
/// Bucket edges for German households (km).
pub const DE_EDGES: [f64; 3] = [50.0, 100.0, 150.0];

pub fn default_edges(country: Country) -> &'static [f64] {
    match country {
        Country::DK => &DK_EDGES,
        Country::DE => &DE_EDGES,
    }
}

/// Half-open distance interval `[lo, hi)`; the last bucket has no upper end.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceBucket {
    pub label: String,
    pub lo_km: f64,
    pub hi_km: Option<f64>,
    pub n_households: usize,
    pub fraction: f64,
}

impl DistanceBucket {
    pub fn contains(&self, d: f64) -> bool {
        d >= self.lo_km && self.hi_km.is_none_or(|hi| d < hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketTable {
    pub country: Country,
    pub buckets: Vec<DistanceBucket>,
    /// Households without a distance; not part of the fractions.
    pub missing: usize,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.iter().any(|e| !e.is_finite() || *e <= 0.0) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!("bucket edges must be positive and strictly increasing, got {edges:?}")));
    }
    Ok(())
}

fn fmt_km(v: f64) -> String {
    format!("{v}")
}

/// Empty buckets for `edges`: `<e1 km`, `e1-e2 km`, ..., `>=ek km`.
pub fn make_buckets(edges: &[f64]) -> Result<Vec<DistanceBucket>> {
    check_edges(edges)?;
    let mut out = Vec::with_capacity(edges.len() + 1);
    let mut lo = 0.0;
    for &hi in edges {
        let label = if lo == 0.0 { format!("<{} km", fmt_km(hi)) } else { format!("{}-{} km", fmt_km(lo), fmt_km(hi)) };
        out.push(DistanceBucket { label, lo_km: lo, hi_km: Some(hi), n_households: 0, fraction: 0.0 });
        lo = hi;
    }
    let label = if edges.is_empty() { "all".to_string() } else { format!(">={} km", fmt_km(lo)) };
    out.push(DistanceBucket { label, lo_km: lo, hi_km: None, n_households: 0, fraction: 0.0 });
    Ok(out)
}

/// Count the households of `country` per distance bucket.
pub fn bucket_distances(profiles: &[HouseholdProfile], country: Country, edges: &[f64]) -> Result<BucketTable> {
    let mut buckets = make_buckets(edges)?;
    let mut missing = 0;
    for p in profiles.iter().filter(|p| p.country == country) {
        match p.distance_km {
            Some(d) => {
                if let Some(b) = buckets.iter_mut().find(|b| b.contains(d)) {
                    b.n_households += 1;
                }
            }
            None => missing += 1,
        }
    }
    let total: usize = buckets.iter().map(|b| b.n_households).sum();
    if total > 0 {
        for b in &mut buckets {
            b.fraction = b.n_households as f64 / total as f64;
        }
    }
    Ok(BucketTable { country, buckets, missing })
}

/// One block of rows per `(product, table)`.
pub fn write_distance_buckets(path: &Path, tables: &[(String, BucketTable)]) -> Result<()> {
    let mut rows = Vec::new();
    for (product, t) in tables {
        for b in &t.buckets {
            rows.push(vec![
                product.clone(),
                t.country.to_string(),
                b.label.clone(),
                b.lo_km.to_string(),
                b.hi_km.map(|v| v.to_string()).unwrap_or_default(),
                b.n_households.to_string(),
                b.fraction.to_string(),
            ]);
        }
        rows.push(vec![
            product.clone(),
            t.country.to_string(),
            "missing".into(),
            String::new(),
            String::new(),
            t.missing.to_string(),
            String::new(),
        ]);
    }
    write_csv_atomic(path, &["product", "country", "bucket", "lo_km", "hi_km", "n_households", "fraction"], rows)
}

/// Five-quarter phases around the tax.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Pre,
    Tax,
    Post,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Pre, Phase::Tax, Phase::Post];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Tax => "tax",
            Phase::Post => "post",
        }
    }

    /// Last five pre-tax, the five tax, and the first five post-tax quarters.
    pub fn quarters(self) -> Vec<Quarter> {
        match self {
            Phase::Pre => Quarter::range(Quarter::TAX_START.offset(-5), Quarter::TAX_START.offset(-1)),
            Phase::Tax => Quarter::range(Quarter::TAX_START, Quarter::TAX_END),
            Phase::Post => Quarter::range(Quarter::TAX_END.offset(1), Quarter::TAX_END.offset(5)),
        }
    }
}

/// Mean share bought abroad per bucket and phase.
#[derive(Clone, Debug, PartialEq)]
pub struct ShareAbroadRow {
    pub country: Country,
    pub bucket: String,
    /// Indexed like [`Phase::ALL`]; `None` for an empty bucket-phase.
    pub means: [Option<f64>; 3],
    pub cells: [usize; 3],
}

/// Mean of household-quarter shares bought abroad within each distance
/// bucket and phase. Cells without purchases have no share and are skipped.
pub fn share_abroad_series(panel: &PreparedPanel, country: Country, edges: &[f64]) -> Result<Vec<ShareAbroadRow>> {
    let buckets = make_buckets(edges)?;
    let phase_idx: Vec<Option<usize>> = panel
        .quarters
        .iter()
        .map(|q| Phase::ALL.iter().position(|ph| ph.quarters().contains(q)))
        .collect();
    let mut sums = vec![[0.0f64; 3]; buckets.len()];
    let mut counts = vec![[0usize; 3]; buckets.len()];
    for (h, p) in panel.households.iter().enumerate() {
        if p.country != country {
            continue;
        }
        let Some(b) = p.distance_km.and_then(|d| buckets.iter().position(|b| b.contains(d))) else { continue };
        for (qi, ph) in phase_idx.iter().enumerate() {
            let (Some(ph), Some(s)) = (ph, panel.cell(h, qi).share_abroad) else { continue };
            sums[b][*ph] += s;
            counts[b][*ph] += 1;
        }
    }
    Ok(buckets
        .iter()
        .enumerate()
        .map(|(b, bucket)| ShareAbroadRow {
            country,
            bucket: bucket.label.clone(),
            means: std::array::from_fn(|k| (counts[b][k] > 0).then(|| sums[b][k] / counts[b][k] as f64)),
            cells: counts[b],
        })
        .collect())
}

/// Bucket × phase matrix, one row per `(product, row)`.
pub fn write_share_abroad(path: &Path, rows: &[(String, ShareAbroadRow)]) -> Result<()> {
    let body = rows.iter().map(|(product, r)| {
        let mut v = vec![product.clone(), r.country.to_string(), r.bucket.clone()];
        v.extend(r.means.iter().map(|m| m.map(|x| x.to_string()).unwrap_or_default()));
        v.extend(r.cells.iter().map(|c| c.to_string()));
        v
    });
    write_csv_atomic(path, &["product", "country", "bucket", "pre", "tax", "post", "n_pre", "n_tax", "n_post"], body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hh(id: &str, d: Option<f64>) -> HouseholdProfile {
        HouseholdProfile {
            household_id: id.into(),
            country: Country::DK,
            region: String::new(),
            head_age_band: None,
            n_children_under_15: None,
            diary_keeper_gender: None,
            isced: None,
            income_midpoint: None,
            income_level: None,
            household_size: None,
            distance_km: d,
            profile_year: 2010,
        }
    }

    #[test]
    fn two_households_and_the_edge() {
        let t = bucket_distances(&[hh("a", Some(40.0)), hh("b", Some(60.0))], Country::DK, &DK_EDGES).unwrap();
        assert_eq!(t.buckets[0].label, "<50 km");
        assert_eq!(t.buckets[0].fraction, 0.5);
        let t = bucket_distances(&[hh("a", Some(50.0)), hh("b", None)], Country::DK, &DK_EDGES).unwrap();
        assert_eq!(t.buckets[1].label, "50-100 km");
        assert_eq!(t.buckets[1].n_households, 1);
        assert_eq!(t.missing, 1);
        assert_eq!(t.buckets.last().unwrap().label, ">=250 km");
    }

    #[test]
    fn bad_edges_rejected() {
        assert!(make_buckets(&[50.0, 50.0]).is_err());
        assert!(make_buckets(&[-1.0]).is_err());
    }

    #[test]
    fn phases_have_five_quarters() {
        for ph in Phase::ALL {
            assert_eq!(ph.quarters().len(), 5);
        }
        assert_eq!(Phase::Pre.quarters()[0], Quarter::new(2010, 3).unwrap());
        assert_eq!(Phase::Post.quarters()[4], Quarter::new(2014, 1).unwrap());
    }
}
