use std::collections::BTreeMap;

use super::types::{Country, PanelCell, PurchaseRecord};
use crate::error::{Error, Result};
use crate::quarter::{Quarter, STANDARD_QUARTER_DAYS};

/// Household-quarter sums for one product over a quarter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct QuarterlyAggregate {
    pub quarters: Vec<Quarter>,
    /// Sorted household ids; cell `household` fields index into this.
    pub household_ids: Vec<String>,
    pub countries: Vec<Country>,
    /// Household-major, one cell per grid quarter.
    pub cells: Vec<PanelCell>,
    pub records_used: usize,
    pub records_outside_window: usize,
    /// Households seen in the records that never bought this product.
    pub never_purchasers: usize,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    weight: f64,
    packages: f64,
    expenditure: f64,
    abroad_weight: f64,
}

/// Sum weight, packages and expenditure per household and quarter.
///
/// Households without any positive-weight purchase of `product` inside the
/// grid are dropped. Records outside the grid are skipped and counted.
pub fn aggregate_quarterly(records: &[PurchaseRecord], product: &str, quarters: &[Quarter]) -> Result<QuarterlyAggregate> {
    let (first, last) = match (quarters.first(), quarters.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::invalid("empty quarter grid")),
    };
    let mut seen: BTreeMap<&str, Country> = BTreeMap::new();
    let mut sums: BTreeMap<&str, Vec<Sums>> = BTreeMap::new();
    let mut used = 0;
    let mut outside = 0;
    for r in records {
        r.validate().map_err(|e| Error::invalid(format!("household {}: {e}", r.household_id)))?;
        let q = Quarter::from_date(r.date);
        if q < first || q > last {
            outside += 1;
            continue;
        }
        seen.entry(r.household_id.as_str()).or_insert(r.country);
        if r.product != product {
            continue;
        }
        used += 1;
        let per_q = sums.entry(r.household_id.as_str()).or_insert_with(|| vec![Sums::default(); quarters.len()]);
        let s = &mut per_q[q.since(first) as usize];
        s.weight += r.weight;
        s.packages += r.packages as f64;
        s.expenditure += r.expenditure;
        if r.abroad {
            s.abroad_weight += r.weight;
        }
    }

    let mut household_ids = Vec::new();
    let mut countries = Vec::new();
    let mut cells = Vec::new();
    for (id, per_q) in &sums {
        if !per_q.iter().any(|s| s.weight > 0.0) {
            continue;
        }
        let h = household_ids.len();
        household_ids.push((*id).to_string());
        countries.push(seen[id]);
        for (qi, s) in per_q.iter().enumerate() {
            let mut cell = PanelCell::empty(h, quarters[qi]);
            cell.weight = s.weight;
            cell.amount = s.packages;
            cell.expenditure = s.expenditure;
            if s.weight > 0.0 {
                cell.price_per_100 = Some(100.0 * s.expenditure / s.weight);
                cell.share_abroad = Some(s.abroad_weight / s.weight);
            }
            if s.packages > 0.0 {
                cell.avg_package_size = Some(s.weight / s.packages);
            }
            cells.push(cell);
        }
    }
    let never_purchasers = seen.len() - household_ids.len();
    Ok(QuarterlyAggregate {
        quarters: quarters.to_vec(),
        household_ids,
        countries,
        cells,
        records_used: used,
        records_outside_window: outside,
        never_purchasers,
    })
}

/// Rescale quantity and spend to a standard quarter of 365.25 / 4 days.
/// Ratio outcomes are left untouched.
pub fn reweight_quarter_days(cells: &mut [PanelCell]) {
    for cell in cells {
        let factor = STANDARD_QUARTER_DAYS / cell.quarter.days() as f64;
        cell.weight *= factor;
        cell.amount *= factor;
        cell.expenditure *= factor;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;

    fn rec(id: &str, date: (i32, u32, u32), product: &str, weight: f64, packages: u32, spend: f64, abroad: bool) -> PurchaseRecord {
        PurchaseRecord {
            household_id: id.into(),
            country: Country::DK,
            date: NaiveDate::from_ymd_opt(date.0, date.1, date.2).unwrap(),
            product: product.into(),
            weight,
            packages,
            expenditure: spend,
            abroad,
        }
    }

    #[test]
    fn single_record_arithmetic() {
        let grid = Quarter::study_grid();
        let agg = aggregate_quarterly(&[rec("a", (2010, 5, 3), "butter", 500.0, 2, 300.0, false)], "butter", &grid).unwrap();
        let qi = Quarter::new(2010, 2).unwrap().since(grid[0]) as usize;
        let c = &agg.cells[qi];
        assert_eq!((c.weight, c.amount, c.expenditure), (500.0, 2.0, 300.0));
        assert_eq!(c.price_per_100, Some(60.0));
        assert_eq!(c.avg_package_size, Some(250.0));
        assert_eq!(c.share_abroad, Some(0.0));
        assert_eq!(agg.cells.iter().filter(|c| c.purchased()).count(), 1);
        assert!(agg.cells[0].price_per_100.is_none());
    }

    #[test]
    fn abroad_share_and_price() {
        let grid = Quarter::study_grid();
        let recs = [
            rec("a", (2012, 1, 10), "butter", 200.0, 1, 100.0, false),
            rec("a", (2012, 2, 10), "butter", 300.0, 1, 150.0, true),
        ];
        let agg = aggregate_quarterly(&recs, "butter", &grid).unwrap();
        let c = agg.cells.iter().find(|c| c.purchased()).unwrap();
        assert_eq!(c.weight, 500.0);
        assert_eq!(c.expenditure, 250.0);
        assert_eq!(c.price_per_100, Some(50.0));
        assert_abs_diff_eq!(c.share_abroad.unwrap(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn never_purchasers_are_dropped_and_window_enforced() {
        let grid = Quarter::study_grid();
        let recs = [
            rec("a", (2010, 1, 10), "butter", 100.0, 1, 50.0, false),
            rec("b", (2010, 1, 10), "cheese", 100.0, 1, 50.0, false),
            rec("c", (2016, 1, 10), "butter", 100.0, 1, 50.0, false),
        ];
        let agg = aggregate_quarterly(&recs, "butter", &grid).unwrap();
        assert_eq!(agg.household_ids, vec!["a".to_string()]);
        assert_eq!(agg.never_purchasers, 1);
        assert_eq!(agg.records_outside_window, 1);
        assert_eq!(agg.cells.len(), 24);
    }

    #[test]
    fn negative_fields_are_rejected() {
        let grid = Quarter::study_grid();
        let bad = rec("a", (2010, 1, 10), "butter", -1.0, 0, 5.0, false);
        assert!(matches!(aggregate_quarterly(&[bad], "butter", &grid), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn day_reweighting() {
        let q1 = Quarter::new(2009, 1).unwrap();
        let q3 = Quarter::new(2009, 3).unwrap();
        let mut cells = vec![PanelCell::empty(0, q1), PanelCell::empty(0, q3)];
        cells[0].weight = 90.0;
        cells[0].price_per_100 = Some(12.5);
        cells[1].expenditure = 92.0;
        reweight_quarter_days(&mut cells);
        assert_abs_diff_eq!(cells[0].weight, 91.3125, epsilon = 1e-12);
        assert_abs_diff_eq!(cells[1].expenditure, 91.3125, epsilon = 1e-12);
        assert_eq!(cells[0].price_per_100, Some(12.5));
    }
}
