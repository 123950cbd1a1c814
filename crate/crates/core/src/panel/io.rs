use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::prepare::PrepReport;
use super::types::{Country, Gender, HouseholdProfile, IncomeLevel, Outcome, PanelCell, PreparedPanel, PurchaseRecord};
use crate::error::{Error, Result};
use crate::quarter::Quarter;

pub const PURCHASE_COLUMNS: [&str; 8] =
    ["household_id", "country", "date", "product", "weight", "packages", "expenditure_cents", "abroad"];

pub const HOUSEHOLD_COLUMNS: [&str; 11] = [
    "household_id",
    "country",
    "region",
    "head_age_band",
    "children_u15",
    "gender",
    "isced",
    "income_midpoint",
    "household_size",
    "distance_km",
    "profile_year",
];

const RAW_COLUMNS: [&str; 6] = ["weight", "amount", "expenditure", "price_per_100", "avg_package_size", "share_abroad"];

/// Write through a sibling temp file and rename, so readers never see a
/// half-written file.
pub(crate) fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let tmp = {
        let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".tmp");
        path.with_file_name(name)
    };
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Write a header and string rows to `path` atomically.
pub fn write_csv_atomic<R, I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for row in rows {
            csv.write_record(row)?;
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}

/// Write `text` to `path` atomically.
pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e)))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// A CSV reader that knows where each required column lives and reports
/// schema problems with line numbers.
struct Table {
    path: PathBuf,
    reader: csv::Reader<File>,
    index: HashMap<String, usize>,
}

struct Row<'a> {
    table: &'a Table,
    record: csv::StringRecord,
    line: u64,
}

impl Table {
    fn open(path: &Path, required: &[&str]) -> Result<Table> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers().map_err(|e| schema(path, 1, e.to_string()))?.clone();
        let index: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        let missing: Vec<&str> = required.iter().copied().filter(|c| !index.contains_key(*c)).collect();
        if !missing.is_empty() {
            return Err(schema(path, 1, format!("missing column(s): {}", missing.join(", "))));
        }
        Ok(Table { path: path.to_path_buf(), reader, index })
    }

    fn rows(&mut self) -> Result<Vec<Row<'_>>> {
        let mut out = Vec::new();
        let mut records = Vec::new();
        for rec in self.reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                schema(&self.path, line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            records.push((rec, line));
        }
        for (record, line) in records {
            out.push(Row { table: self, record, line });
        }
        Ok(out)
    }
}

impl Row<'_> {
    fn raw(&self, column: &str) -> &str {
        self.table.index.get(column).and_then(|&i| self.record.get(i)).unwrap_or("")
    }

    fn err(&self, message: String) -> Error {
        schema(&self.table.path, self.line, message)
    }

    fn text(&self, column: &str) -> Result<String> {
        let v = self.raw(column);
        if v.is_empty() {
            return Err(self.err(format!("column {column} is empty")));
        }
        Ok(v.to_string())
    }

    fn opt_text(&self, column: &str) -> Option<String> {
        let v = self.raw(column);
        (!v.is_empty()).then(|| v.to_string())
    }

    fn parse<T: FromStr>(&self, column: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.opt_parse(column)?.ok_or_else(|| self.err(format!("column {column} is empty")))
    }

    fn opt_parse<T: FromStr>(&self, column: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(column);
        if v.is_empty() {
            return Ok(None);
        }
        v.parse::<T>().map(Some).map_err(|e| self.err(format!("column {column}: cannot parse {v:?}: {e}")))
    }

    fn finite(&self, column: &str) -> Result<Option<f64>> {
        match self.opt_parse::<f64>(column)? {
            Some(x) if !x.is_finite() => Err(self.err(format!("column {column}: non-finite value"))),
            other => Ok(other),
        }
    }

    fn flag(&self, column: &str) -> Result<bool> {
        match self.raw(column) {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(self.err(format!("column {column} must be 0 or 1, got {other:?}"))),
        }
    }
}

fn schema(path: &Path, line: u64, message: String) -> Error {
    Error::Schema { path: path.to_path_buf(), line, message }
}

pub fn read_purchases(path: &Path) -> Result<Vec<PurchaseRecord>> {
    let mut table = Table::open(path, &PURCHASE_COLUMNS)?;
    let rows = table.rows()?;
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let date_text = row.text("date")?;
        let date = NaiveDate::parse_from_str(&date_text, "%Y-%m-%d")
            .map_err(|e| row.err(format!("column date: {date_text:?} is not an ISO-8601 date: {e}")))?;
        let rec = PurchaseRecord {
            household_id: row.text("household_id")?,
            country: row.parse("country")?,
            date,
            product: row.text("product")?,
            weight: row.finite("weight")?.ok_or_else(|| row.err("column weight is empty".into()))?,
            packages: row.parse("packages")?,
            expenditure: row.finite("expenditure_cents")?.ok_or_else(|| row.err("column expenditure_cents is empty".into()))?,
            abroad: row.flag("abroad")?,
        };
        rec.validate().map_err(|e| row.err(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_purchases(path: &Path, records: &[PurchaseRecord]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(PURCHASE_COLUMNS)?;
        for r in records {
            csv.write_record([
                r.household_id.clone(),
                r.country.to_string(),
                r.date.format("%Y-%m-%d").to_string(),
                r.product.clone(),
                r.weight.to_string(),
                r.packages.to_string(),
                r.expenditure.to_string(),
                if r.abroad { "1" } else { "0" }.to_string(),
            ])?;
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}

fn parse_profile(row: &Row<'_>) -> Result<HouseholdProfile> {
    let income_midpoint: Option<f64> = row.finite("income_midpoint")?;
    if income_midpoint.is_some_and(|v| v <= 0.0) {
        return Err(row.err("column income_midpoint must be > 0".into()));
    }
    let distance_km: Option<f64> = row.finite("distance_km")?;
    if distance_km.is_some_and(|v| v < 0.0) {
        return Err(row.err("column distance_km must be >= 0".into()));
    }
    let gender = match row.opt_text("gender") {
        Some(g) => Some(Gender::from_str(&g).map_err(|e| row.err(e.to_string()))?),
        None => None,
    };
    Ok(HouseholdProfile {
        household_id: row.text("household_id")?,
        country: row.parse("country")?,
        region: row.opt_text("region").unwrap_or_default(),
        head_age_band: row.opt_text("head_age_band"),
        n_children_under_15: row.opt_parse("children_u15")?,
        diary_keeper_gender: gender,
        isced: row.opt_text("isced"),
        income_midpoint,
        income_level: None,
        household_size: row.opt_parse("household_size")?,
        distance_km,
        profile_year: row.parse("profile_year")?,
    })
}

fn profile_fields(p: &HouseholdProfile) -> Vec<String> {
    vec![
        p.household_id.clone(),
        p.country.to_string(),
        p.region.clone(),
        p.head_age_band.clone().unwrap_or_default(),
        opt(p.n_children_under_15),
        p.diary_keeper_gender.map(|g| g.as_str().to_string()).unwrap_or_default(),
        p.isced.clone().unwrap_or_default(),
        opt(p.income_midpoint),
        opt(p.household_size),
        opt(p.distance_km),
        p.profile_year.to_string(),
    ]
}

/// Annual household questionnaires (possibly several rows per household).
pub fn read_households(path: &Path) -> Result<Vec<HouseholdProfile>> {
    let mut table = Table::open(path, &HOUSEHOLD_COLUMNS)?;
    let rows = table.rows()?;
    rows.iter().map(parse_profile).collect()
}

pub fn write_households(path: &Path, profiles: &[HouseholdProfile]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(HOUSEHOLD_COLUMNS)?;
        for p in profiles {
            csv.write_record(profile_fields(p))?;
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}

/// Retained pre-tax profiles: the household columns plus `income_level`.
pub fn read_profiles(path: &Path) -> Result<Vec<HouseholdProfile>> {
    let mut required = HOUSEHOLD_COLUMNS.to_vec();
    required.push("income_level");
    let mut table = Table::open(path, &required)?;
    let rows = table.rows()?;
    rows.iter()
        .map(|row| {
            let mut p = parse_profile(row)?;
            p.income_level = match row.opt_text("income_level") {
                Some(l) => Some(IncomeLevel::from_str(&l).map_err(|e| row.err(e.to_string()))?),
                None => None,
            };
            Ok(p)
        })
        .collect()
}

pub fn write_profiles(path: &Path, profiles: &[HouseholdProfile]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = HOUSEHOLD_COLUMNS.to_vec();
        header.push("income_level");
        csv.write_record(header)?;
        for p in profiles {
            let mut fields = profile_fields(p);
            fields.push(p.income_level.map(|l| l.as_str().to_string()).unwrap_or_default());
            csv.write_record(fields)?;
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}

fn panel_header() -> Vec<String> {
    let mut h: Vec<String> = ["household_id", "country", "quarter"].iter().map(|s| s.to_string()).collect();
    h.extend(RAW_COLUMNS.iter().map(|s| s.to_string()));
    h.extend(Outcome::ALL.iter().map(|o| format!("{o}_adj")));
    h.extend(Outcome::ALL.iter().map(|o| format!("outlier_{o}")));
    h
}

/// Metadata stored next to the panel files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PanelMeta {
    product: String,
    detrended: bool,
    config_fingerprint: String,
}

fn meta_path(dir: &Path, product: &str) -> PathBuf {
    dir.join(format!("panel_{product}.toml"))
}

/// Write `panel_<product>.csv` (one row per household-quarter) and its
/// metadata file into `dir`.
pub fn write_panel(dir: &Path, panel: &PreparedPanel) -> Result<PathBuf> {
    let path = dir.join(format!("panel_{}.csv", panel.product));
    write_atomic(&path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(panel_header())?;
        for h in 0..panel.n_households() {
            let profile = &panel.households[h];
            for qi in 0..panel.n_quarters() {
                let c = panel.cell(h, qi);
                let mut fields = vec![profile.household_id.clone(), profile.country.to_string(), c.quarter.to_string()];
                fields.extend([
                    c.weight.to_string(),
                    c.amount.to_string(),
                    c.expenditure.to_string(),
                    opt(c.price_per_100),
                    opt(c.avg_package_size),
                    opt(c.share_abroad),
                ]);
                fields.extend(Outcome::ALL.iter().map(|&o| opt(panel.adjusted_entry(o, h, qi))));
                fields.extend(Outcome::ALL.iter().map(|&o| if panel.is_outlier(o, h, qi) { "1" } else { "0" }.to_string()));
                csv.write_record(fields)?;
            }
        }
        csv.flush().map_err(|e| Error::io(&path, e))
    })?;
    let meta = PanelMeta {
        product: panel.product.clone(),
        detrended: panel.detrended,
        config_fingerprint: panel.config_fingerprint.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::invalid(e.to_string()))?;
    let mp = meta_path(dir, &panel.product);
    write_atomic(&mp, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(&mp, e)))?;
    Ok(path)
}

/// Load a prepared panel written by [`write_panel`], taking household
/// profiles from `profiles.csv` in the same directory.
pub fn read_panel(dir: &Path, product: &str) -> Result<PreparedPanel> {
    let path = dir.join(format!("panel_{product}.csv"));
    let header = panel_header();
    let required: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::open(&path, &required)?;
    let rows = table.rows()?;

    let mut ids: Vec<String> = Vec::new();
    let mut row_countries: Vec<Option<Country>> = Vec::new();
    let mut quarters: Vec<Quarter> = Vec::new();
    let mut cells = Vec::with_capacity(rows.len());
    let mut adjusted = vec![Vec::with_capacity(rows.len()); Outcome::ALL.len()];
    let mut masks = vec![Vec::with_capacity(rows.len()); Outcome::ALL.len()];
    for row in &rows {
        let id = row.text("household_id")?;
        let quarter: Quarter = row.parse("quarter")?;
        if ids.last() != Some(&id) {
            if ids.contains(&id) {
                return Err(row.err(format!("household {id} rows are not contiguous")));
            }
            ids.push(id);
            row_countries.push(Some(row.parse("country")?));
        }
        let h = ids.len() - 1;
        if h == 0 {
            quarters.push(quarter);
        }
        let mut cell = PanelCell::empty(h, quarter);
        let num = |c: &str| -> Result<f64> { row.finite(c)?.ok_or_else(|| row.err(format!("column {c} is empty"))) };
        cell.weight = num("weight")?;
        cell.amount = num("amount")?;
        cell.expenditure = num("expenditure")?;
        cell.price_per_100 = row.finite("price_per_100")?;
        cell.avg_package_size = row.finite("avg_package_size")?;
        cell.share_abroad = row.finite("share_abroad")?;
        for o in Outcome::ALL {
            adjusted[o.index()].push(row.finite(&format!("{o}_adj"))?);
            masks[o.index()].push(row.flag(&format!("outlier_{o}"))?);
        }
        cells.push(cell);
    }
    if quarters.windows(2).any(|w| w[1] != w[0].next()) {
        return Err(schema(&path, 2, "quarters of the first household are not consecutive".into()));
    }

    let profiles_path = dir.join("profiles.csv");
    let mut by_id: HashMap<String, HouseholdProfile> =
        read_profiles(&profiles_path)?.into_iter().map(|p| (p.household_id.clone(), p)).collect();
    let mut households = Vec::with_capacity(ids.len());
    for id in &ids {
        let p = by_id
            .remove(id)
            .ok_or_else(|| Error::invalid(format!("household {id} of {} has no row in {}", path.display(), profiles_path.display())))?;
        households.push(p);
    }

    let mp = meta_path(dir, product);
    let meta = match std::fs::read_to_string(&mp) {
        Ok(text) => toml::from_str::<PanelMeta>(&text).map_err(|e| schema(&mp, 0, e.to_string()))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            PanelMeta { product: product.to_string(), detrended: true, config_fingerprint: String::new() }
        }
        Err(e) => return Err(Error::io(&mp, e)),
    };
    for (h, c) in row_countries.iter().enumerate() {
        if let Some(c) = c {
            if *c != households[h].country {
                return Err(Error::invalid(format!(
                    "household {} is {} in {} but {} in the profiles",
                    households[h].household_id,
                    c,
                    path.display(),
                    households[h].country
                )));
            }
        }
    }
    PreparedPanel::from_parts(
        product.to_string(),
        quarters,
        households,
        cells,
        adjusted,
        masks,
        meta.detrended,
        meta.config_fingerprint,
    )
}

/// `product,stage,count` rows, one block per product.
pub fn write_prep_report(path: &Path, reports: &[PrepReport]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["product", "stage", "count"])?;
        for r in reports {
            for (stage, count) in r.rows() {
                csv.write_record([r.product.clone(), stage, count.to_string()])?;
            }
        }
        csv.flush().map_err(|e| Error::io(path, e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("purchases.csv");
        fs::write(&p, "household_id,country,date,product,weight,packages,expenditure_cents\nh1,DK,2010-01-02,butter,1,1,1\n").unwrap();
        match read_purchases(&p) {
            Err(Error::Schema { line, message, .. }) => {
                assert_eq!(line, 1);
                assert!(message.contains("abroad"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("purchases.csv");
        let body = format!(
            "{}\nh1,DK,2010-01-02,butter,1,1,1,0\nh1,DK,2010-13-02,butter,1,1,1,0\n",
            PURCHASE_COLUMNS.join(",")
        );
        fs::write(&p, body).unwrap();
        assert!(matches!(read_purchases(&p), Err(Error::Schema { line: 3, .. })));
    }

    #[test]
    fn purchases_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("purchases.csv");
        let recs = vec![PurchaseRecord {
            household_id: "h1".into(),
            country: Country::DE,
            date: NaiveDate::from_ymd_opt(2012, 3, 4).unwrap(),
            product: "butter".into(),
            weight: 250.5,
            packages: 1,
            expenditure: 0.1 + 0.2,
            abroad: true,
        }];
        write_purchases(&p, &recs).unwrap();
        assert_eq!(read_purchases(&p).unwrap(), recs);
    }

    #[test]
    fn households_allow_empty_optional_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("households.csv");
        let body = format!("{}\nh1,DE,Hamburg,30-39,,female,3,,2,,2010\n", HOUSEHOLD_COLUMNS.join(","));
        fs::write(&p, body).unwrap();
        let hs = read_households(&p).unwrap();
        assert_eq!(hs[0].n_children_under_15, None);
        assert_eq!(hs[0].distance_km, None);
        assert_eq!(hs[0].diary_keeper_gender, Some(Gender::Female));
        write_households(&p, &hs).unwrap();
        assert_eq!(read_households(&p).unwrap(), hs);
    }
}
