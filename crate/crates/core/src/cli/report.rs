use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::commands::{ATT_HEADER, SUMMARY_FILE};
use super::{Failure, EXIT_NOTHING_TO_REPORT};
use crate::error::Error;
use crate::panel::{write_csv_atomic, Outcome};
use crate::quarter::Quarter;

/// One labelled row of the text summary, rendered per product.
type Cell<'a> = Box<dyn Fn(&str) -> String + 'a>;

const REPORT_HEADER: [&str; 11] =
    ["product", "outcome", "group", "quarter", "phase", "estimate", "se", "ci_lo", "ci_hi", "band_lo", "band_hi"];

/// `(product, outcome, group)` from `att_<product>_<outcome>[_income_<group>].csv`.
fn parse_att_name(name: &str) -> Option<(String, Outcome, String)> {
    let stem = name.strip_prefix("att_")?.strip_suffix(".csv")?;
    let (stem, group) = match stem.rsplit_once("_income_") {
        Some((s, g)) if ["low", "medium", "high"].contains(&g) => (s, format!("income:{g}")),
        _ => (stem, "all".to_string()),
    };
    let outcome = Outcome::ALL
        .into_iter()
        .filter(|o| stem.ends_with(&format!("_{}", o.as_str())))
        .max_by_key(|o| o.as_str().len())?;
    let product = stem.strip_suffix(outcome.as_str())?.strip_suffix('_')?;
    (!product.is_empty()).then(|| (product.to_string(), outcome, group))
}

fn phase(q: Quarter) -> &'static str {
    if q.is_pre_tax() {
        "pre"
    } else if q.is_tax() {
        "tax"
    } else {
        "post"
    }
}

fn read_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::from)?;
    let header: Vec<String> = reader.headers().map_err(Error::from)?.iter().map(str::to_string).collect();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(Error::from)?;
        out.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok(out)
}

fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Table with one column per product and the rows of the main results
/// table, for every outcome and window found in the summary.
fn text_summary(rows: &[BTreeMap<String, String>]) -> String {
    let get = |r: &BTreeMap<String, String>, k: &str| r.get(k).cloned().unwrap_or_default();
    let mut values: BTreeMap<(String, String, String, String), f64> = BTreeMap::new();
    let mut products: Vec<String> = Vec::new();
    let mut panels: Vec<(String, String)> = Vec::new();
    for r in rows {
        let (p, o, b, s) = (get(r, "product"), get(r, "outcome"), get(r, "block"), get(r, "statistic"));
        if let Ok(v) = get(r, "value").parse::<f64>() {
            values.insert((p.clone(), o.clone(), b.clone(), s), v);
        }
        if !products.contains(&p) {
            products.push(p.clone());
        }
        let is_window = !b.contains(':') && !["pretrend", "sample", "overlap", "bootstrap"].contains(&b.as_str());
        if is_window && !panels.contains(&(o.clone(), b.clone())) {
            panels.push((o, b));
        }
    }
    let mut text = String::new();
    let width = products.iter().map(String::len).max().unwrap_or(0).max(14);
    for (outcome, window) in &panels {
        let _ = writeln!(text, "{outcome}, {window} window");
        let _ = write!(text, "{:<18}", "");
        for p in &products {
            let _ = write!(text, " {p:>width$}");
        }
        text.push('\n');
        let cell = |p: &str, block: &str, stat: &str| values.get(&(p.to_string(), outcome.clone(), block.to_string(), stat.to_string())).copied();
        let lines: [(&str, Cell<'_>); 6] = [
            ("ATT", Box::new(|p| cell(p, window, "estimate").map(|e| format!("{e:.3}{}", cell(p, window, "p").map_or("", stars))).unwrap_or_default())),
            ("(se)", Box::new(|p| cell(p, window, "se").map(|v| format!("({v:.3})")).unwrap_or_default())),
            ("p-value", Box::new(|p| cell(p, window, "p").map(|v| format!("{v:.3}")).unwrap_or_default())),
            ("% change", Box::new(|p| cell(p, window, "pct_change").map(|v| format!("{v:.2}%")).unwrap_or_default())),
            ("households", Box::new(|p| {
                match (cell(p, window, "n_treated"), cell(p, window, "n_control")) {
                    (Some(a), Some(b)) => format!("{}", a + b),
                    _ => String::new(),
                }
            })),
            ("p-val. pre-trend", Box::new(|p| cell(p, "pretrend", "p").map(|v| format!("{v:.3}")).unwrap_or_default())),
        ];
        for (label, f) in &lines {
            let _ = write!(text, "{label:<18}");
            for p in &products {
                let _ = write!(text, " {:>width$}", f(p));
            }
            text.push('\n');
        }
        text.push('\n');
    }
    text.push_str("Significance: * p<0.1, ** p<0.05, *** p<0.01. Standard errors clustered by household.\n");
    text
}

pub(super) fn write_report(out: &Path) -> Result<(), Failure> {
    let mut att_files: Vec<(PathBuf, (String, Outcome, String))> = Vec::new();
    let entries = std::fs::read_dir(out).map_err(|e| Failure::from(Error::io(out, e)))?;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(key) = parse_att_name(&name) {
            att_files.push((entry.path(), key));
        }
    }
    if att_files.is_empty() {
        return Err(Failure::new(EXIT_NOTHING_TO_REPORT, format!("no estimation outputs in {}", out.display())));
    }
    att_files.sort_by(|a, b| a.1.cmp(&b.1));
    let mut body: Vec<Vec<String>> = Vec::new();
    for (path, (product, outcome, group)) in &att_files {
        for r in read_rows(path)? {
            if ATT_HEADER.iter().any(|h| !r.contains_key(*h)) {
                return Err(Error::Schema { path: path.clone(), line: 1, message: "not an event-study file".into() }.into());
            }
            let q: Quarter = r["quarter"].parse().map_err(|e: Error| Failure::new(super::EXIT_SCHEMA, format!("{}: {e}", path.display())))?;
            body.push(vec![
                product.clone(),
                outcome.as_str().to_string(),
                group.clone(),
                q.to_string(),
                phase(q).to_string(),
                r["estimate"].clone(),
                r["se"].clone(),
                r["ci_lo"].clone(),
                r["ci_hi"].clone(),
                r["band_lo"].clone(),
                r["band_hi"].clone(),
            ]);
        }
    }
    let summary_path = out.join(SUMMARY_FILE);
    let text = if summary_path.is_file() { text_summary(&read_rows(&summary_path)?) } else { String::new() };
    write_csv_atomic(&out.join("report.csv"), &REPORT_HEADER, body)?;
    crate::panel::write_text_atomic(&out.join("report.txt"), &text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names() {
        assert_eq!(parse_att_name("att_butter_weight.csv"), Some(("butter".into(), Outcome::Weight, "all".into())));
        assert_eq!(
            parse_att_name("att_sour_cream_price_per_100_income_low.csv"),
            Some(("sour_cream".into(), Outcome::PricePer100, "income:low".into()))
        );
        assert_eq!(parse_att_name("att_weight.csv"), None);
        assert_eq!(parse_att_name("summary.csv"), None);
    }

    #[test]
    fn stars_follow_thresholds() {
        assert_eq!(stars(0.005), "***");
        assert_eq!(stars(0.03), "**");
        assert_eq!(stars(0.07), "*");
        assert_eq!(stars(0.2), "");
    }
}
