//! Calendar quarters, the study grid and named aggregation windows.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Days in a standardised quarter (a quarter of a Julian year).
pub const STANDARD_QUARTER_DAYS: f64 = 365.25 / 4.0;

/// A calendar quarter, ordered chronologically.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    ordinal: i32,
}

impl Quarter {
    pub const STUDY_START: Quarter = Quarter::of(2009, 1);
    pub const STUDY_END: Quarter = Quarter::of(2014, 4);
    /// First quarter in which the tax was levied.
    pub const TAX_START: Quarter = Quarter::of(2011, 4);
    /// Last quarter in which the tax was levied.
    pub const TAX_END: Quarter = Quarter::of(2012, 4);

    const fn of(year: i32, q: u8) -> Quarter {
        Quarter { ordinal: year * 4 + q as i32 - 1 }
    }

    pub fn new(year: i32, q: u8) -> Result<Quarter> {
        if !(1..=4).contains(&q) {
            return Err(Error::invalid(format!("quarter must be 1..=4, got {q}")));
        }
        Ok(Quarter::of(year, q))
    }

    pub fn from_date(date: NaiveDate) -> Quarter {
        Quarter::of(date.year(), (date.month0() / 3 + 1) as u8)
    }

    pub fn year(self) -> i32 {
        self.ordinal.div_euclid(4)
    }

    /// Quarter of the year, 1..=4.
    pub fn q(self) -> u8 {
        self.ordinal.rem_euclid(4) as u8 + 1
    }

    /// Zero-based calendar quarter (0 = Q1), used for seasonal dummies.
    pub fn season(self) -> usize {
        self.ordinal.rem_euclid(4) as usize
    }

    pub fn offset(self, by: i32) -> Quarter {
        Quarter { ordinal: self.ordinal + by }
    }

    pub fn next(self) -> Quarter {
        self.offset(1)
    }

    /// Signed number of quarters from `other` to `self`.
    pub fn since(self, other: Quarter) -> i32 {
        self.ordinal - other.ordinal
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year(), (self.q() as u32 - 1) * 3 + 1, 1).expect("valid quarter start")
    }

    /// Calendar days in the quarter (90, 91 or 92).
    pub fn days(self) -> u32 {
        let start = self.first_day();
        let end = self.next().first_day();
        (end - start).num_days() as u32
    }

    pub fn is_pre_tax(self) -> bool {
        self < Quarter::TAX_START
    }

    pub fn is_tax(self) -> bool {
        (Quarter::TAX_START..=Quarter::TAX_END).contains(&self)
    }

    /// Inclusive range of quarters.
    pub fn range(first: Quarter, last: Quarter) -> Vec<Quarter> {
        (first.ordinal..=last.ordinal).map(|ordinal| Quarter { ordinal }).collect()
    }

    pub fn study_grid() -> Vec<Quarter> {
        Quarter::range(Quarter::STUDY_START, Quarter::STUDY_END)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year(), self.q())
    }
}

impl fmt::Debug for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    /// Accepts `2011Q3`, `2011-Q3` and lowercase variants.
    fn from_str(s: &str) -> Result<Quarter> {
        let t = s.trim().to_ascii_uppercase();
        let (year, q) = t
            .split_once('Q')
            .ok_or_else(|| Error::invalid(format!("cannot parse quarter {s:?}")))?;
        let year = year.trim_end_matches('-');
        let year: i32 = year.parse().map_err(|_| Error::invalid(format!("cannot parse quarter {s:?}")))?;
        let q: u8 = q.parse().map_err(|_| Error::invalid(format!("cannot parse quarter {s:?}")))?;
        Quarter::new(year, q)
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse a comma-separated quarter list such as `2011Q2,2011Q3`.
pub fn parse_quarter_list(s: &str) -> Result<Vec<Quarter>> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
}

/// A named set of quarters over which ATT(q) are averaged.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub name: String,
    pub quarters: Vec<Quarter>,
}

impl Window {
    pub fn new(name: impl Into<String>, quarters: Vec<Quarter>) -> Window {
        Window { name: name.into(), quarters }
    }

    /// 2011Q4..2012Q4.
    pub fn tax() -> Window {
        Window::new("tax", Quarter::range(Quarter::TAX_START, Quarter::TAX_END))
    }

    /// 2013Q1..2014Q4.
    pub fn post() -> Window {
        Window::new("post", Quarter::range(Quarter::TAX_END.next(), Quarter::STUDY_END))
    }
}
