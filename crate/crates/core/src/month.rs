use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Calendar month used as the key-expiry time window (`YYYY-MM`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Month {
    year: i32,
    month: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid month window {0:?}, expected YYYY-MM")]
pub struct MonthError(pub String);

pub const EXPIRY_PREFIX: &str = "expiry:";

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        ((1..=12).contains(&month) && (0..=9999).contains(&year)).then_some(Month { year, month })
    }

    pub fn of(t: DateTime<Utc>) -> Self {
        Month { year: t.year(), month: t.month() }
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Month { year: self.year + 1, month: 1 }
        } else {
            Month { year: self.year, month: self.month + 1 }
        }
    }

    /// The `expiry:YYYY-MM` attribute for this window.
    pub fn attribute(self) -> String {
        format!("{EXPIRY_PREFIX}{self}")
    }

    /// Parses the window out of an `expiry:` attribute, if it is one.
    pub fn from_attribute(attr: &str) -> Option<Self> {
        attr.strip_prefix(EXPIRY_PREFIX)?.parse().ok()
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl fmt::Debug for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Month({self})")
    }
}

impl FromStr for Month {
    type Err = MonthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MonthError(s.to_owned());
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(err());
        }
        let year = y.parse().map_err(|_| err())?;
        let month = m.parse().map_err(|_| err())?;
        Month::new(year, month).ok_or_else(err)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn parse_and_order() {
        let june: Month = "2025-06".parse().unwrap();
        let july: Month = "2025-07".parse().unwrap();
        assert!(june < july);
        assert_eq!(june.next(), july);
        assert_eq!("2025-12".parse::<Month>().unwrap().next().to_string(), "2026-01");
        assert!("2025-13".parse::<Month>().is_err());
        assert!("2025-6".parse::<Month>().is_err());
    }

    #[test]
    fn window_of_timestamp() {
        let t = Utc.with_ymd_and_hms(2025, 6, 15, 12, 0, 0).unwrap();
        assert_eq!(Month::of(t).attribute(), "expiry:2025-06");
        assert_eq!(Month::from_attribute("expiry:2025-06"), Some(Month::of(t)));
        assert_eq!(Month::from_attribute("user:foo"), None);
    }
}
