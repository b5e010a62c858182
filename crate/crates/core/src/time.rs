//! Time primitives shared by every stage.
//!
//! Revisions carry second-precision UTC instants. Internally an instant is
//! an `i64` count of seconds since the Unix epoch so that bucket arithmetic
//! stays integral; on the wire it is always `YYYY-MM-DDTHH:MM:SSZ`.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const SECS_PER_DAY: i64 = 86_400;
/// Days from 0001-01-01 (CE day 1) to 1970-01-01.
const UNIX_EPOCH_CE_DAYS: i64 = 719_163;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeParseError {
    #[error("bad timestamp {0:?}: expected YYYY-MM-DDTHH:MM:SSZ")]
    Timestamp(String),
    #[error("bad date {0:?}: expected YYYY-MM-DD")]
    Date(String),
    #[error("empty or inverted range: {start} is not before {end}")]
    EmptyRange { start: String, end: String },
}

/// A UTC instant with second precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn unix(self) -> i64 {
        self.0
    }

    /// Midnight UTC at the start of `date`.
    pub fn from_date(date: NaiveDate) -> Self {
        Timestamp(day_number(date) * SECS_PER_DAY)
    }

    /// Days since 1970-01-01 (floored, so pre-epoch instants behave).
    pub const fn day(self) -> i64 {
        self.0.div_euclid(SECS_PER_DAY)
    }

    pub fn date(self) -> NaiveDate {
        date_from_day_number(self.day())
    }

    /// Strict parser for the dump's `YYYY-MM-DDTHH:MM:SSZ` format. Anything
    /// that would not serialize back to the identical string is rejected.
    pub fn parse_iso(s: &str) -> Result<Self, TimeParseError> {
        let err = || TimeParseError::Timestamp(s.to_string());
        let b = s.as_bytes();
        if b.len() != 20 || b[19] != b'Z' {
            return Err(err());
        }
        let shape_ok = b.iter().enumerate().all(|(i, c)| match i {
            4 | 7 => *c == b'-',
            10 => *c == b'T',
            13 | 16 => *c == b':',
            19 => true,
            _ => c.is_ascii_digit(),
        });
        // chrono accepts :60 as a leap second, which would not round-trip.
        if !shape_ok || &s[17..19] >= "60" {
            return Err(err());
        }
        let dt = NaiveDateTime::parse_from_str(&s[..19], "%Y-%m-%dT%H:%M:%S").map_err(|_| err())?;
        Ok(Timestamp(dt.and_utc().timestamp()))
    }

    pub fn to_iso(self) -> String {
        let date = self.date();
        let secs = self.0.rem_euclid(SECS_PER_DAY);
        format!(
            "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z",
            date.year(),
            date.month(),
            date.day(),
            secs / 3600,
            (secs / 60) % 60,
            secs % 60
        )
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso())
    }
}

impl FromStr for Timestamp {
    type Err = TimeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse_iso(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_iso())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        Timestamp::parse_iso(&s).map_err(serde::de::Error::custom)
    }
}

pub fn day_number(date: NaiveDate) -> i64 {
    i64::from(date.num_days_from_ce()) - UNIX_EPOCH_CE_DAYS
}

pub fn date_from_day_number(day: i64) -> NaiveDate {
    i32::try_from(day + UNIX_EPOCH_CE_DAYS)
        .ok()
        .and_then(NaiveDate::from_num_days_from_ce_opt)
        .unwrap_or(if day < 0 { NaiveDate::MIN } else { NaiveDate::MAX })
}

pub fn parse_date(s: &str) -> Result<NaiveDate, TimeParseError> {
    let t = s.trim();
    if t.len() != 10 {
        return Err(TimeParseError::Date(s.to_string()));
    }
    NaiveDate::parse_from_str(t, "%Y-%m-%d").map_err(|_| TimeParseError::Date(s.to_string()))
}

/// Accepts either a bare `YYYY-MM-DD` date (midnight UTC) or a full timestamp.
pub fn parse_instant(s: &str) -> Result<Timestamp, TimeParseError> {
    let t = s.trim();
    if t.len() == 10 {
        parse_date(t).map(Timestamp::from_date)
    } else {
        Timestamp::parse_iso(t)
    }
}

/// Half-open `[start, end)` interval of instants. Always non-empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRange<Timestamp>")]
pub struct TimeRange {
    start: Timestamp,
    end: Timestamp,
}

impl TimeRange {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self, TimeParseError> {
        if start < end {
            Ok(TimeRange { start, end })
        } else {
            Err(TimeParseError::EmptyRange { start: start.to_iso(), end: end.to_iso() })
        }
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn end(&self) -> Timestamp {
        self.end
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Deserialize)]
struct RawRange<T> {
    start: T,
    end: T,
}

impl TryFrom<RawRange<Timestamp>> for TimeRange {
    type Error = TimeParseError;

    fn try_from(raw: RawRange<Timestamp>) -> Result<Self, Self::Error> {
        TimeRange::new(raw.start, raw.end)
    }
}

/// Half-open `[start, end)` interval of calendar days. May be empty
/// (`start == end`); operations that need a non-empty range check it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn days(&self) -> i64 {
        (day_number(self.end) - day_number(self.start)).max(0)
    }

    pub fn start_day(&self) -> i64 {
        day_number(self.start)
    }

    pub fn end_day(&self) -> i64 {
        day_number(self.end)
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        let d = t.day();
        self.start_day() <= d && d < self.end_day()
    }
}

/// Width of a timeline bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    /// ISO-8601 week, Monday start, labelled by its Monday.
    Week,
}

impl Granularity {
    pub const fn width_days(self) -> i64 {
        match self {
            Granularity::Day => 1,
            Granularity::Week => 7,
        }
    }

    /// Day number of the bucket containing `day`.
    pub const fn bucket_start_day(self, day: i64) -> i64 {
        match self {
            Granularity::Day => day,
            // 1970-01-05 (day 4) was a Monday.
            Granularity::Week => day - (day - 4).rem_euclid(7),
        }
    }

    pub fn bucket_start(self, date: NaiveDate) -> NaiveDate {
        date_from_day_number(self.bucket_start_day(day_number(date)))
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Day => "day",
            Granularity::Week => "week",
        })
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" | "1d" => Ok(Granularity::Day),
            "week" | "1w" => Ok(Granularity::Week),
            other => Err(format!("unknown granularity {other:?} (expected day or week)")),
        }
    }
}
