use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Audit timestamp with millisecond precision, stored as integer millis so
/// that parsing, arithmetic, and re-serialization are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs * 1000.0).round() as i64)
    }

    pub fn as_millis(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn add_secs_f64(self, secs: f64) -> Self {
        Timestamp(self.0 + (secs * 1000.0).round() as i64)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (secs, ms) = (self.0.div_euclid(1000), self.0.rem_euclid(1000));
        write!(f, "{secs}.{ms:03}")
    }
}

impl FromStr for Timestamp {
    type Err = std::num::ParseIntError;

    /// Parses auditd's `SECONDS.MILLIS` form. A missing or short fractional
    /// part is zero-padded on the right ("5.3" is 5.300).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            None => Ok(Timestamp(s.parse::<i64>()? * 1000)),
            Some((secs, frac)) => {
                let secs: i64 = secs.parse()?;
                let mut buf = [b'0'; 3];
                for (i, b) in frac.bytes().take(3).enumerate() {
                    buf[i] = b;
                }
                let ms: i64 = std::str::from_utf8(&buf).unwrap().parse()?;
                Ok(Timestamp(secs * 1000 + ms))
            }
        }
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_secs_f64())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        Ok(Timestamp::from_secs_f64(secs))
    }
}
