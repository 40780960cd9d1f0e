//! Line-oriented rating file readers and writers.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header line accepted (and skipped) as the first line of a CSV file.
pub const CSV_HEADER: &str = "userId,movieId,rating,timestamp";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingFormat {
    /// `user::item::rating::timestamp` (MovieLens `.dat`).
    DoubleColon,
    Csv,
    Tsv,
}

impl RatingFormat {
    fn separator(self) -> &'static str {
        match self {
            RatingFormat::DoubleColon => "::",
            RatingFormat::Csv => ",",
            RatingFormat::Tsv => "\t",
        }
    }
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "double-colon" | "doublecolon" | "dat" => Ok(RatingFormat::DoubleColon),
            "csv" => Ok(RatingFormat::Csv),
            "tsv" => Ok(RatingFormat::Tsv),
            other => Err(Error::InvalidArgument(format!(
                "unknown rating format {other:?} (expected double-colon, csv or tsv)"
            ))),
        }
    }
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingFormat::DoubleColon => "double-colon",
            RatingFormat::Csv => "csv",
            RatingFormat::Tsv => "tsv",
        })
    }
}

/// One rating record with the raw identifiers found in the file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawRating {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
    pub timestamp: u64,
}

impl RawRating {
    pub fn new(user: u64, item: u64, rating: f64, timestamp: u64) -> Self {
        RawRating {
            user,
            item,
            rating,
            timestamp,
        }
    }
}

/// Parse every record of `reader`. Blank lines are ignored; any other
/// malformed line aborts with its 1-based line number.
pub fn parse_ratings<R: BufRead>(mut reader: R, format: RatingFormat) -> Result<Vec<RawRating>> {
    let mut out = Vec::new();
    let mut raw = Vec::new();
    let mut line_no = 0usize;
    loop {
        raw.clear();
        if reader.read_until(b'\n', &mut raw)? == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&raw).map_err(|_| Error::Parse {
            line: line_no,
            text: String::from_utf8_lossy(&raw).trim_end().to_string(),
            reason: "invalid UTF-8".into(),
        })?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        if line_no == 1 && format == RatingFormat::Csv && line.trim() == CSV_HEADER {
            continue;
        }
        out.push(parse_line(line, format).map_err(|reason| Error::Parse {
            line: line_no,
            text: line.to_string(),
            reason,
        })?);
    }
    Ok(out)
}

fn parse_line(line: &str, format: RatingFormat) -> std::result::Result<RawRating, String> {
    let fields: Vec<&str> = line.split(format.separator()).collect();
    match fields.len() {
        4 => {}
        n if n < 4 => return Err(format!("missing field (found {n} of 4)")),
        n => return Err(format!("too many fields (found {n}, expected 4)")),
    }
    let int = |name: &str, s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| format!("{name} is not a non-negative integer"))
    };
    let user = int("user", fields[0])?;
    let item = int("item", fields[1])?;
    let rating: f64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| "rating is not a decimal number".to_string())?;
    if !rating.is_finite() {
        return Err("rating is not finite".into());
    }
    let timestamp = int("timestamp", fields[3])?;
    Ok(RawRating {
        user,
        item,
        rating,
        timestamp,
    })
}

/// Write records in `format`. `Display` for `f64` is shortest round-trip, so
/// `parse_ratings(write_ratings(x)) == x`.
pub fn write_ratings<W: Write>(mut w: W, ratings: &[RawRating], format: RatingFormat) -> Result<()> {
    let sep = format.separator();
    for r in ratings {
        writeln!(
            w,
            "{}{sep}{}{sep}{}{sep}{}",
            r.user, r.item, r.rating, r.timestamp
        )?;
    }
    Ok(())
}
