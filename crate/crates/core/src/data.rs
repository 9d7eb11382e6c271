//! CSV ingestion of yearly counts and conversion to model series.
//!
//! Accepted input: UTF-8, comma separated, header `year,count` or
//! `year,count,flow`, LF or CRLF line endings. A missing or empty flow reads
//! as `combined`. Rows repeating a `(year, flow)` pair are summed. Lines
//! starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Flow, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub year: i32,
    pub count: f64,
    pub flow: Flow,
}

/// Aggregated records, one per `(year, flow)`, ordered by year then flow.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<Record>,
}

impl Dataset {
    /// Builds a dataset from raw rows, summing duplicate `(year, flow)` pairs.
    pub fn from_records<I: IntoIterator<Item = Record>>(rows: I) -> Result<Self> {
        let mut merged: BTreeMap<(i32, Flow), f64> = BTreeMap::new();
        for r in rows {
            if !(r.count.is_finite() && r.count >= 0.0) {
                return Err(Error::InvalidSeries(format!(
                    "count for {} {} must be finite and non-negative, got {}",
                    r.year, r.flow, r.count
                )));
            }
            *merged.entry((r.year, r.flow)).or_insert(0.0) += r.count;
        }
        Ok(Dataset {
            records: merged
                .into_iter()
                .map(|((year, flow), count)| Record { year, count, flow })
                .collect(),
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn flows(&self) -> Vec<Flow> {
        let mut flows: Vec<Flow> = self.records.iter().map(|r| r.flow).collect();
        flows.sort();
        flows.dedup();
        flows
    }
}

/// How missing years inside a flow's range are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillPolicy {
    #[default]
    Error,
    Zero,
    Interpolate,
}

impl fmt::Display for FillPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FillPolicy::Error => "error",
            FillPolicy::Zero => "zero",
            FillPolicy::Interpolate => "interpolate",
        })
    }
}

impl std::str::FromStr for FillPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "error" => Ok(FillPolicy::Error),
            "zero" => Ok(FillPolicy::Zero),
            "interpolate" => Ok(FillPolicy::Interpolate),
            other => Err(format!("unknown fill policy `{other}`")),
        }
    }
}

fn csv_error(line: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

fn parse_year(field: &str, line: usize) -> Result<i32> {
    let year: i32 = field
        .parse()
        .map_err(|_| csv_error(line, format!("year `{field}` is not an integer")))?;
    if !(1000..=9999).contains(&year) || field.len() != 4 {
        return Err(csv_error(line, format!("year `{field}` is not a 4-digit year")));
    }
    Ok(year)
}

fn parse_count(field: &str, line: usize) -> Result<f64> {
    let count: f64 = field
        .parse()
        .map_err(|_| csv_error(line, format!("count `{field}` is not a number")))?;
    if !count.is_finite() || count < 0.0 {
        return Err(csv_error(line, format!("count `{field}` must be finite and non-negative")));
    }
    Ok(count)
}

/// Parses a year/count CSV document.
pub fn parse_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows = reader.records();

    let header = match rows.next() {
        None => return Err(Error::EmptyInput),
        Some(h) => h.map_err(|e| csv_error(1, e.to_string()))?,
    };
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    let has_flow = match names.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["year", "count"] => false,
        ["year", "count", "flow"] => true,
        _ => {
            return Err(csv_error(
                1,
                format!("expected header `year,count` or `year,count,flow`, found `{}`", names.join(",")),
            ))
        }
    };
    let width = if has_flow { 3 } else { 2 };

    let mut parsed = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_error(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != width {
            return Err(csv_error(line, format!("expected {width} fields, found {}", row.len())));
        }
        let year = parse_year(&row[0], line)?;
        let count = parse_count(&row[1], line)?;
        let flow = if has_flow && !row[2].is_empty() {
            row[2].parse::<Flow>().map_err(|e| csv_error(line, e))?
        } else {
            Flow::Combined
        };
        parsed.push(Record { year, count, flow });
    }
    Dataset::from_records(parsed)
}

/// Writes `data` as a `year,count,flow` CSV that [`parse_csv`] reads back
/// to an equal dataset.
pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidSeries(format!("write failed: {e}"));
    writer.write_record(["year", "count", "flow"]).map_err(io)?;
    for r in data.records() {
        writer
            .write_record([r.year.to_string(), r.count.to_string(), r.flow.to_string()])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| Error::InvalidSeries(format!("write failed: {e}")))?;
    Ok(())
}

/// Contiguous yearly series of one flow, from its first to its last year.
pub fn to_time_series(data: &Dataset, flow: Flow, fill: FillPolicy) -> Result<TimeSeries> {
    let points: Vec<(i32, f64)> = data
        .records()
        .iter()
        .filter(|r| r.flow == flow)
        .map(|r| (r.year, r.count))
        .collect();
    let (Some(&(first, _)), Some(&(last, _))) = (points.first(), points.last()) else {
        return Err(Error::NoRecordsForFlow(flow));
    };

    let mut values = Vec::with_capacity((last - first + 1) as usize);
    for pair in points.windows(2) {
        let ((y0, v0), (y1, v1)) = (pair[0], pair[1]);
        values.push(v0);
        let gap = y1 - y0;
        for year in y0 + 1..y1 {
            values.push(match fill {
                FillPolicy::Error => return Err(Error::GapYear(year)),
                FillPolicy::Zero => 0.0,
                FillPolicy::Interpolate => v0 + (v1 - v0) * f64::from(year - y0) / f64::from(gap),
            });
        }
    }
    values.push(points[points.len() - 1].1);
    TimeSeries::new(first, values, flow)
}
