//! Community-level verification reports and verdict files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::verifier::{Outcome, Verdict};

pub const CSV_HEADER: [&str; 10] = [
    "user_id",
    "outcome",
    "claimed_raw",
    "claimed_id",
    "predicted_id",
    "best_distance",
    "margin",
    "confidence",
    "token_count",
    "post_count",
];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
    #[error("malformed verdicts: {0}")]
    Malformed(String),
}

impl From<csv::Error> for ReportError {
    fn from(e: csv::Error) -> Self {
        let message = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Self::Io(io),
            _ => Self::Malformed(message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictFormat {
    Csv,
    Json,
}

/// A percentage held as an exact number of hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Percent {
    hundredths: u64,
}

impl Percent {
    /// `part / total` as a percentage rounded half-up to two decimals.
    pub fn of(part: usize, total: usize) -> Self {
        if total == 0 {
            return Self::default();
        }
        let (part, total) = (part as u128, total as u128);
        let hundredths = (part * 10_000 * 2 + total) / (2 * total);
        Self {
            hundredths: hundredths as u64,
        }
    }

    pub fn hundredths(self) -> u64 {
        self.hundredths
    }

    pub fn as_f64(self) -> f64 {
        self.hundredths as f64 / 100.0
    }
}

impl std::fmt::Display for Percent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:02}", self.hundredths / 100, self.hundredths % 100)
    }
}

impl Serialize for Percent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Self {
            hundredths: (v * 100.0).round() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub total_users: usize,
    pub counts: BTreeMap<Outcome, usize>,
    pub percentages: BTreeMap<Outcome, Percent>,
    pub per_specialty_verified: BTreeMap<String, usize>,
    pub generated_at: Option<String>,
    pub model_version: Option<String>,
}

impl DistributionReport {
    pub fn with_model_version(mut self, version: impl Into<String>) -> Self {
        self.model_version = Some(version.into());
        self
    }

    pub fn with_generated_at(mut self, instant: impl Into<String>) -> Self {
        self.generated_at = Some(instant.into());
        self
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

pub fn summarize(verdicts: &[Verdict]) -> DistributionReport {
    let mut counts: BTreeMap<Outcome, usize> = Outcome::ALL.iter().map(|&o| (o, 0)).collect();
    let mut per_specialty_verified = BTreeMap::new();
    for v in verdicts {
        *counts.entry(v.outcome).or_default() += 1;
        if v.outcome == Outcome::Verified {
            if let Some(id) = &v.predicted_id {
                *per_specialty_verified.entry(id.clone()).or_default() += 1;
            }
        }
    }
    let total = verdicts.len();
    let percentages = counts
        .iter()
        .map(|(&o, &c)| (o, Percent::of(c, total)))
        .collect();
    DistributionReport {
        total_users: total,
        counts,
        percentages,
        per_specialty_verified,
        generated_at: None,
        model_version: None,
    }
}

/// Fixed-order outcome table with counts and percentages.
pub fn render_text(report: &DistributionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Verification outcomes (model {})",
        report.model_version.as_deref().unwrap_or("unknown")
    );
    let _ = writeln!(out, "Total users  {}", report.total_users);
    for o in Outcome::ALL {
        let count = report.counts.get(&o).copied().unwrap_or(0);
        let pct = report.percentages.get(&o).copied().unwrap_or_default();
        let _ = writeln!(out, "{o}  {count}  {pct}%");
    }
    if !report.per_specialty_verified.is_empty() {
        let _ = writeln!(out, "Verified by specialty");
        for (id, n) in &report.per_specialty_verified {
            let _ = writeln!(out, "  {id}  {n}");
        }
    }
    out
}

fn fixed6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn round6(v: Option<f64>) -> Option<f64> {
    v.map(|x| format!("{x:.6}").parse().expect("formatted float parses"))
}

/// Writes verdicts as CSV or a JSON array. Reals carry six decimals.
pub fn emit_verdicts<W: Write>(
    verdicts: &[Verdict],
    format: VerdictFormat,
    sink: W,
) -> Result<(), ReportError> {
    match format {
        VerdictFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(sink);
            w.write_record(CSV_HEADER)?;
            for v in verdicts {
                w.write_record([
                    v.user_id.as_str(),
                    v.outcome.as_str(),
                    v.claimed_raw.as_deref().unwrap_or(""),
                    v.claimed_id.as_deref().unwrap_or(""),
                    v.predicted_id.as_deref().unwrap_or(""),
                    &fixed6(v.best_distance),
                    &fixed6(v.margin),
                    &fixed6(v.confidence),
                    &v.token_count.to_string(),
                    &v.post_count.to_string(),
                ])?;
            }
            w.flush()?;
        }
        VerdictFormat::Json => {
            let rounded: Vec<Verdict> = verdicts
                .iter()
                .map(|v| Verdict {
                    best_distance: round6(v.best_distance),
                    margin: round6(v.margin),
                    confidence: round6(v.confidence),
                    ..v.clone()
                })
                .collect();
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &rounded).map_err(io::Error::from)?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
    }
    Ok(())
}

/// Reads a verdict file in either format. JSON is recognized by a leading `[`.
pub fn parse_verdicts(source: &[u8]) -> Result<Vec<Verdict>, ReportError> {
    let first = source.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'[') {
        return serde_json::from_slice(source).map_err(|e| ReportError::Malformed(e.to_string()));
    }
    parse_csv(source)
}

fn parse_csv(source: &[u8]) -> Result<Vec<Verdict>, ReportError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ReportError::Malformed(format!(
            "unexpected header '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let bad = |field: &str, e: &dyn std::fmt::Display| {
            ReportError::Malformed(format!("row {row}, field {field}: {e}"))
        };
        let text = |idx: usize| -> Option<String> {
            let s = &record[idx];
            (!s.is_empty()).then(|| s.to_string())
        };
        let real = |idx: usize| -> Result<Option<f64>, ReportError> {
            let s = &record[idx];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| bad(CSV_HEADER[idx], &e))
        };
        let count = |idx: usize| -> Result<usize, ReportError> {
            record[idx].parse().map_err(|e| bad(CSV_HEADER[idx], &e))
        };
        if record[0].is_empty() {
            return Err(bad("user_id", &"empty"));
        }
        out.push(Verdict {
            user_id: record[0].to_string(),
            outcome: record[1].parse().map_err(|e: String| bad("outcome", &e))?,
            claimed_raw: text(2),
            claimed_id: text(3),
            predicted_id: text(4),
            best_distance: real(5)?,
            margin: real(6)?,
            confidence: real(7)?,
            token_count: count(8)?,
            post_count: count(9)?,
        });
    }
    Ok(out)
}
