//! Clinical record tables and their TSV formats.
//!
//! Three flat files feed trajectory construction:
//!
//! - `records.tsv`: one clinical event per row
//!   (`patient_id\tconcept_id\tdomain\ttimestamp\tvalue\tvisit_id`),
//! - `patients.tsv`: birth dates (`patient_id\tbirth_date`),
//! - `visits.tsv`: admission windows and discharge status
//!   (`patient_id\tvisit_id\tadmit\tdischarge\tdied`).
//!
//! Timestamps are UTC at minute precision (`YYYY-MM-DDTHH:MM`); seconds are
//! accepted on input and truncated. Numeric values are only legal on
//! measurement rows.

use std::io::BufRead;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use crate::container::{open_reader, write_tsv};
use crate::error::{Error, Result};
use crate::vocab::Domain;

/// One clinical event for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalRecord {
    pub patient_id: u64,
    pub concept_id: u64,
    pub domain: Domain,
    /// Event time, UTC, minute precision.
    pub timestamp: NaiveDateTime,
    /// Present only on measurement records.
    pub numeric_value: Option<f64>,
    pub visit_id: u64,
}

/// Static per-patient facts needed for the age stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatientInfo {
    pub patient_id: u64,
    pub birth_date: NaiveDate,
}

/// One hospital stay: admission window plus discharge status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VisitInfo {
    pub patient_id: u64,
    pub visit_id: u64,
    pub admit: NaiveDateTime,
    pub discharge: NaiveDateTime,
    /// True when the patient died during this stay.
    pub died: bool,
}

const RECORD_HEADER: &str = "patient_id\tconcept_id\tdomain\ttimestamp\tvalue\tvisit_id";
const PATIENT_HEADER: &str = "patient_id\tbirth_date";
const VISIT_HEADER: &str = "patient_id\tvisit_id\tadmit\tdischarge\tdied";

/// Canonical timestamp layout used by every saver.
const TS_FORMAT: &str = "%Y-%m-%dT%H:%M";

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TS_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .ok()
        .map(|t| t.with_second(0).expect("0 is a valid second"))
}

fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TS_FORMAT).to_string()
}

/// Iterate data lines of a headered TSV, skipping '#' comments and blanks.
fn for_each_data_line(
    path: &Path,
    header: &str,
    mut f: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    let reader = open_reader(path)?;
    let mut saw_header = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != header {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected header {header:?}"),
                ));
            }
            saw_header = true;
            continue;
        }
        f(lineno + 1, &line)?;
    }
    if !saw_header {
        return Err(Error::parse(path, 1, "empty table"));
    }
    Ok(())
}

/// Load a records table. Rows keep file order; no sorting is applied.
pub fn load_records(path: &Path) -> Result<Vec<ClinicalRecord>> {
    let mut out = Vec::new();
    for_each_data_line(path, RECORD_HEADER, |lineno, line| {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::parse(path, lineno, "expected 6 tab-separated fields"));
        }
        let patient_id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad patient id {:?}", fields[0])))?;
        let concept_id: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad concept id {:?}", fields[1])))?;
        let domain: Domain = fields[2].parse().map_err(|_| Error::BadDomain {
            concept_id,
            value: fields[2].to_string(),
        })?;
        let timestamp = parse_timestamp(fields[3])
            .ok_or_else(|| Error::parse(path, lineno, format!("bad timestamp {:?}", fields[3])))?;
        let numeric_value = if fields[4].is_empty() {
            None
        } else {
            let v: f64 = fields[4].parse().map_err(|_| {
                Error::parse(path, lineno, format!("bad numeric value {:?}", fields[4]))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, "non-finite numeric value"));
            }
            Some(v)
        };
        if numeric_value.is_some() && domain != Domain::Measurement {
            return Err(Error::parse(
                path,
                lineno,
                format!("numeric value on non-measurement ({domain}) record"),
            ));
        }
        let visit_id: u64 = fields[5]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad visit id {:?}", fields[5])))?;
        out.push(ClinicalRecord {
            patient_id,
            concept_id,
            domain,
            timestamp,
            numeric_value,
            visit_id,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Write a records table in canonical form (row order preserved).
pub fn save_records(path: &Path, records: &[ClinicalRecord], comment: Option<&str>) -> Result<()> {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        if r.numeric_value.is_some() && r.domain != Domain::Measurement {
            return Err(Error::Invalid {
                what: format!("record for concept {}", r.concept_id),
                reason: "numeric value on non-measurement record".into(),
            });
        }
        let value = match r.numeric_value {
            Some(v) => v.to_string(),
            None => String::new(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.patient_id,
            r.concept_id,
            r.domain,
            format_timestamp(r.timestamp),
            value,
            r.visit_id
        ));
    }
    write_tsv(path, comment, &out)
}

/// Load the patient table.
pub fn load_patients(path: &Path) -> Result<Vec<PatientInfo>> {
    let mut out = Vec::new();
    for_each_data_line(path, PATIENT_HEADER, |lineno, line| {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, lineno, "expected 2 tab-separated fields"));
        }
        let patient_id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad patient id {:?}", fields[0])))?;
        let birth_date = NaiveDate::parse_from_str(fields[1], "%Y-%m-%d")
            .map_err(|_| Error::parse(path, lineno, format!("bad birth date {:?}", fields[1])))?;
        out.push(PatientInfo {
            patient_id,
            birth_date,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn save_patients(path: &Path, patients: &[PatientInfo], comment: Option<&str>) -> Result<()> {
    let mut out = String::from(PATIENT_HEADER);
    out.push('\n');
    for p in patients {
        out.push_str(&format!(
            "{}\t{}\n",
            p.patient_id,
            p.birth_date.format("%Y-%m-%d")
        ));
    }
    write_tsv(path, comment, &out)
}

/// Load the visit table. Rejects windows whose discharge precedes admission.
pub fn load_visits(path: &Path) -> Result<Vec<VisitInfo>> {
    let mut out: Vec<VisitInfo> = Vec::new();
    for_each_data_line(path, VISIT_HEADER, |lineno, line| {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::parse(path, lineno, "expected 5 tab-separated fields"));
        }
        let patient_id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad patient id {:?}", fields[0])))?;
        let visit_id: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad visit id {:?}", fields[1])))?;
        let admit = parse_timestamp(fields[2])
            .ok_or_else(|| Error::parse(path, lineno, format!("bad admit time {:?}", fields[2])))?;
        let discharge = parse_timestamp(fields[3]).ok_or_else(|| {
            Error::parse(path, lineno, format!("bad discharge time {:?}", fields[3]))
        })?;
        let died = match fields[4] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("bad died flag {other:?} (expected 0 or 1)"),
                ))
            }
        };
        if discharge < admit {
            return Err(Error::BadVisit {
                patient_id,
                visit_id,
                reason: "discharge precedes admission".into(),
            });
        }
        out.push(VisitInfo {
            patient_id,
            visit_id,
            admit,
            discharge,
            died,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn save_visits(path: &Path, visits: &[VisitInfo], comment: Option<&str>) -> Result<()> {
    let mut out = String::from(VISIT_HEADER);
    out.push('\n');
    for v in visits {
        if v.discharge < v.admit {
            return Err(Error::BadVisit {
                patient_id: v.patient_id,
                visit_id: v.visit_id,
                reason: "discharge precedes admission".into(),
            });
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            v.patient_id,
            v.visit_id,
            format_timestamp(v.admit),
            format_timestamp(v.discharge),
            if v.died { 1 } else { 0 }
        ));
    }
    write_tsv(path, comment, &out)
}

/// Collapse repeated measurements: per (patient, concept, calendar hour) keep
/// the first record in input order and drop the rest. Non-measurement rows
/// pass through untouched. Input order is preserved, so on time-sorted input
/// "first" is the earliest; the pass is idempotent.
pub fn dedup_hourly_measurements(records: &[ClinicalRecord]) -> Vec<ClinicalRecord> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if r.domain == Domain::Measurement {
            let hour_key = (
                r.patient_id,
                r.concept_id,
                r.timestamp.date(),
                r.timestamp.hour(),
            );
            if !seen.insert(hour_key) {
                continue;
            }
        }
        out.push(r.clone());
    }
    out
}
