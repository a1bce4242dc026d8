//! Outcome label derivation from visit tables.
//!
//! Given the full visit table and a choice of index visit per patient, each
//! task labels the index stay:
//!
//! - mortality: the patient died during the index stay,
//! - long stay: the index stay lasted strictly more than seven days,
//! - readmission: another admission starts within thirty days (inclusive)
//!   after the index discharge.
//!
//! Prediction timepoints follow the task: midnight of the admission date for
//! mortality and long stay (the model sees only pre-admission history) and
//! midnight of the discharge date for readmission.

use std::collections::HashMap;

use chrono::{Days, NaiveDateTime, TimeDelta};

use crate::error::{Error, Result};
use crate::trajectory::records::VisitInfo;
use crate::trajectory::Task;

/// One patient's supervision for one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskLabel {
    pub task: Task,
    pub patient_id: u64,
    pub label: u8,
    pub prediction_time: NaiveDateTime,
}

fn midnight_of(t: NaiveDateTime) -> NaiveDateTime {
    t.date().and_hms_opt(0, 0, 0).expect("midnight exists")
}

/// Hours in "more than a week".
pub const LONG_STAY_HOURS: i64 = 7 * 24;

/// Days in the readmission window (inclusive).
pub const READMISSION_DAYS: u64 = 30;

/// Label the given index visits (patient id, visit id pairs) for `task`.
///
/// Readmission scans the whole visit table for a later admission by the same
/// patient, so `visits` must contain every stay, not only the index ones.
/// Output order follows `index_visits`.
pub fn derive_labels(
    visits: &[VisitInfo],
    index_visits: &[(u64, u64)],
    task: Task,
) -> Result<Vec<TaskLabel>> {
    let mut by_key: HashMap<(u64, u64), &VisitInfo> = HashMap::with_capacity(visits.len());
    let mut by_patient: HashMap<u64, Vec<&VisitInfo>> = HashMap::new();
    for v in visits {
        if v.discharge < v.admit {
            return Err(Error::BadVisit {
                patient_id: v.patient_id,
                visit_id: v.visit_id,
                reason: "discharge precedes admission".into(),
            });
        }
        by_key.insert((v.patient_id, v.visit_id), v);
        by_patient.entry(v.patient_id).or_default().push(v);
    }

    let mut out = Vec::with_capacity(index_visits.len());
    for &(patient_id, visit_id) in index_visits {
        let visit = *by_key
            .get(&(patient_id, visit_id))
            .ok_or(Error::BadVisit {
                patient_id,
                visit_id,
                reason: "index visit missing from visit table".into(),
            })?;
        let (label, prediction_time) = match task {
            Task::Mortality => (u8::from(visit.died), midnight_of(visit.admit)),
            Task::LongStay => {
                let long = visit.discharge - visit.admit > TimeDelta::hours(LONG_STAY_HOURS);
                (u8::from(long), midnight_of(visit.admit))
            }
            Task::Readmission => {
                let deadline = visit
                    .discharge
                    .checked_add_days(Days::new(READMISSION_DAYS))
                    .expect("date in range");
                let readmitted = by_patient[&patient_id].iter().any(|other| {
                    other.visit_id != visit.visit_id
                        && other.admit >= visit.discharge
                        && other.admit <= deadline
                });
                (u8::from(readmitted), midnight_of(visit.discharge))
            }
        };
        out.push(TaskLabel {
            task,
            patient_id,
            label,
            prediction_time,
        });
    }
    Ok(out)
}
