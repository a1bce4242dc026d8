//! Labeled trajectory datasets and their binary container.
//!
//! The `MTRJ` container stores trajectories unpadded: per item a patient id,
//! an optional task tag with its binary label, the prediction timepoint, and
//! the five streams at their true length. Padding is reapplied by consumers,
//! which keeps the file compact and the max length a reader-side choice.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};

use crate::container::{
    open_reader, r_i64, r_u32, r_u64, r_u8, read_header, read_provenance, w_i64, w_u32, w_u64,
    w_u8, write_header, write_provenance, Provenance, MAGIC_TRAJECTORIES,
};
use crate::error::{Error, Result};
use crate::trajectory::PatientTrajectory;

/// Downstream prediction task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Death during the index hospital stay.
    Mortality,
    /// Index stay longer than seven days.
    LongStay,
    /// Readmission within thirty days of discharge.
    Readmission,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Mortality, Task::LongStay, Task::Readmission];

    /// Stable wire code for the container format.
    pub fn code(self) -> u8 {
        match self {
            Task::Mortality => 0,
            Task::LongStay => 1,
            Task::Readmission => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Task> {
        match code {
            0 => Some(Task::Mortality),
            1 => Some(Task::LongStay),
            2 => Some(Task::Readmission),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mortality => "MT",
            Task::LongStay => "LLOS",
            Task::Readmission => "RA",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "MT" => Ok(Task::Mortality),
            "LLOS" => Ok(Task::LongStay),
            "RA" => Ok(Task::Readmission),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// Wire code for "no task attached".
const TASK_NONE: u8 = 255;

/// One trajectory with its provenance and (optional) supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub patient_id: u64,
    /// Task this label belongs to; `None` for unlabeled (pretext) items.
    pub task: Option<Task>,
    /// Binary outcome; 0 for unlabeled items.
    pub label: u8,
    /// Prediction timepoint: records at or after it never enter the streams.
    pub prediction_time: NaiveDateTime,
    pub trajectory: PatientTrajectory,
}

/// A set of labeled trajectories sharing one maximum length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryDataset {
    pub max_len: u32,
    pub items: Vec<LabeledTrajectory>,
}

fn write_stream<W: Write>(w: &mut W, s: &[u32]) -> std::io::Result<()> {
    for &x in s {
        w_u32(w, x)?;
    }
    Ok(())
}

fn read_stream<R: Read>(r: &mut R, len: usize) -> std::io::Result<Vec<u32>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(r_u32(r)?);
    }
    Ok(out)
}

impl TrajectoryDataset {
    pub fn new(max_len: u32, items: Vec<LabeledTrajectory>) -> TrajectoryDataset {
        TrajectoryDataset { max_len, items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn write(&self, path: &Path, prov: Option<&Provenance>) -> Result<()> {
        let io = |e| Error::io(path, e);
        for item in &self.items {
            item.trajectory.assert_aligned();
            if item.trajectory.len() > self.max_len as usize {
                return Err(Error::TooLong {
                    len: item.trajectory.len(),
                    max_len: self.max_len as usize,
                });
            }
        }
        let file = File::create(path).map_err(io)?;
        let mut w = BufWriter::new(file);
        write_header(&mut w, MAGIC_TRAJECTORIES).map_err(io)?;
        w_u64(&mut w, self.items.len() as u64).map_err(io)?;
        w_u32(&mut w, self.max_len).map_err(io)?;
        for item in &self.items {
            w_u64(&mut w, item.patient_id).map_err(io)?;
            w_u8(&mut w, item.task.map_or(TASK_NONE, Task::code)).map_err(io)?;
            w_u8(&mut w, item.label).map_err(io)?;
            w_i64(&mut w, item.prediction_time.and_utc().timestamp()).map_err(io)?;
            let t = &item.trajectory;
            w_u32(&mut w, t.len() as u32).map_err(io)?;
            write_stream(&mut w, &t.concept_idx).map_err(io)?;
            write_stream(&mut w, &t.age_idx).map_err(io)?;
            write_stream(&mut w, &t.visit_idx).map_err(io)?;
            write_stream(&mut w, &t.record_idx).map_err(io)?;
            write_stream(&mut w, &t.domain_idx).map_err(io)?;
        }
        if let Some(p) = prov {
            write_provenance(&mut w, p).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<(TrajectoryDataset, Option<Provenance>)> {
        let io = |e| Error::io(path, e);
        let mut r = open_reader(path)?;
        read_header(&mut r, MAGIC_TRAJECTORIES, path)?;
        let count = r_u64(&mut r).map_err(io)?;
        let max_len = r_u32(&mut r).map_err(io)?;
        let mut items = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let patient_id = r_u64(&mut r).map_err(io)?;
            let task_code = r_u8(&mut r).map_err(io)?;
            let task = if task_code == TASK_NONE {
                None
            } else {
                Some(Task::from_code(task_code).ok_or_else(|| Error::BadContainer {
                    path: path.to_path_buf(),
                    reason: format!("unknown task code {task_code}"),
                })?)
            };
            let label = r_u8(&mut r).map_err(io)?;
            let secs = r_i64(&mut r).map_err(io)?;
            let prediction_time = DateTime::from_timestamp(secs, 0)
                .ok_or_else(|| Error::BadContainer {
                    path: path.to_path_buf(),
                    reason: format!("prediction time {secs} out of range"),
                })?
                .naive_utc();
            let body_len = r_u32(&mut r).map_err(io)? as usize;
            if body_len > max_len as usize {
                return Err(Error::BadContainer {
                    path: path.to_path_buf(),
                    reason: format!("item length {body_len} exceeds max_len {max_len}"),
                });
            }
            let trajectory = PatientTrajectory {
                concept_idx: read_stream(&mut r, body_len).map_err(io)?,
                age_idx: read_stream(&mut r, body_len).map_err(io)?,
                visit_idx: read_stream(&mut r, body_len).map_err(io)?,
                record_idx: read_stream(&mut r, body_len).map_err(io)?,
                domain_idx: read_stream(&mut r, body_len).map_err(io)?,
            };
            items.push(LabeledTrajectory {
                patient_id,
                task,
                label,
                prediction_time,
                trajectory,
            });
        }
        let prov = read_provenance(&mut r, path)?;
        Ok((TrajectoryDataset { max_len, items }, prov))
    }
}
