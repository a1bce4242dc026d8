//! Cohort-to-dataset assembly shared by the command-line stages and the
//! evaluation harness: patient splits, index-visit selection, decile-bin
//! fitting on the training split only, and labeled per-task trajectory
//! datasets (with an optional recoded external copy of the test split).

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::benchmark::TaskSplits;
use crate::eval::labels::derive_labels;
use crate::trajectory::records::{
    dedup_hourly_measurements, ClinicalRecord, PatientInfo, VisitInfo,
};
use crate::trajectory::{
    build_trajectory, slice_trajectory, DecileBins, LabeledTrajectory, Task, TrajectoryDataset,
};
use crate::vocab::ConceptCatalog;

/// Development/validation/hold-out proportions.
pub const TRAIN_FRACTION: f64 = 0.70;
pub const VAL_FRACTION: f64 = 0.15;

/// Disjoint patient-id partitions for train / validation / test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIds {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl SplitIds {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffle the (deduplicated) patient ids with a seeded generator and cut
/// 70/15/15. Canonicalizes the input order first, so the same id set always
/// produces the same split regardless of how the caller assembled it.
pub fn split_patients(patient_ids: &[u64], seed: u64) -> SplitIds {
    let mut ids: Vec<u64> = patient_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_train = (n as f64 * TRAIN_FRACTION).floor() as usize;
    let n_val = (n as f64 * VAL_FRACTION).floor() as usize;
    let mut split = SplitIds {
        train: ids[..n_train].to_vec(),
        val: ids[n_train..n_train + n_val].to_vec(),
        test: ids[n_train + n_val..].to_vec(),
    };
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

/// Choose each patient's index visit: the record-bearing visit with the
/// latest admission (ties to the larger visit id). Patients without any
/// record-bearing visit are skipped. Output is sorted by patient id.
pub fn select_index_visits(
    records: &[ClinicalRecord],
    visits: &[VisitInfo],
) -> Vec<(u64, u64)> {
    let mut has_records: HashSet<(u64, u64)> = HashSet::with_capacity(visits.len());
    for r in records {
        has_records.insert((r.patient_id, r.visit_id));
    }
    let mut best: HashMap<u64, &VisitInfo> = HashMap::new();
    for v in visits {
        if !has_records.contains(&(v.patient_id, v.visit_id)) {
            continue;
        }
        best.entry(v.patient_id)
            .and_modify(|cur| {
                if (v.admit, v.visit_id) > (cur.admit, cur.visit_id) {
                    *cur = v;
                }
            })
            .or_insert(v);
    }
    let mut out: Vec<(u64, u64)> = best.values().map(|v| (v.patient_id, v.visit_id)).collect();
    out.sort_unstable();
    out
}

/// Fit decile bins on the training patients' records only (leakage guard).
/// Records are hourly-deduplicated first, matching what the trajectory
/// builder will consume.
pub fn fit_bins(records: &[ClinicalRecord], train_patients: &HashSet<u64>) -> DecileBins {
    let train_records: Vec<ClinicalRecord> = dedup_hourly_measurements(records)
        .into_iter()
        .filter(|r| train_patients.contains(&r.patient_id))
        .collect();
    DecileBins::fit(&train_records)
}

/// Build the labeled dataset for one task over the given index visits.
///
/// Records are hourly-deduplicated, grouped per patient, cut at each task's
/// prediction time, and sliced to `max_len`; over-long trajectories keep
/// only their final chunk (the most recent history before prediction time).
pub fn build_labeled_dataset(
    records: &[ClinicalRecord],
    patients: &[PatientInfo],
    visits: &[VisitInfo],
    index_visits: &[(u64, u64)],
    catalog: &ConceptCatalog,
    bins: &DecileBins,
    task: Task,
    max_len: usize,
) -> Result<TrajectoryDataset> {
    let labels = derive_labels(visits, index_visits, task)?;
    let birth: HashMap<u64, _> = patients
        .iter()
        .map(|p| (p.patient_id, p.birth_date))
        .collect();
    let mut per_patient: HashMap<u64, Vec<ClinicalRecord>> = HashMap::new();
    for r in dedup_hourly_measurements(records) {
        per_patient.entry(r.patient_id).or_default().push(r);
    }

    let empty: Vec<ClinicalRecord> = Vec::new();
    let mut items = Vec::with_capacity(labels.len());
    for label in labels {
        let birth_date = *birth.get(&label.patient_id).ok_or(Error::Invalid {
            what: "patient table".into(),
            reason: format!("patient {} has no birth date", label.patient_id),
        })?;
        let patient_records = per_patient.get(&label.patient_id).unwrap_or(&empty);
        let full = build_trajectory(
            patient_records,
            birth_date,
            catalog,
            bins,
            label.prediction_time,
        )?;
        let trajectory = slice_trajectory(&full, max_len)
            .pop()
            .expect("slicing always yields at least one chunk");
        items.push(LabeledTrajectory {
            patient_id: label.patient_id,
            task: Some(task),
            label: label.label,
            prediction_time: label.prediction_time,
            trajectory,
        });
    }
    Ok(TrajectoryDataset::new(max_len as u32, items))
}

fn restrict(index_visits: &[(u64, u64)], ids: &[u64]) -> Vec<(u64, u64)> {
    let keep: HashSet<u64> = ids.iter().copied().collect();
    index_visits
        .iter()
        .copied()
        .filter(|(p, _)| keep.contains(p))
        .collect()
}

/// Assemble per-task train/val/test datasets, plus — when an externally
/// recoded record table is supplied — an external test set named "shifted"
/// holding the same test patients and labels under the other institution's
/// codes. Returns the splits together with the bins fitted on the training
/// patients.
#[allow(clippy::too_many_arguments)]
pub fn prepare_task_splits(
    records: &[ClinicalRecord],
    external_records: Option<&[ClinicalRecord]>,
    patients: &[PatientInfo],
    visits: &[VisitInfo],
    catalog: &ConceptCatalog,
    tasks: &[Task],
    max_len: usize,
    seed: u64,
) -> Result<(Vec<TaskSplits>, DecileBins)> {
    let index_visits = select_index_visits(records, visits);
    let patient_ids: Vec<u64> = index_visits.iter().map(|&(p, _)| p).collect();
    let split = split_patients(&patient_ids, seed);
    let bins = fit_bins(records, &split.train.iter().copied().collect());

    let mut out = Vec::with_capacity(tasks.len());
    for &task in tasks {
        let build = |recs: &[ClinicalRecord], ids: &[u64]| {
            build_labeled_dataset(
                recs,
                patients,
                visits,
                &restrict(&index_visits, ids),
                catalog,
                &bins,
                task,
                max_len,
            )
        };
        let externals = match external_records {
            Some(ext) => vec![("shifted".to_string(), build(ext, &split.test)?)],
            None => Vec::new(),
        };
        out.push(TaskSplits {
            task,
            train: build(records, &split.train)?,
            val: build(records, &split.val)?,
            test: build(records, &split.test)?,
            externals,
        });
    }
    Ok((out, bins))
}
