//! Patient trajectories: five aligned index streams per patient.
//!
//! A trajectory encodes one patient's clinical history as equal-length
//! streams of dense concept indices, age indices (years 0-119), 1-based
//! visit indices, 1-based per-visit day counters, and domain indices.
//! Position 0 is always `[CLS]`; every visit is terminated by `[SEP]`;
//! `[PAD]` fill appears only at the end after [`pad_trajectory`].
//!
//! Construction walks one patient's time-sorted records, groups them into
//! visits (ordered by each visit's first record), resolves concept ids
//! against the catalog (mapping valued measurements to their decile-variant
//! rows), and stamps the special-token positions: a special token copies the
//! age and day counter of the preceding real record — or `(age 0, day 1)` at
//! `[CLS]`, which sits before any record and always carries visit 1.

pub mod bins;
pub mod dataset;
pub mod records;

use std::collections::HashMap;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::vocab::{ConceptCatalog, Domain, CLS, SEP, UNK};

pub use bins::DecileBins;
pub use dataset::{LabeledTrajectory, Task, TrajectoryDataset};
pub use records::{ClinicalRecord, PatientInfo, VisitInfo};

/// Default maximum trajectory length (stream positions, specials included).
pub const DEFAULT_MAX_LEN: usize = 2048;

/// Highest representable age index; older records clamp here.
pub const MAX_AGE: u32 = 119;

/// Five aligned index streams for one patient (or one slice of one).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatientTrajectory {
    pub concept_idx: Vec<u32>,
    pub age_idx: Vec<u32>,
    pub visit_idx: Vec<u32>,
    pub record_idx: Vec<u32>,
    pub domain_idx: Vec<u32>,
}

impl PatientTrajectory {
    pub fn len(&self) -> usize {
        self.concept_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concept_idx.is_empty()
    }

    fn push(&mut self, concept: u32, age: u32, visit: u32, record: u32, domain: u32) {
        self.concept_idx.push(concept);
        self.age_idx.push(age);
        self.visit_idx.push(visit);
        self.record_idx.push(record);
        self.domain_idx.push(domain);
    }

    /// Copy of position `i` as a (concept, age, visit, record, domain) tuple.
    pub fn position(&self, i: usize) -> (u32, u32, u32, u32, u32) {
        (
            self.concept_idx[i],
            self.age_idx[i],
            self.visit_idx[i],
            self.record_idx[i],
            self.domain_idx[i],
        )
    }

    /// Panic unless the five streams are aligned.
    pub fn assert_aligned(&self) {
        let n = self.concept_idx.len();
        assert!(
            self.age_idx.len() == n
                && self.visit_idx.len() == n
                && self.record_idx.len() == n
                && self.domain_idx.len() == n,
            "stream lengths diverge"
        );
    }
}

/// Age index for a record date: whole calendar years since birth, clamped to
/// `0..=MAX_AGE`.
fn age_index(birth_date: NaiveDate, on: NaiveDate) -> u32 {
    on.years_since(birth_date).unwrap_or(0).min(MAX_AGE)
}

/// Resolve one record to a (dense concept index, domain index) pair.
///
/// Valued measurements whose concept has fitted bins and decile-variant
/// catalog rows land on the variant for their decile. Everything else falls
/// back to the base concept row, and to `[UNK]` (domain 0) when the catalog
/// has no such row — including valued measurements of binned concepts whose
/// base row was replaced by variants but whose value is missing.
fn resolve_token(
    record: &ClinicalRecord,
    catalog: &ConceptCatalog,
    bins: &DecileBins,
) -> Result<(u32, u32)> {
    if record.domain == Domain::Measurement && bins.has(record.concept_id) {
        if let (Some(value), Some(variants)) = (
            record.numeric_value,
            catalog.decile_variants(record.concept_id),
        ) {
            let decile = bins.bin(record.concept_id, value)?;
            let dense = variants[decile as usize];
            return Ok((dense, catalog.get(dense).domain.index()));
        }
    }
    Ok(match catalog.dense_index(record.concept_id) {
        Some(dense) => (dense, catalog.get(dense).domain.index()),
        None => (UNK, Domain::Special.index()),
    })
}

/// Build one patient's trajectory from their time-sorted records.
///
/// Records stamped at or after `as_of` are dropped; the rest are grouped by
/// `visit_id` in order of each visit's first record. Per visit, the day
/// counter starts at 1 on the visit's first record date and increments by one
/// calendar day. The trailing `[SEP]` of each visit copies the age and day
/// counter of the visit's last record.
///
/// Errors with [`Error::Order`] when timestamps are not non-decreasing and
/// [`Error::Invalid`] when records span multiple patients.
pub fn build_trajectory(
    records: &[ClinicalRecord],
    birth_date: NaiveDate,
    catalog: &ConceptCatalog,
    bins: &DecileBins,
    as_of: NaiveDateTime,
) -> Result<PatientTrajectory> {
    if let Some(first) = records.first() {
        if let Some(stray) = records.iter().find(|r| r.patient_id != first.patient_id) {
            return Err(Error::Invalid {
                what: "patient records".into(),
                reason: format!(
                    "mixed patients {} and {}",
                    first.patient_id, stray.patient_id
                ),
            });
        }
    }
    for w in records.windows(2) {
        if w[1].timestamp < w[0].timestamp {
            return Err(Error::Order(format!(
                "record at {} follows record at {}",
                w[1].timestamp, w[0].timestamp
            )));
        }
    }

    // Group the in-window records into visits, keyed by visit_id, ordered by
    // first appearance (= earliest record, since input is time-sorted).
    let mut visit_order: HashMap<u64, usize> = HashMap::new();
    let mut visits: Vec<Vec<&ClinicalRecord>> = Vec::new();
    for r in records.iter().filter(|r| r.timestamp < as_of) {
        let slot = *visit_order.entry(r.visit_id).or_insert_with(|| {
            visits.push(Vec::new());
            visits.len() - 1
        });
        visits[slot].push(r);
    }

    let mut t = PatientTrajectory::default();
    t.push(CLS, 0, 1, 1, Domain::Special.index());
    for (v, visit_records) in visits.iter().enumerate() {
        let visit = (v + 1) as u32;
        let first_date = visit_records[0].timestamp.date();
        let mut last = (0u32, 1u32); // (age, day counter) of the last record
        for r in visit_records {
            let age = age_index(birth_date, r.timestamp.date());
            let day = (r.timestamp.date() - first_date).num_days() as u32 + 1;
            let (dense, domain) = resolve_token(r, catalog, bins)?;
            t.push(dense, age, visit, day, domain);
            last = (age, day);
        }
        t.push(SEP, last.0, visit, last.1, Domain::Special.index());
    }
    Ok(t)
}

/// Split an over-long trajectory into non-overlapping chunks of at most
/// `max_len` positions, each starting with `[CLS]`.
///
/// A trajectory within the budget comes back as a single unchanged chunk.
/// Otherwise the first chunk is the first `max_len` positions as-is (its
/// `[CLS]` is the original one), and every later chunk prefixes the next
/// `max_len - 1` positions with an injected `[CLS]` that copies the age,
/// visit, and day counter of the chunk's first real position. Stripping
/// position 0 from every chunk and concatenating reproduces the original
/// body, so no position is dropped or duplicated.
pub fn slice_trajectory(t: &PatientTrajectory, max_len: usize) -> Vec<PatientTrajectory> {
    assert!(max_len >= 2, "max_len must allow a [CLS] plus one position");
    t.assert_aligned();
    if t.len() <= max_len {
        return vec![t.clone()];
    }
    let mut chunks = Vec::with_capacity(1 + (t.len() - max_len).div_ceil(max_len - 1));
    let head = PatientTrajectory {
        concept_idx: t.concept_idx[..max_len].to_vec(),
        age_idx: t.age_idx[..max_len].to_vec(),
        visit_idx: t.visit_idx[..max_len].to_vec(),
        record_idx: t.record_idx[..max_len].to_vec(),
        domain_idx: t.domain_idx[..max_len].to_vec(),
    };
    chunks.push(head);
    let mut start = max_len;
    while start < t.len() {
        let end = (start + max_len - 1).min(t.len());
        let mut chunk = PatientTrajectory::default();
        chunk.push(
            CLS,
            t.age_idx[start],
            t.visit_idx[start],
            t.record_idx[start],
            Domain::Special.index(),
        );
        chunk.concept_idx.extend_from_slice(&t.concept_idx[start..end]);
        chunk.age_idx.extend_from_slice(&t.age_idx[start..end]);
        chunk.visit_idx.extend_from_slice(&t.visit_idx[start..end]);
        chunk.record_idx.extend_from_slice(&t.record_idx[start..end]);
        chunk.domain_idx.extend_from_slice(&t.domain_idx[start..end]);
        chunks.push(chunk);
        start = end;
    }
    chunks
}

/// Extend all five streams to `max_len` with `[PAD]`/0 fill.
pub fn pad_trajectory(t: &PatientTrajectory, max_len: usize) -> Result<PatientTrajectory> {
    t.assert_aligned();
    if t.len() > max_len {
        return Err(Error::TooLong {
            len: t.len(),
            max_len,
        });
    }
    let mut padded = t.clone();
    padded.concept_idx.resize(max_len, 0);
    padded.age_idx.resize(max_len, 0);
    padded.visit_idx.resize(max_len, 0);
    padded.record_idx.resize(max_len, 0);
    padded.domain_idx.resize(max_len, 0);
    Ok(padded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Concept;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").unwrap()
    }

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn concept(concept_id: u64, domain: Domain) -> Concept {
        Concept {
            concept_id,
            name: format!("concept {concept_id}"),
            domain,
            decile: None,
        }
    }

    fn catalog() -> ConceptCatalog {
        ConceptCatalog::from_concepts(vec![
            concept(101, Domain::Condition),
            concept(202, Domain::Drug),
            concept(303, Domain::Procedure),
            concept(404, Domain::Measurement),
        ])
        .unwrap()
    }

    fn record(
        concept_id: u64,
        domain: Domain,
        when: &str,
        value: Option<f64>,
        visit_id: u64,
    ) -> ClinicalRecord {
        ClinicalRecord {
            patient_id: 7,
            concept_id,
            domain,
            timestamp: ts(when),
            numeric_value: value,
            visit_id,
        }
    }

    #[test]
    fn two_visit_example_produces_expected_streams() {
        // Two single-day visits a year apart: concepts (a, b) then (c), with
        // the patient aged 40 at the first and 41 at the second.
        let cat = catalog();
        let records = vec![
            record(101, Domain::Condition, "2019-06-01T08:00", None, 10),
            record(202, Domain::Drug, "2019-06-01T09:30", None, 10),
            record(303, Domain::Procedure, "2020-06-01T11:00", None, 20),
        ];
        let t = build_trajectory(
            &records,
            date("1979-03-15"),
            &cat,
            &DecileBins::default(),
            ts("2021-01-01T00:00"),
        )
        .unwrap();
        let a = cat.dense_index(101).unwrap();
        let b = cat.dense_index(202).unwrap();
        let c = cat.dense_index(303).unwrap();
        assert_eq!(t.concept_idx, vec![CLS, a, b, SEP, c, SEP]);
        assert_eq!(t.age_idx, vec![0, 40, 40, 40, 41, 41]);
        assert_eq!(t.visit_idx, vec![1, 1, 1, 1, 2, 2]);
        assert_eq!(t.record_idx, vec![1, 1, 1, 1, 1, 1]);
        assert_eq!(t.domain_idx, vec![0, 1, 2, 0, 4, 0]);
    }

    #[test]
    fn day_counter_increments_across_visit_days() {
        let cat = catalog();
        let records = vec![
            record(101, Domain::Condition, "2019-06-01T08:00", None, 1),
            record(202, Domain::Drug, "2019-06-02T08:00", None, 1),
            record(303, Domain::Procedure, "2019-06-03T08:00", None, 1),
        ];
        let t = build_trajectory(
            &records,
            date("1979-03-15"),
            &cat,
            &DecileBins::default(),
            ts("2021-01-01T00:00"),
        )
        .unwrap();
        assert_eq!(t.record_idx, vec![1, 1, 2, 3, 3]);
        assert_eq!(t.visit_idx, vec![1, 1, 1, 1, 1]);
        // The [SEP] copies the last record's day counter.
        assert_eq!(t.concept_idx[4], SEP);
    }

    #[test]
    fn no_records_yields_cls_only() {
        let t = build_trajectory(
            &[],
            date("1979-03-15"),
            &catalog(),
            &DecileBins::default(),
            ts("2021-01-01T00:00"),
        )
        .unwrap();
        assert_eq!(t.concept_idx, vec![CLS]);
        assert_eq!(t.age_idx, vec![0]);
        assert_eq!(t.visit_idx, vec![1]);
        assert_eq!(t.record_idx, vec![1]);
        assert_eq!(t.domain_idx, vec![0]);
    }

    #[test]
    fn unsorted_records_are_rejected() {
        let records = vec![
            record(202, Domain::Drug, "2019-06-01T09:30", None, 1),
            record(101, Domain::Condition, "2019-06-01T08:00", None, 1),
        ];
        let err = build_trajectory(
            &records,
            date("1979-03-15"),
            &catalog(),
            &DecileBins::default(),
            ts("2021-01-01T00:00"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Order(_)));
    }

    #[test]
    fn mixed_patients_are_rejected() {
        let mut second = record(202, Domain::Drug, "2019-06-01T09:30", None, 1);
        second.patient_id = 8;
        let records = vec![
            record(101, Domain::Condition, "2019-06-01T08:00", None, 1),
            second,
        ];
        let err = build_trajectory(
            &records,
            date("1979-03-15"),
            &catalog(),
            &DecileBins::default(),
            ts("2021-01-01T00:00"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invalid { .. }));
    }

    #[test]
    fn records_at_or_after_as_of_are_dropped() {
        let records = vec![
            record(101, Domain::Condition, "2019-06-01T08:00", None, 1),
            record(202, Domain::Drug, "2019-06-01T09:30", None, 1),
            record(303, Domain::Procedure, "2019-06-01T10:00", None, 1),
        ];
        let t = build_trajectory(
            &records,
            date("1979-03-15"),
            &catalog(),
            &DecileBins::default(),
            ts("2019-06-01T09:30"),
        )
        .unwrap();
        // Only the 08:00 record survives: 09:30 is exactly the cutoff.
        assert_eq!(t.len(), 3);
        assert_eq!(t.concept_idx[1], catalog().dense_index(101).unwrap());
    }

    #[test]
    fn valued_measurements_map_to_decile_variants() {
        let base = catalog();
        let train: Vec<ClinicalRecord> = (1..=100)
            .map(|v| {
                record(
                    404,
                    Domain::Measurement,
                    "2019-01-01T00:00",
                    Some(v as f64),
                    1,
                )
            })
            .collect();
        let bins = DecileBins::fit(&train);
        let expanded = base.expand_measurement_deciles(&bins.binned_concepts()).unwrap();
        let records = vec![record(
            404,
            Domain::Measurement,
            "2019-06-01T08:00",
            Some(55.0),
            1,
        )];
        let t = build_trajectory(
            &records,
            date("1979-03-15"),
            &expanded,
            &bins,
            ts("2021-01-01T00:00"),
        )
        .unwrap();
        let variants = expanded.decile_variants(404).unwrap();
        assert_eq!(t.concept_idx[1], variants[5]);
        assert_eq!(t.domain_idx[1], Domain::Measurement.index());
    }

    #[test]
    fn unknown_concepts_map_to_unk() {
        let records = vec![record(999, Domain::Condition, "2019-06-01T08:00", None, 1)];
        let t = build_trajectory(
            &records,
            date("1979-03-15"),
            &catalog(),
            &DecileBins::default(),
            ts("2021-01-01T00:00"),
        )
        .unwrap();
        assert_eq!(t.concept_idx[1], UNK);
        assert_eq!(t.domain_idx[1], 0);
    }

    #[test]
    fn unbinned_measurement_keeps_base_concept() {
        // 404 has no fitted bins, so even a valued record stays on the base
        // row with the measurement domain.
        let records = vec![record(
            404,
            Domain::Measurement,
            "2019-06-01T08:00",
            Some(12.0),
            1,
        )];
        let cat = catalog();
        let t = build_trajectory(
            &records,
            date("1979-03-15"),
            &cat,
            &DecileBins::default(),
            ts("2021-01-01T00:00"),
        )
        .unwrap();
        assert_eq!(t.concept_idx[1], cat.dense_index(404).unwrap());
        assert_eq!(t.domain_idx[1], Domain::Measurement.index());
    }

    #[test]
    fn ages_clamp_to_bounds() {
        let records = vec![
            record(101, Domain::Condition, "2019-06-01T08:00", None, 1),
            record(202, Domain::Drug, "2120-06-01T08:00", None, 2),
        ];
        // Born after the first record: age clamps to 0; the second record is
        // 201 years later and clamps to MAX_AGE.
        let t = build_trajectory(
            &records,
            date("1919-01-01"),
            &catalog(),
            &DecileBins::default(),
            ts("2121-01-01T00:00"),
        )
        .unwrap();
        assert_eq!(t.age_idx[1], 100);
        assert_eq!(t.age_idx[4], MAX_AGE);
        let t2 = build_trajectory(
            &records[..1],
            date("2020-01-01"),
            &catalog(),
            &DecileBins::default(),
            ts("2121-01-01T00:00"),
        )
        .unwrap();
        assert_eq!(t2.age_idx[1], 0);
    }

    #[test]
    fn sep_count_equals_visit_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cat = catalog();
        for _ in 0..20 {
            let num_visits = rng.random_range(0..6usize);
            let mut records = Vec::new();
            for v in 0..num_visits {
                let day = format!("2019-0{}-01T08:00", v + 1);
                for _ in 0..rng.random_range(1..4usize) {
                    records.push(record(101, Domain::Condition, &day, None, v as u64 + 1));
                }
            }
            let t = build_trajectory(
                &records,
                date("1979-03-15"),
                &cat,
                &DecileBins::default(),
                ts("2021-01-01T00:00"),
            )
            .unwrap();
            let seps = t.concept_idx.iter().filter(|&&c| c == SEP).count();
            assert_eq!(seps, num_visits);
            t.assert_aligned();
        }
    }

    fn random_trajectory(rng: &mut ChaCha8Rng, len: usize) -> PatientTrajectory {
        let mut t = PatientTrajectory::default();
        t.push(CLS, 0, 1, 1, 0);
        for _ in 1..len {
            t.push(
                rng.random_range(4..100),
                rng.random_range(0..120),
                rng.random_range(1..9),
                rng.random_range(1..5),
                rng.random_range(1..5),
            );
        }
        t
    }

    #[test]
    fn slicing_within_budget_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_trajectory(&mut rng, 64);
        let chunks = slice_trajectory(&t, 64);
        assert_eq!(chunks, vec![t]);
    }

    #[test]
    fn slicing_reconstructs_original_body() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let len = rng.random_range(2..400usize);
            let max_len = rng.random_range(2..80usize);
            let t = random_trajectory(&mut rng, len);
            let chunks = slice_trajectory(&t, max_len);
            for chunk in &chunks {
                assert!(chunk.len() <= max_len);
                assert_eq!(chunk.concept_idx[0], CLS);
                chunk.assert_aligned();
            }
            // Stripping each chunk's position 0 and concatenating must
            // reproduce the original body (everything after the lead [CLS]).
            let mut body = PatientTrajectory::default();
            for chunk in &chunks {
                body.concept_idx.extend_from_slice(&chunk.concept_idx[1..]);
                body.age_idx.extend_from_slice(&chunk.age_idx[1..]);
                body.visit_idx.extend_from_slice(&chunk.visit_idx[1..]);
                body.record_idx.extend_from_slice(&chunk.record_idx[1..]);
                body.domain_idx.extend_from_slice(&chunk.domain_idx[1..]);
            }
            assert_eq!(body.concept_idx, t.concept_idx[1..]);
            assert_eq!(body.age_idx, t.age_idx[1..]);
            assert_eq!(body.visit_idx, t.visit_idx[1..]);
            assert_eq!(body.record_idx, t.record_idx[1..]);
            assert_eq!(body.domain_idx, t.domain_idx[1..]);
        }
    }

    #[test]
    fn injected_cls_copies_adjacent_position_context() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_trajectory(&mut rng, 10);
        let chunks = slice_trajectory(&t, 4);
        // Chunk 0 is positions 0..4 unchanged.
        assert_eq!(chunks[0].concept_idx, t.concept_idx[..4]);
        // Chunk 1 starts with an injected [CLS] copying position 4's context.
        assert_eq!(chunks[1].concept_idx[0], CLS);
        assert_eq!(chunks[1].age_idx[0], t.age_idx[4]);
        assert_eq!(chunks[1].visit_idx[0], t.visit_idx[4]);
        assert_eq!(chunks[1].record_idx[0], t.record_idx[4]);
        assert_eq!(chunks[1].domain_idx[0], 0);
    }

    #[test]
    fn padding_fills_with_zeros_and_rejects_overlong() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = random_trajectory(&mut rng, 5);
        let padded = pad_trajectory(&t, 8).unwrap();
        assert_eq!(padded.len(), 8);
        assert_eq!(&padded.concept_idx[..5], &t.concept_idx[..]);
        assert_eq!(&padded.concept_idx[5..], &[0, 0, 0]);
        assert_eq!(&padded.domain_idx[5..], &[0, 0, 0]);
        assert_eq!(&padded.visit_idx[5..], &[0, 0, 0]);

        let exact = pad_trajectory(&padded, 8).unwrap();
        assert_eq!(exact, padded);

        let err = pad_trajectory(&padded, 4).unwrap_err();
        assert!(matches!(err, Error::TooLong { len: 8, max_len: 4 }));
    }
}
