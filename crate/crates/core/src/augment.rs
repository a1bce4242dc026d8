//! Trajectory augmentation by neighbor replacement.
//!
//! Each non-special position of a trajectory is independently selected with
//! probability `replace_prob`; selected positions are replaced by a uniform
//! draw from the position's neighbor row, with the domain stream following
//! the replacement. Age, visit, and day-counter streams never change, so an
//! augmented copy describes the same encounter history with swapped concepts.
//!
//! Dataset expansion emits each original once plus `factor - 1` augmented
//! copies. Every copy runs on its own generator stream derived from the item
//! index, making the output independent of scheduling and bit-reproducible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::neighbors::NeighborSets;
use crate::trajectory::{LabeledTrajectory, PatientTrajectory, TrajectoryDataset};
use crate::vocab::{ConceptCatalog, NUM_SPECIAL};

/// Copies per item are spaced this far apart in generator-stream space, so
/// `factor` may not exceed it.
pub const MAX_FACTOR: u32 = 64;

/// Settings for dataset expansion.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Per-position replacement probability.
    pub replace_prob: f64,
    /// Output copies per input item (1 = originals only).
    pub factor: u32,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            replace_prob: 0.15,
            factor: 1,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.replace_prob) {
            return Err(Error::BadConfig(format!(
                "replace_prob {} outside [0, 1]",
                self.replace_prob
            )));
        }
        if self.factor < 1 || self.factor > MAX_FACTOR {
            return Err(Error::BadConfig(format!(
                "factor {} outside 1..={MAX_FACTOR}",
                self.factor
            )));
        }
        Ok(())
    }
}

/// Replace randomly selected concept positions with uniform neighbor draws.
///
/// Positions holding special tokens (`[PAD]`/`[CLS]`/`[SEP]`/`[UNK]`) are
/// ineligible. A selected position whose concept has no neighbor row keeps
/// its concept (logged once per call per concept); the uniform draw is not
/// consumed, so downstream draws stay aligned with the selection sequence.
pub fn augment_trajectory(
    t: &PatientTrajectory,
    sets: &NeighborSets,
    catalog: &ConceptCatalog,
    replace_prob: f64,
    rng: &mut impl Rng,
) -> PatientTrajectory {
    t.assert_aligned();
    let mut out = t.clone();
    let mut warned: Vec<u32> = Vec::new();
    for i in 0..out.len() {
        let concept = out.concept_idx[i];
        if concept < NUM_SPECIAL {
            continue;
        }
        if !rng.random_bool(replace_prob) {
            continue;
        }
        if !sets.is_indexed(concept) {
            if !warned.contains(&concept) {
                log::warn!("concept row {concept} has no neighbor entry; keeping original");
                warned.push(concept);
            }
            continue;
        }
        let row = sets.neighbors(concept).expect("indexed row");
        let replacement = row[rng.random_range(0..row.len())];
        out.concept_idx[i] = replacement;
        out.domain_idx[i] = catalog.get(replacement).domain.index();
    }
    out
}

/// Expand a dataset: per input item, the original followed by
/// `factor - 1` augmented copies with labels and timing copied unchanged.
///
/// Copy `c` of item `i` uses generator stream `i * MAX_FACTOR + c` of the
/// seed, so results are reproducible and independent of thread scheduling.
pub fn augment_dataset(
    dataset: &TrajectoryDataset,
    sets: &NeighborSets,
    catalog: &ConceptCatalog,
    config: &AugmentConfig,
) -> Result<TrajectoryDataset> {
    config.validate()?;
    let items: Vec<LabeledTrajectory> = dataset
        .items
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, item)| {
            let mut group = Vec::with_capacity(config.factor as usize);
            group.push(item.clone());
            for copy in 1..config.factor {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(i as u64 * MAX_FACTOR as u64 + copy as u64);
                let augmented =
                    augment_trajectory(&item.trajectory, sets, catalog, config.replace_prob, &mut rng);
                group.push(LabeledTrajectory {
                    trajectory: augmented,
                    ..item.clone()
                });
            }
            group
        })
        .collect();
    Ok(TrajectoryDataset::new(dataset.max_len, items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::build_neighbor_sets;
    use crate::repr::{ReprKind, RepresentationMatrix};
    use crate::trajectory::Task;
    use crate::vocab::{Concept, Domain, CLS, SEP};
    use chrono::NaiveDateTime;
    use ndarray::Array2;

    /// Catalog with 6 line-of-numbers concepts and neighbor sets from their
    /// 1-D embedding, so neighbor rows are easy to reason about.
    fn fixture(m: usize) -> (ConceptCatalog, NeighborSets) {
        let concepts: Vec<Concept> = (0..6)
            .map(|i| Concept {
                concept_id: 100 + i as u64,
                name: format!("c{i}"),
                domain: match i % 2 {
                    0 => Domain::Condition,
                    _ => Domain::Drug,
                },
                decile: None,
            })
            .collect();
        let catalog = ConceptCatalog::from_concepts(concepts).unwrap();
        // Specials at rows 0..3 get arbitrary far-away points; they are
        // excluded from the index either way.
        let points = [-100.0, -101.0, -102.0, -103.0, 0.0, 1.0, 3.0, 7.0, 15.0, 31.0];
        let values = Array2::from_shape_fn((10, 1), |(i, _)| points[i]);
        let reps = RepresentationMatrix::new(ReprKind::Graph, values).unwrap();
        let sets = build_neighbor_sets(&reps, &catalog, m, false).unwrap();
        (catalog, sets)
    }

    fn trajectory_of(concepts: &[u32]) -> PatientTrajectory {
        let mut t = PatientTrajectory::default();
        t.concept_idx.push(CLS);
        t.age_idx.push(0);
        t.visit_idx.push(1);
        t.record_idx.push(1);
        t.domain_idx.push(0);
        for &c in concepts {
            t.concept_idx.push(c);
            t.age_idx.push(40);
            t.visit_idx.push(1);
            t.record_idx.push(1);
            t.domain_idx.push(1);
        }
        t.concept_idx.push(SEP);
        t.age_idx.push(40);
        t.visit_idx.push(1);
        t.record_idx.push(1);
        t.domain_idx.push(0);
        t
    }

    #[test]
    fn zero_probability_is_identity() {
        let (catalog, sets) = fixture(2);
        let t = trajectory_of(&[4, 5, 6, 7, 8, 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment_trajectory(&t, &sets, &catalog, 0.0, &mut rng);
        assert_eq!(out, t);
    }

    #[test]
    fn unit_probability_single_neighbor_forces_replacement() {
        let (catalog, sets) = fixture(1);
        let t = trajectory_of(&[4, 5, 6, 7, 8, 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = augment_trajectory(&t, &sets, &catalog, 1.0, &mut rng);
        for i in 1..=6 {
            let original = t.concept_idx[i];
            let expected = sets.neighbors(original).unwrap()[0];
            assert_eq!(out.concept_idx[i], expected);
        }
        // Specials at the ends stay put.
        assert_eq!(out.concept_idx[0], CLS);
        assert_eq!(*out.concept_idx.last().unwrap(), SEP);
    }

    #[test]
    fn specials_and_context_streams_are_untouched() {
        let (catalog, sets) = fixture(3);
        let t = trajectory_of(&[4, 5, 6, 7]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = augment_trajectory(&t, &sets, &catalog, 1.0, &mut rng);
        assert_eq!(out.len(), t.len());
        assert_eq!(out.age_idx, t.age_idx);
        assert_eq!(out.visit_idx, t.visit_idx);
        assert_eq!(out.record_idx, t.record_idx);
        assert_eq!(out.concept_idx[0], CLS);
        assert_eq!(out.domain_idx[0], 0);
    }

    #[test]
    fn replacements_come_from_the_neighbor_row_with_matching_domain() {
        let (catalog, sets) = fixture(3);
        let t = trajectory_of(&[4, 5, 6, 7, 8, 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let out = augment_trajectory(&t, &sets, &catalog, 0.7, &mut rng);
            for i in 1..out.len() - 1 {
                let (orig, new) = (t.concept_idx[i], out.concept_idx[i]);
                if new != orig {
                    assert!(sets.neighbors(orig).unwrap().contains(&new));
                    assert_eq!(out.domain_idx[i], catalog.get(new).domain.index());
                } else {
                    assert_eq!(out.domain_idx[i], t.domain_idx[i]);
                }
            }
        }
    }

    #[test]
    fn replacement_count_within_binomial_interval() {
        let (catalog, sets) = fixture(2);
        // 1000 eligible positions at p = 0.5: 99% of counts fall in
        // [459, 541] (binomial quantiles).
        let concepts: Vec<u32> = (0..1000).map(|i| 4 + (i % 6) as u32).collect();
        let t = trajectory_of(&concepts);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = augment_trajectory(&t, &sets, &catalog, 0.5, &mut rng);
        let replaced = t
            .concept_idx
            .iter()
            .zip(&out.concept_idx)
            .filter(|(a, b)| a != b)
            .count();
        // Neighbor draws can land on the original concept itself only when
        // the original is in its own row; with distinct 1-D points it never
        // is, so changed-count equals selected-count.
        assert!((459..=541).contains(&replaced), "replaced = {replaced}");
    }

    #[test]
    fn empirical_rate_converges_to_p() {
        let (catalog, sets) = fixture(2);
        let concepts: Vec<u32> = (0..100_000).map(|i| 4 + (i % 6) as u32).collect();
        let t = trajectory_of(&concepts);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = augment_trajectory(&t, &sets, &catalog, 0.15, &mut rng);
        let replaced = t
            .concept_idx
            .iter()
            .zip(&out.concept_idx)
            .filter(|(a, b)| a != b)
            .count();
        let rate = replaced as f64 / 100_000.0;
        assert!((rate - 0.15).abs() < 0.01, "rate = {rate}");
    }

    #[test]
    fn unindexed_concept_falls_back_to_identity() {
        let (catalog, sets) = fixture(2);
        // Concept row 57 is outside the 10-row neighbor table: eligible
        // (>= NUM_SPECIAL) but unindexed, so it survives p = 1 untouched.
        let t = trajectory_of(&[4, 57, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = augment_trajectory(&t, &sets, &catalog, 1.0, &mut rng);
        assert_eq!(out.concept_idx[2], 57);
        assert_ne!(out.concept_idx[1], t.concept_idx[1]);
        assert_ne!(out.concept_idx[3], t.concept_idx[3]);
    }

    fn dataset_of(n: usize, max_len: u32) -> TrajectoryDataset {
        let items = (0..n)
            .map(|i| LabeledTrajectory {
                patient_id: i as u64,
                task: Some(Task::Mortality),
                label: (i % 2) as u8,
                prediction_time: NaiveDateTime::parse_from_str(
                    "2020-01-01T00:00",
                    "%Y-%m-%dT%H:%M",
                )
                .unwrap(),
                trajectory: trajectory_of(&[4, 5, 6, 7, 8, 9]),
            })
            .collect();
        TrajectoryDataset::new(max_len, items)
    }

    #[test]
    fn factor_one_returns_dataset_unchanged() {
        let (catalog, sets) = fixture(2);
        let ds = dataset_of(5, 64);
        let config = AugmentConfig {
            factor: 1,
            ..Default::default()
        };
        let out = augment_dataset(&ds, &sets, &catalog, &config).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn factor_expands_and_groups_originals_first() {
        let (catalog, sets) = fixture(2);
        let ds = dataset_of(4, 64);
        let config = AugmentConfig {
            replace_prob: 0.5,
            factor: 5,
            seed: 9,
        };
        let out = augment_dataset(&ds, &sets, &catalog, &config).unwrap();
        assert_eq!(out.len(), 20);
        for (i, original) in ds.items.iter().enumerate() {
            let group = &out.items[i * 5..(i + 1) * 5];
            assert_eq!(&group[0], original);
            for copy in &group[1..] {
                assert_eq!(copy.patient_id, original.patient_id);
                assert_eq!(copy.task, original.task);
                assert_eq!(copy.label, original.label);
                assert_eq!(copy.prediction_time, original.prediction_time);
                assert_eq!(copy.trajectory.len(), original.trajectory.len());
                assert_eq!(copy.trajectory.age_idx, original.trajectory.age_idx);
            }
            // With p = 0.5 over six eligible positions, two independent
            // copies colliding on every draw is vanishingly unlikely across
            // the whole dataset; require at least one difference somewhere.
        }
        let distinct_copies = out
            .items
            .chunks(5)
            .flat_map(|g| g[1..].windows(2))
            .filter(|w| w[0].trajectory != w[1].trajectory)
            .count();
        assert!(distinct_copies > 0);
    }

    #[test]
    fn expansion_is_deterministic() {
        let (catalog, sets) = fixture(2);
        let ds = dataset_of(6, 64);
        let config = AugmentConfig {
            replace_prob: 0.3,
            factor: 3,
            seed: 11,
        };
        let a = augment_dataset(&ds, &sets, &catalog, &config).unwrap();
        let b = augment_dataset(&ds, &sets, &catalog, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let bad_p = AugmentConfig {
            replace_prob: 1.5,
            ..Default::default()
        };
        assert!(bad_p.validate().is_err());
        let zero_factor = AugmentConfig {
            factor: 0,
            ..Default::default()
        };
        assert!(zero_factor.validate().is_err());
        let huge_factor = AugmentConfig {
            factor: MAX_FACTOR + 1,
            ..Default::default()
        };
        assert!(huge_factor.validate().is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }
}
