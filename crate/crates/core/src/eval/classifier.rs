//! Downstream classifiers over pooled trajectory encodings.
//!
//! The evaluation harness replaces a full sequence encoder with the simplest
//! thing that isolates representation quality: a trajectory is encoded as
//! the mean of its concepts' representation rows (non-`[PAD]` positions),
//! and a logistic head is trained on top with mini-batch SGD.
//!
//! Two variants share one training loop:
//!
//! - [`train_head`]: the representation matrix is frozen; only the head
//!   (`w`, `b`) learns. The matrix is borrowed immutably, so freezing is a
//!   compile-time guarantee.
//! - [`train_index_baseline`]: a randomly initialized table of the same
//!   shape is trained jointly with the head, mirroring models that learn
//!   their embedding layer from scratch.
//!
//! Batches are rebalanced so each carries a minimum number of positive
//! examples; validation AUROC is checked every fifth of an epoch and
//! training stops after ten non-improving checks, returning the
//! best-validation parameters.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::metrics::auroc;
use crate::repr::RepresentationMatrix;
use crate::trajectory::{PatientTrajectory, TrajectoryDataset};
use crate::vocab::PAD;

/// Hyperparameters for head (and baseline-table) training.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: u32,
    /// Consecutive non-improving validation checks before stopping.
    pub patience_checks: u32,
    /// Every batch is rebalanced to carry at least this many positives.
    pub min_positives_per_batch: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            batch_size: 32,
            learning_rate: 5e-5,
            weight_decay: 0.01,
            max_epochs: 300,
            patience_checks: 10,
            min_positives_per_batch: 3,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::BadConfig("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::BadConfig(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::BadConfig(format!(
                "weight_decay {} must be non-negative",
                self.weight_decay
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::BadConfig("max_epochs must be positive".into()));
        }
        if self.patience_checks == 0 {
            return Err(Error::BadConfig("patience_checks must be positive".into()));
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean of `values` rows over the trajectory's non-`[PAD]` positions.
fn mean_pool(values: &Array2<f64>, t: &PatientTrajectory) -> Result<Array1<f64>> {
    let mut sum = Array1::<f64>::zeros(values.ncols());
    let mut count = 0usize;
    for &c in &t.concept_idx {
        if c == PAD {
            continue;
        }
        if c as usize >= values.nrows() {
            return Err(Error::Shape(format!(
                "concept index {c} outside representation matrix with {} rows",
                values.nrows()
            )));
        }
        sum += &values.row(c as usize);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyTrajectory);
    }
    Ok(sum / count as f64)
}

/// Encode one trajectory against a frozen representation matrix.
pub fn encode_trajectory(t: &PatientTrajectory, reps: &RepresentationMatrix) -> Result<Array1<f64>> {
    mean_pool(reps.values(), t)
}

/// Encode a whole dataset; returns the encoding matrix and the label vector.
pub fn encode_dataset(
    ds: &TrajectoryDataset,
    reps: &RepresentationMatrix,
) -> Result<(Array2<f64>, Vec<u8>)> {
    let h = reps.h();
    let mut enc = Array2::<f64>::zeros((ds.len(), h));
    let mut labels = Vec::with_capacity(ds.len());
    for (i, item) in ds.items.iter().enumerate() {
        let row = encode_trajectory(&item.trajectory, reps)?;
        enc.row_mut(i).assign(&row);
        labels.push(item.label);
    }
    Ok((enc, labels))
}

/// Rebalance a batch in place: when it carries fewer than `min_positives`
/// positive examples, randomly chosen negative slots are overwritten with
/// uniform draws from the training positives (with replacement). Batch
/// length never changes.
fn ensure_min_positives(
    batch: &mut [usize],
    labels: &[u8],
    positives: &[usize],
    min_positives: usize,
    rng: &mut ChaCha8Rng,
) {
    if positives.is_empty() {
        return;
    }
    let target = min_positives.min(batch.len());
    let have = batch.iter().filter(|&&i| labels[i] == 1).count();
    if have >= target {
        return;
    }
    let mut negative_slots: Vec<usize> = (0..batch.len())
        .filter(|&s| labels[batch[s]] == 0)
        .collect();
    negative_slots.shuffle(rng);
    for &slot in negative_slots.iter().take(target - have) {
        batch[slot] = positives[rng.random_range(0..positives.len())];
    }
}

fn check_both_classes(labels: &[u8], what: &str) -> Result<Vec<usize>> {
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if positives.is_empty() || positives.len() == labels.len() {
        log::debug!("{what} labels are single-class");
        return Err(Error::DegenerateLabels(positives.len()));
    }
    Ok(positives)
}

/// Log-odds of the positive rate, the bias that makes a zero-weight model
/// already calibrated. Starting the intercept here instead of at zero
/// matters on rare outcomes: from b = 0 the first epochs are spent crashing
/// the bias down to the base rate, and during that transient the weight
/// gradient is dominated by the negative grand mean of the encodings — a
/// direction whose correlation with the labels is pure chance, which the
/// early-stopping window can then freeze in place.
fn base_rate_logit(labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let rate = (pos / labels.len() as f64).clamp(1e-6, 1.0 - 1e-6);
    (rate / (1.0 - rate)).ln()
}

/// Shared mini-batch SGD driver with oversampling and AUROC early stopping.
///
/// `step` applies one gradient update for a batch of training indices;
/// `val_scores` scores the whole validation set under the current
/// parameters. Returns the best-validation parameters and their AUROC.
fn sgd_early_stop<P: Clone>(
    cfg: &ClassifierConfig,
    train_labels: &[u8],
    val_labels: &[u8],
    init: P,
    mut step: impl FnMut(&mut P, &[usize]),
    mut val_scores: impl FnMut(&P) -> Result<Vec<f64>>,
) -> Result<(P, f64)> {
    cfg.validate()?;
    let positives = check_both_classes(train_labels, "training")?;
    check_both_classes(val_labels, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init;
    // The best candidate is seeded from the first check, never from the
    // untouched initialization: a run whose early validation scores dip
    // must still come back with parameters that have seen gradients.
    let mut best_params = params.clone();
    let mut best_auroc = f64::NEG_INFINITY;
    let mut flat_checks = 0u32;

    let n = train_labels.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let check_every = batches_per_epoch.div_ceil(5).max(1);
    let mut indices: Vec<usize> = (0..n).collect();

    for _epoch in 0..cfg.max_epochs {
        indices.shuffle(&mut rng);
        for (b, chunk) in indices.chunks(cfg.batch_size).enumerate() {
            let mut batch = chunk.to_vec();
            ensure_min_positives(
                &mut batch,
                train_labels,
                &positives,
                cfg.min_positives_per_batch,
                &mut rng,
            );
            step(&mut params, &batch);
            if (b + 1) % check_every == 0 || b + 1 == batches_per_epoch {
                let score = auroc(&val_scores(&params)?, val_labels)?;
                if score > best_auroc {
                    best_auroc = score;
                    best_params = params.clone();
                    flat_checks = 0;
                } else {
                    flat_checks += 1;
                    if flat_checks >= cfg.patience_checks {
                        return Ok((best_params, best_auroc));
                    }
                }
            }
        }
    }
    Ok((best_params, best_auroc))
}

/// Logistic head over frozen encodings, with its best validation AUROC.
#[derive(Debug, Clone)]
pub struct TrainedHead {
    pub w: Array1<f64>,
    pub b: f64,
    pub val_auroc: f64,
}

impl TrainedHead {
    /// Sigmoid scores for an encoding matrix.
    pub fn score(&self, enc: &Array2<f64>) -> Vec<f64> {
        enc.rows()
            .into_iter()
            .map(|x| sigmoid(x.dot(&self.w) + self.b))
            .collect()
    }
}

/// Train a logistic head on frozen encodings.
///
/// The encodings are borrowed immutably and never copied into the model, so
/// the underlying representation matrix cannot drift during training.
pub fn train_head(
    train_enc: &Array2<f64>,
    train_labels: &[u8],
    val_enc: &Array2<f64>,
    val_labels: &[u8],
    cfg: &ClassifierConfig,
) -> Result<TrainedHead> {
    if train_enc.nrows() != train_labels.len() {
        return Err(Error::Shape(format!(
            "{} encodings vs {} labels",
            train_enc.nrows(),
            train_labels.len()
        )));
    }
    if val_enc.nrows() != val_labels.len() {
        return Err(Error::Shape(format!(
            "{} validation encodings vs {} labels",
            val_enc.nrows(),
            val_labels.len()
        )));
    }
    if train_enc.ncols() != val_enc.ncols() {
        return Err(Error::BadDimension {
            expected: train_enc.ncols(),
            got: val_enc.ncols(),
        });
    }
    let h = train_enc.ncols();
    let (lr, wd) = (cfg.learning_rate, cfg.weight_decay);

    let init = (Array1::<f64>::zeros(h), base_rate_logit(train_labels));
    let step = |params: &mut (Array1<f64>, f64), batch: &[usize]| {
        let (w, b) = params;
        let mut gw = Array1::<f64>::zeros(h);
        let mut gb = 0.0;
        for &i in batch {
            let x = train_enc.row(i);
            let s = sigmoid(x.dot(w) + *b) - train_labels[i] as f64;
            gw.scaled_add(s, &x);
            gb += s;
        }
        let scale = 1.0 / batch.len() as f64;
        gw *= scale;
        gb *= scale;
        gw.scaled_add(wd, w);
        w.scaled_add(-lr, &gw);
        *b -= lr * gb;
    };
    let val_scores = |params: &(Array1<f64>, f64)| {
        Ok(val_enc
            .rows()
            .into_iter()
            .map(|x| sigmoid(x.dot(&params.0) + params.1))
            .collect())
    };
    let ((w, b), val_auroc) =
        sgd_early_stop(cfg, train_labels, val_labels, init, step, val_scores)?;
    Ok(TrainedHead { w, b, val_auroc })
}

/// A learnable embedding table trained jointly with its logistic head.
#[derive(Debug, Clone)]
pub struct IndexBaseline {
    pub table: Array2<f64>,
    pub w: Array1<f64>,
    pub b: f64,
    pub val_auroc: f64,
}

impl IndexBaseline {
    /// Sigmoid scores for a set of trajectories under the learned table.
    pub fn score(&self, ds: &TrajectoryDataset) -> Result<Vec<f64>> {
        ds.items
            .iter()
            .map(|item| {
                let enc = mean_pool(&self.table, &item.trajectory)?;
                Ok(sigmoid(enc.dot(&self.w) + self.b))
            })
            .collect()
    }
}

/// Generator stream reserved for table initialization, distinct from the
/// training loop's shuffling stream.
const INIT_STREAM: u64 = 0xE;

/// Train the trainable-index baseline: a uniformly initialized `n_rows x h`
/// table, mean-pooled like the frozen encodings and updated jointly with the
/// head. The table receives plain gradients (no weight decay), the head the
/// same decayed update as [`train_head`].
pub fn train_index_baseline(
    train: &TrajectoryDataset,
    val: &TrajectoryDataset,
    n_rows: usize,
    h: usize,
    cfg: &ClassifierConfig,
) -> Result<IndexBaseline> {
    if n_rows == 0 || h == 0 {
        return Err(Error::BadConfig("empty baseline table".into()));
    }
    let train_labels: Vec<u8> = train.items.iter().map(|i| i.label).collect();
    let val_labels: Vec<u8> = val.items.iter().map(|i| i.label).collect();

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(INIT_STREAM);
    let bound = 1.0 / (h as f64).sqrt();
    let table = Array2::from_shape_fn((n_rows, h), |_| init_rng.random_range(-bound..bound));

    let (lr, wd) = (cfg.learning_rate, cfg.weight_decay);
    let init = (table, Array1::<f64>::zeros(h), base_rate_logit(&train_labels));

    let step = |params: &mut (Array2<f64>, Array1<f64>, f64), batch: &[usize]| {
        let (table, w, b) = params;
        let mut gw = Array1::<f64>::zeros(h);
        let mut gb = 0.0;
        // Per-row scalar coefficients: the gradient wrt table row c is
        // (sum over batch occurrences of s_i / L_i) * w.
        let mut row_coef: HashMap<u32, f64> = HashMap::new();
        for &i in batch {
            let t = &train.items[i].trajectory;
            let enc = mean_pool(table, t).expect("training trajectories are non-empty");
            let s = sigmoid(enc.dot(w) + *b) - train_labels[i] as f64;
            gw.scaled_add(s, &enc);
            gb += s;
            let len = t.concept_idx.iter().filter(|&&c| c != PAD).count() as f64;
            for &c in t.concept_idx.iter().filter(|&&c| c != PAD) {
                *row_coef.entry(c).or_insert(0.0) += s / len;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        // Table rows are disjoint, so update order cannot change the result.
        for (&c, &coef) in &row_coef {
            let mut row = table.row_mut(c as usize);
            row.scaled_add(-lr * coef * scale, w);
        }
        gw *= scale;
        gb *= scale;
        gw.scaled_add(wd, w);
        w.scaled_add(-lr, &gw);
        *b -= lr * gb;
    };
    let val_scores = |params: &(Array2<f64>, Array1<f64>, f64)| {
        val.items
            .iter()
            .map(|item| {
                let enc = mean_pool(&params.0, &item.trajectory)?;
                Ok(sigmoid(enc.dot(&params.1) + params.2))
            })
            .collect()
    };
    let ((table, w, b), val_auroc) =
        sgd_early_stop(cfg, &train_labels, &val_labels, init, step, val_scores)?;
    Ok(IndexBaseline {
        table,
        w,
        b,
        val_auroc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::ReprKind;
    use crate::trajectory::{LabeledTrajectory, Task};
    use chrono::NaiveDateTime;
    use ndarray::array;

    fn reps_1d(values: &[f64]) -> RepresentationMatrix {
        let v = Array2::from_shape_fn((values.len(), 1), |(i, _)| values[i]);
        RepresentationMatrix::new(ReprKind::Graph, v).unwrap()
    }

    fn bare_trajectory(concepts: &[u32]) -> PatientTrajectory {
        PatientTrajectory {
            concept_idx: concepts.to_vec(),
            age_idx: vec![0; concepts.len()],
            visit_idx: vec![1; concepts.len()],
            record_idx: vec![1; concepts.len()],
            domain_idx: vec![0; concepts.len()],
        }
    }

    #[test]
    fn encoding_is_the_hand_computed_mean() {
        // Rows: PAD=10 (never counted), CLS=1, SEP=7, UNK=9, then 2 and 3.
        let reps = reps_1d(&[10.0, 1.0, 7.0, 9.0, 2.0, 3.0]);
        let t = bare_trajectory(&[1, 4, 5]);
        let enc = encode_trajectory(&t, &reps).unwrap();
        assert_eq!(enc, array![2.0]); // (1 + 2 + 3) / 3
        let padded = bare_trajectory(&[1, 4, 0, 0]);
        let enc = encode_trajectory(&padded, &reps).unwrap();
        assert_eq!(enc, array![1.5]); // (1 + 2) / 2, pads skipped
    }

    #[test]
    fn encoding_is_order_free() {
        let reps = reps_1d(&[0.0, 1.0, 7.0, 9.0, 2.0, 3.0]);
        let a = encode_trajectory(&bare_trajectory(&[1, 4, 5, 2]), &reps).unwrap();
        let b = encode_trajectory(&bare_trajectory(&[1, 5, 4, 2]), &reps).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_pad_trajectory_is_empty() {
        let reps = reps_1d(&[0.0, 1.0, 2.0, 3.0]);
        let err = encode_trajectory(&bare_trajectory(&[0, 0, 0]), &reps).unwrap_err();
        assert!(matches!(err, Error::EmptyTrajectory));
    }

    #[test]
    fn out_of_range_concept_is_rejected() {
        let reps = reps_1d(&[0.0, 1.0]);
        let err = encode_trajectory(&bare_trajectory(&[1, 17]), &reps).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    /// Gaussian-ish separable encodings: class means at +/- 1 on every axis.
    fn separable_split(
        rng: &mut ChaCha8Rng,
        n: usize,
        h: usize,
        noise: f64,
    ) -> (Array2<f64>, Vec<u8>) {
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let enc = Array2::from_shape_fn((n, h), |(i, _)| {
            let center = if labels[i] == 1 { 1.0 } else { -1.0 };
            center + rng.random_range(-noise..noise)
        });
        (enc, labels)
    }

    #[test]
    fn separable_encodings_reach_perfect_validation_auroc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train_enc, train_labels) = separable_split(&mut rng, 200, 4, 0.5);
        let (val_enc, val_labels) = separable_split(&mut rng, 100, 4, 0.5);
        let cfg = ClassifierConfig {
            seed: 5,
            ..Default::default()
        };
        let head = train_head(&train_enc, &train_labels, &val_enc, &val_labels, &cfg).unwrap();
        assert!(head.val_auroc > 0.999, "val auroc = {}", head.val_auroc);
        let scores = head.score(&val_enc);
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn random_encodings_stay_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train_enc = Array2::from_shape_fn((300, 6), |_| rng.random_range(-1.0..1.0));
        let train_labels: Vec<u8> = (0..300).map(|i| (i % 2) as u8).collect();
        let val_enc = Array2::from_shape_fn((400, 6), |_| rng.random_range(-1.0..1.0));
        let val_labels: Vec<u8> = (0..400).map(|i| (i % 2) as u8).collect();
        let cfg = ClassifierConfig {
            max_epochs: 20,
            seed: 3,
            ..Default::default()
        };
        let head = train_head(&train_enc, &train_labels, &val_enc, &val_labels, &cfg).unwrap();
        // Early stopping reports the best check, which is upward-biased on
        // noise; allow a generous band around chance.
        assert!(
            (head.val_auroc - 0.5).abs() < 0.1,
            "val auroc = {}",
            head.val_auroc
        );
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (train_enc, train_labels) = separable_split(&mut rng, 100, 3, 1.5);
        let (val_enc, val_labels) = separable_split(&mut rng, 60, 3, 1.5);
        let cfg = ClassifierConfig {
            max_epochs: 10,
            seed: 7,
            ..Default::default()
        };
        let a = train_head(&train_enc, &train_labels, &val_enc, &val_labels, &cfg).unwrap();
        let b = train_head(&train_enc, &train_labels, &val_enc, &val_labels, &cfg).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.b, b.b);
        assert_eq!(a.val_auroc, b.val_auroc);
    }

    #[test]
    fn single_class_labels_are_degenerate() {
        let enc = Array2::<f64>::zeros((10, 2));
        let ones = vec![1u8; 10];
        let mixed = vec![0u8, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let cfg = ClassifierConfig::default();
        assert!(matches!(
            train_head(&enc, &ones, &enc, &mixed, &cfg),
            Err(Error::DegenerateLabels(10))
        ));
        assert!(matches!(
            train_head(&enc, &mixed, &enc, &ones, &cfg),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn oversampling_tops_up_sparse_batches() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i >= 95)).collect();
        let positives: Vec<usize> = (95..100).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut batch: Vec<usize> = (0..32).collect(); // all negatives
            ensure_min_positives(&mut batch, &labels, &positives, 3, &mut rng);
            assert_eq!(batch.len(), 32);
            let pos = batch.iter().filter(|&&i| labels[i] == 1).count();
            assert!(pos >= 3, "batch has {pos} positives");
        }
        // Already-balanced batches are untouched.
        let mut batch: Vec<usize> = vec![95, 96, 97, 0, 1];
        let before = batch.clone();
        ensure_min_positives(&mut batch, &labels, &positives, 3, &mut rng);
        assert_eq!(batch, before);
    }

    fn labeled(concepts: &[u32], label: u8) -> LabeledTrajectory {
        LabeledTrajectory {
            patient_id: 0,
            task: Some(Task::Mortality),
            label,
            prediction_time: NaiveDateTime::parse_from_str("2020-01-01T00:00", "%Y-%m-%dT%H:%M")
                .unwrap(),
            trajectory: bare_trajectory(concepts),
        }
    }

    /// Positives draw concepts from rows 4..8, negatives from 8..12.
    fn toy_dataset(rng: &mut ChaCha8Rng, n: usize) -> TrajectoryDataset {
        let items = (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let base = if label == 1 { 4 } else { 8 };
                let concepts: Vec<u32> = (0..6)
                    .map(|_| base + rng.random_range(0..4u32))
                    .collect();
                labeled(&concepts, label)
            })
            .collect();
        TrajectoryDataset::new(16, items)
    }

    #[test]
    fn index_baseline_learns_a_separable_toy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let train = toy_dataset(&mut rng, 300);
        let val = toy_dataset(&mut rng, 100);
        let cfg = ClassifierConfig {
            // The table must move enough to separate the groups; the tiny
            // default head rate would need far more epochs.
            learning_rate: 0.5,
            max_epochs: 60,
            seed: 13,
            ..Default::default()
        };
        let baseline = train_index_baseline(&train, &val, 12, 8, &cfg).unwrap();
        assert!(
            baseline.val_auroc > 0.9,
            "baseline val auroc = {}",
            baseline.val_auroc
        );
        let scores = baseline.score(&val).unwrap();
        let labels: Vec<u8> = val.items.iter().map(|i| i.label).collect();
        assert!(auroc(&scores, &labels).unwrap() > 0.9);
    }

    #[test]
    fn index_baseline_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let train = toy_dataset(&mut rng, 60);
        let val = toy_dataset(&mut rng, 40);
        let cfg = ClassifierConfig {
            max_epochs: 5,
            seed: 21,
            ..Default::default()
        };
        let a = train_index_baseline(&train, &val, 12, 4, &cfg).unwrap();
        let b = train_index_baseline(&train, &val, 12, 4, &cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.w, b.w);
        assert_eq!(a.val_auroc, b.val_auroc);
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut cfg = ClassifierConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ClassifierConfig::default();
        cfg.learning_rate = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ClassifierConfig::default();
        cfg.patience_checks = 0;
        assert!(cfg.validate().is_err());
    }
}
