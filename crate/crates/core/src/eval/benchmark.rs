//! Factor-sweep benchmark: train at each augmentation factor, select by
//! internal validation AUROC, report internal-test and external metrics.
//!
//! Only the training split is ever augmented; validation, internal test,
//! and external sets stay untouched. Factor selection prefers the lowest
//! factor on ties, so a no-signal sweep degenerates to factor 1.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::augment::{augment_dataset, AugmentConfig, MAX_FACTOR};
use crate::container::write_tsv;
use crate::error::{Error, Result};
use crate::eval::classifier::{
    encode_dataset, train_head, train_index_baseline, ClassifierConfig,
};
use crate::eval::metrics::{auroc, incidence, youden_threshold};
use crate::neighbors::NeighborSets;
use crate::repr::RepresentationMatrix;
use crate::trajectory::{Task, TrajectoryDataset};
use crate::vocab::ConceptCatalog;

/// Which classifier variant the benchmark trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Frozen representation matrix + logistic head.
    Frozen,
    /// Jointly trained embedding table + logistic head.
    IndexBaseline,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Frozen => "frozen",
            ModelKind::IndexBaseline => "index-baseline",
        }
    }
}

/// One task's prepared splits: labeled internal train/val/test plus any
/// number of named external test sets.
#[derive(Debug, Clone)]
pub struct TaskSplits {
    pub task: Task,
    pub train: TrajectoryDataset,
    pub val: TrajectoryDataset,
    pub test: TrajectoryDataset,
    pub externals: Vec<(String, TrajectoryDataset)>,
}

/// Benchmark settings: the factor sweep and how augmented copies are drawn.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub factors: Vec<u32>,
    pub replace_prob: f64,
    pub augment_seed: u64,
    pub classifier: ClassifierConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            factors: vec![1],
            replace_prob: 0.15,
            augment_seed: 0,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::BadConfig("empty factor list".into()));
        }
        if let Some(&bad) = self
            .factors
            .iter()
            .find(|&&f| f < 1 || f > MAX_FACTOR)
        {
            return Err(Error::BadConfig(format!(
                "factor {bad} outside 1..={MAX_FACTOR}"
            )));
        }
        if !(0.0..=1.0).contains(&self.replace_prob) {
            return Err(Error::BadConfig(format!(
                "replace_prob {} outside [0, 1]",
                self.replace_prob
            )));
        }
        self.classifier.validate()
    }
}

/// Threshold-free and thresholded metrics for one scored dataset.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricsSummary {
    pub auroc: f64,
    pub f1: f64,
    pub threshold: f64,
    pub n: usize,
    pub incidence: f64,
}

fn summarize(scores: &[f64], labels: &[u8]) -> Result<MetricsSummary> {
    let (threshold, f1) = youden_threshold(scores, labels)?;
    Ok(MetricsSummary {
        auroc: auroc(scores, labels)?,
        f1,
        threshold,
        n: labels.len(),
        incidence: incidence(labels),
    })
}

/// Everything measured for one (task, model, factor) training run.
#[derive(Debug, Clone)]
pub struct FactorOutcome {
    pub factor: u32,
    /// Internal validation AUROC of the returned (best-validation) model —
    /// the selection criterion for the factor sweep.
    pub val_auroc: f64,
    pub internal: MetricsSummary,
    pub externals: Vec<(String, MetricsSummary)>,
}

/// Train one model at one augmentation factor and measure it everywhere.
pub fn evaluate_at_factor(
    splits: &TaskSplits,
    reps: &RepresentationMatrix,
    sets: &NeighborSets,
    catalog: &ConceptCatalog,
    kind: ModelKind,
    factor: u32,
    cfg: &BenchmarkConfig,
) -> Result<FactorOutcome> {
    let augment_cfg = AugmentConfig {
        replace_prob: cfg.replace_prob,
        factor,
        seed: cfg.augment_seed,
    };
    let train = augment_dataset(&splits.train, sets, catalog, &augment_cfg)?;

    let label_vec = |ds: &TrajectoryDataset| ds.items.iter().map(|i| i.label).collect::<Vec<u8>>();
    let (val_auroc, internal, externals) = match kind {
        ModelKind::Frozen => {
            let (train_enc, train_labels) = encode_dataset(&train, reps)?;
            let (val_enc, val_labels) = encode_dataset(&splits.val, reps)?;
            let head = train_head(&train_enc, &train_labels, &val_enc, &val_labels, &cfg.classifier)?;
            let (test_enc, test_labels) = encode_dataset(&splits.test, reps)?;
            let internal = summarize(&head.score(&test_enc), &test_labels)?;
            let mut externals = Vec::with_capacity(splits.externals.len());
            for (name, ds) in &splits.externals {
                let (enc, labels) = encode_dataset(ds, reps)?;
                externals.push((name.clone(), summarize(&head.score(&enc), &labels)?));
            }
            (head.val_auroc, internal, externals)
        }
        ModelKind::IndexBaseline => {
            let baseline = train_index_baseline(
                &train,
                &splits.val,
                catalog.len(),
                reps.h(),
                &cfg.classifier,
            )?;
            let internal = summarize(&baseline.score(&splits.test)?, &label_vec(&splits.test))?;
            let mut externals = Vec::with_capacity(splits.externals.len());
            for (name, ds) in &splits.externals {
                externals.push((name.clone(), summarize(&baseline.score(ds)?, &label_vec(ds))?));
            }
            (baseline.val_auroc, internal, externals)
        }
    };
    Ok(FactorOutcome {
        factor,
        val_auroc,
        internal,
        externals,
    })
}

/// One line of the final report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub model: String,
    pub task: String,
    /// "internal" or the external set's name.
    pub dataset: String,
    /// The factor selected by internal validation for this task.
    pub factor: u32,
    /// Internal validation AUROC of the selected model.
    pub val_auroc: f64,
    pub auroc: f64,
    pub f1: f64,
    pub threshold: f64,
    pub n: usize,
    pub incidence: f64,
}

/// Benchmark results: per task, internal-test and external rows for the
/// factor selected by internal validation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

const REPORT_HEADER: &str =
    "model\ttask\tdataset\tfactor\tval_auroc\tauroc\tf1\tthreshold\tn\tincidence";

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.6}\n",
                r.model,
                r.task,
                r.dataset,
                r.factor,
                r.val_auroc,
                r.auroc,
                r.f1,
                r.threshold,
                r.n,
                r.incidence
            ));
        }
        out
    }

    pub fn to_json(&self, seed: u64, config_hash: u64) -> String {
        #[derive(Serialize)]
        struct Document<'a> {
            seed: u64,
            config_hash: String,
            rows: &'a [ReportRow],
        }
        let doc = Document {
            seed,
            config_hash: format!("{config_hash:016x}"),
            rows: &self.rows,
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }

    /// Write `report.tsv` and `report.json` under `dir`.
    pub fn write(&self, dir: &Path, seed: u64, config_hash: u64) -> Result<(PathBuf, PathBuf)> {
        let tsv_path = dir.join("report.tsv");
        let json_path = dir.join("report.json");
        let comment = format!("seed={seed} config={config_hash:016x}");
        write_tsv(&tsv_path, Some(&comment), &self.to_tsv())?;
        std::fs::write(&json_path, self.to_json(seed, config_hash))
            .map_err(|e| Error::io(&json_path, e))?;
        Ok((tsv_path, json_path))
    }
}

/// Run the factor sweep for every task and assemble the report.
///
/// Per task: one training run per factor, selection by internal validation
/// AUROC with ties to the lowest factor, then one internal-test row and one
/// row per external set, all stamped with the selected factor.
pub fn run_benchmark(
    tasks: &[TaskSplits],
    reps: &RepresentationMatrix,
    sets: &NeighborSets,
    catalog: &ConceptCatalog,
    kind: ModelKind,
    cfg: &BenchmarkConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut factors = cfg.factors.clone();
    factors.sort_unstable();
    factors.dedup();

    let mut report = EvalReport::default();
    for splits in tasks {
        let mut best: Option<FactorOutcome> = None;
        for &factor in &factors {
            let outcome = evaluate_at_factor(splits, reps, sets, catalog, kind, factor, cfg)?;
            log::info!(
                "task {} {} factor {factor}: internal val auroc {:.4}",
                splits.task,
                kind.as_str(),
                outcome.val_auroc
            );
            // Strictly-greater keeps the lowest factor on ties (ascending
            // sweep order).
            if best.as_ref().map_or(true, |b| outcome.val_auroc > b.val_auroc) {
                best = Some(outcome);
            }
        }
        let best = best.expect("factor list is non-empty");
        let mut push = |dataset: &str, m: &MetricsSummary| {
            report.rows.push(ReportRow {
                model: kind.as_str().to_string(),
                task: splits.task.to_string(),
                dataset: dataset.to_string(),
                factor: best.factor,
                val_auroc: best.val_auroc,
                auroc: m.auroc,
                f1: m.f1,
                threshold: m.threshold,
                n: m.n,
                incidence: m.incidence,
            });
        };
        push("internal", &best.internal);
        for (name, m) in &best.externals {
            push(name, m);
        }
    }
    Ok(report)
}
