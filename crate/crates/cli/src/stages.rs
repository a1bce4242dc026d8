//! The pipeline stages behind each subcommand.
//!
//! Stages hand artifacts to each other through files. Every binary output
//! carries a provenance block (seed, config hash, named input checksums),
//! and every consumer re-checksums the inputs recorded by its upstream
//! producer: a stage that is rerun against artifacts from a different
//! configuration or an edited file fails with a checksum mismatch instead
//! of silently mixing versions.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use omoprep_core::container::{bytes_checksum, file_checksum, write_tsv, Provenance};
use omoprep_core::eval::{run_benchmark, BenchmarkConfig, ModelKind, TaskSplits};
use omoprep_core::graph::{history_to_tsv, train_representations, write_checkpoint};
use omoprep_core::neighbors::{build_neighbor_sets, NeighborSets};
use omoprep_core::pipeline::prepare_task_splits;
use omoprep_core::repr::{load_embedding_matrix, MatrixDtype, ReprKind, RepresentationMatrix};
use omoprep_core::synth::{
    apply_vocabulary_shift, generate_cohort, generate_vocabulary, SynthSpec,
};
use omoprep_core::trajectory::records::{
    load_patients, load_records, load_visits, save_patients, save_records, save_visits,
};
use omoprep_core::trajectory::TrajectoryDataset;
use omoprep_core::vocab::{ConceptCatalog, RelationGraph};
use omoprep_core::{augment::augment_dataset, Error, Result};

use crate::config::PipelineConfig;

pub const REPRESENTATIONS_FILE: &str = "representations.bin";
pub const MODEL_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const NEIGHBORS_FILE: &str = "neighbors.bin";

/// Neighbor count used when recoding records onto the held-out vocabulary:
/// the recoder looks up siblings by the raw text features, not the trained
/// representations, since the external institution has no access to those.
const SHIFT_NEIGHBORS: usize = 10;
/// Generator stream reserved for the synthetic recoding pass.
const SHIFT_STREAM: u64 = 0x51;

/// Re-checksum an input that the producer of `prov` recorded under `name`.
/// Producers that predate an input (or TSV inputs with no provenance) are
/// skipped — only a recorded-but-different checksum is an error.
fn verify_chain(prov: Option<&Provenance>, name: &str, path: &Path) -> Result<()> {
    let Some(prov) = prov else { return Ok(()) };
    let Some(expected) = prov.input_checksum(name) else {
        return Ok(());
    };
    let got = file_checksum(path)?;
    if expected != got {
        return Err(Error::ChecksumMismatch {
            artifact: format!("{name} ({})", path.display()),
            expected,
            got,
        });
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Generate the synthetic vocabulary, cohort, and externally recoded
/// records. Writes the four vocabulary/cohort artifacts plus the patient
/// and visit sidecars and the shifted record file.
pub fn cmd_synth(spec_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let mut spec: SynthSpec = toml::from_str(&text)
        .map_err(|e| Error::BadConfig(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let hash = bytes_checksum(format!("{spec:?}").as_bytes());
    let comment = format!("seed={} config={hash:016x}", spec.seed);
    ensure_dir(out_dir)?;

    let vocab = generate_vocabulary(&spec)?;
    let cohort = generate_cohort(&spec, &vocab)?;
    info!(
        "generated {} concepts, {} patients, {} records",
        vocab.catalog.len(),
        cohort.patients.len(),
        cohort.records.len()
    );

    vocab
        .catalog
        .save(&out_dir.join("catalog.tsv"), Some(&comment))?;
    vocab
        .graph
        .save(&out_dir.join("edges.tsv"), &vocab.catalog, Some(&comment))?;
    let prov = Provenance::new(spec.seed, hash);
    vocab
        .text
        .write(&out_dir.join("embeddings.bin"), MatrixDtype::F64, Some(&prov))?;
    save_records(&out_dir.join("records.tsv"), &cohort.records, Some(&comment))?;
    save_patients(&out_dir.join("patients.tsv"), &cohort.patients, Some(&comment))?;
    save_visits(&out_dir.join("visits.tsv"), &cohort.visits, Some(&comment))?;

    let text_sets = build_neighbor_sets(&vocab.text, &vocab.catalog, SHIFT_NEIGHBORS, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SHIFT_STREAM);
    let shifted = apply_vocabulary_shift(
        &cohort.records,
        &vocab,
        &text_sets,
        spec.shift_rate,
        &mut rng,
    )?;
    save_records(&out_dir.join("records.shifted.tsv"), &shifted, Some(&comment))?;
    info!("wrote synthetic artifacts to {}", out_dir.display());
    Ok(())
}

/// Train concept representations over the ontology and write the matrix,
/// the model checkpoint, and the iteration log.
pub fn cmd_train_reps(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.config_hash();
    let catalog = ConceptCatalog::load(&cfg.paths.catalog)?;
    let graph = RelationGraph::load(&cfg.paths.edges, &catalog)?;
    let text = load_embedding_matrix(&cfg.paths.embeddings, &catalog)?;

    let outcome = train_representations(&text, &graph, &cfg.train)?;
    let iterations = outcome.history.last().map(|r| r.iteration).unwrap_or(0);
    info!("training stopped after iteration {iterations}");

    ensure_dir(&cfg.output_dir)?;
    let prov = Provenance::new(cfg.seed, hash)
        .with_input("catalog", file_checksum(&cfg.paths.catalog)?)
        .with_input("edges", file_checksum(&cfg.paths.edges)?)
        .with_input("embeddings", file_checksum(&cfg.paths.embeddings)?);
    outcome.representations.write(
        &cfg.artifact(REPRESENTATIONS_FILE),
        MatrixDtype::F64,
        Some(&prov),
    )?;
    write_checkpoint(
        &cfg.artifact(MODEL_FILE),
        &outcome.encoder,
        iterations,
        &outcome.rng,
        Some(&prov),
    )?;
    let comment = format!("seed={} config={hash:016x}", cfg.seed);
    write_tsv(
        &cfg.artifact(TRAIN_LOG_FILE),
        Some(&comment),
        &history_to_tsv(&outcome.history),
    )?;
    Ok(())
}

/// Extract each concept's nearest neighbors in representation space.
pub fn cmd_neighbors(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.config_hash();
    let catalog = ConceptCatalog::load(&cfg.paths.catalog)?;
    let reps_path = cfg.artifact(REPRESENTATIONS_FILE);
    let (reps, reps_prov) = RepresentationMatrix::read(&reps_path, ReprKind::Graph)?;
    verify_chain(reps_prov.as_ref(), "catalog", &cfg.paths.catalog)?;

    let sets = build_neighbor_sets(&reps, &catalog, cfg.neighbor_count, cfg.same_domain_only)?;
    let prov = Provenance::new(cfg.seed, hash)
        .with_input("catalog", file_checksum(&cfg.paths.catalog)?)
        .with_input("representations", file_checksum(&reps_path)?)
        .with_param("neighbor_count", cfg.neighbor_count)
        .with_param("same_domain_only", cfg.same_domain_only);
    sets.write(&cfg.artifact(NEIGHBORS_FILE), Some(&prov))?;
    info!("wrote {}", cfg.artifact(NEIGHBORS_FILE).display());
    Ok(())
}

/// File name of one task's split dataset, e.g. `mt_train.traj`.
pub fn trajectory_file(task: omoprep_core::trajectory::Task, dataset: &str) -> String {
    format!("{}_{dataset}.traj", task.as_str().to_lowercase())
}

/// Build the labeled per-task trajectory datasets for every split.
pub fn cmd_build_trajectories(cfg: &PipelineConfig) -> Result<()> {
    let hash = cfg.config_hash();
    let catalog = ConceptCatalog::load(&cfg.paths.catalog)?;
    let records = load_records(&cfg.paths.records)?;
    let patients = load_patients(&cfg.paths.patients)?;
    let visits = load_visits(&cfg.paths.visits)?;
    let external = cfg
        .paths
        .external_records
        .as_ref()
        .map(|p| load_records(p))
        .transpose()?;

    let (splits, _bins) = prepare_task_splits(
        &records,
        external.as_deref(),
        &patients,
        &visits,
        &catalog,
        &cfg.tasks(),
        cfg.max_len,
        cfg.seed,
    )?;

    ensure_dir(&cfg.output_dir)?;
    let mut base_prov = Provenance::new(cfg.seed, hash)
        .with_input("catalog", file_checksum(&cfg.paths.catalog)?)
        .with_input("records", file_checksum(&cfg.paths.records)?)
        .with_input("patients", file_checksum(&cfg.paths.patients)?)
        .with_input("visits", file_checksum(&cfg.paths.visits)?)
        .with_param("max_len", cfg.max_len);
    if let Some(p) = &cfg.paths.external_records {
        base_prov = base_prov.with_input("external_records", file_checksum(p)?);
    }

    for split in &splits {
        let write = |ds: &TrajectoryDataset, dataset: &str| -> Result<()> {
            let path = cfg.output_dir.join(trajectory_file(split.task, dataset));
            let prov = base_prov
                .clone()
                .with_param("task", split.task.as_str())
                .with_param("dataset", dataset);
            ds.write(&path, Some(&prov))?;
            info!("wrote {} ({} items)", path.display(), ds.len());
            Ok(())
        };
        write(&split.train, "train")?;
        write(&split.val, "val")?;
        write(&split.test, "test")?;
        for (name, ds) in &split.externals {
            write(ds, &format!("external_{name}"))?;
        }
    }
    Ok(())
}

/// Expand one trajectory dataset with neighbor-replacement copies.
pub fn cmd_augment(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<()> {
    let hash = cfg.config_hash();
    let catalog = ConceptCatalog::load(&cfg.paths.catalog)?;
    let nbr_path = cfg.artifact(NEIGHBORS_FILE);
    let (sets, nbr_prov) = NeighborSets::read(&nbr_path)?;
    verify_chain(nbr_prov.as_ref(), "catalog", &cfg.paths.catalog)?;
    let (dataset, ds_prov) = TrajectoryDataset::read(input)?;
    verify_chain(ds_prov.as_ref(), "catalog", &cfg.paths.catalog)?;

    let augmented = augment_dataset(&dataset, &sets, &catalog, &cfg.augment)?;
    let prov = Provenance::new(cfg.seed, hash)
        .with_input("input", file_checksum(input)?)
        .with_input("neighbors", file_checksum(&nbr_path)?)
        .with_input("catalog", file_checksum(&cfg.paths.catalog)?)
        .with_param("factor", cfg.augment.factor)
        .with_param("replace_prob", cfg.augment.replace_prob);
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    augmented.write(output, Some(&prov))?;
    info!(
        "wrote {} ({} items from {})",
        output.display(),
        augmented.len(),
        dataset.len()
    );
    Ok(())
}

/// Sweep augmentation factors for both model kinds and write the report.
pub fn cmd_benchmark(cfg: &PipelineConfig, report_dir: &Path) -> Result<()> {
    let hash = cfg.config_hash();
    let catalog = ConceptCatalog::load(&cfg.paths.catalog)?;
    let reps_path = cfg.artifact(REPRESENTATIONS_FILE);
    let (reps, reps_prov) = RepresentationMatrix::read(&reps_path, ReprKind::Graph)?;
    verify_chain(reps_prov.as_ref(), "catalog", &cfg.paths.catalog)?;
    let nbr_path = cfg.artifact(NEIGHBORS_FILE);
    let (sets, nbr_prov) = NeighborSets::read(&nbr_path)?;
    verify_chain(nbr_prov.as_ref(), "catalog", &cfg.paths.catalog)?;
    verify_chain(nbr_prov.as_ref(), "representations", &reps_path)?;

    let mut tasks: Vec<TaskSplits> = Vec::new();
    for task in cfg.tasks() {
        let read = |dataset: &str| -> Result<TrajectoryDataset> {
            let path = cfg.output_dir.join(trajectory_file(task, dataset));
            let (ds, prov) = TrajectoryDataset::read(&path)?;
            verify_chain(prov.as_ref(), "catalog", &cfg.paths.catalog)?;
            Ok(ds)
        };
        let mut externals = Vec::new();
        if cfg.paths.external_records.is_some() {
            externals.push(("shifted".to_string(), read("external_shifted")?));
        }
        tasks.push(TaskSplits {
            task,
            train: read("train")?,
            val: read("val")?,
            test: read("test")?,
            externals,
        });
    }

    let bench = BenchmarkConfig {
        factors: cfg.factors.clone(),
        replace_prob: cfg.augment.replace_prob,
        augment_seed: cfg.seed,
        classifier: cfg.classifier.clone(),
    };
    let mut report = run_benchmark(&tasks, &reps, &sets, &catalog, ModelKind::Frozen, &bench)?;
    let baseline = run_benchmark(
        &tasks,
        &reps,
        &sets,
        &catalog,
        ModelKind::IndexBaseline,
        &bench,
    )?;
    report.rows.extend(baseline.rows);

    ensure_dir(report_dir)?;
    let (tsv, json) = report.write(report_dir, cfg.seed, hash)?;
    info!("wrote {} and {}", tsv.display(), json.display());
    Ok(())
}

/// Resolve the report directory: explicit flag, else the output directory.
pub fn report_dir(cfg: &PipelineConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output_dir.clone())
}
