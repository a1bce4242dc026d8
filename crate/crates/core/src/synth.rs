//! Deterministic desk-scale data generator: a clustered concept vocabulary
//! with a stochastic-block-model relation graph, patient cohorts whose
//! outcomes depend on which clusters their records are drawn from, and a
//! vocabulary-shift operator that recodes records to cluster siblings held
//! out of the internal cohort — the unseen-code phenomenon an external
//! institution's data exhibits.
//!
//! Everything is a pure function of (spec, seed): the vocabulary uses rng
//! stream 0 and each patient gets stream `patient_id`, so cohorts are
//! reproducible record-for-record regardless of traversal order.

use std::collections::HashMap;

use chrono::{Days, NaiveDate, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::NeighborSets;
use crate::repr::RepresentationMatrix;
use crate::text::build_text_matrix;
use crate::trajectory::records::{ClinicalRecord, PatientInfo, VisitInfo};
use crate::vocab::{Concept, ConceptCatalog, Domain, RelationGraph, NUM_SPECIAL};

/// Marker for rows (specials) that belong to no cluster.
const NO_CLUSTER: u32 = u32::MAX;

/// Generator settings. All fields have working defaults, so a TOML spec can
/// override only what an experiment varies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub num_clusters: u32,
    pub concepts_per_cluster: u32,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub num_patients: u32,
    pub min_visits: u32,
    pub max_visits: u32,
    /// Strength of the cluster → outcome log-odds signal (0 = no signal).
    pub signal_strength: f64,
    /// Per-record probability of recoding under the vocabulary shift.
    pub shift_rate: f64,
    pub mortality_incidence: f64,
    pub long_stay_incidence: f64,
    pub readmission_incidence: f64,
    /// Width of the stub text-feature vectors.
    pub embed_dim: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_clusters: 4,
            concepts_per_cluster: 50,
            intra_edge_prob: 0.3,
            inter_edge_prob: 0.01,
            num_patients: 5000,
            min_visits: 2,
            max_visits: 4,
            signal_strength: 2.0,
            shift_rate: 0.36,
            mortality_incidence: 0.0368,
            long_stay_incidence: 0.3090,
            readmission_incidence: 0.0211,
            embed_dim: 32,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters < 2 || self.num_clusters > 500 {
            return Err(Error::BadConfig(format!(
                "num_clusters {} outside 2..=500",
                self.num_clusters
            )));
        }
        if self.concepts_per_cluster < 1 || self.concepts_per_cluster > 999 {
            return Err(Error::BadConfig(format!(
                "concepts_per_cluster {} outside 1..=999",
                self.concepts_per_cluster
            )));
        }
        for (name, p) in [
            ("intra_edge_prob", self.intra_edge_prob),
            ("inter_edge_prob", self.inter_edge_prob),
            ("shift_rate", self.shift_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::BadConfig(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.intra_edge_prob <= self.inter_edge_prob {
            return Err(Error::BadConfig(format!(
                "intra_edge_prob {} must exceed inter_edge_prob {}",
                self.intra_edge_prob, self.inter_edge_prob
            )));
        }
        if self.num_patients == 0 {
            return Err(Error::BadConfig("num_patients must be positive".into()));
        }
        if self.min_visits < 1 || self.min_visits > self.max_visits {
            return Err(Error::BadConfig(format!(
                "visit range {}..={} is invalid",
                self.min_visits, self.max_visits
            )));
        }
        if !self.signal_strength.is_finite() || self.signal_strength < 0.0 {
            return Err(Error::BadConfig(format!(
                "signal_strength {} must be finite and non-negative",
                self.signal_strength
            )));
        }
        for (name, t) in [
            ("mortality_incidence", self.mortality_incidence),
            ("long_stay_incidence", self.long_stay_incidence),
            ("readmission_incidence", self.readmission_incidence),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::BadConfig(format!("{name} {t} outside (0, 1)")));
            }
        }
        if self.embed_dim == 0 {
            return Err(Error::BadConfig("embed_dim must be positive".into()));
        }
        Ok(())
    }

    /// Concepts held out of each cluster's internal pool (external-only).
    fn held_out_per_cluster(&self) -> u32 {
        self.concepts_per_cluster / 5
    }
}

/// Generated vocabulary: catalog + relation graph + stub text features,
/// plus the cluster structure the cohort and shift generators rely on.
#[derive(Debug, Clone)]
pub struct SynthVocabulary {
    pub catalog: ConceptCatalog,
    pub graph: RelationGraph,
    pub text: RepresentationMatrix,
    pub descriptions: HashMap<u64, String>,
    /// Cluster per dense index; specials carry a sentinel.
    pub clusters: Vec<u32>,
    /// Dense indices reserved as external-only codes.
    pub held_out: Vec<bool>,
}

impl SynthVocabulary {
    pub fn cluster_of(&self, dense: u32) -> Option<u32> {
        self.clusters
            .get(dense as usize)
            .copied()
            .filter(|&c| c != NO_CLUSTER)
    }

    /// Dense indices of `cluster` available to internal cohorts.
    pub fn internal_pool(&self, cluster: u32) -> Vec<u32> {
        self.pool(cluster, false)
    }

    /// Dense indices of `cluster` reserved for the external institution.
    pub fn held_out_pool(&self, cluster: u32) -> Vec<u32> {
        self.pool(cluster, true)
    }

    fn pool(&self, cluster: u32, held_out: bool) -> Vec<u32> {
        (0..self.clusters.len() as u32)
            .filter(|&d| self.clusters[d as usize] == cluster && self.held_out[d as usize] == held_out)
            .collect()
    }
}

/// Synthetic concept ids are `(cluster + 1) * 1000 + index_in_cluster`.
fn concept_id_for(cluster: u32, index: u32) -> u64 {
    (cluster as u64 + 1) * 1000 + index as u64
}

const DOMAIN_CYCLE: [Domain; 4] = [
    Domain::Condition,
    Domain::Drug,
    Domain::Measurement,
    Domain::Procedure,
];

/// Build the clustered vocabulary: concepts with cluster-correlated token
/// descriptions (a shared cluster core plus per-concept noise tokens), a
/// stochastic-block-model relation graph, and stub text features.
pub fn generate_vocabulary(spec: &SynthSpec) -> Result<SynthVocabulary> {
    spec.validate()?;
    let c = spec.num_clusters;
    let cpc = spec.concepts_per_cluster;

    let mut concepts = Vec::with_capacity((c * cpc) as usize);
    let mut descriptions = HashMap::with_capacity((c * cpc) as usize);
    for cluster in 0..c {
        for i in 0..cpc {
            let id = concept_id_for(cluster, i);
            let global = cluster * cpc + i;
            let mut desc = String::new();
            for j in 0..6 {
                desc.push_str(&format!("k{cluster}w{j} "));
            }
            desc.push_str(&format!("n{id}w0 n{id}w1"));
            descriptions.insert(id, desc);
            concepts.push(Concept {
                concept_id: id,
                name: format!("synthetic concept {id}"),
                domain: DOMAIN_CYCLE[(global % 4) as usize],
                decile: None,
            });
        }
    }
    let catalog = ConceptCatalog::from_concepts(concepts)?;
    let n = catalog.len() as u32;

    let mut clusters = vec![NO_CLUSTER; n as usize];
    let mut held_out = vec![false; n as usize];
    let held = spec.held_out_per_cluster();
    for cluster in 0..c {
        for i in 0..cpc {
            let dense = NUM_SPECIAL as u32 + cluster * cpc + i;
            clusters[dense as usize] = cluster;
            held_out[dense as usize] = i >= cpc - held;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::new();
    for u in NUM_SPECIAL as u32..n {
        for v in u + 1..n {
            let p = if clusters[u as usize] == clusters[v as usize] {
                spec.intra_edge_prob
            } else {
                spec.inter_edge_prob
            };
            if rng.random_bool(p) {
                pairs.push((u, v));
            }
        }
    }
    let graph = RelationGraph::from_dense_edges(n, pairs)?;
    let text = build_text_matrix(&catalog, &descriptions, spec.embed_dim as usize, spec.seed)?;

    Ok(SynthVocabulary {
        catalog,
        graph,
        text,
        descriptions,
        clusters,
        held_out,
    })
}

/// Generated cohort tables plus the index visit chosen for each patient
/// (the stay whose outcome the tasks label).
#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub patients: Vec<PatientInfo>,
    pub visits: Vec<VisitInfo>,
    pub records: Vec<ClinicalRecord>,
    pub index_visits: Vec<(u64, u64)>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-cluster outcome coefficients spread evenly over [-1, 1].
fn cluster_coefficients(num_clusters: u32) -> Vec<f64> {
    (0..num_clusters)
        .map(|c| 2.0 * c as f64 / (num_clusters - 1) as f64 - 1.0)
        .collect()
}

/// Solve for the intercept a such that the population incidence
/// mean_c sigmoid(a + beta * coeff[c]) hits `target`, by bisection
/// (the mean is strictly increasing in a).
fn calibrate_intercept(beta: f64, coeffs: &[f64], target: f64) -> f64 {
    let mean_at = |a: f64| {
        coeffs.iter().map(|&x| sigmoid(a + beta * x)).sum::<f64>() / coeffs.len() as f64
    };
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Cohort timeline anchor; index admissions land within a year after it.
fn anchor_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

/// Generate patients, visits, and records whose outcome log-odds depend on
/// the patient's primary concept cluster with strength `signal_strength`.
///
/// Each patient's final record-bearing visit is the index stay: its death
/// flag, duration, and any follow-up admission within thirty days realize
/// the sampled mortality / long-stay / readmission outcomes, so labels
/// derived from the visit table match the calibrated incidences. Follow-up
/// (readmission marker) visits carry no records and therefore never become
/// index visits themselves.
pub fn generate_cohort(spec: &SynthSpec, vocab: &SynthVocabulary) -> Result<SynthCohort> {
    spec.validate()?;
    let c = spec.num_clusters;
    let cpc = spec.concepts_per_cluster;
    let internal_per_cluster = cpc - spec.held_out_per_cluster();
    if internal_per_cluster == 0 {
        return Err(Error::BadConfig(
            "no internal concepts left after holding out the external pool".into(),
        ));
    }
    let coeffs = cluster_coefficients(c);
    let beta = spec.signal_strength;
    let p_task: Vec<Vec<f64>> = [
        spec.mortality_incidence,
        spec.long_stay_incidence,
        spec.readmission_incidence,
    ]
    .iter()
    .map(|&target| {
        let a = calibrate_intercept(beta, &coeffs, target);
        coeffs.iter().map(|&x| sigmoid(a + beta * x)).collect()
    })
    .collect();

    let anchor = anchor_date();
    let mut patients = Vec::with_capacity(spec.num_patients as usize);
    let mut visits = Vec::new();
    let mut records = Vec::new();
    let mut index_visits = Vec::with_capacity(spec.num_patients as usize);

    for pid in 1..=spec.num_patients as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(pid);

        let age: i32 = rng.random_range(20..=90);
        let birth_date = NaiveDate::from_yo_opt(2020 - age, rng.random_range(1..=365))
            .expect("day 1..=365 exists in every year");
        patients.push(PatientInfo { patient_id: pid, birth_date });

        let cluster = rng.random_range(0..c);
        let died = rng.random_bool(p_task[0][cluster as usize]);
        let long_stay = rng.random_bool(p_task[1][cluster as usize]);
        let readmitted = rng.random_bool(p_task[2][cluster as usize]);
        let num_visits = rng.random_range(spec.min_visits..=spec.max_visits);

        let index_admit = (anchor + Days::new(rng.random_range(30..365)))
            .and_hms_opt(8, 0, 0)
            .expect("valid time");
        let stay_hours: i64 = if long_stay {
            rng.random_range(169..=336)
        } else {
            rng.random_range(24..=168)
        };
        let index_discharge = index_admit + TimeDelta::hours(stay_hours);

        // Walk backwards from the index admission so history stays are
        // well-separated and strictly earlier.
        let mut stays = Vec::with_capacity(num_visits as usize);
        let mut cursor = index_admit;
        for _ in 1..num_visits {
            let gap_days: i64 = rng.random_range(45..=120);
            let dur_hours: i64 = rng.random_range(24..=72);
            let discharge = cursor - TimeDelta::days(gap_days);
            let admit = discharge - TimeDelta::hours(dur_hours);
            stays.push((admit, discharge));
            cursor = admit;
        }
        stays.reverse();
        stays.push((index_admit, index_discharge));

        for (k, &(admit, discharge)) in stays.iter().enumerate() {
            let visit_id = k as u64 + 1;
            let is_index = visit_id == num_visits as u64;
            visits.push(VisitInfo {
                patient_id: pid,
                visit_id,
                admit,
                discharge,
                died: is_index && died,
            });
            let num_records = rng.random_range(3..=8);
            for i in 0..num_records {
                let draw_cluster = if rng.random_bool(0.7) {
                    cluster
                } else {
                    let mut other = rng.random_range(0..c - 1);
                    if other >= cluster {
                        other += 1;
                    }
                    other
                };
                let within = rng.random_range(0..internal_per_cluster);
                let dense = NUM_SPECIAL as u32 + draw_cluster * cpc + within;
                let concept = vocab.catalog.get(dense);
                records.push(ClinicalRecord {
                    patient_id: pid,
                    concept_id: concept.concept_id,
                    domain: concept.domain,
                    timestamp: admit + TimeDelta::hours(i as i64),
                    numeric_value: None,
                    visit_id,
                });
            }
        }
        index_visits.push((pid, num_visits as u64));

        if readmitted {
            let gap: u64 = rng.random_range(0..=30);
            let marker_admit = index_discharge + TimeDelta::days(gap as i64);
            visits.push(VisitInfo {
                patient_id: pid,
                visit_id: num_visits as u64 + 1,
                admit: marker_admit,
                discharge: marker_admit + TimeDelta::hours(24),
                died: false,
            });
        }
    }

    Ok(SynthCohort {
        patients,
        visits,
        records,
        index_visits,
    })
}

/// Recode each record, with probability `s`, to a same-cluster sibling from
/// the held-out (external-only) pool — nearest such sibling by the neighbor
/// sets when one appears in the record concept's row, otherwise a uniform
/// draw from the pool. Clusters with no held-out siblings fall back to the
/// identity, logged once per cluster. Timestamps, visits, and patients are
/// preserved exactly.
pub fn apply_vocabulary_shift(
    records: &[ClinicalRecord],
    vocab: &SynthVocabulary,
    sets: &NeighborSets,
    s: f64,
    rng: &mut impl Rng,
) -> Result<Vec<ClinicalRecord>> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::BadConfig(format!("shift rate {s} outside [0, 1]")));
    }
    let num_clusters = vocab
        .clusters
        .iter()
        .filter(|&&c| c != NO_CLUSTER)
        .map(|&c| c + 1)
        .max()
        .unwrap_or(0);
    let pools: Vec<Vec<u32>> = (0..num_clusters)
        .map(|c| vocab.held_out_pool(c))
        .collect();
    let mut warned = vec![false; num_clusters as usize];

    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if !rng.random_bool(s) {
            out.push(r.clone());
            continue;
        }
        let dense = vocab
            .catalog
            .dense_index(r.concept_id)
            .ok_or(Error::UnknownConcept(r.concept_id))?;
        let cluster = match vocab.cluster_of(dense) {
            Some(c) => c,
            None => {
                out.push(r.clone());
                continue;
            }
        };
        let nearest = sets.neighbors(dense)?.iter().copied().find(|&nb| {
            (nb as usize) < vocab.held_out.len()
                && vocab.held_out[nb as usize]
                && vocab.clusters[nb as usize] == cluster
        });
        let pool = &pools[cluster as usize];
        let replacement = match nearest {
            Some(nb) => nb,
            None if !pool.is_empty() => pool[rng.random_range(0..pool.len())],
            None => {
                if !warned[cluster as usize] {
                    log::warn!("cluster {cluster} has no held-out siblings; records keep their codes");
                    warned[cluster as usize] = true;
                }
                out.push(r.clone());
                continue;
            }
        };
        let concept = vocab.catalog.get(replacement);
        out.push(ClinicalRecord {
            patient_id: r.patient_id,
            concept_id: concept.concept_id,
            domain: concept.domain,
            timestamp: r.timestamp,
            numeric_value: r
                .numeric_value
                .filter(|_| concept.domain == Domain::Measurement),
            visit_id: r.visit_id,
        });
    }
    Ok(out)
}
