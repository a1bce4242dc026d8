//! Alternating-objective training of the graph encoder.
//!
//! Odd iterations take one contrastive step: sample a seed batch, grow a
//! fanout-limited subgraph, corrupt it into two views, and pull the two
//! encodings of each seed together while pushing the rest apart. Even
//! iterations reuse the same subgraph uncorrupted and take one distillation
//! step that keeps each seed's encoding close (in softmax space) to its text
//! embedding. Early stopping watches the contrastive loss only.
//!
//! Inference never samples: the graph is encoded in chunks through the exact
//! two-hop closure with full-graph normalization degrees, which reproduces
//! the single-pass full-graph forward bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adj::NormAdj;
use super::encoder::GcnEncoder;
use super::loss::{contrastive_loss_grad, kd_loss_grad};
use super::sample::{full_closure, sample_subgraph, Subgraph};
use super::view::generate_view;
use crate::container::{
    open_reader, r_f64, r_u32, r_u64, read_header, read_provenance, w_f64, w_u32, w_u64,
    write_header, write_provenance, Provenance, MAGIC_MODEL,
};
use crate::error::{Error, Result};
use crate::repr::{ReprKind, RepresentationMatrix};
use crate::vocab::{RelationGraph, NUM_SPECIAL};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub feature_mask_rate: f64,
    pub edge_drop_rate: f64,
    pub temperature: f64,
    pub max_iterations: u32,
    pub patience: u32,
    pub hop_fanouts: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2048,
            learning_rate: 5e-4,
            weight_decay: 0.01,
            feature_mask_rate: 0.2,
            edge_drop_rate: 0.2,
            temperature: 0.5,
            max_iterations: 200,
            patience: 20,
            hop_fanouts: vec![30, 20, 10],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::BadConfig(what.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative and finite");
        }
        for (name, rate) in [
            ("feature_mask_rate", self.feature_mask_rate),
            ("edge_drop_rate", self.edge_drop_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
                return Err(Error::BadConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive and finite");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if self.hop_fanouts.is_empty() {
            return bad("hop_fanouts must name at least one hop");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Contrastive,
    Distill,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Contrastive => "G",
            Phase::Distill => "KD",
        })
    }
}

#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: u32,
    pub phase: Phase,
    pub loss: f64,
    /// Best contrastive loss seen so far (the early-stopping criterion).
    pub best_contrastive: f64,
    pub patience_left: u32,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub representations: RepresentationMatrix,
    pub encoder: GcnEncoder,
    pub history: Vec<IterationRecord>,
    /// Generator state after the final iteration, for checkpointing.
    pub rng: ChaCha8Rng,
}

fn gather(x: &ArrayView2<f64>, rows: &[u32]) -> Array2<f64> {
    let idx: Vec<usize> = rows.iter().map(|&r| r as usize).collect();
    x.select(Axis(0), &idx)
}

pub fn train_representations(
    text: &RepresentationMatrix,
    graph: &RelationGraph,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = graph.num_nodes();
    if text.n() != n as usize {
        return Err(Error::BadDimension {
            expected: n as usize,
            got: text.n(),
        });
    }
    let h = text.h();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut encoder = GcnEncoder::init(h, &mut rng)?;

    // Reserved token rows carry no clinical meaning (and the padding row is
    // all zeros), so they never seed a batch.
    let pool: Vec<u32> = (NUM_SPECIAL..n).collect();
    if cfg.max_iterations > 0 && pool.is_empty() {
        return Err(Error::TooFewConcepts { needed: 1, got: 0 });
    }

    let x = text.values();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut patience_left = cfg.patience;
    let mut pending: Option<(Subgraph, Array2<f64>)> = None;

    for iteration in 1..=cfg.max_iterations {
        if iteration % 2 == 1 {
            let k = cfg.batch_size.min(pool.len());
            let mut picks = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
            picks.sort_unstable();
            let seeds: Vec<u32> = picks.into_iter().map(|i| pool[i]).collect();
            let sub = sample_subgraph(graph, &seeds, &cfg.hop_fanouts, &mut rng);
            let x_sub = gather(&x.view(), &sub.nodes);
            let n_sub = sub.nodes.len();

            let v1 = generate_view(
                &x_sub.view(),
                &sub.edges,
                cfg.feature_mask_rate,
                cfg.edge_drop_rate,
                &mut rng,
            );
            let v2 = generate_view(
                &x_sub.view(),
                &sub.edges,
                cfg.feature_mask_rate,
                cfg.edge_drop_rate,
                &mut rng,
            );
            let adj1 = NormAdj::from_edges(n_sub, &v1.edges);
            let adj2 = NormAdj::from_edges(n_sub, &v2.edges);
            let c1 = encoder.forward_cached(&v1.x.view(), &adj1)?;
            let c2 = encoder.forward_cached(&v2.x.view(), &adj2)?;
            let u = gather(&c1.out.view(), &sub.seed_rows);
            let v = gather(&c2.out.view(), &sub.seed_rows);
            let (loss, du, dv) = contrastive_loss_grad(&u.view(), &v.view(), cfg.temperature)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    iteration,
                    msg: format!("contrastive loss is {loss}"),
                });
            }

            let mut g1 = Array2::zeros((n_sub, h));
            let mut g2 = Array2::zeros((n_sub, h));
            for (j, &row) in sub.seed_rows.iter().enumerate() {
                g1.row_mut(row as usize).assign(&du.row(j));
                g2.row_mut(row as usize).assign(&dv.row(j));
            }
            let mut grads = encoder.backward(&adj1, &c1, &g1);
            grads.add(&encoder.backward(&adj2, &c2, &g2));
            encoder.apply_step(&grads, cfg.learning_rate, cfg.weight_decay);

            if loss < best {
                best = loss;
                patience_left = cfg.patience;
            } else {
                patience_left -= 1;
            }
            history.push(IterationRecord {
                iteration,
                phase: Phase::Contrastive,
                loss,
                best_contrastive: best,
                patience_left,
            });
            pending = Some((sub, x_sub));
            if patience_left == 0 {
                break;
            }
        } else {
            let (sub, x_sub) = pending
                .take()
                .expect("distillation always follows a contrastive step");
            let n_sub = sub.nodes.len();
            // Distillation sees the graph uncorrupted, normalized by
            // full-graph degrees — the same operator inference uses.
            let adj = NormAdj::with_degrees(n_sub, &sub.edges, &sub.global_degree);
            let cache = encoder.forward_cached(&x_sub.view(), &adj)?;
            let teacher = gather(&x_sub.view(), &sub.seed_rows);
            let student = gather(&cache.out.view(), &sub.seed_rows);
            let (loss, ds) = kd_loss_grad(&teacher.view(), &student.view())?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    iteration,
                    msg: format!("distillation loss is {loss}"),
                });
            }
            let mut g = Array2::zeros((n_sub, h));
            for (j, &row) in sub.seed_rows.iter().enumerate() {
                g.row_mut(row as usize).assign(&ds.row(j));
            }
            let grads = encoder.backward(&adj, &cache, &g);
            encoder.apply_step(&grads, cfg.learning_rate, cfg.weight_decay);
            history.push(IterationRecord {
                iteration,
                phase: Phase::Distill,
                loss,
                best_contrastive: best,
                patience_left,
            });
        }
    }

    let representations = infer_full_coverage(&encoder, text, graph, cfg.batch_size)?;
    Ok(TrainOutcome {
        representations,
        encoder,
        history,
        rng,
    })
}

/// Encode every node by chunks of seeds, each through its exact two-hop
/// closure with full-graph degrees. Output row k is the graph representation
/// of node k.
pub fn infer_full_coverage(
    encoder: &GcnEncoder,
    text: &RepresentationMatrix,
    graph: &RelationGraph,
    chunk_size: usize,
) -> Result<RepresentationMatrix> {
    if chunk_size == 0 {
        return Err(Error::BadConfig("inference chunk size must be positive".into()));
    }
    let n = graph.num_nodes() as usize;
    if text.n() != n {
        return Err(Error::BadDimension {
            expected: n,
            got: text.n(),
        });
    }
    let x = text.values();
    let mut out = Array2::zeros((n, encoder.hidden_dim()));
    let mut start = 0usize;
    while start < n {
        let end = (start + chunk_size).min(n);
        let seeds: Vec<u32> = (start as u32..end as u32).collect();
        let sub = full_closure(graph, &seeds, 2);
        let x_sub = gather(&x.view(), &sub.nodes);
        let adj = NormAdj::with_degrees(sub.nodes.len(), &sub.edges, &sub.global_degree);
        let res = encoder.forward(&x_sub.view(), &adj)?;
        for (j, &row) in sub.seed_rows.iter().enumerate() {
            out.row_mut(start + j).assign(&res.row(row as usize));
        }
        start = end;
    }
    if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            iteration: 0,
            msg: format!(
                "inference produced a non-finite value at row {}",
                pos / encoder.hidden_dim()
            ),
        });
    }
    RepresentationMatrix::new(ReprKind::Graph, out)
}

/// Loss history as a tab-separated table.
pub fn history_to_tsv(history: &[IterationRecord]) -> String {
    let mut out = String::from("iter\tphase\tloss\tbest_G\tpatience_left\n");
    for r in history {
        out.push_str(&format!(
            "{}\t{}\t{:.12e}\t{:.12e}\t{}\n",
            r.iteration, r.phase, r.loss, r.best_contrastive, r.patience_left
        ));
    }
    out
}

/// Persist the encoder plus enough generator state to continue drawing the
/// exact random sequence training would have drawn next.
pub fn write_checkpoint(
    path: &Path,
    encoder: &GcnEncoder,
    iterations_run: u32,
    rng: &ChaCha8Rng,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    write_header(&mut w, MAGIC_MODEL).map_err(io)?;
    let h = encoder.hidden_dim();
    w_u32(&mut w, h as u32).map_err(io)?;
    for m in [&encoder.w1, &encoder.w2] {
        for &v in m.iter() {
            w_f64(&mut w, v).map_err(io)?;
        }
    }
    w_f64(&mut w, encoder.slope1).map_err(io)?;
    w_f64(&mut w, encoder.slope2).map_err(io)?;
    w_u32(&mut w, iterations_run).map_err(io)?;
    w.write_all(&rng.get_seed()).map_err(io)?;
    w_u64(&mut w, rng.get_stream()).map_err(io)?;
    let pos = rng.get_word_pos();
    w_u64(&mut w, pos as u64).map_err(io)?;
    w_u64(&mut w, (pos >> 64) as u64).map_err(io)?;
    if let Some(p) = provenance {
        write_provenance(&mut w, p).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_checkpoint(
    path: &Path,
) -> Result<(GcnEncoder, u32, ChaCha8Rng, Option<Provenance>)> {
    let mut r = open_reader(path)?;
    let io = |e: std::io::Error| Error::io(path, e);
    read_header(&mut r, MAGIC_MODEL, path)?;
    let h = r_u32(&mut r).map_err(io)? as usize;
    let read_matrix = |r: &mut std::io::BufReader<File>| -> Result<Array2<f64>> {
        let mut m = Array2::zeros((h, h));
        for v in m.iter_mut() {
            *v = r_f64(r).map_err(io)?;
        }
        Ok(m)
    };
    let w1 = read_matrix(&mut r)?;
    let w2 = read_matrix(&mut r)?;
    let slope1 = r_f64(&mut r).map_err(io)?;
    let slope2 = r_f64(&mut r).map_err(io)?;
    let iterations_run = r_u32(&mut r).map_err(io)?;
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed).map_err(io)?;
    let stream = r_u64(&mut r).map_err(io)?;
    let lo = r_u64(&mut r).map_err(io)? as u128;
    let hi = r_u64(&mut r).map_err(io)? as u128;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(lo | (hi << 64));
    let provenance = read_provenance(&mut r, path)?;
    let encoder = GcnEncoder {
        w1,
        w2,
        slope1,
        slope2,
    };
    Ok((encoder, iterations_run, rng, provenance))
}
