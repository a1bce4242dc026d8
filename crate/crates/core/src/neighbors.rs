//! Exact nearest-neighbor extraction over representation rows.
//!
//! For every eligible concept this finds the M closest other eligible
//! concepts by squared Euclidean distance, breaking ties by ascending row
//! index so the result is a pure function of the matrix. No approximation:
//! distances are computed against every candidate, with a selection step to
//! avoid sorting whole rows.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::container::{
    open_reader, r_u32, r_u64, read_header, read_provenance, w_u32, w_u64, write_header,
    write_provenance, Provenance, MAGIC_NEIGHBORS,
};
use crate::error::{Error, Result};
use crate::repr::RepresentationMatrix;
use crate::vocab::{ConceptCatalog, Domain};

pub const DEFAULT_NEIGHBORS: usize = 30;

/// Marks rows that have no neighbor list (special tokens, filtered rows).
pub const NO_NEIGHBOR: u32 = u32::MAX;

/// Per-concept nearest-neighbor table. Row k lists the dense indices of the
/// M nearest eligible concepts to concept k, nearest first; rows for
/// ineligible concepts are filled with [`NO_NEIGHBOR`].
#[derive(Debug, Clone)]
pub struct NeighborSets {
    m: usize,
    table: Vec<u32>,
    indexed: Vec<bool>,
}

impl NeighborSets {
    pub fn n(&self) -> usize {
        self.indexed.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_indexed(&self, dense: u32) -> bool {
        self.indexed
            .get(dense as usize)
            .copied()
            .unwrap_or(false)
    }

    /// Neighbor row for an indexed concept, nearest first.
    pub fn neighbors(&self, dense: u32) -> Result<&[u32]> {
        if !self.is_indexed(dense) {
            return Err(Error::NotIndexed(dense));
        }
        let start = dense as usize * self.m;
        Ok(&self.table[start..start + self.m])
    }

    pub fn write(&self, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e: std::io::Error| Error::io(path, e);
        write_header(&mut w, MAGIC_NEIGHBORS).map_err(io)?;
        w_u64(&mut w, self.n() as u64).map_err(io)?;
        w_u32(&mut w, self.m as u32).map_err(io)?;
        for &v in &self.table {
            w_u32(&mut w, v).map_err(io)?;
        }
        if let Some(p) = provenance {
            write_provenance(&mut w, p).map_err(io)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<(Self, Option<Provenance>)> {
        let mut r = open_reader(path)?;
        let io = |e: std::io::Error| Error::io(path, e);
        read_header(&mut r, MAGIC_NEIGHBORS, path)?;
        let n = r_u64(&mut r).map_err(io)? as usize;
        let m = r_u32(&mut r).map_err(io)? as usize;
        let mut table = vec![0u32; n * m];
        for v in table.iter_mut() {
            *v = r_u32(&mut r).map_err(io)?;
        }
        let indexed = (0..n)
            .map(|k| m > 0 && table[k * m] != NO_NEIGHBOR)
            .collect();
        let provenance = read_provenance(&mut r, path)?;
        Ok((
            NeighborSets { m, table, indexed },
            provenance,
        ))
    }
}

/// Squared Euclidean distance between rows a and b.
fn dist2(values: &ndarray::Array2<f64>, a: usize, b: usize) -> f64 {
    let ra = values.row(a);
    let rb = values.row(b);
    let mut acc = 0.0;
    for (x, y) in ra.iter().zip(rb.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn rank_order(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .expect("distances are finite")
        .then(a.1.cmp(&b.1))
}

/// Build the table over the catalog's non-special concepts. With
/// `same_domain_only`, candidates are limited to the query's domain.
/// M is capped by the available candidate count per row.
pub fn build_neighbor_sets(
    reps: &RepresentationMatrix,
    catalog: &ConceptCatalog,
    m: usize,
    same_domain_only: bool,
) -> Result<NeighborSets> {
    if reps.n() != catalog.len() {
        return Err(Error::BadDimension {
            expected: catalog.len(),
            got: reps.n(),
        });
    }
    if m == 0 {
        return Err(Error::BadConfig("neighbor count must be positive".into()));
    }
    let n = reps.n();
    let eligible = catalog.non_special_indices();
    let eligible_set: HashSet<u32> = eligible.iter().copied().collect();
    // Every query needs m candidates besides itself, so the smallest pool a
    // query can draw from bounds the allowed m.
    let smallest_pool = if same_domain_only {
        let mut counts: HashMap<Domain, usize> = HashMap::new();
        for &k in &eligible {
            *counts.entry(catalog.get(k).domain).or_insert(0) += 1;
        }
        counts.values().copied().min().unwrap_or(0)
    } else {
        eligible.len()
    };
    if smallest_pool < m + 1 {
        return Err(Error::TooFewConcepts {
            needed: m + 1,
            got: smallest_pool,
        });
    }

    let values = reps.values();
    let mut table = vec![NO_NEIGHBOR; n * m];
    let mut indexed = vec![false; n];

    // Candidate pools, one per domain when filtering, otherwise shared.
    let pool_for = |query: u32| -> Vec<u32> {
        if same_domain_only {
            catalog.rows_in_domain(catalog.get(query).domain)
        } else {
            eligible.clone()
        }
    };

    let rows: Vec<(u32, Vec<u32>)> = eligible
        .par_iter()
        .map(|&q| {
            let mut scored: Vec<(f64, u32)> = pool_for(q)
                .into_iter()
                .filter(|&c| c != q)
                .map(|c| (dist2(values, q as usize, c as usize), c))
                .collect();
            debug_assert!(scored.len() >= m);
            if scored.len() > m {
                scored.select_nth_unstable_by(m - 1, rank_order);
                scored.truncate(m);
            }
            scored.sort_unstable_by(rank_order);
            (q, scored.into_iter().map(|(_, c)| c).collect())
        })
        .collect();

    for (q, neigh) in rows {
        let start = q as usize * m;
        table[start..start + m].copy_from_slice(&neigh);
        indexed[q as usize] = true;
    }
    debug_assert!(eligible_set.iter().all(|&q| indexed[q as usize]));
    Ok(NeighborSets { m, table, indexed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::ReprKind;
    use crate::vocab::Concept;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog(domains: &[Domain]) -> ConceptCatalog {
        let concepts = domains
            .iter()
            .enumerate()
            .map(|(i, &d)| Concept {
                concept_id: 1000 + i as u64,
                name: format!("c{i}"),
                domain: d,
                decile: None,
            })
            .collect();
        ConceptCatalog::from_concepts(concepts).unwrap()
    }

    fn matrix_from_scalars(vals: &[f64]) -> RepresentationMatrix {
        let n = vals.len();
        let mut m = Array2::zeros((n, 1));
        for (i, &v) in vals.iter().enumerate() {
            m[(i, 0)] = v;
        }
        RepresentationMatrix::new(ReprKind::Graph, m).unwrap()
    }

    /// Hand-checked one-dimensional case. Concept rows sit at 0, 1, 3, 7 on
    /// a line; with one neighbor each: 0 -> 1, 1 -> 0, 3 -> 1, 7 -> 3.
    #[test]
    fn one_dimensional_oracle() {
        let cat = catalog(&[Domain::Condition; 4]);
        // Rows 0..4 are reserved; park them far away so they could only
        // break the test if they leaked into the candidate set.
        let reps = matrix_from_scalars(&[900.0, 901.0, 902.0, 903.0, 0.0, 1.0, 3.0, 7.0]);
        let sets = build_neighbor_sets(&reps, &cat, 1, false).unwrap();
        assert_eq!(sets.neighbors(4).unwrap(), &[5]);
        assert_eq!(sets.neighbors(5).unwrap(), &[4]);
        assert_eq!(sets.neighbors(6).unwrap(), &[5]);
        assert_eq!(sets.neighbors(7).unwrap(), &[6]);
    }

    #[test]
    fn special_rows_are_never_indexed_nor_candidates() {
        let cat = catalog(&[Domain::Condition; 3]);
        let reps = matrix_from_scalars(&[0.0, 0.1, 0.2, 0.3, 10.0, 11.0, 12.0]);
        let sets = build_neighbor_sets(&reps, &cat, 2, false).unwrap();
        for special in 0..4 {
            assert!(!sets.is_indexed(special));
            assert!(matches!(
                sets.neighbors(special).unwrap_err(),
                Error::NotIndexed(_)
            ));
        }
        // Nearest to row 4 (value 10) must be rows 5 and 6, not the reserved
        // rows parked at small values.
        assert_eq!(sets.neighbors(4).unwrap(), &[5, 6]);
    }

    #[test]
    fn ties_break_by_ascending_row_index() {
        let cat = catalog(&[Domain::Condition; 4]);
        // Rows 5 and 7 are equidistant from row 4; row 5 must come first.
        let reps = matrix_from_scalars(&[50.0, 60.0, 70.0, 80.0, 0.0, 2.0, 9.0, -2.0]);
        let sets = build_neighbor_sets(&reps, &cat, 2, false).unwrap();
        assert_eq!(sets.neighbors(4).unwrap(), &[5, 7]);
    }

    #[test]
    fn domain_filter_restricts_candidates() {
        use Domain::*;
        let cat = catalog(&[Condition, Condition, Drug, Drug, Condition, Drug]);
        let reps =
            matrix_from_scalars(&[90.0, 91.0, 92.0, 93.0, 0.0, 0.5, 0.6, 5.0, 1.0, 1.1]);
        let filtered = build_neighbor_sets(&reps, &cat, 1, true).unwrap();
        // Domains by row: 4,5,8 are conditions; 6,7,9 are drugs. The drug
        // nearest to row 6 (0.6) is row 9 (1.1) even though the condition at
        // row 5 (0.5) is closer overall.
        assert_eq!(filtered.neighbors(4).unwrap(), &[5]);
        assert_eq!(filtered.neighbors(6).unwrap(), &[9]);
        let unfiltered = build_neighbor_sets(&reps, &cat, 1, false).unwrap();
        assert_eq!(unfiltered.neighbors(6).unwrap(), &[5]);
    }

    #[test]
    fn too_small_pools_are_rejected() {
        let cat = catalog(&[Domain::Condition; 3]);
        let reps = matrix_from_scalars(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let err = build_neighbor_sets(&reps, &cat, 3, false).unwrap_err();
        assert!(matches!(
            err,
            Error::TooFewConcepts { needed: 4, got: 3 }
        ));
    }

    #[test]
    fn brute_force_agreement_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        for trial in 0..20 {
            let n_concepts = rng.random_range(8..40);
            let h = rng.random_range(1..6);
            let m = rng.random_range(1..5.min(n_concepts - 1));
            let cat = catalog(&vec![Domain::Condition; n_concepts]);
            let n = cat.len();
            let mut vals = Array2::zeros((n, h));
            for v in vals.iter_mut() {
                // Snap to a coarse grid so exact ties actually occur.
                *v = (rng.random_range(-4i32..=4i32)) as f64;
            }
            let reps = RepresentationMatrix::new(ReprKind::Graph, vals).unwrap();
            let sets = build_neighbor_sets(&reps, &cat, m, false).unwrap();
            for q in 4..n as u32 {
                let mut all: Vec<(f64, u32)> = (4..n as u32)
                    .filter(|&c| c != q)
                    .map(|c| (dist2(reps.values(), q as usize, c as usize), c))
                    .collect();
                all.sort_by(rank_order);
                let expected: Vec<u32> = all[..m].iter().map(|&(_, c)| c).collect();
                assert_eq!(
                    sets.neighbors(q).unwrap(),
                    &expected[..],
                    "trial {trial} query {q}"
                );
            }
        }
    }

    #[test]
    fn container_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.mnbr");
        let cat = catalog(&[Domain::Condition; 5]);
        let reps = matrix_from_scalars(&[9.0, 9.1, 9.2, 9.3, 0.0, 1.0, 2.0, 3.0, 4.0]);
        let sets = build_neighbor_sets(&reps, &cat, 2, false).unwrap();
        let prov = Provenance::new(1, 2).with_input("reps", 42);
        sets.write(&path, Some(&prov)).unwrap();
        let (back, got_prov) = NeighborSets::read(&path).unwrap();
        assert_eq!(back.n(), sets.n());
        assert_eq!(back.m(), sets.m());
        assert_eq!(got_prov, Some(prov));
        for q in 0..sets.n() as u32 {
            assert_eq!(back.is_indexed(q), sets.is_indexed(q));
            if sets.is_indexed(q) {
                assert_eq!(back.neighbors(q).unwrap(), sets.neighbors(q).unwrap());
            }
        }
    }
}
