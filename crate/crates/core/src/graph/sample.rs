//! Seed-anchored neighborhood sampling.
//!
//! Training works on small induced subgraphs grown outward from a seed batch
//! with per-hop fanout limits. Inference uses the same machinery with
//! unlimited fanout to take the exact k-hop closure, which (together with
//! full-graph normalization degrees) makes batched encoding bit-identical to
//! encoding the whole graph at once.
//!
//! Local node order is ascending by global id. That is not cosmetic: it
//! makes every accumulation inside the normalized-adjacency product follow
//! the same order as on the full graph, so chunked inference reproduces the
//! full forward pass exactly rather than merely approximately.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use crate::vocab::RelationGraph;

pub struct Subgraph {
    /// Global node ids, ascending.
    pub nodes: Vec<u32>,
    /// Local row of each seed, in the order the seeds were given.
    pub seed_rows: Vec<u32>,
    /// Induced edges in local indices, each pair (low, high), listed in
    /// ascending order of the lower endpoint.
    pub edges: Vec<(u32, u32)>,
    /// Full-graph degree of each local node.
    pub global_degree: Vec<u32>,
}

impl Subgraph {
    pub fn num_seeds(&self) -> usize {
        self.seed_rows.len()
    }
}

/// Grow a subgraph from `seeds`, keeping at most `fanouts[d]` new neighbors
/// per frontier node at hop d. Seeds must be distinct. When a candidate set
/// exceeds the fanout, the survivors are drawn without replacement.
pub fn sample_subgraph(
    graph: &RelationGraph,
    seeds: &[u32],
    fanouts: &[usize],
    rng: &mut ChaCha8Rng,
) -> Subgraph {
    expand(graph, seeds, fanouts, Some(rng))
}

/// The exact closure: every node reachable within `hops` steps of a seed.
pub fn full_closure(graph: &RelationGraph, seeds: &[u32], hops: usize) -> Subgraph {
    let fanouts = vec![usize::MAX; hops];
    expand(graph, seeds, &fanouts, None)
}

fn expand(
    graph: &RelationGraph,
    seeds: &[u32],
    fanouts: &[usize],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Subgraph {
    let n = graph.num_nodes() as usize;
    let mut visited = vec![false; n];
    let mut nodes: Vec<u32> = Vec::with_capacity(seeds.len());
    for &s in seeds {
        debug_assert!(!visited[s as usize], "duplicate seed {s}");
        visited[s as usize] = true;
        nodes.push(s);
    }
    let mut frontier: Vec<u32> = seeds.to_vec();
    for &limit in fanouts {
        let mut next = Vec::new();
        for &u in &frontier {
            let candidates: Vec<u32> = graph
                .neighbors(u)
                .iter()
                .copied()
                .filter(|&v| !visited[v as usize])
                .collect();
            let chosen: Vec<u32> = if candidates.len() <= limit {
                candidates
            } else {
                let rng = rng
                    .as_deref_mut()
                    .expect("bounded fanout requires a generator");
                let mut idx: Vec<usize> =
                    rand::seq::index::sample(rng, candidates.len(), limit).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| candidates[i]).collect()
            };
            for v in chosen {
                visited[v as usize] = true;
                nodes.push(v);
                next.push(v);
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    nodes.sort_unstable();
    let local: HashMap<u32, u32> = nodes
        .iter()
        .enumerate()
        .map(|(i, &g)| (g, i as u32))
        .collect();
    let seed_rows = seeds.iter().map(|s| local[s]).collect();
    let mut edges = Vec::new();
    for (lu, &gu) in nodes.iter().enumerate() {
        for &gv in graph.neighbors(gu) {
            if let Some(&lv) = local.get(&gv) {
                if (lu as u32) < lv {
                    edges.push((lu as u32, lv));
                }
            }
        }
    }
    let global_degree = nodes.iter().map(|&g| graph.degree(g) as u32).collect();
    Subgraph {
        nodes,
        seed_rows,
        edges,
        global_degree,
    }
}
