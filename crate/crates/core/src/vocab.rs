//! Concept catalog and relation graph.
//!
//! The catalog assigns every concept a dense row index shared by the
//! embedding matrix, the neighbor table and the trajectory streams. Rows 0..3
//! are always the special tokens [PAD], [CLS], [SEP], [UNK]; they are
//! injected when the input table lacks them.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
pub const UNK: u32 = 3;
pub const NUM_SPECIAL: u32 = 4;

pub const SPECIAL_NAMES: [&str; 4] = ["[PAD]", "[CLS]", "[SEP]", "[UNK]"];

/// Clinical domain of a concept. `Special` is reserved for the four
/// bookkeeping tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Special,
    Condition,
    Drug,
    Measurement,
    Procedure,
}

impl Domain {
    /// Stable index used by the trajectory domain stream.
    pub fn index(self) -> u32 {
        match self {
            Domain::Special => 0,
            Domain::Condition => 1,
            Domain::Drug => 2,
            Domain::Measurement => 3,
            Domain::Procedure => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Special => "special",
            Domain::Condition => "condition",
            Domain::Drug => "drug",
            Domain::Measurement => "measurement",
            Domain::Procedure => "procedure",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "special" => Ok(Domain::Special),
            "condition" => Ok(Domain::Condition),
            "drug" => Ok(Domain::Drug),
            "measurement" => Ok(Domain::Measurement),
            "procedure" => Ok(Domain::Procedure),
            other => Err(format!("unknown domain {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    /// Opaque source identifier, unique within a catalog.
    pub concept_id: u64,
    pub name: String,
    pub domain: Domain,
    /// Decile number for measurement variants produced by
    /// [`ConceptCatalog::expand_measurement_deciles`].
    pub decile: Option<u8>,
}

/// Immutable concept table with a dense index.
#[derive(Debug, Clone)]
pub struct ConceptCatalog {
    concepts: Vec<Concept>,
    by_id: HashMap<u64, u32>,
}

fn special_concepts() -> Vec<Concept> {
    SPECIAL_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| Concept {
            concept_id: i as u64,
            name: (*name).to_string(),
            domain: Domain::Special,
            decile: None,
        })
        .collect()
}

impl ConceptCatalog {
    /// Build a catalog, injecting the special tokens at rows 0..3 when the
    /// input does not already begin with them.
    pub fn from_concepts(mut concepts: Vec<Concept>) -> Result<Self> {
        let has_specials = concepts.len() >= 4
            && concepts[..4]
                .iter()
                .zip(special_concepts().iter())
                .all(|(a, b)| a == b);
        if !has_specials {
            if concepts.iter().any(|c| c.domain == Domain::Special) {
                return Err(Error::Invalid {
                    what: "catalog".into(),
                    reason: "special-domain rows must be exactly [PAD],[CLS],[SEP],[UNK] at rows 0..3"
                        .into(),
                });
            }
            let mut with = special_concepts();
            with.append(&mut concepts);
            concepts = with;
        } else if concepts[4..].iter().any(|c| c.domain == Domain::Special) {
            return Err(Error::Invalid {
                what: "catalog".into(),
                reason: "special-domain rows outside rows 0..3".into(),
            });
        }
        let mut by_id = HashMap::with_capacity(concepts.len());
        for (i, c) in concepts.iter().enumerate() {
            if by_id.insert(c.concept_id, i as u32).is_some() {
                return Err(Error::DuplicateConcept(c.concept_id));
            }
        }
        Ok(ConceptCatalog { concepts, by_id })
    }

    /// Number of rows, special tokens included.
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        // A catalog always holds at least the four specials.
        false
    }

    pub fn get(&self, dense: u32) -> &Concept {
        &self.concepts[dense as usize]
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn dense_index(&self, concept_id: u64) -> Option<u32> {
        self.by_id.get(&concept_id).copied()
    }

    pub fn is_special(dense: u32) -> bool {
        dense < NUM_SPECIAL
    }

    /// Dense indices of all non-special concepts, ascending.
    pub fn non_special_indices(&self) -> Vec<u32> {
        (NUM_SPECIAL..self.len() as u32).collect()
    }

    /// Domain stream value per dense row.
    pub fn domain_indices(&self) -> Vec<u32> {
        self.concepts.iter().map(|c| c.domain.index()).collect()
    }

    /// Dense indices of the non-special concepts in one domain, ascending.
    pub fn rows_in_domain(&self, domain: Domain) -> Vec<u32> {
        (NUM_SPECIAL..self.len() as u32)
            .filter(|&k| self.get(k).domain == domain)
            .collect()
    }

    /// Load a `concept_id\tname\tdomain` table. Lines starting with '#' are
    /// skipped. Special tokens are injected when absent.
    pub fn load(path: &Path) -> Result<Self> {
        let reader = crate::container::open_reader(path)?;
        let mut concepts = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if !saw_header {
                if line != "concept_id\tname\tdomain" {
                    return Err(Error::parse(path, lineno + 1, "missing concept table header"));
                }
                saw_header = true;
                continue;
            }
            let mut parts = line.split('\t');
            let (id, name, domain) = match (parts.next(), parts.next(), parts.next(), parts.next())
            {
                (Some(id), Some(name), Some(domain), None) => (id, name, domain),
                _ => return Err(Error::parse(path, lineno + 1, "expected 3 tab-separated fields")),
            };
            let concept_id: u64 = id
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad concept id {id:?}")))?;
            let domain = Domain::from_str(domain).map_err(|_| Error::BadDomain {
                concept_id,
                value: domain.to_string(),
            })?;
            concepts.push(Concept {
                concept_id,
                name: name.to_string(),
                domain,
                decile: None,
            });
        }
        if !saw_header {
            return Err(Error::parse(path, 1, "empty concept table"));
        }
        Self::from_concepts(concepts)
    }

    /// Write the catalog in canonical form (header + rows in dense order).
    /// `save(load(f))` is byte-identical for canonical comment-free inputs.
    pub fn save(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let mut out = String::from("concept_id\tname\tdomain\n");
        for c in &self.concepts {
            if c.name.contains('\t') || c.name.contains('\n') {
                return Err(Error::Invalid {
                    what: format!("concept {}", c.concept_id),
                    reason: "name contains tab or newline".into(),
                });
            }
            out.push_str(&format!("{}\t{}\t{}\n", c.concept_id, c.name, c.domain));
        }
        crate::container::write_tsv(path, comment, &out)
    }

    /// Replace each listed measurement concept by ten decile variants with id
    /// `base*10 + d` and name suffix " (d-th decile)". Other rows keep their
    /// relative order. Returns the expanded catalog.
    pub fn expand_measurement_deciles(&self, numeric_measurement_ids: &[u64]) -> Result<ConceptCatalog> {
        let mut listed: Vec<u64> = numeric_measurement_ids.to_vec();
        listed.sort_unstable();
        listed.dedup();
        for &id in &listed {
            let dense = self
                .dense_index(id)
                .ok_or(Error::UnknownConcept(id))?;
            let c = self.get(dense);
            if c.domain != Domain::Measurement {
                return Err(Error::BadDomain {
                    concept_id: id,
                    value: c.domain.to_string(),
                });
            }
        }
        let listed_set: std::collections::HashSet<u64> = listed.iter().copied().collect();
        let mut out = Vec::with_capacity(self.concepts.len() + 9 * listed.len());
        for c in &self.concepts {
            if listed_set.contains(&c.concept_id) {
                for d in 0..10u8 {
                    out.push(Concept {
                        concept_id: c.concept_id * 10 + d as u64,
                        name: format!("{} ({}-th decile)", c.name, d),
                        domain: Domain::Measurement,
                        decile: Some(d),
                    });
                }
            } else {
                out.push(c.clone());
            }
        }
        ConceptCatalog::from_concepts(out)
    }

    /// Dense indices of the decile variants of `base_id` in this catalog, if
    /// the base was expanded here.
    pub fn decile_variants(&self, base_id: u64) -> Option<[u32; 10]> {
        let mut v = [0u32; 10];
        for d in 0..10u64 {
            let dense = self.dense_index(base_id * 10 + d)?;
            if self.get(dense).decile != Some(d as u8) {
                return None;
            }
            v[d as usize] = dense;
        }
        Some(v)
    }
}

/// Undirected relation graph over dense concept indices. Parallel edges are
/// collapsed and self-loops dropped; adjacency lists are sorted ascending.
#[derive(Debug, Clone)]
pub struct RelationGraph {
    n: u32,
    adj: Vec<Vec<u32>>,
    edges: Vec<(u32, u32)>,
}

impl RelationGraph {
    /// Build from dense-index pairs.
    pub fn from_dense_edges(n: u32, pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut edges: Vec<(u32, u32)> = Vec::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::Invalid {
                    what: "edge".into(),
                    reason: format!("endpoint out of range: ({a}, {b}) with n={n}"),
                });
            }
            if a == b {
                continue; // self-loops dropped
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        edges.dedup();
        let mut adj = vec![Vec::new(); n as usize];
        for &(a, b) in &edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(RelationGraph { n, adj, edges })
    }

    /// Load a `concept_id_1\tconcept_id_2` edge table against a catalog.
    /// Endpoints referencing an expanded measurement (all ten variant ids
    /// present) fan out so every variant inherits the edge.
    pub fn load(path: &Path, catalog: &ConceptCatalog) -> Result<Self> {
        let reader = crate::container::open_reader(path)?;
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        let mut saw_header = false;
        // Either the concept itself or the full set of its decile variants.
        let resolve = |id: u64| -> Option<Vec<u32>> {
            if let Some(dense) = catalog.dense_index(id) {
                return Some(vec![dense]);
            }
            catalog.decile_variants(id).map(|v| v.to_vec())
        };
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if !saw_header {
                if line != "concept_id_1\tconcept_id_2" {
                    return Err(Error::parse(path, lineno + 1, "missing edge table header"));
                }
                saw_header = true;
                continue;
            }
            let mut parts = line.split('\t');
            let (a, b) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => return Err(Error::parse(path, lineno + 1, "expected 2 tab-separated fields")),
            };
            let a: u64 = a
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad concept id {a:?}")))?;
            let b: u64 = b
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad concept id {b:?}")))?;
            let left = resolve(a).ok_or(Error::UnknownConcept(a))?;
            let right = resolve(b).ok_or(Error::UnknownConcept(b))?;
            for &l in &left {
                if ConceptCatalog::is_special(l) {
                    return Err(Error::parse(path, lineno + 1, "edge endpoint is a special token"));
                }
                for &r in &right {
                    if ConceptCatalog::is_special(r) {
                        return Err(Error::parse(
                            path,
                            lineno + 1,
                            "edge endpoint is a special token",
                        ));
                    }
                    pairs.push((l, r));
                }
            }
        }
        if !saw_header {
            return Err(Error::parse(path, 1, "empty edge table"));
        }
        Self::from_dense_edges(catalog.len() as u32, pairs)
    }

    /// Write edges as concept-id pairs in canonical (sorted dense) order.
    pub fn save(&self, path: &Path, catalog: &ConceptCatalog, comment: Option<&str>) -> Result<()> {
        let mut out = String::from("concept_id_1\tconcept_id_2\n");
        for &(a, b) in &self.edges {
            out.push_str(&format!(
                "{}\t{}\n",
                catalog.get(a).concept_id,
                catalog.get(b).concept_id
            ));
        }
        crate::container::write_tsv(path, comment, &out)
    }

    pub fn num_nodes(&self) -> u32 {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical (min, max) edge list, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, k: u32) -> &[u32] {
        &self.adj[k as usize]
    }

    pub fn degree(&self, k: u32) -> usize {
        self.adj[k as usize].len()
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.adj.iter().map(|a| a.len() as u32).collect()
    }
}
