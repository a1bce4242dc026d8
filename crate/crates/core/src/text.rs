//! Concept descriptions: prompt construction, the description table, and the
//! deterministic stub embedder.
//!
//! Generating descriptions with a language model happens outside this crate;
//! here we own the prompt templates sent to it, the TSV format its output is
//! stored in, and a hash-based stand-in embedder so every downstream stage
//! can run without model access.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::repr::{ReprKind, RepresentationMatrix};
use crate::vocab::{Concept, ConceptCatalog, Domain, PAD, SPECIAL_NAMES};

/// Marker every prompt ends with; the concept name is appended right after.
pub const CONCEPT_NAME_MARKER: &str = "Concept name: ";

const PROMPT_CONDITION: &str = "Instruction: Briefly explain the clinical background and regarding treatments of each concept name (condition) with less than 5 sentences. Do not include sentences that are too ordinary (such as \"further details would depend on the specific situation) and focus on describing the representative clinical features of the concept. Concept name: ";

const PROMPT_DRUG: &str = "Instruction: Briefly explain the clinical background and purpose of each concept name (drug) with less than 5 sentences. Do not include sentences that are too ordinary (such as \"further details would depend on the specific situation) and focus on describing the representative clinical features of the concept. For explanation, if it exists in the concept name, take into account the detailed items of the concept such as ingredient, dosage form, and strength. If several drugs are contained in a concept, do not explain those drugs separately, but explain the concept name comprehensively and finish the answer with less than 5 sentences. Concept name: ";

const PROMPT_MEASUREMENT: &str = "Instruction: Briefly explain the clinical background and context of each concept name (measurement) with less than 5 sentences. Do not include sentences that are too ordinary (such as \"further details would depend on the specific situation) and focus on describing the representative clinical features of the concept. For explanation, if it exists in the concept name, describe what the decile means clinically. Concept name: ";

const PROMPT_PROCEDURE: &str = "Instruction: Briefly explain the clinical background and purpose of each concept name (procedure) with less than 5 sentences. Do not include sentences that are too ordinary (such as \"further details would depend on the specific situation) and focus on describing the representative clinical features of the concept. Concept name: ";

/// Domain-specific instruction text, ending with [`CONCEPT_NAME_MARKER`].
pub fn prompt_instruction(domain: Domain) -> Result<&'static str> {
    match domain {
        Domain::Condition => Ok(PROMPT_CONDITION),
        Domain::Drug => Ok(PROMPT_DRUG),
        Domain::Measurement => Ok(PROMPT_MEASUREMENT),
        Domain::Procedure => Ok(PROMPT_PROCEDURE),
        Domain::Special => Err(Error::BadDomain {
            concept_id: 0,
            value: "special tokens have no description prompt".into(),
        }),
    }
}

/// Full prompt for one concept: instruction + concept name.
pub fn build_prompt(concept: &Concept) -> Result<String> {
    let instruction = prompt_instruction(concept.domain).map_err(|_| Error::BadDomain {
        concept_id: concept.concept_id,
        value: "special tokens have no description prompt".into(),
    })?;
    Ok(format!("{instruction}{}", concept.name))
}

// 64-bit FNV-1a. Hand-rolled because the embedder must hash identically
// across platforms and releases; std's hashers guarantee neither.
fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut state = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        state ^= b as u64;
        state = state.wrapping_mul(0x0000_0100_0000_01b3);
    }
    state
}

/// Deterministic stand-in for a text-embedding model: signed feature hashing
/// of the whitespace tokens of name + description into `h` buckets, then L2
/// normalization. Token sets with no surviving mass fall back to a fixed
/// unit vector so the output always has unit norm.
pub fn stub_embed(name: &str, description: &str, h: usize, seed: u64) -> Vec<f64> {
    assert!(h > 0, "embedding width must be positive");
    let mut v = vec![0.0f64; h];
    for token in name
        .split_whitespace()
        .chain(description.split_whitespace())
    {
        let hash = fnv1a(seed, token.as_bytes());
        let bucket = (hash % h as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Embedding row for a special token: [PAD] is all-zero, the rest embed
/// their literal token text.
pub fn special_embedding(dense: u32, h: usize, seed: u64) -> Vec<f64> {
    if dense == PAD {
        vec![0.0; h]
    } else {
        stub_embed(SPECIAL_NAMES[dense as usize], "", h, seed)
    }
}

/// Stub text-embedding matrix over a whole catalog. Concepts missing from
/// `descriptions` embed from their name alone.
pub fn build_text_matrix(
    catalog: &ConceptCatalog,
    descriptions: &HashMap<u64, String>,
    h: usize,
    seed: u64,
) -> Result<RepresentationMatrix> {
    let rows: Vec<Vec<f64>> = catalog
        .concepts()
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            if ConceptCatalog::is_special(i as u32) {
                special_embedding(i as u32, h, seed)
            } else {
                let desc = descriptions
                    .get(&c.concept_id)
                    .map(String::as_str)
                    .unwrap_or("");
                stub_embed(&c.name, desc, h, seed)
            }
        })
        .collect();
    let mut values = Array2::zeros((catalog.len(), h));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, x) in row.into_iter().enumerate() {
            values[(i, j)] = x;
        }
    }
    RepresentationMatrix::new(ReprKind::Text, values)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, path: &Path, line: usize) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("bad escape sequence \\{}", other.map(String::from).unwrap_or_default()),
                ))
            }
        }
    }
    Ok(out)
}

/// Load a `concept_id\tdescription` table (tabs/newlines escaped).
pub fn load_descriptions(path: &Path) -> Result<HashMap<u64, String>> {
    let reader = crate::container::open_reader(path)?;
    let mut out = HashMap::new();
    let mut saw_header = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != "concept_id\tdescription" {
                return Err(Error::parse(path, lineno + 1, "missing description table header"));
            }
            saw_header = true;
            continue;
        }
        let (id, desc) = line.split_once('\t').ok_or_else(|| {
            Error::parse(path, lineno + 1, "expected 2 tab-separated fields")
        })?;
        let concept_id: u64 = id
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, format!("bad concept id {id:?}")))?;
        if out
            .insert(concept_id, unescape(desc, path, lineno + 1)?)
            .is_some()
        {
            return Err(Error::DuplicateConcept(concept_id));
        }
    }
    Ok(out)
}

/// Write descriptions sorted by concept id.
pub fn save_descriptions(
    path: &Path,
    descriptions: &HashMap<u64, String>,
    comment: Option<&str>,
) -> Result<()> {
    let mut ids: Vec<u64> = descriptions.keys().copied().collect();
    ids.sort_unstable();
    let mut out = String::from("concept_id\tdescription\n");
    for id in ids {
        out.push_str(&format!("{}\t{}\n", id, escape(&descriptions[&id])));
    }
    crate::container::write_tsv(path, comment, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn concept(name: &str, domain: Domain) -> Concept {
        Concept {
            concept_id: 42,
            name: name.into(),
            domain,
            decile: None,
        }
    }

    #[test]
    fn condition_prompt_is_exact() {
        let p = build_prompt(&concept("Neutropenic fever", Domain::Condition)).unwrap();
        assert!(p.starts_with(
            "Instruction: Briefly explain the clinical background and regarding treatments"
        ));
        assert!(p.ends_with("Concept name: Neutropenic fever"));
    }

    #[test]
    fn drug_prompt_mentions_formulation_details() {
        let p = build_prompt(&concept("Aspirin 100 MG Oral Tablet", Domain::Drug)).unwrap();
        assert!(p.contains("ingredient, dosage form, and strength"));
        assert!(p.ends_with("Concept name: Aspirin 100 MG Oral Tablet"));
    }

    #[test]
    fn measurement_prompt_mentions_deciles() {
        let p = build_prompt(&concept(
            "Glycated haemoglobin (HbA1c) (9-th decile)",
            Domain::Measurement,
        ))
        .unwrap();
        assert!(p.contains("describe what the decile means clinically"));
        assert!(p.ends_with("Concept name: Glycated haemoglobin (HbA1c) (9-th decile)"));
    }

    #[test]
    fn procedure_prompt_ends_with_name() {
        let p = build_prompt(&concept("Plain chest X-ray", Domain::Procedure)).unwrap();
        assert!(p.starts_with("Instruction: Briefly explain the clinical background and purpose"));
        assert!(p.ends_with("Concept name: Plain chest X-ray"));
    }

    #[test]
    fn prompt_contains_name_exactly_once_at_the_end() {
        for domain in [
            Domain::Condition,
            Domain::Drug,
            Domain::Measurement,
            Domain::Procedure,
        ] {
            let p = build_prompt(&concept("Zanubrutinib", domain)).unwrap();
            assert_eq!(p.matches("Zanubrutinib").count(), 1);
            assert!(p.ends_with(&format!("{CONCEPT_NAME_MARKER}Zanubrutinib")));
        }
    }

    #[test]
    fn special_tokens_have_no_prompt() {
        let err = build_prompt(&concept("[CLS]", Domain::Special)).unwrap_err();
        assert!(matches!(err, Error::BadDomain { .. }));
    }

    #[test]
    fn stub_embed_is_pure_and_unit_norm() {
        let a = stub_embed("Atrial fibrillation", "irregular heart rhythm", 64, 7);
        let b = stub_embed("Atrial fibrillation", "irregular heart rhythm", 64, 7);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stub_embed_depends_on_seed() {
        let a = stub_embed("fever", "", 64, 1);
        let b = stub_embed("fever", "", 64, 2);
        assert_ne!(a, b);
    }

    #[test]
    fn empty_input_still_has_unit_norm() {
        let v = stub_embed("", "", 16, 0);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn token_overlap_orders_cosine() {
        let cos = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let shared: Vec<String> = (0..9).map(|i| format!("tok{i}")).collect();
        let mut d1 = shared.join(" ");
        d1.push_str(" onlyfirst");
        let mut d2 = shared.join(" ");
        d2.push_str(" onlysecond");
        let disjoint_a: Vec<String> = (0..10).map(|i| format!("left{i}")).collect();
        let disjoint_b: Vec<String> = (0..10).map(|i| format!("right{i}")).collect();
        let h = 256;
        let a = stub_embed(&d1, "", h, 11);
        let b = stub_embed(&d2, "", h, 11);
        let c = stub_embed(&disjoint_a.join(" "), "", h, 11);
        let d = stub_embed(&disjoint_b.join(" "), "", h, 11);
        assert!(cos(&a, &b) > cos(&c, &d));
    }

    #[test]
    fn pad_embedding_is_zero_and_others_are_not() {
        assert!(special_embedding(PAD, 8, 3).iter().all(|&x| x == 0.0));
        for tok in 1..4u32 {
            assert!(special_embedding(tok, 8, 3).iter().any(|&x| x != 0.0));
        }
    }

    #[test]
    fn text_matrix_covers_catalog() {
        use crate::vocab::Concept;
        let cat = ConceptCatalog::from_concepts(vec![Concept {
            concept_id: 100,
            name: "Sepsis".into(),
            domain: Domain::Condition,
            decile: None,
        }])
        .unwrap();
        let m = build_text_matrix(&cat, &HashMap::new(), 32, 5).unwrap();
        assert_eq!(m.n(), 5);
        assert_eq!(m.h(), 32);
        assert!(m.row(0).iter().all(|&x| x == 0.0));
        assert!(m.row(4).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn descriptions_round_trip_with_escapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("desc.tsv");
        let mut d = HashMap::new();
        d.insert(100u64, "line one\nline two\twith tab \\ backslash".to_string());
        d.insert(200u64, "plain".to_string());
        save_descriptions(&path, &d, None).unwrap();
        let loaded = load_descriptions(&path).unwrap();
        assert_eq!(loaded, d);
        // Canonical output is stable.
        let bytes1 = std::fs::read(&path).unwrap();
        save_descriptions(&path, &loaded, None).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
    }
}
