//! Decile binning of numeric measurement values.
//!
//! Each measurement concept with enough observations gets nine ordered cut
//! points (the empirical 10%..90% quantiles of its fitted values). A value
//! then maps to decile `count of cut points strictly below it`, which lands
//! in 0..=9 and clamps out-of-range values to the edge bins for free.
//!
//! Concepts with fewer than [`MIN_VALUES_TO_BIN`] numeric observations stay
//! unbinned and tokenize as their base concept downstream. Bins are meant to
//! be fitted on the training split only and reused everywhere else.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use crate::container::{open_reader, write_tsv};
use crate::error::{Error, Result};
use crate::trajectory::records::ClinicalRecord;
use crate::vocab::Domain;

/// Minimum numeric observations before a concept gets cut points.
pub const MIN_VALUES_TO_BIN: usize = 10;

const BINS_HEADER: &str = "concept_id\tc1\tc2\tc3\tc4\tc5\tc6\tc7\tc8\tc9";

/// Per-concept decile cut points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecileBins {
    cuts: HashMap<u64, [f64; 9]>,
}

/// Linear-interpolated empirical quantile of an ascending slice at
/// `k/10`, k in 1..=9: index (n-1)*k/10 with fractional interpolation.
fn quantile(sorted: &[f64], k: usize) -> f64 {
    let n = sorted.len();
    debug_assert!(n >= 2);
    let pos = (n - 1) as f64 * k as f64 / 10.0;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 == n {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

impl DecileBins {
    /// Fit cut points from the numeric measurement values in `records`.
    /// Non-measurement rows and rows without a value are ignored; concepts
    /// with fewer than [`MIN_VALUES_TO_BIN`] values pass through unbinned.
    pub fn fit(records: &[ClinicalRecord]) -> DecileBins {
        let mut values: HashMap<u64, Vec<f64>> = HashMap::new();
        for r in records {
            if r.domain == Domain::Measurement {
                if let Some(v) = r.numeric_value {
                    values.entry(r.concept_id).or_default().push(v);
                }
            }
        }
        let mut cuts = HashMap::new();
        for (concept_id, mut vs) in values {
            if vs.len() < MIN_VALUES_TO_BIN {
                continue;
            }
            vs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
            let mut c = [0.0f64; 9];
            for (i, slot) in c.iter_mut().enumerate() {
                *slot = quantile(&vs, i + 1);
            }
            cuts.insert(concept_id, c);
        }
        DecileBins { cuts }
    }

    /// Whether `concept_id` has fitted cut points.
    pub fn has(&self, concept_id: u64) -> bool {
        self.cuts.contains_key(&concept_id)
    }

    /// Concept ids with fitted cut points, ascending.
    pub fn binned_concepts(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.cuts.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// Map a value to its decile: the number of cut points strictly below it.
    /// Values below every cut map to 0, above every cut to 9; a constant
    /// training distribution (all cuts equal) sends everything to 0.
    pub fn bin(&self, concept_id: u64, value: f64) -> Result<u8> {
        let cuts = self
            .cuts
            .get(&concept_id)
            .ok_or(Error::NotBinned(concept_id))?;
        Ok(cuts.iter().filter(|&&c| c < value).count() as u8)
    }

    pub fn save(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let mut out = String::from(BINS_HEADER);
        out.push('\n');
        for id in self.binned_concepts() {
            out.push_str(&id.to_string());
            for c in &self.cuts[&id] {
                out.push('\t');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        write_tsv(path, comment, &out)
    }

    pub fn load(path: &Path) -> Result<DecileBins> {
        let reader = open_reader(path)?;
        let mut cuts = HashMap::new();
        let mut saw_header = false;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if !saw_header {
                if line != BINS_HEADER {
                    return Err(Error::parse(path, lineno + 1, "missing bins header"));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 10 {
                return Err(Error::parse(path, lineno + 1, "expected 10 fields"));
            }
            let concept_id: u64 = fields[0].parse().map_err(|_| {
                Error::parse(path, lineno + 1, format!("bad concept id {:?}", fields[0]))
            })?;
            let mut c = [0.0f64; 9];
            for (i, f) in fields[1..].iter().enumerate() {
                c[i] = f.parse().map_err(|_| {
                    Error::parse(path, lineno + 1, format!("bad cut point {f:?}"))
                })?;
            }
            if c.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::parse(path, lineno + 1, "cut points not non-decreasing"));
            }
            if cuts.insert(concept_id, c).is_some() {
                return Err(Error::DuplicateConcept(concept_id));
            }
        }
        if !saw_header {
            return Err(Error::parse(path, 1, "empty bins table"));
        }
        Ok(DecileBins { cuts })
    }
}
