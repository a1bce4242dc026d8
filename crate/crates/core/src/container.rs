//! Shared binary container plumbing.
//!
//! All binary artifacts use little-endian fixed-width fields behind a 4-byte
//! magic and a u32 format version. After its payload every file written by a
//! pipeline stage carries an optional provenance trailer (magic "MPRV") with
//! the run seed, a hash of the resolved configuration, named checksums of the
//! stage's input artifacts, and free-form key/value parameters. Readers that
//! only care about the payload may stop before the trailer; the trailer is
//! how stages verify they were fed the artifacts they think they were.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC_MATRIX: [u8; 4] = *b"MREP";
pub const MAGIC_NEIGHBORS: [u8; 4] = *b"MNBR";
pub const MAGIC_TRAJECTORIES: [u8; 4] = *b"MTRJ";
pub const MAGIC_PROVENANCE: [u8; 4] = *b"MPRV";
/// Encoder checkpoint (weights, slopes, generator state).
pub const MAGIC_MODEL: [u8; 4] = *b"MTRL";

pub const FORMAT_VERSION: u32 = 1;

/// Truncated SHA-256 (first 8 bytes, little-endian) over a byte slice.
pub fn bytes_checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Truncated SHA-256 of a whole file.
pub fn file_checksum(path: &Path) -> Result<u64> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(u64::from_le_bytes(digest[..8].try_into().unwrap()))
}

/// Provenance trailer appended to every stage output.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: u64,
    /// Named checksums of the input artifacts this output was derived from.
    pub inputs: Vec<(String, u64)>,
    /// Free-form parameters worth pinning (e.g. factor, replace_prob).
    pub params: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: u64) -> Self {
        Provenance {
            seed,
            config_hash,
            inputs: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn with_input(mut self, name: &str, checksum: u64) -> Self {
        self.inputs.push((name.to_string(), checksum));
        self
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn input_checksum(&self, name: &str) -> Option<u64> {
        self.inputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, c)| c)
    }
}

// ---- primitive little-endian io ----

pub fn w_u8<W: Write>(w: &mut W, x: u8) -> std::io::Result<()> {
    w.write_all(&[x])
}

pub fn w_u32<W: Write>(w: &mut W, x: u32) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

pub fn w_u64<W: Write>(w: &mut W, x: u64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

pub fn w_i64<W: Write>(w: &mut W, x: i64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

pub fn w_f64<W: Write>(w: &mut W, x: f64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

pub fn w_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn r_u8<R: Read>(r: &mut R) -> std::io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub fn r_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn r_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn r_i64<R: Read>(r: &mut R) -> std::io::Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

pub fn r_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn r_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = r_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

/// Write `magic` + format version.
pub fn write_header<W: Write>(w: &mut W, magic: [u8; 4]) -> std::io::Result<()> {
    w.write_all(&magic)?;
    w_u32(w, FORMAT_VERSION)
}

/// Read and verify `magic` + format version.
pub fn read_header<R: Read>(r: &mut R, magic: [u8; 4], path: &Path) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got)
        .map_err(|e| Error::io(path, e))?;
    if got != magic {
        return Err(Error::BadContainer {
            path: path.to_path_buf(),
            reason: format!(
                "bad magic: expected {:?}, got {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(&got)
            ),
        });
    }
    let version = r_u32(r).map_err(|e| Error::io(path, e))?;
    if version != FORMAT_VERSION {
        return Err(Error::BadContainer {
            path: path.to_path_buf(),
            reason: format!("unsupported format version {version}"),
        });
    }
    Ok(())
}

pub fn write_provenance<W: Write>(w: &mut W, p: &Provenance) -> std::io::Result<()> {
    w.write_all(&MAGIC_PROVENANCE)?;
    w_u32(w, FORMAT_VERSION)?;
    w_u64(w, p.seed)?;
    w_u64(w, p.config_hash)?;
    w_u32(w, p.inputs.len() as u32)?;
    for (name, ck) in &p.inputs {
        w_str(w, name)?;
        w_u64(w, *ck)?;
    }
    w_u32(w, p.params.len() as u32)?;
    for (k, v) in &p.params {
        w_str(w, k)?;
        w_str(w, v)?;
    }
    Ok(())
}

/// Read a provenance trailer if the stream has one; `Ok(None)` at clean EOF.
pub fn read_provenance<R: Read>(r: &mut R, path: &Path) -> Result<Option<Provenance>> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    }
    if magic != MAGIC_PROVENANCE {
        return Err(Error::BadContainer {
            path: path.to_path_buf(),
            reason: "trailing bytes are not a provenance trailer".into(),
        });
    }
    let inner = |r: &mut R| -> std::io::Result<Provenance> {
        let _version = r_u32(r)?;
        let seed = r_u64(r)?;
        let config_hash = r_u64(r)?;
        let n_inputs = r_u32(r)? as usize;
        let mut inputs = Vec::with_capacity(n_inputs);
        for _ in 0..n_inputs {
            let name = r_str(r)?;
            let ck = r_u64(r)?;
            inputs.push((name, ck));
        }
        let n_params = r_u32(r)? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let k = r_str(r)?;
            let v = r_str(r)?;
            params.push((k, v));
        }
        Ok(Provenance {
            seed,
            config_hash,
            inputs,
            params,
        })
    };
    inner(r).map(Some).map_err(|e| Error::io(path, e))
}

/// Open a buffered reader with path context on failure.
pub fn open_reader(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Write a text table, optionally preceded by one `#` comment line (used by
/// the pipeline to stamp seed and config hash into tab-separated outputs;
/// every loader skips such lines).
pub fn write_tsv(path: &Path, comment: Option<&str>, body: &str) -> Result<()> {
    let mut out = String::new();
    if let Some(c) = comment {
        debug_assert!(!c.contains('\n'), "comment must be a single line");
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(body);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
