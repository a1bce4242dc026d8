//! Dense representation matrices and their on-disk container.
//!
//! One row per catalog entry, special tokens included. The container is a
//! fixed little-endian layout: magic "MREP", format version, row count N
//! (u64), width h (u32), dtype byte (0 = f32, 1 = f64), then row-major
//! values. An optional provenance trailer follows the payload.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::container::{
    self, open_reader, read_header, read_provenance, write_header, write_provenance, Provenance,
    MAGIC_MATRIX,
};
use crate::error::{Error, Result};
use crate::vocab::ConceptCatalog;

/// Which stage produced the rows: text-derived inputs or graph-trained
/// outputs. The container does not store the kind; callers assert it from
/// context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprKind {
    Text,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixDtype {
    F32,
    F64,
}

impl MatrixDtype {
    fn code(self) -> u8 {
        match self {
            MatrixDtype::F32 => 0,
            MatrixDtype::F64 => 1,
        }
    }

    fn from_code(code: u8, path: &Path) -> Result<Self> {
        match code {
            0 => Ok(MatrixDtype::F32),
            1 => Ok(MatrixDtype::F64),
            other => Err(Error::BadContainer {
                path: path.to_path_buf(),
                reason: format!("unknown dtype code {other}"),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RepresentationMatrix {
    pub kind: ReprKind,
    values: Array2<f64>,
}

impl RepresentationMatrix {
    /// Wrap a matrix, rejecting non-finite entries.
    pub fn new(kind: ReprKind, values: Array2<f64>) -> Result<Self> {
        if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid {
                what: "representation matrix".into(),
                reason: format!("non-finite entry {v} at ({r}, {c})"),
            });
        }
        Ok(RepresentationMatrix { kind, values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn h(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, k: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.row(k)
    }

    /// Serialize with the requested element dtype plus an optional
    /// provenance trailer.
    pub fn write(
        &self,
        path: &Path,
        dtype: MatrixDtype,
        prov: Option<&Provenance>,
    ) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e: std::io::Error| Error::io(path, e);
        write_header(&mut w, MAGIC_MATRIX).map_err(io)?;
        container::w_u64(&mut w, self.n() as u64).map_err(io)?;
        container::w_u32(&mut w, self.h() as u32).map_err(io)?;
        container::w_u8(&mut w, dtype.code()).map_err(io)?;
        for v in self.values.iter() {
            match dtype {
                MatrixDtype::F32 => w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?,
                MatrixDtype::F64 => w.write_all(&v.to_le_bytes()).map_err(io)?,
            }
        }
        if let Some(p) = prov {
            write_provenance(&mut w, p).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Deserialize. f32 payloads widen losslessly to f64.
    pub fn read(path: &Path, kind: ReprKind) -> Result<(Self, Option<Provenance>)> {
        let mut r = open_reader(path)?;
        let io = |e: std::io::Error| Error::io(path, e);
        read_header(&mut r, MAGIC_MATRIX, path)?;
        let n = container::r_u64(&mut r).map_err(io)? as usize;
        let h = container::r_u32(&mut r).map_err(io)? as usize;
        let dtype = MatrixDtype::from_code(container::r_u8(&mut r).map_err(io)?, path)?;
        let mut values = Vec::with_capacity(n * h);
        match dtype {
            MatrixDtype::F32 => {
                let mut buf = [0u8; 4];
                for _ in 0..n * h {
                    r.read_exact(&mut buf).map_err(io)?;
                    values.push(f32::from_le_bytes(buf) as f64);
                }
            }
            MatrixDtype::F64 => {
                let mut buf = [0u8; 8];
                for _ in 0..n * h {
                    r.read_exact(&mut buf).map_err(io)?;
                    values.push(f64::from_le_bytes(buf));
                }
            }
        }
        let prov = read_provenance(&mut r, path)?;
        let values = Array2::from_shape_vec((n, h), values)
            .expect("shape follows from the element count just read");
        Ok((Self::new(kind, values)?, prov))
    }
}

/// Load a text-embedding matrix and check it covers the catalog row-for-row.
pub fn load_embedding_matrix(
    path: &Path,
    catalog: &ConceptCatalog,
) -> Result<RepresentationMatrix> {
    let (m, _) = RepresentationMatrix::read(path, ReprKind::Text)?;
    if m.n() != catalog.len() {
        return Err(Error::BadDimension {
            expected: catalog.len(),
            got: m.n(),
        });
    }
    Ok(m)
}
