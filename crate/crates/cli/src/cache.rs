//! Binary cache records.
//!
//! Layout: magic `GCNN`, u32 version, u8 kind, u64 dimension count followed
//! by that many u64 dimensions, then the payload. Everything is little-endian.
//! Float payloads are f64; sparse index arrays are u64.
//!
//! | kind     | dims                              | payload                                  |
//! |----------|-----------------------------------|------------------------------------------|
//! | DENSE    | `[rows, cols]`                    | values, row-major                        |
//! | SPARSE   | `[rows, cols, nnz, n_rho, n_theta]` | row indices, column indices, values    |
//! | MODEL    | `[input_dim, layers, 8, params]`  | 8 descriptor slots per layer, parameters |
//! | EIGENSYS | `[n, k]`                          | eigenvalues, eigenfunctions row-major, vertex areas, total area |

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use gcnn_core::charting::PatchOperator;
use gcnn_core::mesh::VertexAreas;
use gcnn_core::net::{LayerKind, LayerSpec, Model};
use gcnn_core::sparse::CsrMatrix;
use gcnn_core::spectral::Eigensystem;
use ndarray::Array2;

pub const MAGIC: &[u8; 4] = b"GCNN";
pub const VERSION: u32 = 1;

const LAYER_SLOTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RecordKind {
    Dense = 1,
    Sparse = 2,
    Model = 3,
    Eigensys = 4,
}

impl RecordKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Dense),
            2 => Some(Self::Sparse),
            3 => Some(Self::Model),
            4 => Some(Self::Eigensys),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a cache record (bad magic)")]
    BadMagic,
    #[error("unsupported cache version {0}, expected {VERSION}")]
    Version(u32),
    #[error("expected a {expected:?} record, found kind byte {found}")]
    WrongKind { expected: RecordKind, found: u8 },
    #[error("record truncated")]
    Truncated,
    #[error("invalid record: {0}")]
    Invalid(String),
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new(kind: RecordKind, dims: &[usize]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(kind as u8);
        buf.extend_from_slice(&(dims.len() as u64).to_le_bytes());
        for &d in dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        Self { buf }
    }

    fn floats<'a>(&mut self, xs: impl IntoIterator<Item = &'a f64>) {
        for x in xs {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn indices(&mut self, xs: impl IntoIterator<Item = usize>) {
        for x in xs {
            self.buf.extend_from_slice(&(x as u64).to_le_bytes());
        }
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Checks the header and returns the decoder positioned at the payload.
    fn open(bytes: &'a [u8], kind: RecordKind) -> Result<(Self, Vec<usize>), CacheError> {
        let mut d = Self { bytes, pos: 0 };
        if d.take(4)? != MAGIC {
            return Err(CacheError::BadMagic);
        }
        let version = u32::from_le_bytes(d.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(CacheError::Version(version));
        }
        let found = d.take(1)?[0];
        if RecordKind::from_byte(found) != Some(kind) {
            return Err(CacheError::WrongKind { expected: kind, found });
        }
        let ndims = d.u64()?;
        if ndims > 16 {
            return Err(CacheError::Invalid(format!("{ndims} dimensions")));
        }
        let dims = (0..ndims).map(|_| d.index()).collect::<Result<Vec<_>, _>>()?;
        Ok((d, dims))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CacheError> {
        let end = self.pos.checked_add(n).ok_or(CacheError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CacheError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn index(&mut self) -> Result<usize, CacheError> {
        usize::try_from(self.u64()?).map_err(|_| CacheError::Invalid("index overflows usize".into()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, CacheError> {
        let raw = self.take(n.checked_mul(8).ok_or(CacheError::Truncated)?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn indices(&mut self, n: usize) -> Result<Vec<usize>, CacheError> {
        (0..n).map(|_| self.index()).collect()
    }

    fn finish(self) -> Result<(), CacheError> {
        if self.pos != self.bytes.len() {
            return Err(CacheError::Invalid(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn expect_dims(dims: &[usize], n: usize) -> Result<(), CacheError> {
    if dims.len() != n {
        return Err(CacheError::Invalid(format!("expected {n} dimensions, found {}", dims.len())));
    }
    Ok(())
}

pub fn encode_dense(a: &Array2<f64>) -> Vec<u8> {
    let mut e = Encoder::new(RecordKind::Dense, &[a.nrows(), a.ncols()]);
    e.floats(a.iter());
    e.buf
}

pub fn decode_dense(bytes: &[u8]) -> Result<Array2<f64>, CacheError> {
    let (mut d, dims) = Decoder::open(bytes, RecordKind::Dense)?;
    expect_dims(&dims, 2)?;
    let values = d.floats(dims[0].checked_mul(dims[1]).ok_or(CacheError::Truncated)?)?;
    d.finish()?;
    Array2::from_shape_vec((dims[0], dims[1]), values).map_err(|e| CacheError::Invalid(e.to_string()))
}

pub fn encode_patch_operator(op: &PatchOperator) -> Vec<u8> {
    let m = op.matrix();
    let dims = [m.rows(), m.cols(), m.nnz(), op.n_rho(), op.n_theta()];
    let mut e = Encoder::new(RecordKind::Sparse, &dims);
    e.indices((0..m.rows()).flat_map(|r| std::iter::repeat(r).take(m.row_ptr()[r + 1] - m.row_ptr()[r])));
    e.indices(m.col_indices().iter().copied());
    e.floats(m.values());
    e.buf
}

pub fn decode_patch_operator(bytes: &[u8]) -> Result<PatchOperator, CacheError> {
    let (mut d, dims) = Decoder::open(bytes, RecordKind::Sparse)?;
    expect_dims(&dims, 5)?;
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    let row_idx = d.indices(nnz)?;
    let col_idx = d.indices(nnz)?;
    let values = d.floats(nnz)?;
    d.finish()?;
    // Rebuild the row pointer, insisting on row-major order with sorted columns.
    let mut row_ptr = vec![0usize; rows + 1];
    for (i, &r) in row_idx.iter().enumerate() {
        if r >= rows {
            return Err(CacheError::Invalid(format!("row {r} outside {rows}")));
        }
        if i > 0 && (row_idx[i - 1], col_idx[i - 1]) >= (r, col_idx[i]) {
            return Err(CacheError::Invalid("sparse entries out of order".into()));
        }
        row_ptr[r + 1] += 1;
    }
    for r in 0..rows {
        row_ptr[r + 1] += row_ptr[r];
    }
    let m = CsrMatrix::from_raw(rows, cols, row_ptr, col_idx, values).map_err(|e| CacheError::Invalid(e.to_string()))?;
    PatchOperator::from_matrix(m, dims[3], dims[4]).map_err(|e| CacheError::Invalid(e.to_string()))
}

fn layer_slots(l: &LayerSpec) -> [usize; LAYER_SLOTS] {
    let (code, a, b, c) = match l.kind {
        LayerKind::Lin { bias } => (1, bias as usize, 0, 0),
        LayerKind::Relu => (2, 0, 0, 0),
        LayerKind::Gc { n_rho, n_theta } => (3, n_rho, n_theta, 0),
        LayerKind::Amp { n_rot } => (4, n_rot, 0, 0),
        LayerKind::Ftm { n_rho, n_theta, kept } => (5, n_rho, n_theta, kept),
        LayerKind::Cov => (6, 0, 0, 0),
        LayerKind::Softmax => (7, 0, 0, 0),
    };
    [code, l.in_dim, l.out_dim, a, b, c, 0, 0]
}

fn layer_from_slots(s: &[usize]) -> Result<LayerSpec, CacheError> {
    let kind = match s[0] {
        1 if s[3] <= 1 => LayerKind::Lin { bias: s[3] == 1 },
        2 => LayerKind::Relu,
        3 => LayerKind::Gc { n_rho: s[3], n_theta: s[4] },
        4 => LayerKind::Amp { n_rot: s[3] },
        5 => LayerKind::Ftm { n_rho: s[3], n_theta: s[4], kept: s[5] },
        6 => LayerKind::Cov,
        7 => LayerKind::Softmax,
        _ => return Err(CacheError::Invalid(format!("unknown layer descriptor {s:?}"))),
    };
    Ok(LayerSpec { kind, in_dim: s[1], out_dim: s[2] })
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let params = model.parameters().values();
    let dims = [model.input_dim(), model.layers().len(), LAYER_SLOTS, params.len()];
    let mut e = Encoder::new(RecordKind::Model, &dims);
    let slots: Vec<f64> = model.layers().iter().flat_map(layer_slots).map(|v| v as f64).collect();
    e.floats(&slots);
    e.floats(params);
    e.buf
}

pub fn decode_model(bytes: &[u8]) -> Result<Model, CacheError> {
    let (mut d, dims) = Decoder::open(bytes, RecordKind::Model)?;
    expect_dims(&dims, 4)?;
    if dims[2] != LAYER_SLOTS {
        return Err(CacheError::Invalid(format!("{} slots per layer", dims[2])));
    }
    let slots = d.floats(dims[1].checked_mul(LAYER_SLOTS).ok_or(CacheError::Truncated)?)?;
    let params = d.floats(dims[3])?;
    d.finish()?;
    let ints = slots
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
                Ok(v as usize)
            } else {
                Err(CacheError::Invalid(format!("layer descriptor slot {v}")))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let layers = ints.chunks_exact(LAYER_SLOTS).map(layer_from_slots).collect::<Result<Vec<_>, _>>()?;
    Model::from_parts(dims[0], layers, params).map_err(|e| CacheError::Invalid(e.to_string()))
}

pub fn encode_eigensystem(eig: &Eigensystem) -> Vec<u8> {
    let mut e = Encoder::new(RecordKind::Eigensys, &[eig.n(), eig.k()]);
    e.floats(&eig.eigenvalues);
    e.floats(eig.eigenfunctions.iter());
    e.floats(&eig.mass.areas);
    e.floats([&eig.mass.total]);
    e.buf
}

pub fn decode_eigensystem(bytes: &[u8]) -> Result<Eigensystem, CacheError> {
    let (mut d, dims) = Decoder::open(bytes, RecordKind::Eigensys)?;
    expect_dims(&dims, 2)?;
    let (n, k) = (dims[0], dims[1]);
    let eigenvalues = d.floats(k)?;
    let phi = d.floats(n.checked_mul(k).ok_or(CacheError::Truncated)?)?;
    let areas = d.floats(n)?;
    let total = d.floats(1)?[0];
    d.finish()?;
    if eigenvalues.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(CacheError::Invalid("eigenvalues not ascending".into()));
    }
    let eigenfunctions = Array2::from_shape_vec((n, k), phi).map_err(|e| CacheError::Invalid(e.to_string()))?;
    Ok(Eigensystem {
        eigenvalues,
        eigenfunctions,
        mass: VertexAreas { areas, total },
    })
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CacheError> {
    let io = |source| CacheError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = PathBuf::from(path);
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    tmp.set_file_name(name);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

pub fn read(path: &Path) -> Result<Vec<u8>, CacheError> {
    fs::read(path).map_err(|source| CacheError::Io {
        path: path.display().to_string(),
        source,
    })
}
