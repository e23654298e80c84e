//! Sentence-vector matrices and the CLVE file format.
//!
//! ```text
//! "CLVE" | u32 version | u32 D | u64 N | N x (u64 id, D x f32 LE)
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{EmbeddingCorpus, EmbeddingRecord, Source};
use crate::error::{Error, Result};
use crate::lens::{BoundLens, LensParameters};
use crate::tensor::Tape;

pub const CLVE_MAGIC: &[u8; 4] = b"CLVE";
pub const CLVE_VERSION: u32 = 1;

/// `N x D` row-major matrix of sentence vectors with their ids.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVectors {
    dim: usize,
    ids: Vec<u64>,
    data: Vec<f32>,
}

impl SentenceVectors {
    pub fn new(dim: usize, ids: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("sentence vectors", "dimension is zero"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::shape(
                "sentence vectors",
                format!("{} ids x {dim} dims but {} values", ids.len(), data.len()),
            ));
        }
        Ok(Self { dim, ids, data })
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (u64, Vec<f32>)>) -> Result<Self> {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::shape(
                    "sentence vectors",
                    format!("row {id} has {} dims", row.len()),
                ));
            }
            ids.push(id);
            data.extend(row);
        }
        Self::new(dim, ids, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (u64, &[f32])> + '_ {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.dim))
    }

    pub fn id_index(&self) -> HashMap<u64, usize> {
        self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    /// Rows whose ids are in `ids`, in that order.
    pub fn select(&self, ids: &[u64]) -> Result<Self> {
        let index = self.id_index();
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            let i = *index.get(&id).ok_or(Error::UnknownId { id, line: 0 })?;
            data.extend_from_slice(self.row(i));
        }
        Self::new(self.dim, ids.to_vec(), data)
    }

    /// Rows at positions in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dim: self.dim,
            ids: self.ids[range.clone()].to_vec(),
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.len() * (8 + 4 * self.dim));
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CLVE_MAGIC)?;
        w.write_all(&CLVE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (id, row) in self.rows() {
            w.write_all(&id.to_le_bytes())?;
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ctx = || path.display().to_string();
        let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(ctx(), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from(mut r: impl Read, origin: &Path) -> Result<Self> {
        let mut src = Source { r: &mut r, origin };
        let magic = src.bytes::<4>("magic")?;
        if &magic != CLVE_MAGIC {
            return Err(Error::BadMagic {
                path: origin.to_path_buf(),
                expected: "CLVE".into(),
                found: String::from_utf8_lossy(&magic).into_owned(),
            });
        }
        let version = src.u32("header")?;
        if version != CLVE_VERSION {
            return Err(Error::VersionMismatch {
                path: origin.to_path_buf(),
                expected: CLVE_VERSION,
                found: version,
            });
        }
        let dim = src.u32("header")? as usize;
        let count = src.u64("header")?;
        if dim == 0 {
            return Err(Error::Header {
                path: origin.to_path_buf(),
                detail: "vector dimension D is zero".into(),
            });
        }
        let mut ids = Vec::with_capacity(count.min(1 << 20) as usize);
        let mut data = Vec::with_capacity((count as usize).saturating_mul(dim).min(1 << 20));
        let mut seen = HashSet::new();
        for index in 0..count {
            let what = format!("vector #{index}");
            let id = src.u64(&what)?;
            let row = src.f32s(dim, &what)?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Record {
                    path: origin.to_path_buf(),
                    id,
                    detail: "non-finite vector value".into(),
                });
            }
            if !seen.insert(id) {
                return Err(Error::Record {
                    path: origin.to_path_buf(),
                    id,
                    detail: "duplicate id".into(),
                });
            }
            ids.push(id);
            data.extend(row);
        }
        let mut trailing = [0u8; 1];
        if src
            .r
            .read(&mut trailing)
            .map_err(|e| Error::io(origin.display().to_string(), e))?
            != 0
        {
            return Err(Error::Truncated {
                path: origin.to_path_buf(),
                detail: format!("trailing bytes after {count} vectors"),
            });
        }
        Self::new(dim, ids, data)
    }
}

/// One tape with the lens bound once; each sentence is recorded after the
/// parameters and then truncated away.
struct Encoder {
    tape: Tape<f32>,
    bound: BoundLens,
    mark: usize,
}

impl Encoder {
    fn new(lens: &LensParameters) -> Self {
        let mut tape = Tape::new();
        let bound = lens.bind(&mut tape);
        let mark = tape.len();
        Self { tape, bound, mark }
    }

    fn encode(&mut self, record: &EmbeddingRecord) -> Result<Vec<f32>> {
        let e = self.tape.constant(record.embeddings.clone());
        let out = self
            .bound
            .encode(&mut self.tape, e)
            .map(|s| self.tape.value(s).data().to_vec());
        self.tape.truncate(self.mark);
        out.map_err(|source| Error::Encode {
            id: record.id,
            source: Box::new(source),
        })
    }
}

/// Encodes every record of `corpus`. Rows follow record order and do not
/// depend on `threads`; `threads <= 1` runs on the calling thread.
pub fn batch_encode(corpus: &EmbeddingCorpus, lens: &LensParameters, threads: usize) -> Result<SentenceVectors> {
    let records: Vec<&EmbeddingRecord> = corpus.records().iter().collect();
    encode_records(corpus.dim(), &records, lens, threads)
}

/// [`batch_encode`] over an arbitrary selection of records of dimension `dim`.
pub fn encode_records(
    dim: usize,
    records: &[&EmbeddingRecord],
    lens: &LensParameters,
    threads: usize,
) -> Result<SentenceVectors> {
    if dim != lens.input_dim() {
        return Err(Error::shape(
            "batch encode",
            format!("corpus K={dim} but lens expects K={}", lens.input_dim()),
        ));
    }
    let rows: Vec<Vec<f32>> = if threads <= 1 {
        let mut enc = Encoder::new(lens);
        records.iter().map(|r| enc.encode(r)).collect::<Result<_>>()?
    } else {
        crate::parallel::install(threads, || {
            records
                .par_iter()
                .map_init(|| Encoder::new(lens), |enc, r| enc.encode(r))
                .collect::<Result<_>>()
        })??
    };
    SentenceVectors::from_rows(lens.output_dim(), records.iter().map(|r| r.id).zip(rows))
}
