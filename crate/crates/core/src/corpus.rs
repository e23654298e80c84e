//! Embedding corpora and the CLEM binary format.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CLEM" | u32 version | u32 K | u64 N
//! N x ( u64 id | [u8; 8] lang (space padded) | u32 T | K*T f32, row-major K x T )
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CLEM_MAGIC: &[u8; 4] = b"CLEM";
pub const CLEM_VERSION: u32 = 1;
pub const LANG_TAG_LEN: usize = 8;

/// Token embeddings of one sentence: a `K x T` matrix, one column per token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub id: u64,
    pub lang: String,
    pub embeddings: Tensor<f32>,
}

impl EmbeddingRecord {
    pub fn new(id: u64, lang: impl Into<String>, embeddings: Tensor<f32>) -> Result<Self> {
        let lang = lang.into();
        validate_lang(&lang)?;
        let (_, t) = embeddings.dims2("embedding record")?;
        if t == 0 {
            return Err(Error::EmptySequence(format!("record {id} has no tokens")));
        }
        if !embeddings.is_finite() {
            return Err(Error::NonFinite(format!("record {id}")));
        }
        Ok(Self { id, lang, embeddings })
    }

    pub fn dim(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn tokens(&self) -> usize {
        self.embeddings.shape()[1]
    }
}

fn validate_lang(lang: &str) -> Result<()> {
    if lang.is_empty() || lang.len() > LANG_TAG_LEN || !lang.bytes().all(|b| b.is_ascii_graphic()) {
        return Err(Error::Config(format!(
            "language tag {lang:?} must be 1-{LANG_TAG_LEN} printable ASCII characters"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCorpus {
    dim: usize,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingCorpus {
    pub fn new(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.dim() != dim {
                return Err(Error::shape(
                    "corpus",
                    format!("record {} has K={} but corpus K={dim}", r.id, r.dim()),
                ));
            }
            if !seen.insert(r.id) {
                return Err(Error::Config(format!("duplicate record id {}", r.id)));
            }
        }
        Ok(Self { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CLEM_MAGIC)?;
        w.write_all(&CLEM_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.id.to_le_bytes())?;
            let mut tag = [b' '; LANG_TAG_LEN];
            tag[..r.lang.len()].copy_from_slice(r.lang.as_bytes());
            w.write_all(&tag)?;
            w.write_all(&(r.tokens() as u32).to_le_bytes())?;
            for v in r.embeddings.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_from(BufReader::new(file), path)
    }

    /// Parses CLEM from any byte stream. `origin` is only used in errors.
    pub fn read_from(mut r: impl Read, origin: &Path) -> Result<Self> {
        let mut src = Source { r: &mut r, origin };
        let magic = src.bytes::<4>("magic")?;
        if &magic != CLEM_MAGIC {
            return Err(Error::BadMagic {
                path: origin.to_path_buf(),
                expected: "CLEM".into(),
                found: String::from_utf8_lossy(&magic).into_owned(),
            });
        }
        let version = src.u32("header")?;
        if version != CLEM_VERSION {
            return Err(Error::VersionMismatch {
                path: origin.to_path_buf(),
                expected: CLEM_VERSION,
                found: version,
            });
        }
        let dim = src.u32("header")? as usize;
        let count = src.u64("header")?;
        if dim == 0 {
            return Err(Error::Header {
                path: origin.to_path_buf(),
                detail: "embedding dimension K is zero".into(),
            });
        }
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        let mut seen = HashSet::new();
        for index in 0..count {
            let what = format!("record #{index}");
            let id = src.u64(&what)?;
            let tag = src.bytes::<LANG_TAG_LEN>(&what)?;
            let lang = std::str::from_utf8(&tag)
                .ok()
                .map(|s| s.trim_end_matches(' ').to_string())
                .filter(|s| validate_lang(s).is_ok())
                .ok_or_else(|| Error::Record {
                    path: origin.to_path_buf(),
                    id,
                    detail: format!("invalid language tag {tag:?}"),
                })?;
            let t = src.u32(&what)? as usize;
            if t == 0 {
                return Err(Error::Record {
                    path: origin.to_path_buf(),
                    id,
                    detail: "zero tokens".into(),
                });
            }
            let n = dim.checked_mul(t).ok_or_else(|| Error::Record {
                path: origin.to_path_buf(),
                id,
                detail: "K*T overflows".into(),
            })?;
            let data = src.f32s(n, &what)?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Record {
                    path: origin.to_path_buf(),
                    id,
                    detail: "non-finite embedding value".into(),
                });
            }
            if !seen.insert(id) {
                return Err(Error::Record {
                    path: origin.to_path_buf(),
                    id,
                    detail: "duplicate id".into(),
                });
            }
            records.push(EmbeddingRecord {
                id,
                lang,
                embeddings: Tensor::new(vec![dim, t], data)?,
            });
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
                detail: format!("trailing bytes after {count} records"),
            });
        }
        Ok(Self { dim, records })
    }

    /// SHA-256 of the serialized corpus, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub(crate) struct Source<'a, R: Read> {
    pub r: &'a mut R,
    pub origin: &'a Path,
}

impl<R: Read> Source<'_, R> {
    pub fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf, what)?;
        Ok(buf)
    }

    pub fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.r.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated {
                    path: self.origin.to_path_buf(),
                    detail: format!("unexpected end of file in {what}"),
                }
            } else {
                Error::io(self.origin.display().to_string(), e)
            }
        })
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(what)?))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>(what)?))
    }

    pub fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        // read in bounded chunks so a corrupt length cannot force a huge allocation
        let mut out = Vec::with_capacity(n.min(1 << 16));
        let mut buf = [0u8; 4096];
        let mut remaining = n;
        while remaining > 0 {
            let take = remaining.min(buf.len() / 4);
            self.fill(&mut buf[..take * 4], what)?;
            out.extend(
                buf[..take * 4]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
            remaining -= take;
        }
        Ok(out)
    }
}

/// Id lookup over one or more corpora sharing the same embedding dimension.
#[derive(Debug)]
pub struct CorpusIndex<'a> {
    dim: usize,
    by_id: HashMap<u64, &'a EmbeddingRecord>,
}

impl<'a> CorpusIndex<'a> {
    pub fn new(corpora: impl IntoIterator<Item = &'a EmbeddingCorpus>) -> Result<Self> {
        let mut dim = None;
        let mut by_id = HashMap::new();
        for corpus in corpora {
            match dim {
                None => dim = Some(corpus.dim()),
                Some(k) if k != corpus.dim() => {
                    return Err(Error::shape(
                        "corpus index",
                        format!("corpora disagree on K: {k} vs {}", corpus.dim()),
                    ))
                }
                Some(_) => {}
            }
            for r in corpus.records() {
                if by_id.insert(r.id, r).is_some() {
                    return Err(Error::Config(format!("id {} appears in more than one corpus", r.id)));
                }
            }
        }
        let dim = dim.ok_or_else(|| Error::Config("no corpora given".into()))?;
        Ok(Self { dim, by_id })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: u64) -> Option<&'a EmbeddingRecord> {
        self.by_id.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}
