//! CLLP: binary lens checkpoints.
//!
//! ```text
//! "CLLP" | u32 version | u32 kind | u32 output_dim
//! u32 n_attrs | n_attrs x u32
//! u32 n_tensors | per tensor: u32 rank, rank x u32 dims
//! all tensor data, f32 LE, in tensor order
//! ```
//!
//! Attributes: mean-pool has none; simple stores its activation code;
//! gated conv stores the depth and the fusion activation code. Tensors are
//! listed in [`LensParameters::tensors`] order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GatedConvLens, Layer, LensParameters, SimpleLens};
use crate::corpus::Source;
use crate::error::{Error, Result};
use crate::tensor::{Activation, Tensor};

pub const CLLP_MAGIC: &[u8; 4] = b"CLLP";
pub const CLLP_VERSION: u32 = 1;

const MAX_RANK: u32 = 3;

impl LensParameters<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let put = |v: u32, w: &mut dyn Write| w.write_all(&v.to_le_bytes());
        w.write_all(CLLP_MAGIC)?;
        put(CLLP_VERSION, w)?;
        put(self.kind().code(), w)?;
        put(self.output_dim() as u32, w)?;
        let attrs: Vec<u32> = match self {
            LensParameters::MeanPool { .. } => vec![],
            LensParameters::Simple(s) => vec![s.activation.code()],
            LensParameters::GatedConv(g) => vec![g.depth() as u32, g.fusion_activation.code()],
        };
        put(attrs.len() as u32, w)?;
        for a in attrs {
            put(a, w)?;
        }
        let tensors = self.tensors();
        put(tensors.len() as u32, w)?;
        for t in &tensors {
            put(t.rank() as u32, w)?;
            for &d in t.shape() {
                put(d as u32, w)?;
            }
        }
        for t in &tensors {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ctx = || path.display().to_string();
        let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(ctx(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from(mut r: impl Read, origin: &Path) -> Result<Self> {
        let header = |detail: String| Error::Header {
            path: origin.to_path_buf(),
            detail,
        };
        let mut src = Source { r: &mut r, origin };
        let magic = src.bytes::<4>("magic")?;
        if &magic != CLLP_MAGIC {
            return Err(Error::BadMagic {
                path: origin.to_path_buf(),
                expected: "CLLP".into(),
                found: String::from_utf8_lossy(&magic).into_owned(),
            });
        }
        let version = src.u32("header")?;
        if version != CLLP_VERSION {
            return Err(Error::VersionMismatch {
                path: origin.to_path_buf(),
                expected: CLLP_VERSION,
                found: version,
            });
        }
        let kind = src.u32("header")?;
        let output_dim = src.u32("header")? as usize;
        let n_attrs = src.u32("header")?;
        if n_attrs > 16 {
            return Err(header(format!("implausible attribute count {n_attrs}")));
        }
        let attrs = (0..n_attrs)
            .map(|_| src.u32("attributes"))
            .collect::<Result<Vec<_>>>()?;
        let n_tensors = src.u32("header")?;
        if n_tensors > 4096 {
            return Err(header(format!("implausible tensor count {n_tensors}")));
        }
        let mut shapes = Vec::with_capacity(n_tensors as usize);
        for i in 0..n_tensors {
            let rank = src.u32("tensor table")?;
            if rank == 0 || rank > MAX_RANK {
                return Err(header(format!("tensor {i} has rank {rank}")));
            }
            let dims = (0..rank)
                .map(|_| src.u32("tensor table").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            shapes.push(dims);
        }
        let mut tensors = Vec::with_capacity(shapes.len());
        for shape in shapes {
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| header("tensor size overflows".into()))?;
            let data = src.f32s(n, "tensor data")?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(header("non-finite parameter value".into()));
            }
            tensors.push(Tensor::new(shape, data)?);
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
                detail: "trailing bytes after tensor data".into(),
            });
        }

        let activation =
            |code: u32| Activation::from_code(code).ok_or_else(|| header(format!("unknown activation code {code}")));
        let expect_tensors = |n: usize| {
            if tensors.len() == n {
                Ok(())
            } else {
                Err(header(format!("expected {n} tensors, found {}", tensors.len())))
            }
        };
        let lens = match (kind, attrs.as_slice()) {
            (0, []) => {
                expect_tensors(0)?;
                LensParameters::MeanPool { dim: output_dim }
            }
            (1, &[act]) => {
                expect_tensors(2)?;
                let mut it = tensors.into_iter();
                LensParameters::Simple(SimpleLens {
                    weight: it.next().expect("counted"),
                    bias: it.next().expect("counted"),
                    activation: activation(act)?,
                })
            }
            (2, &[depth, act]) => {
                let layers = depth as usize + 1;
                expect_tensors(4 * layers + 2)?;
                let fusion_activation = activation(act)?;
                let mut pairs: Vec<Layer> = Vec::with_capacity(2 * layers + 1);
                let mut it = tensors.into_iter();
                while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
                    pairs.push(Layer { weight, bias });
                }
                let fusion = pairs.pop().expect("counted");
                let controller = pairs.split_off(layers);
                LensParameters::GatedConv(GatedConvLens {
                    encoder: pairs,
                    controller,
                    fusion,
                    fusion_activation,
                })
            }
            (0..=2, _) => return Err(header(format!("wrong attributes {attrs:?} for kind {kind}"))),
            _ => return Err(header(format!("unknown lens kind {kind}"))),
        };
        lens.validate().map_err(|e| header(e.to_string()))?;
        if lens.output_dim() != output_dim {
            return Err(header(format!(
                "output_dim {output_dim} disagrees with parameters ({})",
                lens.output_dim()
            )));
        }
        Ok(lens)
    }
}
