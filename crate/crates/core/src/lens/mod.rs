//! Lenses: reduction operators from a `K x T` embedding matrix to a
//! fixed-length sentence vector.
//!
//! * [`LensParameters::MeanPool`] averages the columns. No parameters.
//! * [`SimpleLens`] applies `φ(W e_t + b)` to every column and max-pools
//!   over time.
//! * [`GatedConvLens`] runs an encoder stack and a controller stack of
//!   identical shape (a linear layer followed by `M` same-padded
//!   convolutions), fuses them as `H_M ⊙ G_M + G_0`, applies an affine
//!   layer and max-pools over time. The last encoder layer uses tanh, the
//!   last controller layer a sigmoid, every other layer relu.

mod checkpoint;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ops, Activation, Scalar, Tape, Tensor, Var};

pub use checkpoint::{CLLP_MAGIC, CLLP_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    MeanPool,
    Simple,
    GatedConv,
}

impl EncoderKind {
    pub fn code(self) -> u32 {
        match self {
            EncoderKind::MeanPool => 0,
            EncoderKind::Simple => 1,
            EncoderKind::GatedConv => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T: Scalar = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Layer<T> {
    fn cast<U: Scalar>(&self) -> Layer<U> {
        Layer {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }

    fn zeros_like(&self) -> Self {
        Layer {
            weight: Tensor::zeros(self.weight.shape().to_vec()),
            bias: Tensor::zeros(self.bias.shape().to_vec()),
        }
    }
}

fn xavier<T: Scalar>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(dist.sample(rng))).collect();
    Tensor::new(shape, data).expect("length matches shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimpleLens<T: Scalar = f32> {
    /// `D x K`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> SimpleLens<T> {
    pub fn init(input_dim: usize, output_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Self {
            weight: xavier(vec![output_dim, input_dim], input_dim, output_dim, rng),
            bias: Tensor::zeros(vec![output_dim]),
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, _) = self.weight.dims2("simple lens")?;
        if d == 0 || self.bias.shape() != [d] {
            return Err(Error::shape(
                "simple lens",
                format!("weight {:?} vs bias {:?}", self.weight.shape(), self.bias.shape()),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatedConvLens<T: Scalar = f32> {
    /// Layer 0 has a `C x K` weight; layers `1..=M` have `C x C x width`.
    pub encoder: Vec<Layer<T>>,
    /// Same shapes as `encoder`.
    pub controller: Vec<Layer<T>>,
    /// `D x C`.
    pub fusion: Layer<T>,
    pub fusion_activation: Activation,
}

impl<T: Scalar> GatedConvLens<T> {
    pub fn init(
        input_dim: usize,
        channels: usize,
        output_dim: usize,
        depth: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("gated conv depth must be at least 1".into()));
        }
        if width.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "convolution width must be odd for same padding, got {width}"
            )));
        }
        let stack = |rng: &mut _| {
            let mut layers = vec![Layer {
                weight: xavier(vec![channels, input_dim], input_dim, channels, rng),
                bias: Tensor::zeros(vec![channels]),
            }];
            for _ in 0..depth {
                layers.push(Layer {
                    weight: xavier(vec![channels, channels, width], channels * width, channels * width, rng),
                    bias: Tensor::zeros(vec![channels]),
                });
            }
            layers
        };
        let encoder = stack(rng);
        let controller = stack(rng);
        let fusion = Layer {
            weight: xavier(vec![output_dim, channels], channels, output_dim, rng),
            bias: Tensor::zeros(vec![output_dim]),
        };
        Ok(Self {
            encoder,
            controller,
            fusion,
            fusion_activation: Activation::Relu,
        })
    }

    pub fn depth(&self) -> usize {
        self.encoder.len().saturating_sub(1)
    }

    pub fn channels(&self) -> usize {
        self.encoder.first().map_or(0, |l| l.weight.shape()[0])
    }

    pub fn width(&self) -> usize {
        self.encoder.get(1).map_or(1, |l| l.weight.shape()[2])
    }

    /// Sets every controller weight and bias to zero.
    pub fn zero_controller(&mut self) {
        for layer in &mut self.controller {
            *layer = layer.zeros_like();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::shape("gated conv lens", detail));
        if self.encoder.len() < 2 {
            return bad("needs a linear layer and at least one convolution".into());
        }
        if self.encoder.len() != self.controller.len() {
            return bad("encoder and controller depths differ".into());
        }
        let first = &self.encoder[0];
        let (c, _) = first.weight.dims2("gated conv lens")?;
        for (i, (h, g)) in self.encoder.iter().zip(&self.controller).enumerate() {
            if h.weight.shape() != g.weight.shape() || h.bias.shape() != g.bias.shape() {
                return bad(format!("layer {i}: encoder and controller shapes differ"));
            }
            if h.bias.shape() != [c] {
                return bad(format!("layer {i}: bias shape {:?}", h.bias.shape()));
            }
            if i > 0 {
                match *h.weight.shape() {
                    [o, ci, w] if o == c && ci == c && w % 2 == 1 => {}
                    ref s => return bad(format!("layer {i}: kernel shape {s:?}")),
                }
            }
        }
        let (d, fc) = self.fusion.weight.dims2("gated conv lens")?;
        if fc != c || self.fusion.bias.shape() != [d] {
            return bad(format!("fusion weight {:?}", self.fusion.weight.shape()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LensParameters<T: Scalar = f32> {
    MeanPool { dim: usize },
    Simple(SimpleLens<T>),
    GatedConv(GatedConvLens<T>),
}

impl<T: Scalar> LensParameters<T> {
    pub fn kind(&self) -> EncoderKind {
        match self {
            LensParameters::MeanPool { .. } => EncoderKind::MeanPool,
            LensParameters::Simple(_) => EncoderKind::Simple,
            LensParameters::GatedConv(_) => EncoderKind::GatedConv,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            LensParameters::MeanPool { dim } => *dim,
            LensParameters::Simple(s) => s.weight.shape()[1],
            LensParameters::GatedConv(g) => g.encoder[0].weight.shape()[1],
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            LensParameters::MeanPool { dim } => *dim,
            LensParameters::Simple(s) => s.weight.shape()[0],
            LensParameters::GatedConv(g) => g.fusion.weight.shape()[0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LensParameters::MeanPool { dim } if *dim == 0 => {
                Err(Error::Config("mean-pool dimension must be positive".into()))
            }
            LensParameters::MeanPool { .. } => Ok(()),
            LensParameters::Simple(s) => s.validate(),
            LensParameters::GatedConv(g) => g.validate(),
        }
    }

    /// All trainable tensors in a fixed order (the checkpoint order).
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        match self {
            LensParameters::MeanPool { .. } => Vec::new(),
            LensParameters::Simple(s) => vec![&s.weight, &s.bias],
            LensParameters::GatedConv(g) => g
                .encoder
                .iter()
                .chain(&g.controller)
                .chain(std::iter::once(&g.fusion))
                .flat_map(|l| [&l.weight, &l.bias])
                .collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            LensParameters::MeanPool { .. } => Vec::new(),
            LensParameters::Simple(s) => vec![&mut s.weight, &mut s.bias],
            LensParameters::GatedConv(g) => g
                .encoder
                .iter_mut()
                .chain(g.controller.iter_mut())
                .chain(std::iter::once(&mut g.fusion))
                .flat_map(|l| [&mut l.weight, &mut l.bias])
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> LensParameters<U> {
        match self {
            LensParameters::MeanPool { dim } => LensParameters::MeanPool { dim: *dim },
            LensParameters::Simple(s) => LensParameters::Simple(SimpleLens {
                weight: s.weight.cast(),
                bias: s.bias.cast(),
                activation: s.activation,
            }),
            LensParameters::GatedConv(g) => LensParameters::GatedConv(GatedConvLens {
                encoder: g.encoder.iter().map(Layer::cast).collect(),
                controller: g.controller.iter().map(Layer::cast).collect(),
                fusion: g.fusion.cast(),
                fusion_activation: g.fusion_activation,
            }),
        }
    }

    /// Records the parameters on `tape` as trainable leaves.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundLens {
        let mut params = Vec::new();
        let mut leaf = |t: &Tensor<T>, tape: &mut Tape<T>| {
            let v = tape.param(t.clone());
            params.push(v);
            v
        };
        let shape = match self {
            LensParameters::MeanPool { dim } => BoundShape::MeanPool { dim: *dim },
            LensParameters::Simple(s) => BoundShape::Simple {
                weight: leaf(&s.weight, tape),
                bias: leaf(&s.bias, tape),
                activation: s.activation,
            },
            LensParameters::GatedConv(g) => {
                let mut layers = |ls: &[Layer<T>], tape: &mut Tape<T>| -> Vec<(Var, Var)> {
                    ls.iter()
                        .map(|l| (leaf(&l.weight, tape), leaf(&l.bias, tape)))
                        .collect()
                };
                let encoder = layers(&g.encoder, tape);
                let controller = layers(&g.controller, tape);
                let fusion = layers(std::slice::from_ref(&g.fusion), tape)[0];
                BoundShape::GatedConv {
                    encoder,
                    controller,
                    fusion,
                    fusion_activation: g.fusion_activation,
                }
            }
        };
        BoundLens { shape, params }
    }

    /// Encodes one `K x T` matrix. For many sentences use
    /// [`crate::vectors::batch_encode`], which reuses one bound tape.
    pub fn encode(&self, embeddings: &Tensor<T>) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let e = tape.constant(embeddings.clone());
        let s = bound.encode(&mut tape, e)?;
        Ok(tape.value(s).data().to_vec())
    }
}

#[derive(Clone, Debug)]
enum BoundShape {
    MeanPool {
        dim: usize,
    },
    Simple {
        weight: Var,
        bias: Var,
        activation: Activation,
    },
    GatedConv {
        encoder: Vec<(Var, Var)>,
        controller: Vec<(Var, Var)>,
        fusion: (Var, Var),
        fusion_activation: Activation,
    },
}

/// Lens parameters recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundLens {
    shape: BoundShape,
    params: Vec<Var>,
}

impl BoundLens {
    /// Tape handles of the parameters, in [`LensParameters::tensors`] order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    /// Encodes the `K x T` matrix `e` into a rank-1 sentence vector.
    pub fn encode<T: Scalar>(&self, tape: &mut Tape<T>, e: Var) -> Result<Var> {
        let (k, t) = tape.value(e).dims2("encode")?;
        if t == 0 {
            return Err(Error::EmptySequence("sentence has no tokens".into()));
        }
        match &self.shape {
            BoundShape::MeanPool { dim } => {
                if k != *dim {
                    return Err(Error::shape("meanpool", format!("lens expects K={dim}, got {k}")));
                }
                let s = ops::meanpool_time(tape.value(e))?;
                Ok(tape.constant(s))
            }
            &BoundShape::Simple {
                weight,
                bias,
                activation,
            } => {
                let y = tape.linear(weight, bias, e)?;
                let f = tape.activation(activation, y)?;
                tape.maxpool_time(f)
            }
            BoundShape::GatedConv {
                encoder,
                controller,
                fusion,
                fusion_activation,
            } => {
                let h = gated_stack(tape, encoder, e, Activation::Tanh)?;
                let (g0, g) = gated_stack_with_first(tape, controller, e, Activation::Sigmoid)?;
                let gated = tape.mul(h, g)?;
                let fused = tape.add(gated, g0)?;
                let y = tape.linear(fusion.0, fusion.1, fused)?;
                let f = tape.activation(*fusion_activation, y)?;
                tape.maxpool_time(f)
            }
        }
    }
}

fn gated_stack<T: Scalar>(tape: &mut Tape<T>, layers: &[(Var, Var)], e: Var, last: Activation) -> Result<Var> {
    Ok(gated_stack_with_first(tape, layers, e, last)?.1)
}

/// Returns `(layer 0 output, layer M output)`.
fn gated_stack_with_first<T: Scalar>(
    tape: &mut Tape<T>,
    layers: &[(Var, Var)],
    e: Var,
    last: Activation,
) -> Result<(Var, Var)> {
    let depth = layers.len() - 1;
    let act = |i: usize| if i == depth { last } else { Activation::Relu };
    let (w0, b0) = layers[0];
    let pre = tape.linear(w0, b0, e)?;
    let first = tape.activation(act(0), pre)?;
    let mut h = first;
    for (i, &(w, b)) in layers.iter().enumerate().skip(1) {
        let pre = tape.conv1d_same(w, b, h)?;
        h = tape.activation(act(i), pre)?;
    }
    Ok((first, h))
}
