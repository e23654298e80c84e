//! Siamese training objectives recorded on a tape.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lens::BoundLens;
use crate::tensor::{Activation, Scalar, Tape, Tensor, Var};

/// `concat(u, v, u ⊙ v, |u − v|)`.
pub fn classifier_features<T: Scalar>(u: &[T], v: &[T]) -> Result<Vec<T>> {
    if u.len() != v.len() {
        return Err(Error::shape(
            "classifier features",
            format!("{} vs {}", u.len(), v.len()),
        ));
    }
    let mut out = Vec::with_capacity(4 * u.len());
    out.extend_from_slice(u);
    out.extend_from_slice(v);
    out.extend(u.iter().zip(v).map(|(&a, &b)| a * b));
    out.extend(u.iter().zip(v).map(|(&a, &b)| (a - b).abs()));
    Ok(out)
}

/// Tape version of [`classifier_features`].
pub fn classifier_features_on<T: Scalar>(tape: &mut Tape<T>, u: Var, v: Var) -> Result<Var> {
    let prod = tape.mul(u, v)?;
    let diff = tape.sub(u, v)?;
    let absdiff = tape.abs(diff)?;
    tape.concat(&[u, v, prod, absdiff])
}

/// Two-layer softmax classifier over pair features.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead<T: Scalar = f32> {
    /// `hidden x 4D`.
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    /// `classes x hidden`.
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

fn xavier<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.random_range(-limit..=limit)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("length matches shape")
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn init(dim: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: xavier(hidden, 4 * dim, rng),
            b1: Tensor::zeros(vec![hidden]),
            w2: xavier(classes, hidden, rng),
            b2: Tensor::zeros(vec![classes]),
        }
    }

    pub fn classes(&self) -> usize {
        self.w2.shape()[0]
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> BoundHead {
        BoundHead {
            params: [
                tape.param(self.w1.clone()),
                tape.param(self.b1.clone()),
                tape.param(self.w2.clone()),
                tape.param(self.b2.clone()),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundHead {
    pub params: [Var; 4],
}

impl BoundHead {
    /// Logits (`classes x B`) for a `4D x B` feature matrix.
    pub fn logits<T: Scalar>(&self, tape: &mut Tape<T>, features: Var) -> Result<Var> {
        let [w1, b1, w2, b2] = self.params;
        let h = tape.linear(w1, b1, features)?;
        let h = tape.activation(Activation::Relu, h)?;
        tape.linear(w2, b2, h)
    }
}

/// Mean cross-entropy of the head over a batch of encoded pairs.
pub fn classifier_loss<T: Scalar>(
    tape: &mut Tape<T>,
    head: &BoundHead,
    pairs: &[(Var, Var)],
    labels: &[usize],
) -> Result<Var> {
    let feats = pairs
        .iter()
        .map(|&(u, v)| classifier_features_on(tape, u, v))
        .collect::<Result<Vec<_>>>()?;
    let x = tape.stack_columns(&feats)?;
    let logits = head.logits(tape, x)?;
    tape.softmax_cross_entropy(logits, labels)
}

/// Sum over the batch of bidirectional max-of-hinges on the cosine score
/// matrix `S[i][j] = cos(u_i, v_j)`.
pub fn ranker_loss<T: Scalar>(tape: &mut Tape<T>, pairs: &[(Var, Var)], margin: f64) -> Result<Var> {
    if pairs.len() < 2 {
        return Err(Error::Config("ranker loss needs at least two pairs per batch".into()));
    }
    let (us, vs): (Vec<Var>, Vec<Var>) = pairs.iter().copied().unzip();
    let u = tape.stack_columns(&us)?;
    let v = tape.stack_columns(&vs)?;
    let u = tape.normalize_columns(u)?;
    let v = tape.normalize_columns(v)?;
    let s = tape.inner_products(u, v)?;
    tape.max_hinge(s, T::from_f64(margin))
}

/// Encodes both sides of every pair with the shared lens.
pub fn encode_pairs<T: Scalar>(
    tape: &mut Tape<T>,
    lens: &BoundLens,
    inputs: impl IntoIterator<Item = (Tensor<T>, Tensor<T>)>,
) -> Result<Vec<(Var, Var)>> {
    inputs
        .into_iter()
        .map(|(a, b)| {
            let a = tape.constant(a);
            let b = tape.constant(b);
            Ok((lens.encode(tape, a)?, lens.encode(tape, b)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_layout() {
        let f = classifier_features(&[1.0, 2.0], &[3.0, 1.0]).unwrap();
        assert_eq!(f, vec![1.0, 2.0, 3.0, 1.0, 3.0, 2.0, 2.0, 1.0]);
        let same = classifier_features(&[0.3, -1.0, 2.0], &[0.3, -1.0, 2.0]).unwrap();
        assert!(same[9..].iter().all(|&x| x == 0.0));
        assert!(classifier_features(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tape_features_match_plain() {
        let mut tape = Tape::<f64>::new();
        let u = tape.constant(Tensor::vector(vec![1.0, -2.0]));
        let v = tape.constant(Tensor::vector(vec![0.5, 3.0]));
        let f = classifier_features_on(&mut tape, u, v).unwrap();
        assert_eq!(
            tape.value(f).data(),
            classifier_features(&[1.0, -2.0], &[0.5, 3.0]).unwrap().as_slice()
        );
    }

    #[test]
    fn ranker_loss_needs_two_pairs() {
        let mut tape = Tape::<f64>::new();
        let u = tape.constant(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(ranker_loss(&mut tape, &[(u, u)], 0.2), Err(Error::Config(_))));
    }
}
