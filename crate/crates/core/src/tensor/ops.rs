//! Forward and vector-Jacobian kernels. These are pure functions over
//! tensors; [`super::Tape`] records them and chains the backward passes.

use super::{Activation, Scalar, Tensor};
use crate::error::{Error, Result};

/// `Y[:, t] = W · X[:, t] + b` for `W: D×K`, `b: D`, `X: K×T`.
pub fn linear<T: Scalar>(w: &Tensor<T>, b: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (d, k) = w.dims2("linear")?;
    let (xk, t) = x.dims2("linear")?;
    let bd = b.dims1("linear")?;
    if xk != k || bd != d {
        return Err(Error::shape(
            "linear",
            format!("W is {d}x{k}, b is {bd}, X is {xk}x{t}"),
        ));
    }
    let (wd, xd, bd) = (w.data(), x.data(), b.data());
    let mut out = vec![T::zero(); d * t];
    for row in 0..d {
        let y = &mut out[row * t..(row + 1) * t];
        y.iter_mut().for_each(|v| *v = bd[row]);
        for (kk, &weight) in wd[row * k..(row + 1) * k].iter().enumerate() {
            let xs = &xd[kk * t..(kk + 1) * t];
            for (yv, &xv) in y.iter_mut().zip(xs) {
                *yv = *yv + weight * xv;
            }
        }
    }
    Tensor::new(vec![d, t], out)
}

pub struct LinearGrads<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub x: Option<Tensor<T>>,
}

pub fn linear_backward<T: Scalar>(w: &Tensor<T>, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> LinearGrads<T> {
    let (d, k) = (w.shape()[0], w.shape()[1]);
    let t = x.shape()[1];
    let (wd, xd, gd) = (w.data(), x.data(), dy.data());
    let mut dw = vec![T::zero(); d * k];
    let mut db = vec![T::zero(); d];
    for row in 0..d {
        let g = &gd[row * t..(row + 1) * t];
        db[row] = g.iter().fold(T::zero(), |acc, &v| acc + v);
        for kk in 0..k {
            let xs = &xd[kk * t..(kk + 1) * t];
            dw[row * k + kk] = g.iter().zip(xs).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); k * t];
        for row in 0..d {
            let g = &gd[row * t..(row + 1) * t];
            for kk in 0..k {
                let weight = wd[row * k + kk];
                for (dv, &gv) in dx[kk * t..(kk + 1) * t].iter_mut().zip(g) {
                    *dv = *dv + weight * gv;
                }
            }
        }
        Tensor {
            shape: vec![k, t],
            data: dx,
        }
    });
    LinearGrads {
        w: Tensor {
            shape: vec![d, k],
            data: dw,
        },
        b: Tensor {
            shape: vec![d],
            data: db,
        },
        x: dx,
    }
}

/// Centered, zero-padded convolution over time that preserves length.
/// `W: C_out×C_in×width` with odd width, `b: C_out`, `X: C_in×T`.
pub fn conv1d_same<T: Scalar>(w: &Tensor<T>, b: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c_out, c_in, width) = conv_dims(w)?;
    let (xc, t) = x.dims2("conv1d")?;
    let bd = b.dims1("conv1d")?;
    if xc != c_in || bd != c_out {
        return Err(Error::shape(
            "conv1d",
            format!("W is {c_out}x{c_in}x{width}, b is {bd}, X is {xc}x{t}"),
        ));
    }
    let pad = width / 2;
    let (wd, xd) = (w.data(), x.data());
    let mut out = vec![T::zero(); c_out * t];
    for o in 0..c_out {
        let y = &mut out[o * t..(o + 1) * t];
        y.iter_mut().for_each(|v| *v = b.data()[o]);
        for c in 0..c_in {
            let xs = &xd[c * t..(c + 1) * t];
            for j in 0..width {
                let weight = wd[(o * c_in + c) * width + j];
                // y[s] += weight * x[s + j - pad]
                let (lo, hi) = shifted_range(t, j, pad);
                for s in lo..hi {
                    y[s] = y[s] + weight * xs[s + j - pad];
                }
            }
        }
    }
    Tensor::new(vec![c_out, t], out)
}

pub struct ConvGrads<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub x: Tensor<T>,
}

pub fn conv1d_same_backward<T: Scalar>(w: &Tensor<T>, x: &Tensor<T>, dy: &Tensor<T>) -> ConvGrads<T> {
    let (c_out, c_in, width) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let t = x.shape()[1];
    let pad = width / 2;
    let (wd, xd, gd) = (w.data(), x.data(), dy.data());
    let mut dw = vec![T::zero(); c_out * c_in * width];
    let mut db = vec![T::zero(); c_out];
    let mut dx = vec![T::zero(); c_in * t];
    for o in 0..c_out {
        let g = &gd[o * t..(o + 1) * t];
        db[o] = g.iter().fold(T::zero(), |acc, &v| acc + v);
        for c in 0..c_in {
            let xs = &xd[c * t..(c + 1) * t];
            let dxs = &mut dx[c * t..(c + 1) * t];
            for j in 0..width {
                let idx = (o * c_in + c) * width + j;
                let weight = wd[idx];
                let (lo, hi) = shifted_range(t, j, pad);
                let mut acc = T::zero();
                for s in lo..hi {
                    acc = acc + g[s] * xs[s + j - pad];
                    dxs[s + j - pad] = dxs[s + j - pad] + weight * g[s];
                }
                dw[idx] = acc;
            }
        }
    }
    ConvGrads {
        w: Tensor {
            shape: vec![c_out, c_in, width],
            data: dw,
        },
        b: Tensor {
            shape: vec![c_out],
            data: db,
        },
        x: Tensor {
            shape: vec![c_in, t],
            data: dx,
        },
    }
}

fn conv_dims<T: Scalar>(w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *w.shape() {
        [o, c, width] => {
            if width % 2 == 0 {
                Err(Error::Config(format!(
                    "convolution width must be odd for same padding, got {width}"
                )))
            } else {
                Ok((o, c, width))
            }
        }
        ref other => Err(Error::shape(
            "conv1d",
            format!("expected a rank-3 kernel, got shape {other:?}"),
        )),
    }
}

/// Output positions `s` for which `s + j - pad` is a valid input index.
fn shifted_range(t: usize, j: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(j);
    let hi = (t + pad).saturating_sub(j).min(t);
    (lo, hi.max(lo))
}

pub fn activation<T: Scalar>(kind: Activation, x: &Tensor<T>) -> Tensor<T> {
    match kind {
        Activation::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Tanh => x.map(|v| v.tanh()),
        Activation::Sigmoid => x.map(sigmoid),
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Uses the forward output `y` where that is cheaper than the input.
pub fn activation_backward<T: Scalar>(kind: Activation, x: &Tensor<T>, y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = match kind {
        // subgradient 0 at exactly 0
        Activation::Relu => x
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&xv, &g)| if xv > T::zero() { g } else { T::zero() })
            .collect(),
        Activation::Tanh => y
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&yv, &g)| g * (T::one() - yv * yv))
            .collect(),
        Activation::Sigmoid => y
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&yv, &g)| g * yv * (T::one() - yv))
            .collect(),
    };
    Tensor {
        shape: x.shape().to_vec(),
        data,
    }
}

/// Max over the time axis of a `D×T` matrix. Ties go to the lowest index.
pub fn maxpool_time<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (d, t) = x.dims2("maxpool_time")?;
    if t == 0 {
        return Err(Error::EmptySequence("max-pool over zero time steps".into()));
    }
    let mut out = Vec::with_capacity(d);
    let mut argmax = Vec::with_capacity(d);
    for row in x.data().chunks_exact(t) {
        let mut best = 0;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        out.push(row[best]);
        argmax.push(best);
    }
    Ok((Tensor::vector(out), argmax))
}

pub fn maxpool_time_backward<T: Scalar>(argmax: &[usize], t: usize, dy: &Tensor<T>) -> Tensor<T> {
    let d = argmax.len();
    let mut dx = vec![T::zero(); d * t];
    for (row, (&winner, &g)) in argmax.iter().zip(dy.data()).enumerate() {
        dx[row * t + winner] = g;
    }
    Tensor {
        shape: vec![d, t],
        data: dx,
    }
}

/// Mean over the time axis of a `K×T` matrix.
pub fn meanpool_time<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, t) = x.dims2("meanpool_time")?;
    if t == 0 {
        return Err(Error::EmptySequence("mean-pool over zero time steps".into()));
    }
    let n = T::from_f64(t as f64);
    Ok(Tensor::vector(
        x.data()
            .chunks_exact(t)
            .map(|row| row.iter().fold(T::zero(), |acc, &v| acc + v) / n)
            .collect(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Mul,
    Add,
    Sub,
}

pub fn elementwise<T: Scalar>(kind: Elementwise, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "elementwise",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let f = |x: T, y: T| match kind {
        Elementwise::Mul => x * y,
        Elementwise::Add => x + y,
        Elementwise::Sub => x - y,
    };
    Ok(Tensor {
        shape: a.shape().to_vec(),
        data: a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    })
}

/// Divides every column of `x` by its Euclidean norm; returns the norms.
pub fn normalize_columns<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
    let (d, n) = x.dims2("normalize_columns")?;
    let mut norms = vec![T::zero(); n];
    for row in x.data().chunks_exact(n) {
        for (acc, &v) in norms.iter_mut().zip(row) {
            *acc = *acc + v * v;
        }
    }
    for (col, norm) in norms.iter_mut().enumerate() {
        *norm = norm.sqrt();
        if *norm <= T::zero() {
            return Err(Error::NonFinite(format!(
                "normalize_columns: column {col} has zero norm"
            )));
        }
    }
    let mut out = x.data().to_vec();
    for row in out.chunks_exact_mut(n) {
        for (v, &norm) in row.iter_mut().zip(&norms) {
            *v = *v / norm;
        }
    }
    Ok((Tensor::new(vec![d, n], out)?, norms))
}

pub fn normalize_columns_backward<T: Scalar>(y: &Tensor<T>, norms: &[T], dy: &Tensor<T>) -> Tensor<T> {
    let n = norms.len();
    let mut dots = vec![T::zero(); n];
    for (yr, gr) in y.data().chunks_exact(n).zip(dy.data().chunks_exact(n)) {
        for ((acc, &yv), &gv) in dots.iter_mut().zip(yr).zip(gr) {
            *acc = *acc + yv * gv;
        }
    }
    let mut dx = vec![T::zero(); y.len()];
    for ((dr, yr), gr) in dx
        .chunks_exact_mut(n)
        .zip(y.data().chunks_exact(n))
        .zip(dy.data().chunks_exact(n))
    {
        for c in 0..n {
            dr[c] = (gr[c] - yr[c] * dots[c]) / norms[c];
        }
    }
    Tensor {
        shape: y.shape().to_vec(),
        data: dx,
    }
}

/// `S = Aᵀ B` for `A: D×N`, `B: D×M`, i.e. all pairwise column dot products.
pub fn inner_products<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (d, n) = a.dims2("inner_products")?;
    let (bd, m) = b.dims2("inner_products")?;
    if d != bd {
        return Err(Error::shape("inner_products", format!("A is {d}x{n}, B is {bd}x{m}")));
    }
    let mut out = vec![T::zero(); n * m];
    for (ar, br) in a.data().chunks_exact(n).zip(b.data().chunks_exact(m)) {
        for (i, &av) in ar.iter().enumerate() {
            for (o, &bv) in out[i * m..(i + 1) * m].iter_mut().zip(br) {
                *o = *o + av * bv;
            }
        }
    }
    Tensor::new(vec![n, m], out)
}

pub fn inner_products_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, ds: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (d, n) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let mut da = vec![T::zero(); d * n];
    let mut db = vec![T::zero(); d * m];
    let g = ds.data();
    for r in 0..d {
        let ar = &a.data()[r * n..(r + 1) * n];
        let br = &b.data()[r * m..(r + 1) * m];
        for i in 0..n {
            let gi = &g[i * m..(i + 1) * m];
            da[r * n + i] = gi.iter().zip(br).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
            for (dbv, &gv) in db[r * m..(r + 1) * m].iter_mut().zip(gi) {
                *dbv = *dbv + gv * ar[i];
            }
        }
    }
    (
        Tensor {
            shape: vec![d, n],
            data: da,
        },
        Tensor {
            shape: vec![d, m],
            data: db,
        },
    )
}

/// Hardest in-batch negative of each row and each column of a square score
/// matrix (diagonal excluded, ties to the lowest index).
#[derive(Clone, Debug)]
pub struct HingeWitness {
    pub row_negative: Vec<usize>,
    pub col_negative: Vec<usize>,
}

/// Bidirectional max-of-hinges ranking loss summed over the batch:
/// `Σ_i [α − S_ii + max_{j≠i} S_ij]₊ + [α − S_ii + max_{j≠i} S_ji]₊`.
pub fn max_hinge_loss<T: Scalar>(s: &Tensor<T>, margin: T) -> Result<(T, HingeWitness)> {
    let (n, m) = s.dims2("max_hinge_loss")?;
    if n != m {
        return Err(Error::shape("max_hinge_loss", format!("score matrix is {n}x{m}")));
    }
    if n < 2 {
        return Err(Error::Config(
            "ranking loss needs a batch of at least 2 for an in-batch negative".into(),
        ));
    }
    let mut row_negative = vec![0; n];
    let mut col_negative = vec![0; n];
    let mut loss = T::zero();
    for i in 0..n {
        let row = (0..n).filter(|&j| j != i);
        let jr = row
            .clone()
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if s.at2(i, b) >= s.at2(i, j) => Some(b),
                _ => Some(j),
            })
            .unwrap_or(0);
        let jc = row
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if s.at2(b, i) >= s.at2(j, i) => Some(b),
                _ => Some(j),
            })
            .unwrap_or(0);
        row_negative[i] = jr;
        col_negative[i] = jc;
        let pos = s.at2(i, i);
        let hr = margin - pos + s.at2(i, jr);
        let hc = margin - pos + s.at2(jc, i);
        if hr > T::zero() {
            loss = loss + hr;
        }
        if hc > T::zero() {
            loss = loss + hc;
        }
    }
    Ok((
        loss,
        HingeWitness {
            row_negative,
            col_negative,
        },
    ))
}

pub fn max_hinge_backward<T: Scalar>(s: &Tensor<T>, margin: T, witness: &HingeWitness, seed: T) -> Tensor<T> {
    let n = s.shape()[0];
    let mut ds = vec![T::zero(); n * n];
    for i in 0..n {
        let pos = s.at2(i, i);
        let jr = witness.row_negative[i];
        let jc = witness.col_negative[i];
        if margin - pos + s.at2(i, jr) > T::zero() {
            ds[i * n + i] = ds[i * n + i] - seed;
            ds[i * n + jr] = ds[i * n + jr] + seed;
        }
        if margin - pos + s.at2(jc, i) > T::zero() {
            ds[i * n + i] = ds[i * n + i] - seed;
            ds[jc * n + i] = ds[jc * n + i] + seed;
        }
    }
    Tensor {
        shape: vec![n, n],
        data: ds,
    }
}

/// Mean softmax cross-entropy of the columns of `logits: C×B` against
/// `labels`. Returns the loss and the column softmax probabilities.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (c, b) = logits.dims2("softmax_cross_entropy")?;
    if labels.len() != b {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{b} logit columns but {} labels", labels.len()),
        ));
    }
    if b == 0 {
        return Err(Error::EmptySequence("cross-entropy over an empty batch".into()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Label { label, classes: c });
    }
    let mut probs = vec![T::zero(); c * b];
    let mut loss = T::zero();
    for (col, &label) in labels.iter().enumerate() {
        let max = (0..c).map(|r| logits.at2(r, col)).fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for r in 0..c {
            let e = (logits.at2(r, col) - max).exp();
            probs[r * b + col] = e;
            z = z + e;
        }
        for r in 0..c {
            probs[r * b + col] = probs[r * b + col] / z;
        }
        loss = loss - (logits.at2(label, col) - max - z.ln());
    }
    Ok((loss / T::from_f64(b as f64), Tensor::new(vec![c, b], probs)?))
}

pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, labels: &[usize], seed: T) -> Tensor<T> {
    let b = probs.shape()[1];
    let scale = seed / T::from_f64(b as f64);
    let mut d = probs.data().to_vec();
    for (col, &label) in labels.iter().enumerate() {
        d[label * b + col] = d[label * b + col] - T::one();
    }
    d.iter_mut().for_each(|v| *v = *v * scale);
    Tensor {
        shape: probs.shape().to_vec(),
        data: d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity_and_hand_sum() {
        let w = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::vector(vec![0.0, 0.0]);
        let x = Tensor::from_columns(&[&[1.0, -1.0], &[-2.0, 3.0]]).unwrap();
        assert_eq!(linear(&w, &b, &x).unwrap(), x);

        let w = m(1, 2, &[1.0, 1.0]);
        let b = Tensor::vector(vec![0.5]);
        let x = m(2, 1, &[2.0, 3.0]);
        assert_eq!(linear(&w, &b, &x).unwrap().data(), &[5.5]);
    }

    #[test]
    fn linear_rejects_mismatch() {
        let w = m(2, 3, &[0.0; 6]);
        let b = Tensor::vector(vec![0.0; 2]);
        let x = m(2, 4, &[0.0; 8]);
        assert!(matches!(linear(&w, &b, &x), Err(Error::Shape { .. })));
    }

    #[test]
    fn conv_sliding_sum() {
        let w = Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let x = m(1, 3, &[1.0, 2.0, 3.0]);
        assert_eq!(conv1d_same(&w, &b, &x).unwrap().data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_even_width_is_config_error() {
        let w = Tensor::<f64>::zeros(vec![1, 1, 2]);
        let b = Tensor::vector(vec![0.0]);
        let x = m(1, 3, &[1.0, 2.0, 3.0]);
        assert!(matches!(conv1d_same(&w, &b, &x), Err(Error::Config(_))));
    }

    #[test]
    fn conv_width_one_is_linear() {
        let wl = m(2, 3, &[0.5, -1.0, 2.0, 0.25, 0.0, -0.75]);
        let wc = Tensor::new(vec![2, 3, 1], wl.data().to_vec()).unwrap();
        let b = Tensor::vector(vec![0.1, -0.2]);
        let x = m(3, 4, &[1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 2.0, 0.5, 0.5, -0.5, 3.0]);
        assert_eq!(conv1d_same(&wc, &b, &x).unwrap(), linear(&wl, &b, &x).unwrap());
    }

    #[test]
    fn conv_single_step_sees_only_center_tap() {
        let w = Tensor::new(vec![1, 1, 5], vec![9.0, 9.0, 2.0, 9.0, 9.0]).unwrap();
        let b = Tensor::vector(vec![1.0]);
        let x = m(1, 1, &[3.0]);
        assert_eq!(conv1d_same(&w, &b, &x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn activations() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(activation(Activation::Relu, &x).data(), &[0.0, 0.0, 2.0]);
        let z = Tensor::vector(vec![0.0f64]);
        assert_eq!(activation(Activation::Sigmoid, &z).data(), &[0.5]);
        let big = Tensor::vector(vec![-1000.0f64, 1000.0]);
        assert!(activation(Activation::Sigmoid, &big).is_finite());
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let x = Tensor::vector(vec![0.0f64, 1.0]);
        let y = activation(Activation::Relu, &x);
        let g = activation_backward(Activation::Relu, &x, &y, &Tensor::vector(vec![1.0, 1.0]));
        assert_eq!(g.data(), &[0.0, 1.0]);
    }

    #[test]
    fn maxpool_examples() {
        let x = m(2, 3, &[1.0, -2.0, 3.0, 0.0, 5.0, -1.0]);
        let (y, arg) = maxpool_time(&x).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
        assert_eq!(arg, vec![2, 1]);

        let x = m(3, 1, &[1.0, -2.0, 3.0]);
        let (y, arg) = maxpool_time(&x).unwrap();
        assert_eq!(y.data(), &[1.0, -2.0, 3.0]);
        assert_eq!(arg, vec![0, 0, 0]);

        let ties = m(1, 3, &[2.0, 2.0, 1.0]);
        assert_eq!(maxpool_time(&ties).unwrap().1, vec![0]);

        let empty = Tensor::<f64>::zeros(vec![2, 0]);
        assert!(matches!(maxpool_time(&empty), Err(Error::EmptySequence(_))));
    }

    #[test]
    fn elementwise_examples() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(elementwise(Elementwise::Mul, &a, &b).unwrap().data(), &[3.0, 8.0]);
        let zeros = Tensor::zeros(vec![2]);
        assert_eq!(elementwise(Elementwise::Add, &a, &zeros).unwrap(), a);
        let c = Tensor::vector(vec![1.0]);
        assert!(elementwise(Elementwise::Add, &a, &c).is_err());
    }

    #[test]
    fn max_hinge_hand_case() {
        let s = m(2, 2, &[0.9, 0.7, 0.2, 0.5]);
        let (loss, _) = max_hinge_loss(&s, 0.2).unwrap();
        assert!((loss - 0.4).abs() < 1e-12);
    }

    #[test]
    fn max_hinge_requires_negative() {
        let s = m(1, 1, &[0.9]);
        assert!(max_hinge_loss(&s, 0.2).is_err());
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Tensor::<f64>::zeros(vec![3, 4]);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, 2, 1]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0, 1, 3, 1]),
            Err(Error::Label { label: 3, classes: 3 })
        ));
    }
}
