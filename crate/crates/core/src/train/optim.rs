use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `dim^-0.5 * min(step^-0.5, step * warmup^-1.5)`: linear warmup, then
/// inverse square-root decay. Peaks at `step == warmup`.
pub fn lr_schedule(step: usize, warmup: usize, dim: usize) -> Result<f64> {
    if warmup == 0 {
        return Err(Error::Config("warmup must be at least 1 step".into()));
    }
    if step == 0 || dim == 0 {
        return Err(Error::Config("learning rate needs step >= 1 and dim >= 1".into()));
    }
    let s = step as f64;
    let decay = s.powf(-0.5);
    let ramp = s * (warmup as f64).powf(-1.5);
    Ok((dim as f64).powf(-0.5) * decay.min(ramp))
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Zeroed moments shaped like `params`.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| {
                let z = Tensor::zeros(p.shape().to_vec());
                (z.clone(), z)
            })
            .unzip();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient aborts before any
    /// parameter changes.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "{} moments, {} params, {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::shape(
                    "adam",
                    format!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape()),
                ));
            }
            if let Some(pos) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::Divergence {
                    step: self.step as usize + 1,
                    detail: format!(
                        "non-finite gradient in parameter {i} {:?} at flat index {pos}",
                        p.shape()
                    ),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let step_size = T::from_f64(lr / c1);
        let c2 = T::from_f64(c2);
        let eps = T::from_f64(self.eps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                *pv = *pv - step_size * *mv / ((*vv / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let lr = lr_schedule(4000, 4000, 1024).unwrap();
        assert!((lr - 4.941e-4).abs() < 1e-7, "{lr}");
        let first = lr_schedule(1, 4000, 1024).unwrap();
        assert!((first - 1024f64.powf(-0.5) * 4000f64.powf(-1.5)).abs() < 1e-15);
        assert!(lr_schedule(1, 0, 1024).is_err());
        let peak = (1..10_000).max_by(|&a, &b| {
            lr_schedule(a, 2000, 64)
                .unwrap()
                .total_cmp(&lr_schedule(b, 2000, 64).unwrap())
        });
        assert_eq!(peak, Some(2000));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::vector(vec![1.0f64, -2.0]);
        let g = Tensor::vector(vec![0.0, 0.0]);
        let mut adam = Adam::new([&p]);
        adam.step(&mut [&mut p], &[&g], 0.1).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = Tensor::vector(vec![0.0f64, 0.0, 0.0]);
        let g = Tensor::vector(vec![3.0, -0.5, 1e-3]);
        let mut adam = Adam::new([&p]);
        adam.step(&mut [&mut p], &[&g], 0.01).unwrap();
        for (x, s) in p.data().iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - 0.01 * s).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn nan_gradient_is_divergence() {
        let mut p = Tensor::vector(vec![0.0f32]);
        let g = Tensor::vector(vec![f32::NAN]);
        let mut adam = Adam::new([&p]);
        assert!(matches!(
            adam.step(&mut [&mut p], &[&g], 0.1),
            Err(Error::Divergence { step: 1, .. })
        ));
        assert_eq!(p.data(), &[0.0]);
    }
}
