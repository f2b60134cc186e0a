use super::params::ParamTensors;
use crate::scalar::Scalar;

/// Adam with bias correction and a fixed learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S, P> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: P,
    pub v: P,
    _s: std::marker::PhantomData<S>,
}

impl<S: Scalar, P: ParamTensors<S>> Adam<S, P> {
    pub fn new(params: &P, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            _s: std::marker::PhantomData,
        }
    }

    pub fn from_state(lr: f64, beta1: f64, beta2: f64, eps: f64, step: u64, m: P, v: P) -> Self {
        Adam { lr, beta1, beta2, eps, step, m, v, _s: std::marker::PhantomData }
    }

    pub fn update(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let (b1, b2) = (S::lit(self.beta1), S::lit(self.beta2));
        let c1 = S::lit(1.0 - self.beta1.powi(self.step as i32));
        let c2 = S::lit(1.0 - self.beta2.powi(self.step as i32));
        let lr = S::lit(self.lr);
        let eps = S::lit(self.eps);
        let one = S::one();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderConfig, EncoderParams};
    use crate::seed::rng_from_seed;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let p0 = EncoderParams::<f64>::init(&EncoderConfig::default(), &mut rng_from_seed(0));
        let mut p = p0.clone();
        let mut g = p.zeros_like();
        g.b_out.fill(3.0);
        g.w_in[[0, 0]] = -0.5;
        let mut adam = Adam::new(&p, 0.01, 0.9, 0.999, 1e-8);
        adam.update(&mut p, &g);
        assert!((p.b_out[[0, 0]] - (p0.b_out[[0, 0]] - 0.01)).abs() < 1e-9);
        assert!((p.w_in[[0, 0]] - (p0.w_in[[0, 0]] + 0.01)).abs() < 1e-9);
        assert_eq!(p.w_in[[0, 1]], p0.w_in[[0, 1]]);
    }
}
