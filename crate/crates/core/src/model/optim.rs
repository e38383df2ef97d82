use super::{Params, Scalar};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Params<F>,
    v: Params<F>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(params: &Params<F>, learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Params<F>, grad: &Params<F>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let one = F::one();
        let bc1 = F::of(1.0 - self.beta1.powi(t));
        let bc2 = F::of(1.0 - self.beta2.powi(t));
        let lr = F::of(self.learning_rate);
        let decay = F::of(1.0 - self.learning_rate * self.weight_decay);
        let eps = F::of(self.eps);
        let grads = grad.tensors();
        for ((((_, mut p), (_, g)), (_, mut m)), (_, mut v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

/// Rescales `grad` to at most `max_norm` (global L2 norm) and returns the
/// norm before clipping.
pub fn clip_grad_norm<F: Scalar>(grad: &mut Params<F>, max_norm: f64) -> f64 {
    let norm = grad.squared_norm().f64().sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = F::of(max_norm / norm);
        for (_, mut t) in grad.tensors_mut() {
            t.mapv_inplace(|x| x * scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny_config;

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut g = Params::<f64>::zeros(&tiny_config());
        g.out_b.fill(10.0);
        let before = clip_grad_norm(&mut g, 5.0);
        assert!((before - 10.0 * (12f64).sqrt()).abs() < 1e-9);
        assert!((g.squared_norm().sqrt() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Params::<f64>::zeros(&tiny_config());
        p.out_b.fill(1.0);
        let mut g = p.zeros_like();
        g.out_b.fill(0.5);
        g.proj_b.fill(-2.0);
        let mut opt = AdamW::new(&p, 0.01, 0.0);
        opt.step(&mut p, &g);
        // Bias-corrected Adam's first step is lr * sign(g).
        assert!(p.out_b.iter().all(|&x| (x - 0.99).abs() < 1e-6));
        assert!(p.proj_b.iter().all(|&x| (x - 0.01).abs() < 1e-6));
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut p = Params::<f64>::zeros(&tiny_config());
        p.out_b.fill(2.0);
        let g = p.zeros_like();
        let mut opt = AdamW::new(&p, 0.1, 0.5);
        opt.step(&mut p, &g);
        assert!(p.out_b.iter().all(|&x| (x - 2.0 * 0.95).abs() < 1e-12));
    }
}
