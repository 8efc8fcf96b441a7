use super::config::TrainConfig;
use crate::scalar::Scalar;

/// Adam with bias correction folded into the step size, as in Keras:
/// `lr_t = lr * sqrt(1 - b2^t) / (1 - b1^t)`,
/// `p -= lr_t * m / (sqrt(v) + eps)`.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    pub fn update(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let lr_t = self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let (lr_t, eps) = (T::of(lr_t), T::of(self.eps));
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            *p -= lr_t * *m / (v.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // after one step m/sqrt(v) = g/|g| up to eps, so each parameter moves by lr
        let cfg = TrainConfig::default();
        let mut adam = Adam::<f64>::new(3, &cfg);
        let mut p = vec![1.0, 1.0, 1.0];
        adam.update(&mut p, &[0.5, -2.0, 0.0]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-7);
        assert!((p[1] - (1.0 + 1e-3)).abs() < 1e-7);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let cfg = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        let mut adam = Adam::<f32>::new(2, &cfg);
        let mut p = vec![0.3f32, -0.7];
        for _ in 0..5 {
            adam.update(&mut p, &[1.0, -1.0]);
        }
        assert_eq!(p, vec![0.3, -0.7]);
    }

    #[test]
    fn minimises_a_quadratic() {
        let cfg = TrainConfig { learning_rate: 0.05, ..TrainConfig::default() };
        let mut adam = Adam::<f64>::new(2, &cfg);
        let mut p = vec![3.0, -2.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            adam.update(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }
}
