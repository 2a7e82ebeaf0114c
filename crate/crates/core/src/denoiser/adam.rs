use crate::denoiser::{Differentiable, Gradients};
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-4;

/// Adam with bias correction. Moment buffers mirror the model's tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<M: Differentiable + ?Sized>(model: &M, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<M: Differentiable + ?Sized>(&mut self, model: &mut M, grads: &Gradients) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != grads.tensors.len() || params.len() != self.m.len() {
            return Err(Error::shape(self.m.len(), grads.tensors.len()));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if p.len() != g.len() {
                return Err(Error::shape(p.len(), g.len()));
            }
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::Denoiser;
    use nalgebra::DMatrix;

    /// Bare parameter vector; "prediction" is the parameters themselves.
    struct Bowl(Vec<f64>);

    impl Denoiser for Bowl {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn num_labels(&self) -> usize {
            1
        }
        fn predict_eps(&self, _x: &[f64], _t: usize, _g: usize) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    impl Differentiable for Bowl {
        fn params(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
        fn backward_batch(
            &self,
            _xs: &DMatrix<f64>,
            _ts: &[usize],
            _labels: &[usize],
            upstream: &DMatrix<f64>,
        ) -> Result<Gradients> {
            Ok(Gradients { tensors: vec![upstream.column(0).iter().copied().collect()] })
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut bowl = Bowl(vec![0.3, -1.2]);
        let mut opt = Adam::new(&bowl, 1e-2);
        let g = Gradients { tensors: vec![vec![0.0, 0.0]] };
        for _ in 0..5 {
            opt.step(&mut bowl, &g).unwrap();
        }
        assert_eq!(bowl.0, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        let mut bowl = Bowl(vec![1.0, 1.0, 1.0]);
        let mut opt = Adam::new(&bowl, 1e-3);
        let g = Gradients { tensors: vec![vec![5.0, -0.01, 300.0]] };
        opt.step(&mut bowl, &g).unwrap();
        let deltas: Vec<f64> = bowl.0.iter().map(|p| p - 1.0).collect();
        assert!((deltas[0] + 1e-3).abs() < 1e-9);
        assert!((deltas[1] - 1e-3).abs() < 1e-8);
        assert!((deltas[2] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(θ) = ‖θ‖², ∇f = 2θ
        let mut bowl = Bowl(vec![1.0; 4]);
        let mut opt = Adam::new(&bowl, 1e-2);
        for _ in 0..500 {
            let g = Gradients { tensors: vec![bowl.0.iter().map(|p| 2.0 * p).collect()] };
            opt.step(&mut bowl, &g).unwrap();
        }
        let norm = bowl.0.iter().map(|p| p * p).sum::<f64>().sqrt();
        assert!(norm < 0.1, "‖θ‖ = {norm}");
        assert_eq!(opt.steps_taken(), 500);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut bowl = Bowl(vec![1.0; 2]);
        let mut opt = Adam::new(&bowl, 1e-2);
        let g = Gradients { tensors: vec![vec![1.0; 3]] };
        assert!(opt.step(&mut bowl, &g).is_err());
    }
}
