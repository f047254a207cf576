use crate::error::{shape_err, NnError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// First/second moment estimates and hyper-parameters of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    state: OptimState,
}

impl Adam {
    /// β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Self {
            state: OptimState {
                lr,
                beta1,
                beta2,
                eps,
                step: 0,
                m: Vec::new(),
                v: Vec::new(),
            },
        }
    }

    pub fn state(&self) -> &OptimState {
        &self.state
    }

    pub fn lr(&self) -> f64 {
        self.state.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        assert!(lr > 0.0, "learning rate must be positive");
        self.state.lr = lr;
    }

    /// Applies one update to every tensor in `params` using `grads` (same order
    /// and shapes).
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        let tensors = params.tensors_mut();
        if tensors.len() != grads.len() {
            return shape_err("adam", format!("{} params, {} grads", tensors.len(), grads.len()));
        }
        for (p, g) in tensors.iter().zip(grads) {
            if !p.same_shape(g) {
                return shape_err("adam", format!("{:?} vs {:?}", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(NnError::Numerical { op: "adam" });
            }
        }
        let s = &mut self.state;
        if s.m.is_empty() {
            s.m = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            s.v = s.m.clone();
        }
        s.step += 1;
        let bc1 = 1.0 - s.beta1.powi(s.step as i32);
        let bc2 = 1.0 - s.beta2.powi(s.step as i32);
        for (k, (p, g)) in tensors.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut s.m[k], &mut s.v[k]);
            for (j, (w, gr)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * gr;
                v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * gr * gr;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= s.lr * mhat / (vhat.sqrt() + s.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w));
        s
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut p = scalar_store(1.5);
        let mut opt = Adam::new(0.1);
        opt.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(p.tensors()[0].data()[0], 1.5);
        assert_eq!(opt.state().step, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.0, -0.02] {
            let mut p = scalar_store(0.0);
            let mut opt = Adam::new(1e-3);
            opt.step(&mut p, &[Tensor::scalar(g)]).unwrap();
            let w = p.tensors()[0].data()[0];
            assert!((w + 1e-3 * f64::signum(g)).abs() < 1e-9, "{w}");
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = scalar_store(0.0);
        let mut opt = Adam::new(0.1);
        for _ in 0..200 {
            let w = p.tensors()[0].data()[0];
            opt.step(&mut p, &[Tensor::scalar(2.0 * (w - 3.0))]).unwrap();
        }
        let w = p.tensors()[0].data()[0];
        assert!((w - 3.0).abs() < 0.05, "w = {w}");
    }

    #[test]
    fn rejects_non_finite_grads() {
        let mut p = scalar_store(0.0);
        let mut opt = Adam::new(0.1);
        assert!(opt.step(&mut p, &[Tensor::scalar(f64::INFINITY)]).is_err());
    }
}
