use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain `θ ← θ − η ∇θ`.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Cosine decay from `eta` to `min_factor * eta` over the run.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub schedule: Schedule,
    pub min_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            schedule: Schedule::Cosine,
            min_factor: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            schedule: Schedule::Constant,
            ..Default::default()
        }
    }
}

/// First-order optimizer state for one parameter store.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    total_steps: usize,
    step: usize,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig, params: &ParamStore<T>, total_steps: usize) -> Self {
        let zeros = params.zero_gradients().arrays;
        Self {
            config,
            total_steps: total_steps.max(1),
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Learning rate used for the next step.
    pub fn learning_rate(&self, eta: f64) -> f64 {
        match self.config.schedule {
            Schedule::Constant => eta,
            Schedule::Cosine => {
                let progress = (self.step as f64 / self.total_steps as f64).min(1.0);
                let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                eta * (self.config.min_factor + (1.0 - self.config.min_factor) * cos)
            }
        }
    }

    /// Applies one update. Fails without touching `params` if any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &Gradients<T>,
        eta: f64,
    ) -> Result<()> {
        if grads.arrays.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradient arrays for {} parameters",
                grads.arrays.len(),
                params.len()
            )));
        }
        for (i, g) in grads.arrays.iter().enumerate() {
            if g.len() != params.get(i).value.data().len() {
                return Err(Error::Shape(format!(
                    "gradient for {:?} has wrong length",
                    params.get(i).name
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(params.get(i).name.clone()));
            }
        }
        let lr = T::lit(self.learning_rate(eta));
        self.step += 1;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (i, g) in grads.arrays.iter().enumerate() {
                    for (p, &gv) in params.values_mut(i).iter_mut().zip(g) {
                        *p = *p - lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (T::lit(self.config.beta1), T::lit(self.config.beta2));
                let eps = T::lit(self.config.epsilon);
                let t = self.step as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                for (i, g) in grads.arrays.iter().enumerate() {
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (k, p) in params.values_mut(i).iter_mut().enumerate() {
                        let gv = g[k];
                        m[k] = b1 * m[k] + (T::one() - b1) * gv;
                        v[k] = b2 * v[k] + (T::one() - b2) * gv * gv;
                        let mhat = m[k] / c1;
                        let vhat = v[k] / c2;
                        *p = *p - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        for i in 0..params.len() {
            if params.get(i).value.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: self.step,
                    what: format!("parameter {:?} became non-finite", params.get(i).name),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Matrix::row_vector(vec![v])).unwrap();
        s
    }

    #[test]
    fn plain_descent_step() {
        let mut p = scalar_store(0.5);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(), &p, 10);
        let g = Gradients {
            arrays: vec![vec![1.0]],
        };
        opt.step(&mut p, &g, 0.1).unwrap();
        assert!((p.get(0).value.data()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        for config in [OptimizerConfig::sgd(), OptimizerConfig::default()] {
            let mut p = scalar_store(0.5);
            let mut opt = Optimizer::new(config, &p, 10);
            let g = p.zero_gradients();
            for _ in 0..3 {
                opt.step(&mut p, &g, 0.1).unwrap();
            }
            assert_eq!(p.get(0).value.data()[0], 0.5);
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_store(0.5);
        let mut opt = Optimizer::new(OptimizerConfig::default(), &p, 10);
        let g = Gradients {
            arrays: vec![vec![f64::NAN]],
        };
        match opt.step(&mut p, &g, 0.1) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p.get(0).value.data()[0], 0.5);
    }

    #[test]
    fn cosine_schedule_decays_to_floor() {
        let p = scalar_store(0.0);
        let config = OptimizerConfig {
            min_factor: 0.1,
            ..Default::default()
        };
        let mut opt = Optimizer::<f64>::new(config, &p, 4);
        assert_eq!(opt.learning_rate(1.0), 1.0);
        opt.step = 2;
        assert!((opt.learning_rate(1.0) - 0.55).abs() < 1e-12);
        opt.step = 4;
        assert!((opt.learning_rate(1.0) - 0.1).abs() < 1e-12);
    }
}
