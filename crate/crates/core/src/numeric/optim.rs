use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::params::{Grads, ParamStore};
use crate::numeric::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Gradients are rescaled so their global L2 norm never exceeds this.
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            clip_norm: 10.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Config("learning rate and clip norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub update_norm: f64,
}

/// First-order optimizer with global-norm gradient clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    step: u64,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(config: OptimizerConfig, params: &ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        let (m, v) = match config.kind {
            OptimizerKind::Adam => (zeros(), zeros()),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Ok(Optimizer {
            config,
            step: 0,
            first_moment: m,
            second_moment: v,
        })
    }

    /// Rebuild from saved state; moment shapes must match the parameters.
    pub fn from_state(
        config: OptimizerConfig,
        step: u64,
        first_moment: Vec<Tensor<T>>,
        second_moment: Vec<Tensor<T>>,
        params: &ParamStore<T>,
    ) -> Result<Self> {
        config.validate()?;
        if config.kind == OptimizerKind::Adam {
            let ok = first_moment.len() == params.len()
                && second_moment.len() == params.len()
                && params
                    .iter()
                    .zip(first_moment.iter().zip(&second_moment))
                    .all(|((_, _, p), (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
            if !ok {
                return Err(Error::ManifestMismatch(
                    "optimizer moments do not match parameters".into(),
                ));
            }
        }
        Ok(Optimizer {
            config,
            step,
            first_moment,
            second_moment,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first_moment, &self.second_moment)
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Grads<T>) -> Result<StepReport> {
        if grads.len() != params.len() {
            return Err(Error::Shape("gradient set does not match parameters".into()));
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let grad_norm = grads.global_norm();
        let scale = if grad_norm > self.config.clip_norm {
            self.config.clip_norm / grad_norm
        } else {
            1.0
        };
        self.step += 1;
        let lr = self.config.learning_rate;
        let mut update_sq = 0.0f64;
        let ids: Vec<_> = params.iter().map(|(id, _, _)| id).collect();
        match self.config.kind {
            OptimizerKind::Sgd => {
                for id in ids {
                    let g = grads.dense(id);
                    let p = params.get_mut(id).data_mut();
                    for (w, gi) in p.iter_mut().zip(g) {
                        let u = lr * scale * gi.as_f64();
                        update_sq += u * u;
                        *w = *w - T::from_f64(u);
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.epsilon);
                let bc1 = 1.0 - b1.powi(self.step as i32);
                let bc2 = 1.0 - b2.powi(self.step as i32);
                let (b1t, b2t) = (T::from_f64(b1), T::from_f64(b2));
                let (one_b1, one_b2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
                let (bc1t, bc2t) = (T::from_f64(bc1), T::from_f64(bc2));
                let (lrt, epst, scalet) = (T::from_f64(lr), T::from_f64(eps), T::from_f64(scale));
                for id in ids {
                    let g = grads.dense(id);
                    let m = self.first_moment[id.index()].data_mut();
                    let v = self.second_moment[id.index()].data_mut();
                    let p = params.get_mut(id).data_mut();
                    for k in 0..p.len() {
                        let gi = g[k] * scalet;
                        m[k] = b1t * m[k] + one_b1 * gi;
                        v[k] = b2t * v[k] + one_b2 * gi * gi;
                        let u = lrt * (m[k] / bc1t) / ((v[k] / bc2t).sqrt() + epst);
                        update_sq += u.as_f64().powi(2);
                        p[k] = p[k] - u;
                    }
                }
            }
        }
        Ok(StepReport {
            grad_norm,
            clipped_norm: grad_norm * scale,
            update_norm: update_sq.sqrt(),
        })
    }
}
