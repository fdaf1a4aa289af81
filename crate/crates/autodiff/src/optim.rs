//! AdaDelta (Zeiler, 2012).

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaDeltaConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Rescale the global gradient norm down to this value when exceeded.
    pub clip_norm: Option<f64>,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            rho: 0.95,
            epsilon: 1e-6,
            clip_norm: None,
        }
    }
}

impl AdaDeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("adadelta rho {} outside (0, 1)", self.rho)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("adadelta epsilon {} must be positive", self.epsilon)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Running averages of squared gradients and squared updates, one pair per
/// parameter, created lazily on the first step that touches the parameter.
#[derive(Clone, Debug)]
pub struct AdaDelta<T: Real = f32> {
    config: AdaDeltaConfig,
    sq_grad: Vec<Option<Tensor<T>>>,
    sq_update: Vec<Option<Tensor<T>>>,
}

impl<T: Real> AdaDelta<T> {
    pub fn new(config: AdaDeltaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            sq_grad: Vec::new(),
            sq_update: Vec::new(),
        })
    }

    pub fn config(&self) -> &AdaDeltaConfig {
        &self.config
    }

    pub fn accumulators(&self, id: ParamId) -> Option<(&Tensor<T>, &Tensor<T>)> {
        let g = self.sq_grad.get(id.0)?.as_ref()?;
        let u = self.sq_update.get(id.0)?.as_ref()?;
        Some((g, u))
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)]) -> Result<()> {
        for (id, g) in grads {
            if !g.is_finite() {
                return Err(Error::Divergence {
                    param: params.name(*id).to_string(),
                });
            }
            if g.shape() != params.get(*id).shape() {
                return Err(Error::Dimension {
                    op: "adadelta_step",
                    lhs: params.get(*id).shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        let clip = match self.config.clip_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .flat_map(|(_, g)| g.data().iter().map(|x| x.as_f64().powi(2)))
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        if self.sq_grad.len() < params.len() {
            self.sq_grad.resize(params.len(), None);
            self.sq_update.resize(params.len(), None);
        }
        let rho = T::lit(self.config.rho);
        let one_minus_rho = T::lit(1.0 - self.config.rho);
        let eps = T::lit(self.config.epsilon);
        let lr = T::lit(self.config.learning_rate);
        let clip = T::lit(clip);
        for (id, g) in grads {
            let shape = g.shape().to_vec();
            let sq_g = self.sq_grad[id.0].get_or_insert_with(|| Tensor::zeros(&shape));
            let sq_u = self.sq_update[id.0].get_or_insert_with(|| Tensor::zeros(&shape));
            let p = params.get_mut(*id);
            for (((w, &gi), eg), eu) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(sq_g.data_mut())
                .zip(sq_u.data_mut())
            {
                let gi = gi * clip;
                *eg = rho * *eg + one_minus_rho * gi * gi;
                let delta = -((*eu + eps).sqrt() / (*eg + eps).sqrt()) * gi;
                *eu = rho * *eu + one_minus_rho * delta * delta;
                *w = *w + lr * delta;
            }
        }
        Ok(())
    }
}
