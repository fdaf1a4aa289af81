//! Additive attention pooling: s_j = vᵀ tanh(W₁ key_j + W₂ query).

use rand::Rng;
use snet_autodiff::{ParamId, ParamStore, Real, Tape, Var};

use crate::encoder::INIT_SCALE;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    pub w_key: ParamId,
    pub w_query: Option<ParamId>,
    pub v: ParamId,
    pub key_dim: usize,
    pub att_dim: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Pooled {
    /// `[1, n]` attention weights.
    pub weights: Var,
    /// `[1, key_dim]` weighted sum of the keys.
    pub vector: Var,
}

impl Attention {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        key_dim: usize,
        query_dim: Option<usize>,
        att_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w_key = store.uniform(format!("{prefix}.w_key"), &[att_dim, key_dim], INIT_SCALE, rng);
        let w_query = query_dim.map(|q| store.uniform(format!("{prefix}.w_query"), &[att_dim, q], INIT_SCALE, rng));
        let v = store.uniform(format!("{prefix}.v"), &[1, att_dim], INIT_SCALE, rng);
        Self {
            w_key,
            w_query,
            v,
            key_dim,
            att_dim,
        }
    }

    /// `W₁ key_j` for every key; reusable across queries.
    pub fn project_keys<T: Real>(&self, tape: &mut Tape<T>, keys: Var) -> Result<Var> {
        let w = tape.param(self.w_key);
        Ok(tape.linear(keys, w)?)
    }

    /// Unnormalised `[1, n]` scores.
    pub fn scores<T: Real>(&self, tape: &mut Tape<T>, keys_proj: Var, query: Option<Var>) -> Result<Var> {
        let mut pre = keys_proj;
        if let (Some(q), Some(wq)) = (query, self.w_query) {
            let wq = tape.param(wq);
            let qp = tape.linear(q, wq)?;
            pre = tape.add_row(pre, qp)?;
        }
        let act = tape.tanh(pre);
        let v = tape.param(self.v);
        let s = tape.linear(act, v)?;
        let n = tape.shape(s)[0];
        Ok(tape.reshape(s, &[1, n])?)
    }

    pub fn attend<T: Real>(&self, tape: &mut Tape<T>, keys: Var, keys_proj: Var, query: Option<Var>) -> Result<Pooled> {
        let s = self.scores(tape, keys_proj, query)?;
        let weights = tape.softmax(s, None)?;
        let vector = tape.matmul(weights, keys)?;
        Ok(Pooled { weights, vector })
    }

    pub fn pool<T: Real>(&self, tape: &mut Tape<T>, keys: Var, query: Option<Var>) -> Result<Pooled> {
        let proj = self.project_keys(tape, keys)?;
        self.attend(tape, keys, proj, query)
    }
}
