//! Adam with bias correction, and the momentum (moving-average) update used
//! for key encoders.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl OptimizerState {
    /// Zeroed moments mirroring the given parameter shapes.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Array2<f64>>) -> Self {
        let first: Vec<Array2<f64>> = params.into_iter().map(|p| Array2::zeros(p.dim())).collect();
        let second = first.clone();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn num_tensors(&self) -> usize {
        self.first.len()
    }
}

/// One Adam update of `params` in place.
pub fn optimizer_step(
    params: &mut [&mut Array2<f64>],
    grads: &[Array2<f64>],
    state: &mut OptimizerState,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::shape(
            "optimizer_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.first.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dim() != g.dim() || p.dim() != state.first[i].dim() {
            return Err(Error::shape(
                "optimizer_step",
                format!("tensor {i}: param {:?}, grad {:?}", p.dim(), g.dim()),
            ));
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        Zip::from(&mut **p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                let g = g + c.weight_decay * *p;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            });
    }
    Ok(())
}

/// `key ← m·key + (1 − m)·query`, elementwise.
pub fn momentum_update(key: &mut Array2<f64>, query: &Array2<f64>, m: f64) -> Result<()> {
    if key.dim() != query.dim() {
        return Err(Error::shape(
            "momentum_update",
            format!("key {:?} vs query {:?}", key.dim(), query.dim()),
        ));
    }
    if !(0.0..1.0).contains(&m) {
        return Err(Error::InvalidConfig(format!("momentum must lie in [0, 1), got {m}")));
    }
    Zip::from(key)
        .and(query)
        .for_each(|k, &q| *k = m * *k + (1.0 - m) * q);
    Ok(())
}
