use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Params, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments, one pair per named parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: BTreeMap<String, Tensor<T>>,
    pub second: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Applies one update at learning rate `lr`. Parameters without a gradient
    /// entry are left untouched and keep their moments.
    pub fn step(&mut self, params: &mut Params<T>, grads: &BTreeMap<String, Tensor<T>>, lr: f64) {
        self.step += 1;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let mut md = std::mem::take(m).into_data();
            let mut vd = std::mem::take(v).into_data();
            let mut pd = std::mem::take(p).into_data();
            for i in 0..pd.len() {
                let gi = g.data()[i].to_f64();
                let mi = beta1 * md[i].to_f64() + (1.0 - beta1) * gi;
                let vi = beta2 * vd[i].to_f64() + (1.0 - beta2) * gi * gi;
                md[i] = T::of(mi);
                vd[i] = T::of(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                pd[i] = T::of(pd[i].to_f64() - update);
            }
            *m = Tensor::new(g.shape(), md).expect("moment shape");
            *v = Tensor::new(g.shape(), vd).expect("moment shape");
            *p = Tensor::new(g.shape(), pd).expect("param shape");
        }
    }
}

impl<T: Real> Default for Tensor<T> {
    fn default() -> Self {
        Tensor::zeros(&[0])
    }
}
