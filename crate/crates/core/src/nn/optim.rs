//! First-order optimizers over [`Params`] containers.

use std::collections::BTreeMap;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::params::Params;
use super::tape::GradientSet;
use crate::error::{Error, Result};

pub trait Optimizer {
    /// Applies one update. Every parameter visited under `prefix` must have
    /// a gradient of matching shape in `grads`.
    fn step(&mut self, params: &mut dyn Params, prefix: &str, grads: &GradientSet) -> Result<()>;
}

fn grad_for<'a>(grads: &'a GradientSet, name: &str, value: &Array2<f64>) -> Result<&'a Array2<f64>> {
    let g = grads
        .get(name)
        .ok_or_else(|| Error::Shape(format!("no gradient for parameter `{name}`")))?;
    if g.dim() != value.dim() {
        return Err(Error::Shape(format!(
            "gradient for `{name}` has shape {:?}, parameter {:?}",
            g.dim(),
            value.dim()
        )));
    }
    Ok(g)
}

/// Visits parameters, collecting the first error the closure reports.
fn try_visit_mut(
    params: &mut dyn Params,
    prefix: &str,
    mut f: impl FnMut(&str, &mut Array2<f64>) -> Result<()>,
) -> Result<()> {
    let mut err = None;
    params.visit_mut(prefix, &mut |name, value| {
        if err.is_none() {
            if let Err(e) = f(&name, value) {
                err = Some(e);
            }
        }
    });
    err.map_or(Ok(()), Err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut dyn Params, prefix: &str, grads: &GradientSet) -> Result<()> {
        try_visit_mut(params, prefix, |name, value| {
            let g = grad_for(grads, name, value)?;
            value.scaled_add(-self.lr, g);
            Ok(())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    moments: BTreeMap<String, (Array2<f64>, Array2<f64>)>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            moments: BTreeMap::new(),
            t: 0,
        }
    }

    pub fn with_lr(lr: f64) -> Self {
        Adam::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        })
    }

    pub fn steps(&self) -> i32 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut dyn Params, prefix: &str, grads: &GradientSet) -> Result<()> {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let moments = &mut self.moments;
        try_visit_mut(params, prefix, |name, value| {
            let g = grad_for(grads, name, value)?;
            let (m, v) = moments
                .entry(name.to_string())
                .or_insert_with(|| (Array2::zeros(value.dim()), Array2::zeros(value.dim())));
            Zip::from(value).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
            Ok(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Linear;
    use ndarray::array;

    fn grads_of(l: &Linear, scale: f64) -> GradientSet {
        let mut g = GradientSet::new();
        l.visit("", &mut |n, a| {
            g.insert(n, a * scale);
        });
        g
    }

    #[test]
    fn sgd_step() {
        let mut l = Linear {
            weight: array![[1.0, 2.0]],
            bias: array![[0.5, 0.0]],
        };
        let g = grads_of(&l, 1.0);
        Sgd { lr: 0.1 }.step(&mut l, "", &g).unwrap();
        assert_eq!(l.weight, array![[0.9, 1.8]]);
        assert_eq!(l.bias, array![[0.45, 0.0]]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut l = Linear {
            weight: array![[1.0, -2.0]],
            bias: array![[0.0, 0.0]],
        };
        let mut g = grads_of(&l, 3.0);
        g.insert("bias".into(), array![[0.0, 0.0]]);
        let mut opt = Adam::with_lr(0.01);
        opt.step(&mut l, "", &g).unwrap();
        assert!((l.weight[[0, 0]] - 0.99).abs() < 1e-9);
        assert!((l.weight[[0, 1]] + 1.99).abs() < 1e-9);
        assert_eq!(l.bias, array![[0.0, 0.0]]);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut l = Linear {
            weight: array![[3.0, -1.5]],
            bias: array![[2.0, 1.0]],
        };
        let mut opt = Adam::with_lr(0.05);
        for _ in 0..2000 {
            let g = grads_of(&l, 1.0);
            opt.step(&mut l, "", &g).unwrap();
        }
        assert!(l.weight.iter().chain(l.bias.iter()).all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut l = Linear::zeros(1, 1);
        assert!(Sgd { lr: 1.0 }.step(&mut l, "", &GradientSet::new()).is_err());
    }
}
