use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Array;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Minimizes: parameters move against the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    first: Vec<Array>,
    second: Vec<Array>,
    step: u64,
}

impl Adam {
    pub fn new<'a>(cfg: AdamConfig, params: impl IntoIterator<Item = &'a Array>) -> Self {
        let first: Vec<Array> = params
            .into_iter()
            .map(|p| Array::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            cfg,
            second: first.clone(),
            first,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Array>,
        grads: &[Array],
    ) -> Result<()> {
        let params: Vec<&mut Array> = params.into_iter().collect();
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Array::from_vec(1, 3, vec![1.0, -2.0, 3.0]).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), [&p]);
        for _ in 0..10 {
            adam.step([&mut p], &[Array::zeros(1, 3)]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.steps(), 10);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let mut p = Array::scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default(), [&p]);
        let g = [Array::scalar(0.37)];
        let mut prev = p.item();
        for _ in 0..1000 {
            adam.step([&mut p], &g).unwrap();
            let step = (p.item() - prev).abs();
            prev = p.item();
            assert!((step - 1e-2).abs() < 1e-4, "step {step}");
        }
    }

    #[test]
    fn quadratic_converges() {
        let mut p = Array::scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default(), [&p]);
        for _ in 0..5000 {
            let grad = Array::scalar(2.0 * (p.item() - 3.0));
            adam.step([&mut p], &[grad]).unwrap();
        }
        assert!((p.item() - 3.0).abs() < 1e-2, "x = {}", p.item());
    }

    #[test]
    fn mismatched_lists_are_rejected() {
        let mut p = Array::scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default(), [&p]);
        assert!(adam.step([&mut p], &[]).is_err());
    }
}
