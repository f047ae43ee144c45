use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Bias-corrected Adam with first/second moments laid out like the
/// network's parameters.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, net: &Network<T>) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Tensor<T>> = net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(Self {
            config,
            step_count: 0,
            first: zeros.clone(),
            second: zeros,
        })
    }

    /// Applies one update. Gradients containing NaN or infinity abort the
    /// step before any parameter changes.
    pub fn step(&mut self, net: &mut Network<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != self.first.len()
            || grads.iter().zip(&self.first).any(|(g, m)| g.shape() != m.shape())
        {
            return Err(Error::Shape {
                layer: 0,
                message: "gradient layout does not match optimizer state".into(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite gradient in parameter tensor {i} at step {}",
                self.step_count + 1
            )));
        }
        self.step_count += 1;
        let c = &self.config;
        let t = self.step_count as i32;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one_b1 = T::from_f64(1.0 - c.beta1);
        let one_b2 = T::from_f64(1.0 - c.beta2);
        let corr1 = T::from_f64(1.0 / (1.0 - c.beta1.powi(t)));
        let corr2 = T::from_f64(1.0 / (1.0 - c.beta2.powi(t)));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.epsilon);
        for (((p, g), m), v) in net
            .params_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let mhat = *mi * corr1;
                let vhat = *vi * corr2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::LayerSpec;
    use rand::{Rng, SeedableRng};

    fn scalar_net(seed: u64) -> Network<f64> {
        Network::new(&[1], vec![LayerSpec::Dense { input: 1, output: 1 }], seed).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut net = scalar_net(3);
        let before = net.params().to_vec();
        let mut adam = AdamState::new(AdamConfig::default(), &net).unwrap();
        let zeros: Vec<Tensor<f64>> = before.iter().map(|p| Tensor::zeros(p.shape())).collect();
        for _ in 0..10 {
            adam.step(&mut net, &zeros).unwrap();
        }
        assert_eq!(net.params(), &before[..]);
        assert_eq!(adam.step_count, 10);
    }

    #[test]
    fn constant_gradient_steps_approach_learning_rate() {
        let mut net = scalar_net(5);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &net).unwrap();
        let g = vec![
            Tensor::from_vec(&[1, 1], vec![0.37]).unwrap(),
            Tensor::from_vec(&[1], vec![-2.5]).unwrap(),
        ];
        for _ in 0..200 {
            let before: Vec<f64> = net.params().iter().map(|p| p.data()[0]).collect();
            adam.step(&mut net, &g).unwrap();
            let after: Vec<f64> = net.params().iter().map(|p| p.data()[0]).collect();
            for (b, a) in before.iter().zip(&after) {
                assert!(((b - a).abs() - 0.01).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn nan_gradient_is_a_numerical_failure() {
        let mut net = scalar_net(1);
        let before = net.params().to_vec();
        let mut adam = AdamState::new(AdamConfig::default(), &net).unwrap();
        let g = vec![
            Tensor::from_vec(&[1, 1], vec![f64::NAN]).unwrap(),
            Tensor::from_vec(&[1], vec![0.0]).unwrap(),
        ];
        assert!(matches!(adam.step(&mut net, &g), Err(Error::NumericalFailure(_))));
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn fits_a_line() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let xs: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let input = Tensor::from_vec(&[100, 1], xs.clone()).unwrap();
        let mut net = scalar_net(42);
        let mut adam = AdamState::new(
            AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            &net,
        )
        .unwrap();
        let mut mse = f64::INFINITY;
        for _ in 0..2000 {
            let (out, cache) = net.forward(&input).unwrap();
            let resid: Vec<f64> = out.data().iter().zip(&xs).map(|(o, x)| o - 2.0 * x).collect();
            mse = resid.iter().map(|r| r * r).sum::<f64>() / 100.0;
            let g = Tensor::from_vec(&[100, 1], resid.iter().map(|r| 2.0 * r / 100.0).collect()).unwrap();
            let grads = net.backward(&cache, &g).unwrap();
            adam.step(&mut net, &grads.params).unwrap();
        }
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn rejects_bad_betas() {
        let net = scalar_net(0);
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(cfg, &net).is_err());
    }
}
