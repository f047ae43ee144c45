//! Central finite-difference verification of the hand-written backward rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    /// `(parameter tensor, flat index, analytic, numeric)` of the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub input_max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol && self.input_max_rel_error <= tol
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing gradients
/// from dominating through round-off.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Probes `probes` randomly chosen parameters (and up to `probes` input
/// entries) using the scalar loss `sum(c * output)` with fixed random
/// weights `c`, comparing backward against central differences with step `h`.
pub fn check(
    net: &Network<f64>,
    input: &Tensor<f64>,
    probes: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (out, cache) = net.forward(input)?;
    let weights: Vec<f64> = (0..out.len()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let grad_out = Tensor::from_vec(out.shape(), weights.clone())?;
    let grads = net.backward(&cache, &grad_out)?;

    let loss = |n: &Network<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = n.predict(x)?;
        Ok(y.data().iter().zip(&weights).map(|(a, b)| a * b).sum())
    };

    let sizes: Vec<usize> = net.params().iter().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    let mut report = GradCheckReport {
        probes: 0,
        max_rel_error: 0.0,
        worst: None,
        input_max_rel_error: 0.0,
    };
    let mut probe_net = net.clone();
    for _ in 0..probes.min(total.max(1)) {
        if total == 0 {
            break;
        }
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let original = net.params()[which].data()[flat];
        probe_net.params_mut()[which].data_mut()[flat] = original + h;
        let plus = loss(&probe_net, input)?;
        probe_net.params_mut()[which].data_mut()[flat] = original - h;
        let minus = loss(&probe_net, input)?;
        probe_net.params_mut()[which].data_mut()[flat] = original;
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grads.params[which].data()[flat];
        let err = relative_error(analytic, numeric);
        report.probes += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((which, flat, analytic, numeric));
        }
    }

    let mut x = input.clone();
    for _ in 0..probes.min(input.len()) {
        let i = rng.random_range(0..input.len());
        let original = x.data()[i];
        x.data_mut()[i] = original + h;
        let plus = loss(net, &x)?;
        x.data_mut()[i] = original - h;
        let minus = loss(net, &x)?;
        x.data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * h);
        report.input_max_rel_error = report
            .input_max_rel_error
            .max(relative_error(grads.input.data()[i], numeric));
    }
    Ok(report)
}

/// Deterministic pseudo-random tensor with entries in `[-scale, scale]`.
pub fn random_tensor(shape: &[usize], scale: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
