//! Central-difference verification of reverse-mode gradients in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::{Mode, Network};
use super::spec::NetworkSpec;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor of [`relative_error`]; below it errors are absolute.
///
/// Central differences with `ε = 1e-6` carry round-off of order `1e-10` in
/// `f64`, so gradients that are exactly zero (a bias feeding batch norm, say)
/// would otherwise score `1e-4` on noise alone.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `|a − n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(RELATIVE_FLOOR)
}

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    fn loss(&mut self) -> Result<f64>;
    fn gradient(&mut self) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_checked: usize,
}

/// Compares the analytic gradient with `(f(θ + ε) − f(θ − ε)) / 2ε` for every
/// coordinate.
pub fn grad_check<O: Objective>(objective: &mut O, eps: f64) -> Result<GradCheckReport> {
    let theta = objective.params();
    objective.set_params(&theta);
    let analytic = objective.gradient()?;
    if analytic.len() != theta.len() {
        return Err(Error::Contract("gradient length differs from parameter count".into()));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        n_checked: theta.len(),
    };
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        objective.set_params(&probe);
        let up = objective.loss()?;
        probe[i] = theta[i] - eps;
        objective.set_params(&probe);
        let down = objective.loss()?;
        probe[i] = theta[i];
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if !err.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient comparison at {i}")));
        }
        if err > report.max_relative_error {
            report = GradCheckReport {
                max_relative_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
                n_checked: theta.len(),
            };
        }
    }
    objective.set_params(&theta);
    Ok(report)
}

/// Objective built from a closure over tape leaves; every leaf is a
/// differentiated input.
pub struct TapeObjective<F> {
    leaves: Vec<Tensor<f64>>,
    build: F,
}

impl<F> TapeObjective<F>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    pub fn new(leaves: Vec<Tensor<f64>>, build: F) -> Self {
        TapeObjective { leaves, build }
    }

    fn run(&mut self, want_grad: bool) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.leaves.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = (self.build)(&mut tape, &vars)?;
        let loss = tape.value(out).data()[0];
        let mut grad = Vec::new();
        if want_grad {
            tape.backward(out)?;
            for (v, t) in vars.iter().zip(&self.leaves) {
                match tape.grad(*v) {
                    Some(g) => grad.extend_from_slice(g),
                    None => grad.extend(std::iter::repeat_n(0.0, t.numel())),
                }
            }
        }
        Ok((loss, grad))
    }
}

impl<F> Objective for TapeObjective<F>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    fn params(&self) -> Vec<f64> {
        self.leaves.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    fn set_params(&mut self, params: &[f64]) {
        let mut off = 0;
        for t in &mut self.leaves {
            let n = t.numel();
            t.data_mut().copy_from_slice(&params[off..off + n]);
            off += n;
        }
    }

    fn loss(&mut self) -> Result<f64> {
        Ok(self.run(false)?.0)
    }

    fn gradient(&mut self) -> Result<Vec<f64>> {
        Ok(self.run(true)?.1)
    }
}

/// Wraps an objective and multiplies a slice of its analytic gradient by a
/// constant: a deliberately broken backward pass that a sound checker must
/// flag.
pub struct ScaledGradient<O> {
    pub inner: O,
    pub range: std::ops::Range<usize>,
    pub factor: f64,
}

impl<O: Objective> Objective for ScaledGradient<O> {
    fn params(&self) -> Vec<f64> {
        self.inner.params()
    }

    fn set_params(&mut self, params: &[f64]) {
        self.inner.set_params(params)
    }

    fn loss(&mut self) -> Result<f64> {
        self.inner.loss()
    }

    fn gradient(&mut self) -> Result<Vec<f64>> {
        let mut g = self.inner.gradient()?;
        let end = self.range.end.min(g.len());
        g[self.range.start.min(end)..end].iter_mut().for_each(|v| *v *= self.factor);
        Ok(g)
    }
}

/// Training-mode cross-entropy of a network over its trainable parameters.
/// Dropout masks are drawn from the same seed on every evaluation so the
/// function being differentiated stays fixed.
pub struct NetworkObjective {
    pub network: Network<f64>,
    pub input: Tensor<f64>,
    pub labels: Vec<usize>,
    pub dropout_seed: u64,
}

impl NetworkObjective {
    fn run(&mut self, want_grad: bool) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(self.dropout_seed);
        let out = self.network.forward(&mut tape, &self.input, Mode::Train, &mut rng)?;
        let loss = tape.softmax_cross_entropy(out.logits, &self.labels)?;
        let value = tape.value(loss).data()[0];
        let mut grad = Vec::new();
        if want_grad {
            tape.backward(loss)?;
            for (p, v) in self.network.params().iter().zip(&out.params) {
                if let Some(v) = v {
                    match tape.grad(*v) {
                        Some(g) => grad.extend_from_slice(g),
                        None => grad.extend(std::iter::repeat_n(0.0, p.value.numel())),
                    }
                }
            }
        }
        Ok((value, grad))
    }
}

impl Objective for NetworkObjective {
    fn params(&self) -> Vec<f64> {
        self.network
            .params()
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    fn set_params(&mut self, params: &[f64]) {
        let mut off = 0;
        for p in self.network.params_mut().iter_mut().filter(|p| p.trainable) {
            let n = p.value.numel();
            p.value.data_mut().copy_from_slice(&params[off..off + n]);
            off += n;
        }
    }

    fn loss(&mut self) -> Result<f64> {
        Ok(self.run(false)?.0)
    }

    fn gradient(&mut self) -> Result<Vec<f64>> {
        Ok(self.run(true)?.1)
    }
}

/// Same layer kinds as the full network at toy size: 6 channels, 90
/// samples, kernels of 7, pooling of 3.
pub fn downscaled_spec(n_classes: usize) -> NetworkSpec {
    NetworkSpec {
        n_channels: 6,
        n_samples: 90,
        conv1_maps: 2,
        conv1_kernel: 7,
        conv2_maps: 3,
        conv2_kernel: 7,
        pool_size: 3,
        lstm_hidden: 3,
        ..NetworkSpec::table_one(n_classes)
    }
}

/// Builds a network objective with a random batch of `batch` inputs.
pub fn network_objective(spec: NetworkSpec, batch: usize, seed: u64) -> Result<NetworkObjective> {
    let network = Network::<f64>::new(spec.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = batch * spec.n_channels * spec.n_samples;
    let input = Tensor::new(
        [batch, spec.n_channels, spec.n_samples],
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let labels = (0..batch).map(|i| i % spec.n_classes).collect();
    Ok(NetworkObjective { network, input, labels, dropout_seed: seed })
}

/// Gradient check of the whole down-scaled stack.
pub fn grad_check_network(spec: NetworkSpec, seed: u64, eps: f64) -> Result<GradCheckReport> {
    let mut objective = network_objective(spec, 4, seed)?;
    grad_check(&mut objective, eps)
}
