use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, Mode, Network};
use super::optim::{Adam, AdamConfig};
use super::tape::Tape;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::linalg::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, batch_size: 32, adam: AdamConfig::default() }
    }
}

/// Inputs `[N, K, T]` with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub n_channels: usize,
    pub n_samples: usize,
    pub x: Vec<f32>,
    pub y: Vec<usize>,
}

impl TrainData {
    pub fn new(n_channels: usize, n_samples: usize, x: Vec<f32>, y: Vec<usize>) -> Result<Self> {
        if x.len() != y.len() * n_channels * n_samples {
            return Err(Error::Shape(format!(
                "{} values for {} examples of {n_channels}×{n_samples}",
                x.len(),
                y.len()
            )));
        }
        Ok(TrainData { n_channels, n_samples, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Stacks the examples at `indices` into a `[B, K, T]` tensor.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let size = self.n_channels * self.n_samples;
        let mut data = Vec::with_capacity(indices.len() * size);
        for &i in indices {
            data.extend(self.x[i * size..(i + 1) * size].iter().map(|&v| T::from_f32(v).unwrap()));
        }
        let x = Tensor::new([indices.len(), self.n_channels, self.n_samples], data)?;
        Ok((x, indices.iter().map(|&i| self.y[i]).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub loss: f64,
    pub accuracy: f64,
}

/// Network, optimizer and the RNG position of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub network: Network<T>,
    pub adam: Adam<T>,
    pub seed: u64,
    pub epoch: u64,
    pub mode: Mode,
}

impl<T: Real> TrainState<T> {
    pub fn new(network: Network<T>, config: &TrainConfig, seed: u64) -> Self {
        let adam = Adam::new(config.adam, network.params());
        TrainState { network, adam, seed, epoch: 0, mode: Mode::Train }
    }

    /// Forward, backward and one Adam step on a batch; returns the mean loss
    /// and the number of correct predictions.
    pub fn train_step(&mut self, x: &Tensor<T>, labels: &[usize], rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
        let mut tape = Tape::new();
        let out = self.network.forward(&mut tape, x, Mode::Train, rng)?;
        let loss = tape.softmax_cross_entropy(out.logits, labels)?;
        let loss_value = tape.value(loss).data()[0].to_f64().unwrap();
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("loss became {loss_value}")));
        }
        let c = self.network.spec().n_classes;
        let correct = tape
            .value(out.logits)
            .data()
            .chunks(c)
            .zip(labels)
            .filter(|(row, &l)| argmax(row) == l)
            .count();
        tape.backward(loss)?;
        let grads: Vec<Option<Vec<T>>> = out.params.iter().map(|v| v.and_then(|v| tape.take_grad(v))).collect();
        if grads.iter().flatten().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        self.adam.step(self.network.params_mut(), &grads)?;
        self.network.update_running_stats(&out.batch_stats);
        Ok((loss_value, correct))
    }
}

/// Mini-batch order for one epoch. A trailing batch of one is merged into
/// its predecessor because batch norm needs two samples.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(2)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

/// One pass over `data` in a seeded order; the RNG stream is the epoch
/// number, so a run is reproducible from `(seed, epoch)` alone.
pub fn train_epoch<T: Real>(state: &mut TrainState<T>, data: &TrainData, config: &TrainConfig) -> Result<EpochMetrics> {
    if data.len() < 2 {
        return Err(Error::Config("training needs at least two examples".into()));
    }
    state.mode = Mode::Train;
    let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
    rng.set_stream(state.epoch);
    let (mut loss_sum, mut correct) = (0.0, 0);
    for batch in epoch_batches(data.len(), config.batch_size, &mut rng) {
        let (x, y) = data.batch::<T>(&batch)?;
        let (loss, ok) = state.train_step(&x, &y, &mut rng)?;
        loss_sum += loss * batch.len() as f64;
        correct += ok;
    }
    state.epoch += 1;
    state.mode = Mode::Eval;
    Ok(EpochMetrics {
        epoch: state.epoch,
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Eval-mode class probabilities, row per example.
pub fn predict_proba<T: Real>(network: &Network<T>, data: &TrainData, batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let c = network.spec().n_classes;
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = data.batch::<T>(chunk)?;
        let p = network.predict_proba(&x)?;
        out.extend(p.chunks(c).map(|r| r.iter().map(|v| v.to_f64().unwrap()).collect()));
    }
    Ok(out)
}

/// Eval-mode predicted classes (ties to the lowest index).
pub fn predict<T: Real>(network: &Network<T>, data: &TrainData, batch_size: usize) -> Result<Vec<usize>> {
    Ok(predict_proba(network, data, batch_size)?.iter().map(|r| argmax(r)).collect())
}
