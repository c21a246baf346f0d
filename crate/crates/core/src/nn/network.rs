use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{NetworkSpec, TraceRow};
use super::tape::{BatchStats, Tape, Var};
use super::tensor::Tensor;
use crate::connectivity::ChannelWeights;
use crate::error::{Error, Result};
use crate::linalg::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and active dropout.
    Train,
    /// Running statistics, no dropout; never mutates the network.
    Eval,
}

/// A named parameter or buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Buffers (batch-norm running statistics) are saved but not optimized.
    pub trainable: bool,
}

/// Parameters of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    /// `[F, 4H]`, gate blocks ordered input, forget, cell, output.
    pub w_ih: Var,
    /// `[H, 4H]`.
    pub w_hh: Var,
    /// `[4H]`.
    pub bias: Var,
}

/// One direction of an LSTM over `x: [B, L, F]`; returns `h_t` for every
/// step in time order.
pub fn lstm<T: Real>(tape: &mut Tape<T>, x: Var, p: LstmVars, reverse: bool) -> Result<Vec<Var>> {
    let &[b, l, f] = tape.shape(x) else {
        return Err(Error::Shape(format!("lstm expects [B, L, F], got {:?}", tape.shape(x))));
    };
    let gates = tape.shape(p.w_ih)[1];
    let h = gates / 4;
    if tape.shape(p.w_ih) != [f, 4 * h] || tape.shape(p.w_hh) != [h, 4 * h] || tape.shape(p.bias) != [4 * h] {
        return Err(Error::Shape("lstm parameter shapes disagree".into()));
    }
    // Input projections for every step at once.
    let flat = tape.reshape(x, &[b * l, f])?;
    let xw = tape.matmul(flat, p.w_ih)?;
    let xw = tape.reshape(xw, &[b, l, 4 * h])?;
    let mut outputs: Vec<Option<Var>> = vec![None; l];
    let mut state: Option<(Var, Var)> = None;
    let order: Vec<usize> = if reverse { (0..l).rev().collect() } else { (0..l).collect() };
    for t in order {
        let mut z = tape.select_step(xw, t)?;
        if let Some((h_prev, _)) = state {
            let r = tape.matmul(h_prev, p.w_hh)?;
            z = tape.add(z, r)?;
        }
        let z = tape.add_bias(z, p.bias)?;
        let zi = tape.slice_cols(z, 0, h)?;
        let zf = tape.slice_cols(z, h, h)?;
        let zg = tape.slice_cols(z, 2 * h, h)?;
        let zo = tape.slice_cols(z, 3 * h, h)?;
        let i = tape.sigmoid(zi)?;
        let g = tape.tanh(zg)?;
        let o = tape.sigmoid(zo)?;
        let ig = tape.mul(i, g)?;
        let c = match state {
            Some((_, c_prev)) => {
                let fg = tape.sigmoid(zf)?;
                let fc = tape.mul(fg, c_prev)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c)?;
        let h_t = tape.mul(o, tc)?;
        outputs[t] = Some(h_t);
        state = Some((h_t, c));
    }
    Ok(outputs.into_iter().map(|o| o.expect("every step visited")).collect())
}

/// Bidirectional LSTM: `[B, L, F] → [B, L, 2H]`, forward state first.
pub fn bilstm<T: Real>(tape: &mut Tape<T>, x: Var, forward: LstmVars, backward: LstmVars) -> Result<Var> {
    let hf = lstm(tape, x, forward, false)?;
    let hb = lstm(tape, x, backward, true)?;
    let steps = hf
        .iter()
        .zip(&hb)
        .map(|(&a, &b)| tape.concat_last(a, b))
        .collect::<Result<Vec<_>>>()?;
    tape.stack_steps(&steps)
}

/// Result of one forward pass.
pub struct Forward<T> {
    pub logits: Var,
    /// Tape variable of every parameter, aligned with [`Network::params`];
    /// buffers map to `None`.
    pub params: Vec<Option<Var>>,
    /// Batch statistics per batch-norm layer (train mode only).
    pub batch_stats: Vec<(String, BatchStats<T>)>,
    /// Realized per-sample block outputs.
    pub trace: Vec<TraceRow>,
}

/// The layer stack with its parameters and optional input channel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
    channel_weights: Option<ChannelWeights>,
}

fn glorot<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-limit..=limit))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

impl<T: Real> Network<T> {
    /// Glorot-uniform weights, zero biases, unit forget-gate bias.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<Param<T>> = Vec::new();
        // Each layer's entries are pushed in lexicographic name order.
        let layer = |entries: Vec<(String, Tensor<T>, bool)>, params: &mut Vec<Param<T>>| {
            let mut entries = entries;
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            params.extend(entries.into_iter().map(|(name, value, trainable)| Param { name, value, trainable }));
        };
        let (k, f1, f2, k1, k2) = (spec.n_channels, spec.conv1_maps, spec.conv2_maps, spec.conv1_kernel, spec.conv2_kernel);
        let depth = spec.architecture.depth();
        let bn = |name: &str, m: usize| {
            vec![
                (format!("{name}.beta"), Tensor::zeros([m]), true),
                (format!("{name}.gamma"), Tensor::filled([m], T::one()), true),
                (format!("{name}.running_mean"), Tensor::zeros([m]), false),
                (format!("{name}.running_var"), Tensor::filled([m], T::one()), false),
            ]
        };
        let conv1_w = glorot(&mut rng, &[f1, 1, 1, k1], k1, f1 * k1);
        layer(vec![("conv1.bias".into(), Tensor::zeros([f1]), true), ("conv1.weight".into(), conv1_w, true)], &mut params);
        layer(bn("bn1", f1), &mut params);
        if depth >= 1 {
            let w = glorot(&mut rng, &[f2, f1, 1, k2], f1 * k2, f2 * k2);
            layer(vec![("conv2.bias".into(), Tensor::zeros([f2]), true), ("conv2.weight".into(), w, true)], &mut params);
            layer(bn("bn2", f2), &mut params);
        }
        if depth >= 2 {
            let w = glorot(&mut rng, &[f2, k], k, k);
            layer(
                vec![("depthwise.bias".into(), Tensor::zeros([f2]), true), ("depthwise.weight".into(), w, true)],
                &mut params,
            );
            layer(bn("bn3", f2), &mut params);
        }
        if depth >= 3 {
            let h = spec.lstm_hidden;
            let mut entries = Vec::new();
            for dir in ["fwd", "bwd"] {
                let mut bias = Tensor::zeros([4 * h]);
                bias.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = T::one());
                entries.push((format!("bilstm.{dir}.bias"), bias, true));
                entries.push((format!("bilstm.{dir}.w_hh"), glorot(&mut rng, &[h, 4 * h], h, 4 * h), true));
                entries.push((format!("bilstm.{dir}.w_ih"), glorot(&mut rng, &[f2, 4 * h], f2, 4 * h), true));
            }
            layer(entries, &mut params);
        }
        let n_in = spec.head_features()?;
        let dense_w = glorot(&mut rng, &[n_in, spec.n_classes], n_in, spec.n_classes);
        layer(
            vec![("dense.bias".into(), Tensor::zeros([spec.n_classes]), true), ("dense.weight".into(), dense_w, true)],
            &mut params,
        );
        let index = params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        Ok(Network { spec, params, index, channel_weights: None })
    }

    /// Rebuilds a network from stored parameters, checking names and shapes.
    pub fn from_params(spec: NetworkSpec, params: Vec<Param<T>>, weights: Option<ChannelWeights>) -> Result<Self> {
        let template = Network::<T>::new(spec.clone(), 0)?;
        if template.params.len() != params.len()
            || template
                .params
                .iter()
                .zip(&params)
                .any(|(a, b)| a.name != b.name || a.value.shape() != b.value.shape() || a.trainable != b.trainable)
        {
            return Err(Error::Contract("stored parameters do not match the network layout".into()));
        }
        let mut net = template;
        net.params = params;
        net.set_channel_weights(weights)?;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn n_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.numel()).sum()
    }

    pub fn channel_weights(&self) -> Option<&ChannelWeights> {
        self.channel_weights.as_ref()
    }

    /// Weights multiplying input channels before the first layer.
    pub fn set_channel_weights(&mut self, weights: Option<ChannelWeights>) -> Result<()> {
        if let Some(w) = &weights {
            if w.len() != self.spec.n_channels {
                return Err(Error::Contract(format!(
                    "{} channel weights for a {}-channel network",
                    w.len(),
                    self.spec.n_channels
                )));
            }
        }
        self.channel_weights = weights;
        Ok(())
    }

    /// Element-type conversion (e.g. to `f64` for gradient checks).
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.cast(), trainable: p.trainable })
                .collect(),
            index: self.index.clone(),
            channel_weights: self.channel_weights.clone(),
        }
    }

    /// Folds one batch's statistics into the running averages:
    /// `running ← momentum · running + (1 − momentum) · batch`.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats<T>)]) {
        let m = T::from_f64_lossy(self.spec.bn_momentum);
        let one_m = T::one() - m;
        for (name, s) in stats {
            for (suffix, batch) in [("running_mean", &s.mean), ("running_var", &s.var_unbiased)] {
                let i = self.index[&format!("{name}.{suffix}")];
                for (r, &b) in self.params[i].value.data_mut().iter_mut().zip(batch) {
                    *r = m * *r + one_m * b;
                }
            }
        }
    }

    /// Records a forward pass for `input: [B, K, T]` (or `[B, 1, K, T]`).
    /// In train mode parameters are tape leaves that require gradients.
    pub fn forward<R: Rng>(&self, tape: &mut Tape<T>, input: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Forward<T>> {
        let spec = &self.spec;
        let s = input.shape();
        let (b, k, t) = match *s {
            [b, k, t] | [b, 1, k, t] => (b, k, t),
            _ => return Err(Error::Shape(format!("network input must be [B, K, T], got {s:?}"))),
        };
        if (k, t) != (spec.n_channels, spec.n_samples) {
            return Err(Error::Shape(format!(
                "network built for {}×{} inputs, got {k}×{t}",
                spec.n_channels, spec.n_samples
            )));
        }
        let mut x = input.clone().reshaped([b, 1, k, t])?;
        if let Some(w) = &self.channel_weights {
            for (row, &wk) in x.data_mut().chunks_mut(t).zip(w.as_slice().iter().cycle()) {
                let wk = T::from_f64_lossy(wk);
                row.iter_mut().for_each(|v| *v = *v * wk);
            }
        }
        let train = mode == Mode::Train;
        let param_vars: Vec<Option<Var>> = self
            .params
            .iter()
            .map(|p| p.trainable.then(|| tape.leaf(p.value.clone(), train)))
            .collect();
        let pv = |name: &str| param_vars[self.index[name]].expect("trainable parameter");
        let buffer = |name: &str| self.params[self.index[name]].value.data().to_vec();
        let mut batch_stats = Vec::new();
        let mut trace = Vec::new();
        let mut record = |tape: &Tape<T>, block: &str, v: Var| {
            trace.push(TraceRow { block: block.into(), output: tape.shape(v)[1..].to_vec() });
        };

        let bn = |tape: &mut Tape<T>, x: Var, name: &str, stats: &mut Vec<(String, BatchStats<T>)>| -> Result<Var> {
            let (g, be) = (pv(&format!("{name}.gamma")), pv(&format!("{name}.beta")));
            if train {
                let (y, s) = tape.batch_norm_train(x, g, be, spec.bn_eps)?;
                stats.push((name.to_string(), s));
                Ok(y)
            } else {
                let mean = buffer(&format!("{name}.running_mean"));
                let var = buffer(&format!("{name}.running_var"));
                tape.batch_norm_eval(x, g, be, &mean, &var, spec.bn_eps)
            }
        };
        let drop = |tape: &mut Tape<T>, x: Var, rng: &mut R| -> Result<Var> {
            if train && spec.dropout > 0.0 {
                tape.dropout(x, spec.dropout, rng)
            } else {
                Ok(x)
            }
        };

        let depth = spec.architecture.depth();
        let x = tape.leaf(x, false);
        let y = tape.conv2d(x, pv("conv1.weight"), Some(pv("conv1.bias")), (1, 1))?;
        let mut y = bn(tape, y, "bn1", &mut batch_stats)?;
        record(tape, "conv1", y);
        if depth >= 1 {
            let z = tape.conv2d(y, pv("conv2.weight"), Some(pv("conv2.bias")), (1, 1))?;
            let z = bn(tape, z, "bn2", &mut batch_stats)?;
            y = tape.elu(z)?;
            record(tape, "conv2", y);
        }
        if depth >= 2 {
            let z = tape.avg_pool(y, spec.pool_size, spec.pool_size)?;
            let z = drop(tape, z, rng)?;
            record(tape, "pool1", z);
            let z = tape.depthwise(z, pv("depthwise.weight"), Some(pv("depthwise.bias")))?;
            let z = bn(tape, z, "bn3", &mut batch_stats)?;
            y = tape.elu(z)?;
            record(tape, "depthwise", y);
        }
        let features = if depth >= 3 {
            let z = tape.avg_pool(y, spec.pool_size, spec.pool_size)?;
            let z = drop(tape, z, rng)?;
            record(tape, "pool2", z);
            let s = tape.shape(z).to_vec();
            let z = tape.reshape(z, &[b, s[1], s[3]])?;
            let seq = tape.swap_last_axes(z)?;
            let dir = |d: &str| LstmVars {
                w_ih: pv(&format!("bilstm.{d}.w_ih")),
                w_hh: pv(&format!("bilstm.{d}.w_hh")),
                bias: pv(&format!("bilstm.{d}.bias")),
            };
            let h = bilstm(tape, seq, dir("fwd"), dir("bwd"))?;
            record(tape, "bilstm", h);
            let n = tape.value(h).numel() / b;
            tape.reshape(h, &[b, n])?
        } else {
            let g = tape.mean_last_axis(y)?;
            let n = tape.value(g).numel() / b;
            let g = tape.reshape(g, &[b, n])?;
            record(tape, "gap", g);
            g
        };
        trace.push(TraceRow { block: "flatten".into(), output: vec![1, tape.shape(features)[1]] });
        let logits = tape.matmul(features, pv("dense.weight"))?;
        let logits = tape.add_bias(logits, pv("dense.bias"))?;
        trace.push(TraceRow { block: "dense".into(), output: vec![1, spec.n_classes] });

        if trace != spec.shape_trace()? {
            return Err(Error::Contract("realized shapes differ from the shape trace of the NetworkSpec".into()));
        }
        Ok(Forward { logits, params: param_vars, batch_stats, trace })
    }

    /// Class probabilities in eval mode.
    pub fn predict_proba(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, input, Mode::Eval, &mut rng)?;
        Ok(super::tape::softmax_rows(tape.value(out.logits).data(), self.spec.n_classes))
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
