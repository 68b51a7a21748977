//! Contrastive CNN: negatives, training, filter ranking and contrast pairs.

mod negatives;
pub mod net;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::SolutionTensor;
use crate::Scalar;

pub use negatives::{generate_negatives, NegativeKind, NegativeSample};
pub use net::{Adam, Network, WeightFile};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CnnError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    Dimensions { expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("corpus of {n} solutions is smaller than two groups of {q}")]
    CorpusTooSmall { n: usize, q: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub channels: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub ensemble: usize,
    pub held_out_fraction: f64,
    pub retain_per_layer: usize,
    pub min_per_class: usize,
    /// Held-out accuracy below this is reported as "no signal".
    pub signal_accuracy: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            channels: vec![32, 64, 128],
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            ensemble: 3,
            held_out_fraction: 0.2,
            retain_per_layer: 6,
            min_per_class: 20,
            signal_accuracy: 0.6,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        if self.channels.len() != 3 || self.channels.contains(&0) {
            return Err(CnnError::Config("exactly three non-empty conv blocks".into()));
        }
        if self.ensemble == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(CnnError::Config("ensemble, batch size and epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.held_out_fraction) {
            return Err(CnnError::Config("held-out fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub held_out_accuracy: f64,
    pub held_out: usize,
    pub no_signal: bool,
}

/// A retained filter and its activations over the positive corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub seed: u64,
    pub layer: usize,
    pub filter: usize,
    /// Spatial mean activation per positive, in corpus order.
    pub activations: Vec<f64>,
    pub variance: f64,
    /// `height x width` activation averaged over the corpus.
    pub mean_map: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl FilterRecord {
    pub fn key(&self) -> (u64, usize, usize) {
        (self.seed, self.layer, self.filter)
    }

    pub fn label(&self) -> String {
        format!("s{}_l{}_f{}", self.seed, self.layer, self.filter)
    }

    pub fn map_grid(&self) -> String {
        crate::grid::write_grid(&self.label(), 1, self.height, self.width, &self.mean_map)
    }
}

pub struct TrainedModel<T> {
    pub network: Network<T>,
    pub report: TrainReport,
    pub records: Vec<FilterRecord>,
}

/// Stack tensors into the `[N*H*W, C]` activation layout.
pub fn to_input<T: Scalar>(tensors: &[&SolutionTensor<T>]) -> Array2<T> {
    let (c, h, w) = tensors[0].dims();
    let hw = h * w;
    let mut x = Array2::zeros((tensors.len() * hw, c));
    for (i, t) in tensors.iter().enumerate() {
        for ch in 0..c {
            for p in 0..hw {
                x[[i * hw + p, ch]] = t.data[ch * hw + p];
            }
        }
    }
    x
}

fn check_dims<T: Scalar>(all: &[&SolutionTensor<T>]) -> Result<(usize, usize, usize), CnnError> {
    let d = all.first().ok_or_else(|| CnnError::Input("no samples".into()))?.dims();
    for t in all {
        if t.dims() != d {
            return Err(CnnError::Dimensions { expected: d, got: t.dims() });
        }
    }
    Ok(d)
}

fn accuracy<T: Scalar>(net: &mut Network<T>, samples: &[(&SolutionTensor<T>, T)], batch: usize) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let (_, h, w) = samples[0].0.dims();
    let mut correct = 0;
    for chunk in samples.chunks(batch) {
        let ts: Vec<_> = chunk.iter().map(|s| s.0).collect();
        let f = net.forward(&to_input(&ts), ts.len(), h, w, false);
        for (z, (_, y)) in f.logits.iter().zip(chunk) {
            let pred = if *z > T::zero() { T::one() } else { T::zero() };
            if pred == *y {
                correct += 1;
            }
        }
    }
    correct as f64 / samples.len() as f64
}

/// Train one network with seed `seed` on positives (label 1) against
/// negatives (label 0), then rank filters over the positives.
pub fn train_contrastive<T: Scalar>(
    positives: &[SolutionTensor<T>],
    negatives: &[SolutionTensor<T>],
    config: &CnnConfig,
    seed: u64,
) -> Result<TrainedModel<T>, CnnError> {
    config.validate()?;
    if positives.len() != negatives.len() {
        return Err(CnnError::Input(format!("{} positives vs {} negatives", positives.len(), negatives.len())));
    }
    if positives.len() < config.min_per_class.max(2) {
        return Err(CnnError::Input(format!(
            "need at least {} samples per class, got {}",
            config.min_per_class.max(2),
            positives.len()
        )));
    }
    let all: Vec<&SolutionTensor<T>> = positives.iter().chain(negatives).collect();
    let (c, h, w) = check_dims(&all)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::init(c, &config.channels, &mut rng);
    let mut adam = Adam::new(config.learning_rate, net.param_count());

    // stratified split
    let n_hold = (positives.len() as f64 * config.held_out_fraction).round() as usize;
    let mut train: Vec<(&SolutionTensor<T>, T)> = Vec::new();
    let mut hold: Vec<(&SolutionTensor<T>, T)> = Vec::new();
    for (set, label) in [(positives, T::one()), (negatives, T::zero())] {
        let mut idx: Vec<usize> = (0..set.len()).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            if k < n_hold {
                hold.push((&set[i], label));
            } else {
                train.push((&set[i], label));
            }
        }
    }

    let mut final_loss = 0.0;
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train.chunks(config.batch_size) {
            let ts: Vec<_> = chunk.iter().map(|s| s.0).collect();
            let labels: Vec<T> = chunk.iter().map(|s| s.1).collect();
            let fwd = net.forward(&to_input(&ts), ts.len(), h, w, true);
            let (loss, grads) = net.backward(&fwd, &labels);
            let l = loss.f64();
            if !l.is_finite() {
                return Err(CnnError::NonFinite { epoch });
            }
            total += l * chunk.len() as f64;
            adam.step(&mut net, &grads);
        }
        final_loss = total / train.len() as f64;
    }

    let train_accuracy = accuracy(&mut net, &train, config.batch_size);
    let held_out_accuracy = if hold.is_empty() { train_accuracy } else { accuracy(&mut net, &hold, config.batch_size) };
    let records = filter_records(&mut net, positives, config, seed);
    Ok(TrainedModel {
        report: TrainReport {
            seed,
            epochs_run: config.epochs,
            final_loss,
            train_accuracy,
            held_out_accuracy,
            held_out: hold.len(),
            no_signal: held_out_accuracy < config.signal_accuracy,
        },
        network: net,
        records,
    })
}

/// Train `config.ensemble` networks with seeds `config.seed + k` in
/// parallel.
pub fn train_ensemble<T: Scalar>(
    positives: &[SolutionTensor<T>],
    negatives: &[SolutionTensor<T>],
    config: &CnnConfig,
) -> Result<Vec<TrainedModel<T>>, CnnError> {
    config.validate()?;
    (0..config.ensemble as u64)
        .into_par_iter()
        .map(|k| train_contrastive(positives, negatives, config, config.seed + k))
        .collect()
}

/// Per-solution spatial means of every filter (eval-mode batch norm); keeps
/// the top `retain_per_layer` filters of each layer by variance.
pub fn filter_records<T: Scalar>(
    net: &mut Network<T>,
    positives: &[SolutionTensor<T>],
    config: &CnnConfig,
    seed: u64,
) -> Vec<FilterRecord> {
    let (_, h, w) = positives[0].dims();
    let hw = h * w;
    let nl = net.blocks.len();
    let mut acts: Vec<Vec<Vec<f64>>> = net.blocks.iter().map(|b| vec![Vec::with_capacity(positives.len()); b.gamma.len()]).collect();
    let mut maps: Vec<Vec<Vec<f64>>> = net.blocks.iter().map(|b| vec![vec![0.0; hw]; b.gamma.len()]).collect();
    for chunk in positives.chunks(config.batch_size) {
        let ts: Vec<_> = chunk.iter().collect();
        let f = net.forward(&to_input(&ts), ts.len(), h, w, false);
        for l in 0..nl {
            let out = &f.blocks[l].out;
            for i in 0..ts.len() {
                let block = out.slice(ndarray::s![i * hw..(i + 1) * hw, ..]);
                let means = block.mean_axis(Axis(0)).expect("non-empty map");
                for (k, m) in means.iter().enumerate() {
                    acts[l][k].push(m.f64());
                }
                for p in 0..hw {
                    for k in 0..block.ncols() {
                        maps[l][k][p] += block[[p, k]].f64();
                    }
                }
            }
        }
    }
    let n = positives.len() as f64;
    let mut records = Vec::new();
    for l in 0..nl {
        let mut layer: Vec<FilterRecord> = acts[l]
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let mean = a.iter().sum::<f64>() / n;
                let variance = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                FilterRecord {
                    seed,
                    layer: l,
                    filter: k,
                    activations: a.clone(),
                    variance,
                    mean_map: maps[l][k].iter().map(|v| v / n).collect(),
                    height: h,
                    width: w,
                }
            })
            .collect();
        layer.sort_by(|a, b| b.variance.total_cmp(&a.variance).then(a.filter.cmp(&b.filter)));
        layer.truncate(config.retain_per_layer);
        records.extend(layer);
    }
    records
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastPair {
    pub seed: u64,
    pub layer: usize,
    pub filter: usize,
    /// Corpus positions, highest activation first.
    pub high: Vec<usize>,
    /// Corpus positions, lowest activation first.
    pub low: Vec<usize>,
    pub degenerate: bool,
}

impl ContrastPair {
    pub fn label(&self) -> String {
        format!("s{}_l{}_f{}", self.seed, self.layer, self.filter)
    }
}

/// Default group size: `max(3, ceil(5% of the corpus))`.
pub fn default_group_size(n: usize) -> usize {
    3usize.max((n as f64 * 0.05).ceil() as usize)
}

/// High and low activation groups per retained filter; ties broken by
/// corpus position.
pub fn select_contrast_pairs(records: &[FilterRecord], q: Option<usize>) -> Result<Vec<ContrastPair>, CnnError> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let n = r.activations.len();
        let q = q.unwrap_or_else(|| default_group_size(n));
        if n < 2 * q {
            return Err(CnnError::CorpusTooSmall { n, q });
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| r.activations[b].total_cmp(&r.activations[a]).then(a.cmp(&b)));
        let high = idx[..q].to_vec();
        idx.sort_by(|&a, &b| r.activations[a].total_cmp(&r.activations[b]).then(a.cmp(&b)));
        let low = idx[..q].to_vec();
        out.push(ContrastPair { seed: r.seed, layer: r.layer, filter: r.filter, high, low, degenerate: r.variance == 0.0 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(acts: &[f64]) -> FilterRecord {
        let n = acts.len() as f64;
        let mean = acts.iter().sum::<f64>() / n;
        FilterRecord {
            seed: 0,
            layer: 0,
            filter: 0,
            activations: acts.to_vec(),
            variance: acts.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n,
            mean_map: vec![],
            height: 0,
            width: 0,
        }
    }

    #[test]
    fn contrast_groups() {
        let p = select_contrast_pairs(&[record(&[0.9, 0.8, 0.7, 0.1, 0.2, 0.3])], Some(3)).unwrap();
        assert_eq!(p[0].high, vec![0, 1, 2]);
        assert_eq!(p[0].low, vec![3, 4, 5]);
        assert!(!p[0].degenerate);
        let p = select_contrast_pairs(&[record(&[0.5; 6])], None).unwrap();
        assert!(p[0].degenerate);
        assert_eq!(p[0].high, vec![0, 1, 2]);
        assert_eq!(p[0].low, vec![0, 1, 2]);
        assert!(select_contrast_pairs(&[record(&[0.5; 5])], None).is_err());
        assert_eq!(default_group_size(100), 5);
        assert_eq!(default_group_size(101), 6);
    }
}
