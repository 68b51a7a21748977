//! Three conv blocks (3x3 conv, batch norm, ReLU), global average pool and a
//! single-logit head, with hand-written backpropagation.
//!
//! Activations are matrices of shape `[N * H * W, C]`; row `(n * H + y) * W
//! + x` holds the channel vector of sample `n` at `(y, x)`. Convolutions are
//! im2col products with column order `(ky * 3 + kx) * C_in + c`.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::Scalar;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct ConvBlock<T> {
    /// `[C_out, 9 * C_in]`
    pub weight: Array2<T>,
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    pub in_channels: usize,
    pub blocks: Vec<ConvBlock<T>>,
    pub head_w: Array1<T>,
    pub head_b: T,
}

/// Per-block values kept from the forward pass for backpropagation.
pub struct BlockCache<T> {
    cols: Array2<T>,
    xhat: Array2<T>,
    inv_std: Array1<T>,
    pre_relu: Array2<T>,
    /// Post-ReLU output.
    pub out: Array2<T>,
}

pub struct Forward<T> {
    pub blocks: Vec<BlockCache<T>>,
    pub pooled: Array2<T>,
    pub logits: Array1<T>,
    pub n: usize,
    pub h: usize,
    pub w: usize,
}

#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub weight: Vec<Array2<T>>,
    pub gamma: Vec<Array1<T>>,
    pub beta: Vec<Array1<T>>,
    pub head_w: Array1<T>,
    pub head_b: T,
}

impl<T: Scalar> Network<T> {
    /// Kaiming-normal conv weights, unit gamma, zero beta, small head.
    pub fn init<R: Rng>(in_channels: usize, channels: &[usize], rng: &mut R) -> Self {
        let mut blocks = Vec::with_capacity(channels.len());
        let mut cin = in_channels;
        for &cout in channels {
            let fan_in = 9 * cin;
            let scale = (2.0 / fan_in as f64).sqrt();
            let weight = Array2::from_shape_fn((cout, fan_in), |_| {
                let z: f64 = StandardNormal.sample(rng);
                T::of(z * scale)
            });
            blocks.push(ConvBlock {
                weight,
                gamma: Array1::from_elem(cout, T::one()),
                beta: Array1::zeros(cout),
                running_mean: Array1::zeros(cout),
                running_var: Array1::from_elem(cout, T::one()),
            });
            cin = cout;
        }
        let scale = (1.0 / cin as f64).sqrt();
        let head_w = Array1::from_shape_fn(cin, |_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z * scale)
        });
        Network { in_channels, blocks, head_w, head_b: T::zero() }
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.weight.len() + 2 * b.gamma.len()).sum::<usize>() + self.head_w.len() + 1
    }

    /// `train` uses batch statistics and updates the running estimates;
    /// otherwise the running estimates are used.
    pub fn forward(&mut self, input: &Array2<T>, n: usize, h: usize, w: usize, train: bool) -> Forward<T> {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut x = input.clone();
        for b in self.blocks.iter_mut() {
            let cols = im2col(&x, n, h, w);
            let z = cols.dot(&b.weight.t());
            let m = z.nrows();
            let (mean, var) = if train {
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let centered = &z - &mean;
                let var = (&centered * &centered).mean_axis(Axis(0)).expect("non-empty batch");
                let mom = T::of(BN_MOMENTUM);
                let unbias = if m > 1 { T::of(m as f64 / (m as f64 - 1.0)) } else { T::one() };
                b.running_mean = &b.running_mean * (T::one() - mom) + &mean * mom;
                b.running_var = &b.running_var * (T::one() - mom) + &var * (mom * unbias);
                (mean, var)
            } else {
                (b.running_mean.clone(), b.running_var.clone())
            };
            let inv_std = var.mapv(|v| T::one() / (v + T::of(BN_EPS)).sqrt());
            let xhat = (&z - &mean) * &inv_std;
            let pre = &xhat * &b.gamma + &b.beta;
            let out = pre.mapv(|v| if v > T::zero() { v } else { T::zero() });
            x = out.clone();
            caches.push(BlockCache { cols, xhat, inv_std, pre_relu: pre, out });
        }
        let hw = h * w;
        let c = x.ncols();
        let pooled = x
            .into_shape((n, hw, c))
            .expect("activation layout")
            .mean_axis(Axis(1))
            .expect("non-empty map");
        let logits = pooled.dot(&self.head_w) + self.head_b;
        Forward { blocks: caches, pooled, logits, n, h, w }
    }

    /// Mean binary cross-entropy with logits and its gradients.
    pub fn backward(&self, fwd: &Forward<T>, labels: &[T]) -> (T, Grads<T>) {
        let n = fwd.n;
        let nt = T::of(n as f64);
        let mut loss = T::zero();
        let mut dlogit = Array1::zeros(n);
        for i in 0..n {
            let z = fwd.logits[i];
            let y = labels[i];
            // log(1 + exp(-|z|)) + max(z, 0) - z * y
            loss = loss + (T::one() + (-z.abs()).exp()).ln() + z.max(T::zero()) - z * y;
            let s = T::one() / (T::one() + (-z).exp());
            dlogit[i] = (s - y) / nt;
        }
        loss = loss / nt;

        let head_w = fwd.pooled.t().dot(&dlogit);
        let head_b = dlogit.sum();
        let hw = fwd.h * fwd.w;
        let c_last = self.head_w.len();
        let hw_t = T::of(hw as f64);
        let mut dout = Array2::zeros((n * hw, c_last));
        for i in 0..n {
            for p in 0..hw {
                for c in 0..c_last {
                    dout[[i * hw + p, c]] = dlogit[i] * self.head_w[c] / hw_t;
                }
            }
        }

        let nb = self.blocks.len();
        let mut gw = vec![Array2::zeros((0, 0)); nb];
        let mut gg = vec![Array1::zeros(0); nb];
        let mut gb = vec![Array1::zeros(0); nb];
        for l in (0..nb).rev() {
            let cache = &fwd.blocks[l];
            let block = &self.blocks[l];
            let mut dy = dout;
            dy.zip_mut_with(&cache.pre_relu, |d, &p| {
                if p <= T::zero() {
                    *d = T::zero();
                }
            });
            gg[l] = (&dy * &cache.xhat).sum_axis(Axis(0));
            gb[l] = dy.sum_axis(Axis(0));
            let dxhat = &dy * &block.gamma;
            let m = T::of(dxhat.nrows() as f64);
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
            let dz = ((&dxhat * m) - &sum_dxhat - &(&cache.xhat * &sum_dxhat_xhat)) * &(&cache.inv_std / m);
            gw[l] = dz.t().dot(&cache.cols);
            if l > 0 {
                let dcols = dz.dot(&block.weight);
                dout = col2im(&dcols, fwd.n, fwd.h, fwd.w);
            } else {
                dout = Array2::zeros((0, 0));
            }
        }
        (loss, Grads { weight: gw, gamma: gg, beta: gb, head_w, head_b })
    }
}

/// `[N*H*W, C]` to `[N*H*W, 9*C]` with zero padding 1.
pub fn im2col<T: Scalar>(x: &Array2<T>, n: usize, h: usize, w: usize) -> Array2<T> {
    let c = x.ncols();
    let mut cols = Array2::zeros((n * h * w, 9 * c));
    for i in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let row = (i * h + y) * w + xx;
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = (i * h + sy as usize) * w + sx as usize;
                        let base = (ky * 3 + kx) * c;
                        for ch in 0..c {
                            cols[[row, base + ch]] = x[[src, ch]];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub fn col2im<T: Scalar>(cols: &Array2<T>, n: usize, h: usize, w: usize) -> Array2<T> {
    let c = cols.ncols() / 9;
    let mut x = Array2::zeros((n * h * w, c));
    for i in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let row = (i * h + y) * w + xx;
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let dst = (i * h + sy as usize) * w + sx as usize;
                        let base = (ky * 3 + kx) * c;
                        for ch in 0..c {
                            let v = x[[dst, ch]] + cols[[row, base + ch]];
                            x[[dst, ch]] = v;
                        }
                    }
                }
            }
        }
    }
    x
}

/// Adaptive-moment optimizer state.
pub struct Adam<T> {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, params: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![T::zero(); params], v: vec![T::zero(); params] }
    }

    pub fn step(&mut self, net: &mut Network<T>, g: &Grads<T>) {
        self.t += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let c1 = T::of(1.0 - self.beta1.powi(self.t));
        let c2 = T::of(1.0 - self.beta2.powi(self.t));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        let mut k = 0;
        let (m, v) = (&mut self.m, &mut self.v);
        let mut upd = |p: &mut T, grad: T| {
            m[k] = b1 * m[k] + (T::one() - b1) * grad;
            v[k] = b2 * v[k] + (T::one() - b2) * grad * grad;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            *p = *p - lr * mh / (vh.sqrt() + eps);
            k += 1;
        };
        for (l, b) in net.blocks.iter_mut().enumerate() {
            for (p, &d) in b.weight.iter_mut().zip(g.weight[l].iter()) {
                upd(p, d);
            }
            for (p, &d) in b.gamma.iter_mut().zip(g.gamma[l].iter()) {
                upd(p, d);
            }
            for (p, &d) in b.beta.iter_mut().zip(g.beta[l].iter()) {
                upd(p, d);
            }
        }
        for (p, &d) in net.head_w.iter_mut().zip(g.head_w.iter()) {
            upd(p, d);
        }
        upd(&mut net.head_b, g.head_b);
    }
}

/// Versioned weight container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub format: String,
    pub version: u32,
    pub in_channels: usize,
    pub blocks: Vec<BlockWeights>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockWeights {
    pub out_channels: usize,
    pub weight: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

pub const WEIGHT_FORMAT: &str = "streamforge-cnn";
pub const WEIGHT_VERSION: u32 = 1;

fn to_f64<T: Scalar>(v: impl IntoIterator<Item = T>) -> Vec<f64> {
    v.into_iter().map(|x| x.f64()).collect()
}

impl<T: Scalar> Network<T> {
    pub fn to_weights(&self) -> WeightFile {
        WeightFile {
            format: WEIGHT_FORMAT.into(),
            version: WEIGHT_VERSION,
            in_channels: self.in_channels,
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockWeights {
                    out_channels: b.gamma.len(),
                    weight: to_f64(b.weight.iter().copied()),
                    gamma: to_f64(b.gamma.iter().copied()),
                    beta: to_f64(b.beta.iter().copied()),
                    running_mean: to_f64(b.running_mean.iter().copied()),
                    running_var: to_f64(b.running_var.iter().copied()),
                })
                .collect(),
            head_w: to_f64(self.head_w.iter().copied()),
            head_b: self.head_b.f64(),
        }
    }

    pub fn from_weights(wf: &WeightFile) -> Result<Self, String> {
        if wf.format != WEIGHT_FORMAT || wf.version != WEIGHT_VERSION {
            return Err(format!("unsupported weight file {} v{}", wf.format, wf.version));
        }
        let conv = |v: &[f64]| Array1::from_iter(v.iter().map(|x| T::of(*x)));
        let mut cin = wf.in_channels;
        let mut blocks = Vec::new();
        for b in &wf.blocks {
            let weight = Array2::from_shape_vec((b.out_channels, 9 * cin), b.weight.iter().map(|x| T::of(*x)).collect())
                .map_err(|e| e.to_string())?;
            blocks.push(ConvBlock {
                weight,
                gamma: conv(&b.gamma),
                beta: conv(&b.beta),
                running_mean: conv(&b.running_mean),
                running_var: conv(&b.running_var),
            });
            cin = b.out_channels;
        }
        Ok(Network { in_channels: wf.in_channels, blocks, head_w: conv(&wf.head_w), head_b: T::of(wf.head_b) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, h, w, c) = (2, 3, 4, 2);
        let x: Array2<f64> = Array2::from_shape_fn((n * h * w, c), |_| rng.gen_range(-1.0..1.0));
        let y: Array2<f64> = Array2::from_shape_fn((n * h * w, 9 * c), |_| rng.gen_range(-1.0..1.0));
        let lhs = (&im2col(&x, n, h, w) * &y).sum();
        let rhs = (&x * &col2im(&y, n, h, w)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn weights_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net: Network<f32> = Network::init(2, &[4, 5, 6], &mut rng);
        let wf = net.to_weights();
        let back: Network<f32> = Network::from_weights(&wf).unwrap();
        assert_eq!(back.to_weights(), wf);
    }

    fn loss(net: &mut Network<f64>, x: &Array2<f64>, labels: &[f64]) -> f64 {
        let f = net.forward(x, labels.len(), 4, 4, true);
        net.backward(&f, labels).0
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net: Network<f64> = Network::init(2, &[3, 3, 4], &mut rng);
        for b in &mut net.blocks {
            b.gamma.mapv_inplace(|_| rng.gen_range(0.5..1.5));
            b.beta.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        }
        let n = 3;
        let x: Array2<f64> = Array2::from_shape_fn((n * 16, 2), |_| rng.gen_range(-1.0..1.0));
        let labels = [1.0, 0.0, 1.0];
        let f = net.forward(&x, n, 4, 4, true);
        let (_, g) = net.backward(&f, &labels);
        let eps = 1e-6;
        let check = |analytic: f64, numeric: f64| {
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            assert!(rel <= 1e-4 || (analytic - numeric).abs() < 1e-9, "analytic {analytic} numeric {numeric}");
        };
        for l in 0..3 {
            for idx in [(0usize, 0usize), (1, 2), (2, 5)] {
                let orig = net.blocks[l].weight[idx];
                net.blocks[l].weight[idx] = orig + eps;
                let up = loss(&mut net, &x, &labels);
                net.blocks[l].weight[idx] = orig - eps;
                let down = loss(&mut net, &x, &labels);
                net.blocks[l].weight[idx] = orig;
                check(g.weight[l][idx], (up - down) / (2.0 * eps));
            }
            for k in 0..2 {
                let orig = net.blocks[l].gamma[k];
                net.blocks[l].gamma[k] = orig + eps;
                let up = loss(&mut net, &x, &labels);
                net.blocks[l].gamma[k] = orig - eps;
                let down = loss(&mut net, &x, &labels);
                net.blocks[l].gamma[k] = orig;
                check(g.gamma[l][k], (up - down) / (2.0 * eps));
                let orig = net.blocks[l].beta[k];
                net.blocks[l].beta[k] = orig + eps;
                let up = loss(&mut net, &x, &labels);
                net.blocks[l].beta[k] = orig - eps;
                let down = loss(&mut net, &x, &labels);
                net.blocks[l].beta[k] = orig;
                check(g.beta[l][k], (up - down) / (2.0 * eps));
            }
        }
        for k in 0..2 {
            let orig = net.head_w[k];
            net.head_w[k] = orig + eps;
            let up = loss(&mut net, &x, &labels);
            net.head_w[k] = orig - eps;
            let down = loss(&mut net, &x, &labels);
            net.head_w[k] = orig;
            check(g.head_w[k], (up - down) / (2.0 * eps));
        }
        let orig = net.head_b;
        net.head_b = orig + eps;
        let up = loss(&mut net, &x, &labels);
        net.head_b = orig - eps;
        let down = loss(&mut net, &x, &labels);
        net.head_b = orig;
        check(g.head_b, (up - down) / (2.0 * eps));
    }
}
