use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ShapeKind;
use crate::encode::SolutionTensor;
use crate::Scalar;

use super::CnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    RowPermuted,
    PositionSwapped,
    UniformRandom,
}

#[derive(Debug, Clone)]
pub struct NegativeSample<T> {
    pub tensor: SolutionTensor<T>,
    pub kind: NegativeKind,
    /// Index of the positive it was derived from.
    pub source: usize,
}

/// One negative per positive; kinds cycle row-permuted, position-swapped,
/// uniform-random.
pub fn generate_negatives<T: Scalar>(positives: &[SolutionTensor<T>], seed: u64) -> Result<Vec<NegativeSample<T>>, CnnError> {
    if positives.is_empty() {
        return Err(CnnError::Input("need at least one positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.height * p.width < 2 {
                return Err(CnnError::Input("cannot perturb a 1x1 tensor".into()));
            }
            let (kind, tensor) = match i % 3 {
                0 => (NegativeKind::RowPermuted, row_permuted(p, &mut rng)),
                1 => (NegativeKind::PositionSwapped, position_swapped(p, &mut rng)),
                _ => (NegativeKind::UniformRandom, uniform_random(p, &mut rng)),
            };
            Ok(NegativeSample { tensor, kind, source: i })
        })
        .collect()
}

/// Cell vector (all channels) at plane position `pos`.
fn cell<T: Scalar>(t: &SolutionTensor<T>, pos: usize) -> Vec<T> {
    let hw = t.height * t.width;
    (0..t.channels).map(|c| t.data[c * hw + pos]).collect()
}

fn put<T: Scalar>(t: &mut SolutionTensor<T>, pos: usize, v: &[T]) {
    let hw = t.height * t.width;
    for (c, x) in v.iter().enumerate() {
        t.data[c * hw + pos] = *x;
    }
}

fn swap_cells<T: Scalar>(t: &mut SolutionTensor<T>, a: usize, b: usize) {
    let (va, vb) = (cell(t, a), cell(t, b));
    put(t, a, &vb);
    put(t, b, &va);
}

fn random_derangement_order<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    while order.iter().enumerate().all(|(i, &o)| i == o) {
        order.shuffle(rng);
    }
    order
}

/// Rows reordered by a non-identity permutation (columns for single-row
/// tensors).
fn row_permuted<T: Scalar, R: Rng>(p: &SolutionTensor<T>, rng: &mut R) -> SolutionTensor<T> {
    let mut out = p.clone();
    let (h, w) = (p.height, p.width);
    if h >= 2 {
        let order = random_derangement_order(h, rng);
        for (dst, &src) in order.iter().enumerate() {
            for c in 0..w {
                put(&mut out, dst * w + c, &cell(p, src * w + c));
            }
        }
    } else {
        let order = random_derangement_order(w, rng);
        for (dst, &src) in order.iter().enumerate() {
            put(&mut out, dst, &cell(p, src));
        }
    }
    out
}

/// Two random cell swaps; for permutation matrices the ones of two rows
/// exchange columns so every row and column keeps a single one.
fn position_swapped<T: Scalar, R: Rng>(p: &SolutionTensor<T>, rng: &mut R) -> SolutionTensor<T> {
    let mut out = p.clone();
    let (h, w) = (p.height, p.width);
    if p.kind == ShapeKind::Permutation && h >= 2 {
        let r1 = rng.gen_range(0..h);
        let mut r2 = rng.gen_range(0..h - 1);
        if r2 >= r1 {
            r2 += 1;
        }
        let one = |r: usize| (0..w).find(|&c| p.at(0, r, c) > T::zero());
        if let (Some(c1), Some(c2)) = (one(r1), one(r2)) {
            swap_cells(&mut out, r1 * w + c1, r1 * w + c2);
            swap_cells(&mut out, r2 * w + c2, r2 * w + c1);
            return out;
        }
    }
    let n = h * w;
    for _ in 0..2 {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        swap_cells(&mut out, a, b);
    }
    out
}

/// Every cell redrawn from this tensor's own cell-value distribution.
fn uniform_random<T: Scalar, R: Rng>(p: &SolutionTensor<T>, rng: &mut R) -> SolutionTensor<T> {
    let n = p.height * p.width;
    let pool: Vec<Vec<T>> = (0..n).map(|i| cell(p, i)).collect();
    let mut out = p.clone();
    for pos in 0..n {
        let v = &pool[rng.gen_range(0..n)];
        put(&mut out, pos, v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(x: &[usize]) -> SolutionTensor<f64> {
        let n = x.len();
        let mut t = SolutionTensor::zeros(ShapeKind::Permutation, 1, n, n);
        for (r, &c) in x.iter().enumerate() {
            t.set(0, r, c, 1.0);
        }
        t
    }

    fn doubly_stochastic(t: &SolutionTensor<f64>) -> bool {
        let n = t.height;
        (0..n).all(|r| (0..n).map(|c| t.at(0, r, c)).sum::<f64>() == 1.0)
            && (0..n).all(|c| (0..n).map(|r| t.at(0, r, c)).sum::<f64>() == 1.0)
    }

    #[test]
    fn tags_cycle_and_permutations_stay_permutations() {
        let pos: Vec<_> = (0..10).map(|i| perm(&[i % 4, (i + 1) % 4, (i + 2) % 4, (i + 3) % 4])).collect();
        let neg = generate_negatives(&pos, 9).unwrap();
        assert_eq!(neg.len(), 10);
        let count = |k| neg.iter().filter(|n| n.kind == k).count();
        assert_eq!(
            (count(NegativeKind::RowPermuted), count(NegativeKind::PositionSwapped), count(NegativeKind::UniformRandom)),
            (4, 3, 3)
        );
        for n in &neg {
            if n.kind != NegativeKind::UniformRandom {
                assert!(doubly_stochastic(&n.tensor));
                assert_ne!(n.tensor, pos[n.source]);
            }
        }
    }

    #[test]
    fn rejects_degenerate() {
        let t = SolutionTensor::<f64>::zeros(ShapeKind::Matrix, 1, 1, 1);
        assert!(generate_negatives(&[t], 0).is_err());
        assert!(generate_negatives::<f64>(&[], 0).is_err());
    }
}
