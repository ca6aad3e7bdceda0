//! Deterministic splittable randomness and uniform index-set sampling.
//!
//! Every random decision in this crate is addressed by a [`RngStream`]: a
//! master seed plus a path of integer labels. Two consumers holding the same
//! `(seed, path)` draw identical values no matter when or where they run,
//! which is what lets the flat and nested epoch implementations consume
//! byte-identical randomness and lets seeds run concurrently without shared
//! state.

use std::collections::HashMap;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

const PATH_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer; full-period bijective mixer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A splittable random stream identified by `(master_seed, path)`.
///
/// `child(label)` derives a new independent stream without consuming any
/// randomness from the parent, so the tree of streams used by a run is a pure
/// function of the master seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<u64>,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        RngStream { master_seed, path: Vec::new() }
    }

    /// Derives the child stream `(master_seed, path ++ [label])`.
    pub fn child(&self, label: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(label);
        RngStream { master_seed: self.master_seed, path }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Folds the path into a single 64-bit key. Label order matters.
    fn key(&self) -> u64 {
        let mut k = mix(self.master_seed ^ PATH_GAMMA);
        for &label in &self.path {
            k = mix(k ^ mix(label.wrapping_add(PATH_GAMMA)));
        }
        k
    }

    /// Instantiates the generator for this stream. Repeated calls return
    /// generators that produce the same sequence.
    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.key())
    }
}

/// A set of distinct component indices in `0..n`, the result of a
/// without-replacement draw. Construction validates distinctness so the hot
/// gradient loops never re-check it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Validates that `indices` are pairwise distinct and below `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::InvalidIndexSet(format!("index {i} out of range for n={n}")));
            }
            if seen[i] {
                return Err(Error::InvalidIndexSet(format!("duplicate index {i}")));
            }
            seen[i] = true;
        }
        Ok(IndexSet(indices))
    }

    /// The full set `0..n` in natural order.
    pub fn full(n: usize) -> Self {
        IndexSet((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }
}

/// Draws a uniformly random subset of `m` distinct indices from `0..n`.
///
/// Partial Fisher-Yates over a sparse displacement map: O(m) time and space
/// regardless of `n`. The draw is a pure function of `stream`.
pub fn sample_without_replacement(stream: &RngStream, n: usize, m: usize) -> Result<IndexSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("cannot sample from an empty range".into()));
    }
    if m > n {
        return Err(Error::InvalidParameter(format!("subset size {m} exceeds population {n}")));
    }
    if m == n {
        // The full set; order is irrelevant for a mean, so skip the shuffle
        // and keep natural order (this also makes full-batch sums identical
        // to an unsampled full-gradient pass).
        return Ok(IndexSet::full(n));
    }
    let mut rng = stream.rng();
    let mut displaced: HashMap<usize, usize> = HashMap::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let j = rng.random_range(k..n);
        let v_j = *displaced.get(&j).unwrap_or(&j);
        let v_k = *displaced.get(&k).unwrap_or(&k);
        out.push(v_j);
        displaced.insert(j, v_k);
    }
    Ok(IndexSet(out))
}

/// Exact enumeration oracle: the mean over all `C(N, m)` subsets `J` of
/// `‖(1/m)·Σ_{j∈J} a_j‖²`. Intractable beyond small `N`; guarded at `N ≤ 20`.
pub fn subset_mean_sqnorm_exact(vectors: &[Array1<f64>], m: usize) -> Result<f64> {
    use itertools::Itertools;

    let n = vectors.len();
    if n == 0 || m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "subset enumeration needs 0 < m <= N, got m={m}, N={n}"
        )));
    }
    if n > 20 {
        return Err(Error::InvalidParameter(format!("enumeration over N={n} > 20 subsets refused")));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: 0 });
    }

    let mut total = 0.0;
    let mut count = 0u64;
    for subset in (0..n).combinations(m) {
        let mut sum = Array1::<f64>::zeros(dim);
        for j in subset {
            sum += &vectors[j];
        }
        sum /= m as f64;
        total += sum.dot(&sum);
        count += 1;
    }
    Ok(total / count as f64)
}
