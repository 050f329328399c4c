//! Synthetic multi-arm spiral classification data.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;

/// How many full revolutions each spiral arm makes.
pub const SPIRAL_TURNS: f64 = 0.75;
/// Innermost radius of an arm; keeps arms apart near the origin.
pub const SPIRAL_INNER_RADIUS: f64 = 0.3;
/// Radius at the end of each arm.
pub const SPIRAL_OUTER_RADIUS: f64 = 2.0;
/// Default lifted feature dimension.
pub const DEFAULT_FEATURE_DIM: usize = 8;

/// A labelled dataset with a fixed train/valid split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub seed: u64,
}

/// A minibatch gathered from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset, checking the split invariants.
    pub fn new(
        inputs: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        train: Vec<usize>,
        valid: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        let n = inputs.rows();
        if labels.len() != n {
            return Err(Error::InvalidConfig(format!(
                "{} labels for {n} inputs",
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::InvalidConfig("label out of range".into()));
        }
        let mut seen = alloc::vec![0u8; n];
        for &i in train.iter().chain(&valid) {
            if i >= n || seen[i] != 0 {
                return Err(Error::InvalidConfig(
                    "train/valid splits must be disjoint and in range".into(),
                ));
            }
            seen[i] = 1;
        }
        if seen.contains(&0) {
            return Err(Error::InvalidConfig(
                "train/valid splits must cover every row".into(),
            ));
        }
        for c in 0..num_classes {
            let in_train = train.iter().any(|&i| labels[i] == c);
            let in_valid = valid.iter().any(|&i| labels[i] == c);
            if !in_train || !in_valid {
                return Err(Error::InvalidConfig(format!(
                    "class {c} missing from a split"
                )));
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
            train,
            valid,
            seed,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            x: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// The whole validation split as one batch.
    pub fn valid_batch(&self) -> Batch {
        self.batch(&self.valid)
    }

    /// Rate of the most frequent class in the validation split.
    pub fn valid_majority_rate(&self) -> f64 {
        let mut counts = alloc::vec![0usize; self.num_classes];
        for &i in &self.valid {
            counts[self.labels[i]] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / self.valid.len() as f64
    }
}

/// Parameters of the spiral generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralConfig {
    pub seed: u64,
    pub n_per_class: usize,
    pub classes: usize,
    pub noise_std: f64,
    pub feature_dim: usize,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        SpiralConfig {
            seed: 7,
            n_per_class: 100,
            classes: 3,
            noise_std: 0.15,
            feature_dim: DEFAULT_FEATURE_DIM,
        }
    }
}

/// Noise-free point `i` of arm `class`.
pub fn spiral_point(class: usize, classes: usize, i: usize, n_per_class: usize) -> (f64, f64) {
    let t = i as f64 / n_per_class as f64;
    let r = SPIRAL_INNER_RADIUS + (SPIRAL_OUTER_RADIUS - SPIRAL_INNER_RADIUS) * t;
    let tau = 2.0 * core::f64::consts::PI;
    let angle = tau * SPIRAL_TURNS * t + tau * class as f64 / classes as f64;
    (r * math::cos(angle), r * math::sin(angle))
}

impl SpiralConfig {
    /// Generates the dataset. Pure function of the config.
    pub fn build(&self) -> Result<Dataset> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig(
                "spiral needs at least 2 classes".into(),
            ));
        }
        if self.n_per_class < 20 {
            return Err(Error::InvalidConfig(
                "spiral needs n_per_class >= 20".into(),
            ));
        }
        if self.feature_dim < 2 || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(
                "spiral needs feature_dim >= 2 and noise_std >= 0".into(),
            ));
        }
        let d = self.feature_dim;
        let embed = self.embedding();
        let mut noise_rng = rng_from_seed(derive_seed(self.seed, "spiral:noise"));
        let mut split_rng = rng_from_seed(derive_seed(self.seed, "spiral:split"));

        let n = self.classes * self.n_per_class;
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for c in 0..self.classes {
            for i in 0..self.n_per_class {
                let (mut px, mut py) = spiral_point(c, self.classes, i, self.n_per_class);
                let nx: f64 = StandardNormal.sample(&mut noise_rng);
                let ny: f64 = StandardNormal.sample(&mut noise_rng);
                px += self.noise_std * nx;
                py += self.noise_std * ny;
                for k in 0..d {
                    data.push(px * embed[k] + py * embed[d + k]);
                }
                labels.push(c);
            }
            let mut idx: Vec<usize> = (c * self.n_per_class..(c + 1) * self.n_per_class).collect();
            idx.shuffle(&mut split_rng);
            let n_train = self.n_per_class * 4 / 5;
            train.extend_from_slice(&idx[..n_train]);
            valid.extend_from_slice(&idx[n_train..]);
        }
        train.sort_unstable();
        valid.sort_unstable();
        Dataset::new(
            Tensor::matrix(n, d, data)?,
            labels,
            self.classes,
            train,
            valid,
            self.seed,
        )
    }

    /// The fixed `2 × feature_dim` lifting matrix (row-major).
    pub fn embedding(&self) -> Vec<f64> {
        let mut embed_rng = rng_from_seed(derive_seed(self.seed, "spiral:embed"));
        let scale = 1.0 / math::sqrt(2.0);
        (0..2 * self.feature_dim)
            .map(|_| scale * embed_rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Spiral dataset lifted to the default 8 features.
pub fn make_spiral_dataset(
    seed: u64,
    n_per_class: usize,
    classes: usize,
    noise_std: f64,
) -> Result<Dataset> {
    SpiralConfig {
        seed,
        n_per_class,
        classes,
        noise_std,
        feature_dim: DEFAULT_FEATURE_DIM,
    }
    .build()
}

/// Shuffled train indices chunked into minibatches; the last short chunk is kept.
pub fn epoch_batches(
    train: &[usize],
    batch_size: usize,
    rng: &mut crate::rng::Rng,
) -> Vec<Vec<usize>> {
    let mut idx = train.to_vec();
    idx.shuffle(rng);
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// `m` minibatches drawn without replacement within each batch.
pub fn sample_batches(
    pool: &[usize],
    m: usize,
    batch_size: usize,
    rng: &mut crate::rng::Rng,
) -> Vec<Vec<usize>> {
    (0..m)
        .map(|_| {
            let mut b: Vec<usize> = pool
                .choose_multiple(rng, batch_size.min(pool.len()))
                .copied()
                .collect();
            b.sort_unstable();
            b
        })
        .collect()
}

/// Uniform integer in `0..n`.
pub fn uniform_index(rng: &mut crate::rng::Rng, n: usize) -> usize {
    rng.random_range(0..n)
}
