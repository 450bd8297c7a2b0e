//! Gaussian-blob classification data.
//!
//! Class `k` is centered at `radius * e_k` in a 16-dimensional space, so
//! centers of different classes are `radius * sqrt(2)` apart. An optional
//! rare group draws its samples around centers on a disjoint set of axes;
//! the network has to learn separate features for it from far fewer
//! examples.

use lineage_core::behavior::{Dataset, InstanceRecord};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const COMMON_GROUP: &str = "common";
pub const RARE_GROUP: &str = "rare";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareGroup {
    /// Fraction of every split drawn from the rare group.
    pub fraction: f64,
    pub radius: f64,
    /// First axis of the rare centers; class `k` uses axis `offset + k`.
    pub axis_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub dim: usize,
    pub classes: usize,
    pub sigma: f64,
    pub radius: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub rare: Option<RareGroup>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dim: 16,
            classes: 4,
            sigma: 0.5,
            // sqrt(2) * 1.5 ≈ 2.12 > 4 sigma
            radius: 1.5,
            train_size: 800,
            test_size: 400,
            rare: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub groups: Vec<Option<String>>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Split {
        Split {
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub seed: u64,
    pub config: DataConfig,
    pub train: Split,
    pub test: Split,
}

pub fn class_name(k: usize) -> String {
    format!("class_{k}")
}

pub fn test_id(i: usize) -> String {
    format!("t{i:04}")
}

impl SynthDataset {
    pub fn generate(config: DataConfig, seed: u64) -> SynthDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = draw(&config, config.train_size, &mut rng);
        let test = draw(&config, config.test_size, &mut rng);
        SynthDataset {
            seed,
            config,
            train,
            test,
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.config.classes).map(class_name).collect()
    }

    /// The test split as `dataset.json`.
    pub fn to_records(&self) -> Dataset {
        Dataset {
            instances: (0..self.test.len())
                .map(|i| InstanceRecord {
                    id: test_id(i),
                    truth: class_name(self.test.y[i]),
                    group: self.test.groups[i].clone(),
                    payload_ref: None,
                })
                .collect(),
            classes: self.class_names(),
        }
    }

    /// Seeded sample of up to `n` test indices, ascending.
    pub fn sample_test(&self, n: usize, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.test.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        idx.sort_unstable();
        idx
    }

    /// Seeded sample of up to `n` train indices, ascending.
    pub fn sample_train(&self, n: usize, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.train.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        idx.sort_unstable();
        idx
    }
}

fn draw(config: &DataConfig, n: usize, rng: &mut ChaCha8Rng) -> Split {
    let noise = Normal::new(0.0, config.sigma).expect("sigma is positive");
    let rare_count = config.rare.as_ref().map_or(0, |r| (r.fraction * n as f64).round() as usize);
    let mut x = Array2::zeros((n, config.dim));
    let mut y = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let (mut rare_seen, mut common_seen) = (0, 0);
    for i in 0..n {
        // Rare samples are spread evenly through the split; classes cycle
        // within each group so both stay balanced.
        let rare = rare_count > 0 && (i * rare_count) / n != ((i + 1) * rare_count) / n;
        let class = if rare {
            rare_seen += 1;
            (rare_seen - 1) % config.classes
        } else {
            common_seen += 1;
            (common_seen - 1) % config.classes
        };
        let (axis, radius, group) = match (&config.rare, rare) {
            (Some(r), true) => (r.axis_offset + class, r.radius, Some(RARE_GROUP.to_string())),
            (Some(_), false) => (class, config.radius, Some(COMMON_GROUP.to_string())),
            (None, _) => (class, config.radius, None),
        };
        for d in 0..config.dim {
            x[[i, d]] = noise.sample(rng);
        }
        x[[i, axis]] += radius;
        y.push(class);
        groups.push(group);
    }
    Split { x, y, groups }
}
