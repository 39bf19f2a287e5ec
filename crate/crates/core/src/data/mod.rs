//! Datasets, splits, augmentation and auxiliary (probe) sets.

mod augment;
mod blobs;
mod cifar;
mod idx;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use augment::{augment, hflip, AugmentRecipe};
pub use blobs::{circle_centers, gen_blobs};
pub use cifar::load_cifar10;
pub use idx::{load_idx, load_mnist_dir, write_idx};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub name: String,
    /// Per-sample shape.
    pub input_shape: Vec<usize>,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N, input_shape...]`
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Vec<usize>, meta: DatasetMeta) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                samples.rows(),
                labels.len()
            )));
        }
        if samples.row_len() != meta.input_shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "samples {:?} do not match input shape {:?}",
                samples.shape(),
                meta.input_shape
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= meta.classes) {
            return Err(Error::Domain(format!(
                "label {bad} outside [0, {})",
                meta.classes
            )));
        }
        Ok(Dataset {
            samples,
            labels,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows `idx`, in that order. `idx` must be non-empty.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.meta.classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// First `n` samples of a seeded, class-stratified shuffle.
    pub fn stratified_head(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        let frac = n as f64 / self.len() as f64;
        let (_, head) = stratified_partition(&self.labels, self.meta.classes, frac, seed, n);
        Ok(self.subset(&head))
    }
}

/// Per-channel standardization fitted on a training set. Inputs of shape
/// `[C, H, W]` get one statistic per channel; anything else gets one per
/// feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
    /// Consecutive values sharing one statistic.
    run: usize,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let shape = &data.meta.input_shape;
        let (groups, run) = if shape.len() == 3 {
            (shape[0], shape[1] * shape[2])
        } else {
            (shape.iter().product(), 1)
        };
        let mut sum = vec![0.0; groups];
        let mut sq = vec![0.0; groups];
        for s in 0..data.len() {
            for (j, v) in data.samples.row(s).iter().enumerate() {
                sum[j / run] += v;
                sq[j / run] += v * v;
            }
        }
        let count = (data.len() * run) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / count - m * m).max(0.0);
                if var.sqrt() < 1e-12 {
                    1.0
                } else {
                    var.sqrt()
                }
            })
            .collect();
        Standardizer { mean, std, run }
    }

    pub fn apply(&self, data: &mut Dataset) {
        let w = data.samples.row_len();
        for row in data.samples.data_mut().chunks_exact_mut(w) {
            for (j, v) in row.iter_mut().enumerate() {
                let g = j / self.run;
                *v = (*v - self.mean[g]) / self.std[g];
            }
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxSource {
    #[serde(rename = "noise", alias = "gaussian_noise")]
    GaussianNoise,
    #[serde(rename = "heldout", alias = "heldout_validation")]
    HeldoutValidation,
    /// A frozen sample of the training set, for velocity/loss comparisons.
    Train,
}

impl AuxSource {
    pub fn label(&self) -> &'static str {
        match self {
            AuxSource::GaussianNoise => "noise",
            AuxSource::HeldoutValidation => "heldout",
            AuxSource::Train => "train",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "noise" | "gaussian_noise" => Some(AuxSource::GaussianNoise),
            "heldout" | "heldout_validation" | "validation" => Some(AuxSource::HeldoutValidation),
            "train" => Some(AuxSource::Train),
            _ => None,
        }
    }
}

/// Unlabeled samples re-fed every epoch to sample neuron outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxSet {
    samples: Tensor,
    source: AuxSource,
    seed: u64,
}

impl AuxSet {
    pub fn samples(&self) -> &Tensor {
        &self.samples
    }

    pub fn source(&self) -> AuxSource {
        self.source
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hash of the exact sample bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.samples.shape().hash(&mut h);
        for v in self.samples.data() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// `count` i.i.d. standard-normal samples of `shape`.
pub fn make_aux_noise(count: usize, shape: &[usize], seed: u64) -> Result<AuxSet> {
    if count == 0 {
        return Err(Error::config("aux.count", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per: usize = shape.iter().product();
    let data: Vec<f64> = (0..count * per)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut full = vec![count];
    full.extend_from_slice(shape);
    Ok(AuxSet {
        samples: Tensor::new(full, data)?,
        source: AuxSource::GaussianNoise,
        seed,
    })
}

/// `count` samples drawn (seeded, without replacement) from `data`; labels dropped.
pub fn make_aux_from(data: &Dataset, count: usize, source: AuxSource, seed: u64) -> Result<AuxSet> {
    if count == 0 {
        return Err(Error::config("aux.count", "must be >= 1"));
    }
    if data.is_empty() {
        return Err(Error::config(
            "aux.sources",
            format!("{} aux source needs a non-empty dataset", source.label()),
        ));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(count.min(data.len()));
    Ok(AuxSet {
        samples: data.samples.select_rows(&idx),
        source,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub validation_fraction: f64,
    pub seed: u64,
}

/// Per-class allocation of `total` items proportional to `counts`
/// (largest remainder), never exceeding a class count.
fn allocate(counts: &[usize], frac: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * frac).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total.saturating_sub(alloc.iter().sum());
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(counts.len() * 2) {
        if left == 0 {
            break;
        }
        if alloc[c] < counts[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Returns (rest, picked) index lists, each in ascending order.
fn stratified_partition(
    labels: &[usize],
    classes: usize,
    frac: f64,
    seed: u64,
    total: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let alloc = allocate(&counts, frac, total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    let mut rest = Vec::new();
    for (members, take) in by_class.iter_mut().zip(alloc) {
        members.shuffle(&mut rng);
        picked.extend_from_slice(&members[..take]);
        rest.extend_from_slice(&members[take..]);
    }
    picked.sort_unstable();
    rest.sort_unstable();
    (rest, picked)
}

/// Stratified, seeded train/validation partition. The validation part is
/// `None` when the fraction is 0.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Option<Dataset>)> {
    let f = spec.validation_fraction;
    if !(0.0..1.0).contains(&f) {
        return Err(Error::config(
            "dataset.validation_fraction",
            format!("{f} outside [0, 1)"),
        ));
    }
    let total = (data.len() as f64 * f).round() as usize;
    if total == 0 {
        return Ok((data.clone(), None));
    }
    let (rest, picked) = stratified_partition(&data.labels, data.meta.classes, f, spec.seed, total);
    let train = data.subset(&rest);
    let before = data.class_counts();
    let after = train.class_counts();
    if let Some(c) = (0..before.len()).find(|&c| before[c] > 0 && after[c] == 0) {
        return Err(Error::config(
            "dataset.validation_fraction",
            format!("fraction {f} leaves class {c} with no training samples"),
        ));
    }
    Ok((train, Some(data.subset(&picked))))
}
