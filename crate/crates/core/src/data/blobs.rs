use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `k` points evenly spaced on a circle of the given radius.
pub fn circle_centers(k: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// `n` points from `k` isotropic Gaussians around `centers`, classes
/// interleaved (`label = i % k`), so class sizes differ by at most one.
pub fn gen_blobs(
    n: usize,
    k: usize,
    centers: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 || centers.len() != k {
        return Err(Error::config(
            "dataset.centers",
            format!("need exactly k = {k} >= 2 centers, got {}", centers.len()),
        ));
    }
    if n < k {
        return Err(Error::config("dataset.n", format!("n = {n} < k = {k}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::config("dataset.sigma", "must be > 0"));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(Error::config(
            "dataset.centers",
            "centers must share one positive dimension",
        ));
    }
    for i in 0..k {
        for j in i + 1..k {
            if centers[i] == centers[j] {
                return Err(Error::config(
                    "dataset.centers",
                    format!("centers {i} and {j} coincide"),
                ));
            }
        }
    }
    let noise = Normal::new(0.0, sigma).expect("sigma checked positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for x in &centers[c] {
            data.push(x + noise.sample(&mut rng));
        }
        labels.push(c);
    }
    Dataset::new(
        Tensor::new(vec![n, dim], data)?,
        labels,
        DatasetMeta {
            name: format!("blobs{k}"),
            input_shape: vec![dim],
            classes: k,
        },
    )
}
