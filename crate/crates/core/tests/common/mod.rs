#![allow(dead_code)]

use neve::nn::{ArchSpec, LayerSpec, Model};
use neve::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn mnist_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist5k")
}

pub struct GradReport {
    pub checked: usize,
    pub skipped: usize,
    pub worst_rel: f64,
    pub worst_at: String,
}

fn loss(model: &Model, batch: &Tensor, labels: &[usize]) -> f64 {
    model
        .forward(batch, false)
        .unwrap()
        .loss_and_hits(labels)
        .unwrap()
        .0
}

/// Central differences against backprop, element by element.
pub fn gradcheck(model: &mut Model, batch: &Tensor, labels: &[usize], h: f64) -> GradReport {
    let fwd = model.forward(batch, false).unwrap();
    let analytic = model.backward(&fwd, labels).unwrap().0;
    let mut rep = GradReport {
        checked: 0,
        skipped: 0,
        worst_rel: 0.0,
        worst_at: String::new(),
    };
    let count = model.params().len();
    for k in 0..count {
        let n = model.params()[k].len();
        for j in 0..n {
            let orig = model.params()[k].data()[j];
            model.params_mut()[k].data_mut()[j] = orig + h;
            let lp = loss(model, batch, labels);
            model.params_mut()[k].data_mut()[j] = orig - h;
            let lm = loss(model, batch, labels);
            model.params_mut()[k].data_mut()[j] = orig;
            let num = (lp - lm) / (2.0 * h);
            let a = analytic[k].data()[j];
            if a.abs() < 1e-8 && num.abs() < 1e-8 {
                rep.skipped += 1;
                continue;
            }
            let rel = (a - num).abs() / a.abs().max(num.abs());
            rep.checked += 1;
            if rel > rep.worst_rel {
                rep.worst_rel = rel;
                rep.worst_at = format!("param {k} elem {j}: analytic {a:e} numeric {num:e}");
            }
        }
    }
    rep
}

pub fn normal_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(shape, data).unwrap()
}

/// A random small architecture: even `i` gives an MLP, odd a conv net.
pub fn random_arch(i: u64) -> ArchSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
    let classes = rng.random_range(2..=4);
    if i.is_multiple_of(2) {
        let mut widths = vec![rng.random_range(2..=6)];
        for _ in 0..rng.random_range(1..=2) {
            widths.push(rng.random_range(2..=8));
        }
        widths.push(classes);
        ArchSpec::mlp(&widths)
    } else {
        let c = rng.random_range(1..=2);
        let hw = rng.random_range(4..=6);
        let kernel = rng.random_range(2..=3);
        let stride = rng.random_range(1..=2);
        let pad = rng.random_range(0..=1);
        let out_ch = rng.random_range(2..=3);
        let o = (hw + 2 * pad - kernel) / stride + 1;
        ArchSpec {
            input: vec![c, hw, hw],
            layers: vec![
                LayerSpec::Conv {
                    in_ch: c,
                    out_ch,
                    kernel,
                    stride,
                    pad,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: out_ch * o * o,
                    out: classes,
                },
                LayerSpec::SoftmaxCrossEntropy,
            ],
        }
    }
}

/// Builds model `i`, a batch of 8 and labels, and runs the check.
pub fn gradcheck_random(i: u64) -> (ArchSpec, usize, GradReport) {
    let arch = random_arch(i);
    let mut model = Model::build(&arch, 77 + i).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5000 + i);
    let mut shape = vec![8];
    shape.extend_from_slice(&arch.input);
    let batch = normal_tensor(shape, &mut rng);
    let k = model.classes();
    let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..k)).collect();
    let params = model.param_count();
    let rep = gradcheck(&mut model, &batch, &labels, 1e-5);
    (arch, params, rep)
}
