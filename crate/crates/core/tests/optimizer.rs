//! Optimizer sanity on a convex surrogate: one linear layer, squared loss,
//! gradients computed by hand and fed through the optimizer.

use neve::nn::{ArchSpec, Gradients, Model, OptimizerSpec};
use neve::tensor::Tensor;

fn setup() -> (Model, Vec<[f64; 3]>, Vec<[f64; 2]>) {
    let model = Model::build(&ArchSpec::mlp(&[3, 2]), 1).unwrap();
    let xs: Vec<[f64; 3]> = (0..16)
        .map(|i| {
            let t = i as f64;
            [(t * 0.7).sin(), (t * 1.3).cos(), t / 16.0 - 0.5]
        })
        .collect();
    // targets from a fixed linear map
    let ys = xs
        .iter()
        .map(|x| [x[0] - 2.0 * x[1] + 0.5, 0.3 * x[2] + x[0]])
        .collect();
    (model, xs, ys)
}

/// Mean squared error of the dense layer and its gradient.
fn loss_and_grad(model: &Model, xs: &[[f64; 3]], ys: &[[f64; 2]]) -> (f64, Gradients) {
    let p = model.params();
    let (w, b) = (p[0].data(), p[1].data());
    let mut gw = vec![0.0; 6];
    let mut gb = vec![0.0; 2];
    let mut loss = 0.0;
    let n = xs.len() as f64;
    for (x, y) in xs.iter().zip(ys) {
        for o in 0..2 {
            let pred = (0..3).map(|i| w[o * 3 + i] * x[i]).sum::<f64>() + b[o];
            let r = pred - y[o];
            loss += r * r / n;
            for i in 0..3 {
                gw[o * 3 + i] += 2.0 * r * x[i] / n;
            }
            gb[o] += 2.0 * r / n;
        }
    }
    let grads = Gradients(vec![
        Tensor::new(p[0].shape().to_vec(), gw).unwrap(),
        Tensor::new(p[1].shape().to_vec(), gb).unwrap(),
    ]);
    (loss, grads)
}

fn run(spec: OptimizerSpec) -> Vec<f64> {
    let (mut model, xs, ys) = setup();
    assert_eq!(model.params()[0].shape(), &[2, 3]);
    let mut opt = spec.build(&model);
    let mut losses = Vec::new();
    for _ in 0..200 {
        let (l, g) = loss_and_grad(&model, &xs, &ys);
        losses.push(l);
        opt.step(&mut model.params_mut(), &g).unwrap();
    }
    losses
}

#[test]
fn plain_sgd_decreases_quadratic_monotonically() {
    let losses = run(OptimizerSpec::sgd(0.05, 0.0, 0.0));
    for w in losses.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
    assert!(losses[199] < 0.05 * losses[0]);
}

#[test]
fn adam_reduces_quadratic() {
    let losses = run(OptimizerSpec::adam(0.01));
    assert!(losses[199] < 0.1 * losses[0]);
}
