use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::ConvGeom;
use super::optim::Optimizer;
use super::{ArchSpec, LayerSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Mat, Tensor};

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Dense {
        inputs: usize,
        out: usize,
        /// `[out, inputs]`
        weight: Tensor,
        bias: Tensor,
    },
    Conv {
        geom: ConvGeom,
        out_ch: usize,
        /// `[out_ch, in_ch * kernel * kernel]`
        weight: Tensor,
        bias: Tensor,
    },
    Relu,
    Flatten,
    Head,
}

/// How a probed layer's output maps onto neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// One neuron per output unit.
    Unit,
    /// One neuron per channel; the `positions` spatial outputs of each sample
    /// are laid out along the neuron's vector.
    Channel { positions: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbePoint {
    pub layer: usize,
    pub neurons: usize,
    pub kind: ProbeKind,
}

impl ProbePoint {
    fn values_per_sample(&self) -> usize {
        match self.kind {
            ProbeKind::Unit => 1,
            ProbeKind::Channel { positions } => positions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

/// Post-activation outputs of every probed neuron over a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeCapture {
    pub neurons: Vec<NeuronId>,
    pub neuron_outputs: Vec<Vec<f64>>,
}

impl ProbeCapture {
    fn empty(probes: &[ProbePoint]) -> Self {
        let neurons: Vec<NeuronId> = probes
            .iter()
            .flat_map(|p| {
                (0..p.neurons).map(move |index| NeuronId {
                    layer: p.layer,
                    index,
                })
            })
            .collect();
        let neuron_outputs = vec![Vec::new(); neurons.len()];
        ProbeCapture {
            neurons,
            neuron_outputs,
        }
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }
}

/// Result of a forward pass. Holds the per-layer inputs needed by backprop.
#[derive(Debug, Clone)]
pub struct Forward {
    acts: Vec<Tensor>,
    /// Softmax probabilities, `[batch, classes]`.
    pub probs: Tensor,
    pub probes: Option<ProbeCapture>,
}

impl Forward {
    /// Pre-softmax outputs, `[batch, classes]`.
    pub fn logits(&self) -> &Tensor {
        self.acts.last().expect("head input is always recorded")
    }

    /// Mean cross-entropy and number of argmax hits against `labels`.
    pub fn loss_and_hits(&self, labels: &[usize]) -> Result<(f64, usize)> {
        let logits = self.logits();
        let classes = logits.row_len();
        check_labels(labels, logits.rows(), classes)?;
        let mut total = 0.0;
        let mut hits = 0;
        for (n, &y) in labels.iter().enumerate() {
            let z = logits.row(n);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - z[y];
            if argmax(z) == y {
                hits += 1;
            }
        }
        let loss = total / labels.len() as f64;
        if !loss.is_finite() {
            return Err(Error::numeric("loss", format!("cross-entropy is {loss}")));
        }
        Ok((loss, hits))
    }
}

/// Gradients aligned with [`Model::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ArchSpec,
    layers: Vec<Layer>,
    /// Per-sample output shape of each layer.
    shapes: Vec<Vec<usize>>,
    probes: Vec<ProbePoint>,
    classes: usize,
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Domain(format!("label {bad} outside [0, {classes})")));
    }
    Ok(())
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape product matches generated length")
}

impl Model {
    /// Validates `spec`, initializes parameters from `seed`, and registers a
    /// probe on every ReLU output and on the head.
    pub fn build(spec: &ArchSpec, seed: u64) -> Result<Self> {
        if spec.input.is_empty() || spec.input.contains(&0) {
            return Err(Error::config(
                "model.input",
                format!(
                    "input shape {:?} must be non-empty and positive",
                    spec.input
                ),
            ));
        }
        match spec.layers.last() {
            Some(LayerSpec::SoftmaxCrossEntropy) => {}
            _ => {
                return Err(Error::config(
                    "model.layers",
                    "architecture must end in a softmax_cross_entropy head",
                ))
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(spec.layers.len());
        let mut probes = Vec::new();
        let mut cur = spec.input.clone();
        let last = spec.layers.len() - 1;

        for (i, ls) in spec.layers.iter().enumerate() {
            let prev_name = if i == 0 {
                format!("input{:?}", spec.input)
            } else {
                format!("layer {} ({})", i - 1, spec.layers[i - 1])
            };
            let mismatch = |what: String| {
                Error::config(
                    "model.layers",
                    format!("layer {i} ({ls}) is incompatible with {prev_name}: {what}"),
                )
            };
            let (layer, out_shape) = match *ls {
                LayerSpec::Dense { inputs, out } => {
                    if cur.len() != 1 || cur[0] != inputs {
                        return Err(mismatch(format!(
                            "expects flat input of {inputs}, got shape {cur:?}"
                        )));
                    }
                    if out == 0 {
                        return Err(mismatch("zero output width".into()));
                    }
                    let bound = 1.0 / (inputs as f64).sqrt();
                    let weight = uniform_tensor(&mut rng, vec![out, inputs], bound);
                    let bias = uniform_tensor(&mut rng, vec![out], bound);
                    (
                        Layer::Dense {
                            inputs,
                            out,
                            weight,
                            bias,
                        },
                        vec![out],
                    )
                }
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    pad,
                } => {
                    if cur.len() != 3 || cur[0] != in_ch {
                        return Err(mismatch(format!(
                            "expects [{in_ch}, H, W] input, got shape {cur:?}"
                        )));
                    }
                    if out_ch == 0 {
                        return Err(mismatch("zero output channels".into()));
                    }
                    let geom = ConvGeom::new(in_ch, cur[1], cur[2], kernel, stride, pad)
                        .ok_or_else(|| mismatch("kernel does not fit padded input".into()))?;
                    let bound = 1.0 / (geom.patch_len() as f64).sqrt();
                    let weight = uniform_tensor(&mut rng, vec![out_ch, geom.patch_len()], bound);
                    let bias = uniform_tensor(&mut rng, vec![out_ch], bound);
                    let shape = vec![out_ch, geom.out_h, geom.out_w];
                    (
                        Layer::Conv {
                            geom,
                            out_ch,
                            weight,
                            bias,
                        },
                        shape,
                    )
                }
                LayerSpec::Relu => {
                    let kind = match cur.len() {
                        1 => ProbeKind::Unit,
                        3 => ProbeKind::Channel {
                            positions: cur[1] * cur[2],
                        },
                        _ => return Err(mismatch(format!("cannot probe shape {cur:?}"))),
                    };
                    probes.push(ProbePoint {
                        layer: i,
                        neurons: cur[0],
                        kind,
                    });
                    (Layer::Relu, cur.clone())
                }
                LayerSpec::Flatten => (Layer::Flatten, vec![cur.iter().product()]),
                LayerSpec::SoftmaxCrossEntropy => {
                    if i != last {
                        return Err(Error::config(
                            "model.layers",
                            format!("layer {i} (softmax_cross_entropy) must be the last layer"),
                        ));
                    }
                    if cur.len() != 1 || cur[0] < 2 {
                        return Err(mismatch(format!(
                            "head needs a flat input of at least 2 classes, got {cur:?}"
                        )));
                    }
                    probes.push(ProbePoint {
                        layer: i,
                        neurons: cur[0],
                        kind: ProbeKind::Unit,
                    });
                    (Layer::Head, cur.clone())
                }
            };
            layers.push(layer);
            shapes.push(out_shape.clone());
            cur = out_shape;
        }

        Ok(Model {
            spec: spec.clone(),
            layers,
            shapes,
            classes: cur[0],
            probes,
        })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_len(&self) -> usize {
        self.spec.input_len()
    }

    pub fn probe_points(&self) -> &[ProbePoint] {
        &self.probes
    }

    pub fn neuron_count(&self) -> usize {
        self.probes.iter().map(|p| p.neurons).sum()
    }

    /// Probed neurons in capture order.
    pub fn probe_neurons(&self) -> Vec<NeuronId> {
        ProbeCapture::empty(&self.probes).neurons
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Dense { weight, bias, .. } | Layer::Conv { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense { weight, bias, .. } | Layer::Conv { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Forward pass over `batch` (`[N, ...]` with the per-sample element count
    /// of the input shape). With `capture`, probe outputs are collected.
    pub fn forward(&self, batch: &Tensor, capture: bool) -> Result<Forward> {
        if batch.shape().len() < 2 || batch.row_len() != self.input_len() {
            return Err(Error::Shape(format!(
                "batch shape {:?} does not match model input {:?}",
                batch.shape(),
                self.spec.input
            )));
        }
        let n = batch.rows();
        let mut shape = vec![n];
        shape.extend_from_slice(&self.spec.input);
        let mut x = batch.clone().reshape(shape)?;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut probes = capture.then(|| ProbeCapture::empty(&self.probes));
        let mut probs = None;
        let mut probe_cursor = 0;

        for (i, layer) in self.layers.iter().enumerate() {
            let mut out_shape = vec![n];
            out_shape.extend_from_slice(&self.shapes[i]);
            let y = match layer {
                Layer::Dense {
                    inputs,
                    out,
                    weight,
                    bias,
                } => {
                    let mut y = vec![0.0; n * out];
                    gemm(
                        Mat::new(x.data(), n, *inputs),
                        Mat::new(weight.data(), *out, *inputs).t(),
                        0.0,
                        &mut y,
                    );
                    for row in y.chunks_exact_mut(*out) {
                        for (v, b) in row.iter_mut().zip(bias.data()) {
                            *v += b;
                        }
                    }
                    Tensor::new(out_shape, y)?
                }
                Layer::Conv {
                    geom,
                    out_ch,
                    weight,
                    bias,
                } => {
                    let p = geom.positions();
                    let mut cols = vec![0.0; geom.patch_len() * p];
                    let mut y = vec![0.0; n * out_ch * p];
                    for (s, ys) in y.chunks_exact_mut(out_ch * p).enumerate() {
                        geom.im2col(x.row(s), &mut cols);
                        gemm(
                            Mat::new(weight.data(), *out_ch, geom.patch_len()),
                            Mat::new(&cols, geom.patch_len(), p),
                            0.0,
                            ys,
                        );
                        for (c, chan) in ys.chunks_exact_mut(p).enumerate() {
                            let b = bias.data()[c];
                            chan.iter_mut().for_each(|v| *v += b);
                        }
                    }
                    Tensor::new(out_shape, y)?
                }
                Layer::Relu => {
                    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
                    Tensor::new(out_shape, data)?
                }
                Layer::Flatten => x.clone().reshape(out_shape)?,
                Layer::Head => {
                    let k = self.classes;
                    let mut p = x.data().to_vec();
                    for row in p.chunks_exact_mut(k) {
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut sum = 0.0;
                        for v in row.iter_mut() {
                            *v = (*v - max).exp();
                            sum += *v;
                        }
                        row.iter_mut().for_each(|v| *v /= sum);
                    }
                    Tensor::new(out_shape, p)?
                }
            };
            if let Some(bad) = y.first_non_finite() {
                return Err(Error::numeric(
                    format!("layer {i} ({})", self.spec.layers[i]),
                    format!(
                        "non-finite activation {} at flat index {bad}",
                        y.data()[bad]
                    ),
                ));
            }
            if let Some(cap) = probes.as_mut() {
                if let Some(pp) = self.probes.iter().find(|p| p.layer == i) {
                    let per = pp.values_per_sample();
                    for s in 0..n {
                        let row = y.row(s);
                        for j in 0..pp.neurons {
                            cap.neuron_outputs[probe_cursor + j]
                                .extend_from_slice(&row[j * per..(j + 1) * per]);
                        }
                    }
                    probe_cursor += pp.neurons;
                }
            }
            acts.push(x);
            if matches!(layer, Layer::Head) {
                probs = Some(y);
                break;
            }
            x = y;
        }

        Ok(Forward {
            acts,
            probs: probs.expect("architecture ends in a head"),
            probes,
        })
    }

    /// Probe capture over `samples`, forwarded in chunks of `chunk`.
    pub fn capture(&self, samples: &Tensor, chunk: usize) -> Result<ProbeCapture> {
        let n = samples.rows();
        let mut out = ProbeCapture::empty(&self.probes);
        let chunk = chunk.max(1);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let f = self.forward(&samples.select_rows(&idx), true)?;
            let cap = f.probes.expect("capture requested");
            for (dst, src) in out.neuron_outputs.iter_mut().zip(cap.neuron_outputs) {
                dst.extend(src);
            }
            start = end;
        }
        Ok(out)
    }

    /// Mean cross-entropy gradients for a batch.
    pub fn backward(&self, fwd: &Forward, labels: &[usize]) -> Result<Gradients> {
        let n = fwd.probs.rows();
        let k = self.classes;
        check_labels(labels, n, k)?;
        let mut grad = fwd.probs.data().to_vec();
        for (row, &y) in grad.chunks_exact_mut(k).zip(labels) {
            row[y] -= 1.0;
        }
        let inv = 1.0 / n as f64;
        grad.iter_mut().for_each(|g| *g *= inv);

        let mut grads: Vec<Tensor> = Vec::new();
        // Walk back from the layer feeding the head.
        for i in (0..self.layers.len() - 1).rev() {
            let x = &fwd.acts[i];
            match &self.layers[i] {
                Layer::Dense {
                    inputs,
                    out,
                    weight,
                    ..
                } => {
                    let mut dw = vec![0.0; out * inputs];
                    gemm(
                        Mat::new(&grad, n, *out).t(),
                        Mat::new(x.data(), n, *inputs),
                        0.0,
                        &mut dw,
                    );
                    let mut db = vec![0.0; *out];
                    for row in grad.chunks_exact(*out) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    let mut dx = vec![0.0; n * inputs];
                    if i > 0 {
                        gemm(
                            Mat::new(&grad, n, *out),
                            Mat::new(weight.data(), *out, *inputs),
                            0.0,
                            &mut dx,
                        );
                    }
                    grads.push(Tensor::new(vec![*out], db)?);
                    grads.push(Tensor::new(vec![*out, *inputs], dw)?);
                    grad = dx;
                }
                Layer::Conv {
                    geom,
                    out_ch,
                    weight,
                    ..
                } => {
                    let p = geom.positions();
                    let kk = geom.patch_len();
                    let mut dw = vec![0.0; out_ch * kk];
                    let mut db = vec![0.0; *out_ch];
                    let mut dx = vec![0.0; n * geom.in_len()];
                    let mut cols = vec![0.0; kk * p];
                    let mut dcols = vec![0.0; kk * p];
                    for s in 0..n {
                        let go = &grad[s * out_ch * p..(s + 1) * out_ch * p];
                        geom.im2col(x.row(s), &mut cols);
                        gemm(
                            Mat::new(go, *out_ch, p),
                            Mat::new(&cols, kk, p).t(),
                            1.0,
                            &mut dw,
                        );
                        for (c, chan) in go.chunks_exact(p).enumerate() {
                            db[c] += chan.iter().sum::<f64>();
                        }
                        if i > 0 {
                            gemm(
                                Mat::new(weight.data(), *out_ch, kk).t(),
                                Mat::new(go, *out_ch, p),
                                0.0,
                                &mut dcols,
                            );
                            geom.col2im(
                                &dcols,
                                &mut dx[s * geom.in_len()..(s + 1) * geom.in_len()],
                            );
                        }
                    }
                    grads.push(Tensor::new(vec![*out_ch], db)?);
                    grads.push(Tensor::new(vec![*out_ch, kk], dw)?);
                    grad = dx;
                }
                Layer::Relu => {
                    for (g, &v) in grad.iter_mut().zip(x.data()) {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                Layer::Flatten => {}
                Layer::Head => unreachable!("head is only the last layer"),
            }
        }
        grads.reverse();
        // pushed as (bias, weight) walking backwards; reversed gives (weight, bias)
        Ok(Gradients(grads))
    }

    /// One optimizer step on a batch. Returns the pre-step mean loss.
    pub fn train_step(
        &mut self,
        batch: &Tensor,
        labels: &[usize],
        opt: &mut Optimizer,
    ) -> Result<StepStats> {
        let fwd = self.forward(batch, false)?;
        let (loss, hits) = fwd.loss_and_hits(labels)?;
        let grads = self.backward(&fwd, labels)?;
        opt.step(&mut self.params_mut(), &grads)?;
        Ok(StepStats { loss, hits })
    }

    /// Mean loss and accuracy over `samples`, in chunks. No mutation.
    pub fn evaluate_samples(&self, samples: &Tensor, labels: &[usize]) -> Result<(f64, f64)> {
        let n = samples.rows();
        if n == 0 || labels.len() != n {
            return Err(Error::Shape(format!(
                "evaluation needs matching non-empty samples/labels, got {n}/{}",
                labels.len()
            )));
        }
        const CHUNK: usize = 512;
        let mut loss = 0.0;
        let mut hits = 0;
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let f = self.forward(&samples.select_rows(&idx), false)?;
            let (l, h) = f.loss_and_hits(&labels[start..end])?;
            loss += l * (end - start) as f64;
            hits += h;
            start = end;
        }
        Ok((loss / n as f64, hits as f64 / n as f64))
    }
}

/// One SGD/Adam step on a batch; returns the mean training loss.
pub fn backward_and_step(
    model: &mut Model,
    batch: &Tensor,
    labels: &[usize],
    opt: &mut Optimizer,
) -> Result<f64> {
    model.train_step(batch, labels, opt).map(|s| s.loss)
}

/// Mean loss and accuracy of `model` on `dataset`.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<(f64, f64)> {
    model.evaluate_samples(&dataset.samples, &dataset.labels)
}
