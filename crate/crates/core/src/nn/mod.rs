//! A small deterministic feedforward engine: dense and convolutional layers,
//! ReLU, a softmax cross-entropy head, hand-written backpropagation, and
//! SGD/Adam. Every ReLU output and the head's softmax output are probed.

mod conv;
mod model;
mod optim;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use model::{
    backward_and_step, evaluate, Forward, Gradients, Model, NeuronId, ProbeCapture, ProbeKind,
    ProbePoint, StepStats,
};
pub use optim::{Optimizer, OptimizerKind, OptimizerSpec};

/// One layer descriptor in an architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        #[serde(rename = "in")]
        inputs: usize,
        out: usize,
    },
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    Relu,
    Flatten,
    /// Softmax followed by cross-entropy against integer labels.
    SoftmaxCrossEntropy,
}

fn one() -> usize {
    1
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { inputs, out } => write!(f, "dense{{{inputs}->{out}}}"),
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => write!(f, "conv{{{in_ch}->{out_ch}, k{kernel}, s{stride}, p{pad}}}"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::SoftmaxCrossEntropy => f.write_str("softmax_cross_entropy"),
        }
    }
}

/// Input shape (per sample) plus the ordered layer sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    /// `widths = [in, h1, ..., classes]`: dense layers with ReLU between them
    /// and a softmax cross-entropy head.
    pub fn mlp(widths: &[usize]) -> Self {
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            layers.push(LayerSpec::Dense {
                inputs: pair[0],
                out: pair[1],
            });
            if i + 2 < widths.len() {
                layers.push(LayerSpec::Relu);
            }
        }
        layers.push(LayerSpec::SoftmaxCrossEntropy);
        ArchSpec {
            input: vec![widths.first().copied().unwrap_or(0)],
            layers,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn classes(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            LayerSpec::Dense { out, .. } => Some(*out),
            _ => None,
        })
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input{:?}", self.input)?;
        for l in &self.layers {
            write!(f, " > {l}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_helper_places_relu_between_dense_layers() {
        let a = ArchSpec::mlp(&[2, 8, 2]);
        assert_eq!(
            a.layers,
            vec![
                LayerSpec::Dense { inputs: 2, out: 8 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 8, out: 2 },
                LayerSpec::SoftmaxCrossEntropy,
            ]
        );
        assert_eq!(a.classes(), Some(2));
    }

    #[test]
    fn layer_specs_deserialize_from_toml() {
        #[derive(Deserialize)]
        struct Wrap {
            model: ArchSpec,
        }
        let w: Wrap = toml::from_str(
            r#"
            [model]
            input = [1, 8, 8]
            layers = [
                { kind = "conv", in_ch = 1, out_ch = 4, kernel = 3 },
                { kind = "relu" },
                { kind = "flatten" },
                { kind = "dense", in = 144, out = 10 },
                { kind = "softmax_cross_entropy" },
            ]
            "#,
        )
        .unwrap();
        assert_eq!(
            w.model.layers[0],
            LayerSpec::Conv {
                in_ch: 1,
                out_ch: 4,
                kernel: 3,
                stride: 1,
                pad: 0
            }
        );
        assert_eq!(w.model.layers.len(), 5);
    }
}
