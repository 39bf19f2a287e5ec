//! Per-neuron change rates and velocities over a frozen auxiliary set.
//!
//! Each probed neuron's outputs over the auxiliary samples are flattened into
//! one vector and scaled to unit Euclidean norm. The change rate between two
//! consecutive epochs is the inner product of those unit vectors (a cosine
//! similarity), and the velocity is the smoothed distance
//!
//! ```text
//! v_t = | (1 - rho_t) - mu * v_{t-1} |,    v_0 = 0
//! ```
//!
//! The model velocity is the plain mean of all neuron velocities.

use crate::error::{Error, Result};
use crate::nn::ProbeCapture;

/// Raw vectors with a Euclidean norm below this are treated as dead.
pub const ZERO_NORM: f64 = 1e-12;

pub const DEFAULT_MU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSnapshot {
    pub epoch: usize,
    /// Unit-norm output vector per neuron (all zeros when flagged).
    pub vectors: Vec<Vec<f64>>,
    pub zero_flags: Vec<bool>,
}

impl ActivationSnapshot {
    /// Normalizes each raw vector independently.
    pub fn from_raw(epoch: usize, raw: &[Vec<f64>]) -> Self {
        let mut vectors = Vec::with_capacity(raw.len());
        let mut zero_flags = Vec::with_capacity(raw.len());
        for v in raw {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < ZERO_NORM {
                vectors.push(vec![0.0; v.len()]);
                zero_flags.push(true);
            } else {
                vectors.push(v.iter().map(|x| x / norm).collect());
                zero_flags.push(false);
            }
        }
        ActivationSnapshot {
            epoch,
            vectors,
            zero_flags,
        }
    }

    pub fn neurons(&self) -> usize {
        self.vectors.len()
    }
}

pub fn normalize_capture(raw: &ProbeCapture, epoch: usize) -> ActivationSnapshot {
    ActivationSnapshot::from_raw(epoch, &raw.neuron_outputs)
}

/// Per-neuron change rate between consecutive snapshots.
///
/// Dead in both epochs counts as unchanged (1); dead in exactly one counts as
/// no overlap (0).
pub fn change_rate(prev: &ActivationSnapshot, curr: &ActivationSnapshot) -> Result<Vec<f64>> {
    if prev.epoch + 1 != curr.epoch {
        return Err(Error::Structural(format!(
            "snapshots from epochs {} and {} are not consecutive",
            prev.epoch, curr.epoch
        )));
    }
    if prev.neurons() != curr.neurons() {
        return Err(Error::Structural(format!(
            "neuron registries differ: {} vs {} neurons",
            prev.neurons(),
            curr.neurons()
        )));
    }
    let mut out = Vec::with_capacity(curr.neurons());
    for i in 0..curr.neurons() {
        let (a, b) = (&prev.vectors[i], &curr.vectors[i]);
        if a.len() != b.len() {
            return Err(Error::Structural(format!(
                "neuron {i} has {} samples at epoch {} and {} at epoch {}",
                a.len(),
                prev.epoch,
                b.len(),
                curr.epoch
            )));
        }
        let rho = match (prev.zero_flags[i], curr.zero_flags[i]) {
            (true, true) => 1.0,
            (true, false) | (false, true) => 0.0,
            // bitwise-identical outputs: exactly unchanged, free of rounding
            (false, false) if a == b => 1.0,
            (false, false) => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                dot.clamp(-1.0, 1.0)
            }
        };
        out.push(rho);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityState {
    pub mu: f64,
    /// Latest change rate per neuron (1 before the first step).
    pub rho: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Model velocity after each step; excludes the implicit zero at t = 0.
    pub history: Vec<f64>,
}

impl VelocityState {
    pub fn new(neurons: usize, mu: f64) -> Self {
        VelocityState {
            mu,
            rho: vec![1.0; neurons],
            velocity: vec![0.0; neurons],
            history: Vec::new(),
        }
    }

    pub fn epoch(&self) -> usize {
        self.history.len()
    }

    /// Applies one epoch's change rates. Pure: `self` is left untouched.
    pub fn step(&self, rho: &[f64]) -> Result<VelocityState> {
        if rho.len() != self.velocity.len() {
            return Err(Error::Structural(format!(
                "{} change rates for {} neurons",
                rho.len(),
                self.velocity.len()
            )));
        }
        let velocity: Vec<f64> = rho
            .iter()
            .zip(&self.velocity)
            .map(|(r, v)| ((1.0 - r) - self.mu * v).abs())
            .collect();
        let mut next = VelocityState {
            mu: self.mu,
            rho: rho.to_vec(),
            velocity,
            history: self.history.clone(),
        };
        let mv = next.model_velocity()?;
        next.history.push(mv);
        Ok(next)
    }

    pub fn model_velocity(&self) -> Result<f64> {
        if self.velocity.is_empty() {
            return Err(Error::Structural("no probed neurons".into()));
        }
        Ok(self.velocity.iter().sum::<f64>() / self.velocity.len() as f64)
    }
}

pub fn velocity_step(state: &VelocityState, rho: &[f64]) -> Result<VelocityState> {
    state.step(rho)
}

pub fn model_velocity(state: &VelocityState) -> Result<f64> {
    state.model_velocity()
}

/// Keeps the previous snapshot and the velocity state for one auxiliary set.
#[derive(Debug, Clone)]
pub struct VelocityTracker {
    prev: ActivationSnapshot,
    state: VelocityState,
}

impl VelocityTracker {
    /// Starts from the snapshot taken before any training (epoch 0).
    pub fn new(initial: &ProbeCapture, mu: f64) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::Structural("no probed neurons".into()));
        }
        Ok(VelocityTracker {
            prev: normalize_capture(initial, 0),
            state: VelocityState::new(initial.len(), mu),
        })
    }

    /// Feeds the capture taken after the next epoch; returns the model velocity.
    pub fn observe(&mut self, capture: &ProbeCapture) -> Result<f64> {
        let curr = normalize_capture(capture, self.prev.epoch + 1);
        let rho = change_rate(&self.prev, &curr)?;
        self.state = self.state.step(&rho)?;
        self.prev = curr;
        self.state.model_velocity()
    }

    pub fn state(&self) -> &VelocityState {
        &self.state
    }

    pub fn snapshot(&self) -> &ActivationSnapshot {
        &self.prev
    }
}
