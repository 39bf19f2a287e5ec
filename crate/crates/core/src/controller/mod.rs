//! Per-epoch training decisions: the velocity-driven controller, the
//! softmax output-variation analysis behind its stop threshold, and the
//! baseline schedulers it is compared against.

mod baseline;
mod epsilon;
mod neve;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_decide, BaselineSchedulerConfig};
pub use epsilon::{epsilon_analysis, softmax_delta, EpsilonAnalysis};
pub use neve::{neve_decide, replay_neve, ControllerConfig, NeveController, RescaleBook};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Continue,
    RescaleLr(f64),
    Stop,
}

impl Verdict {
    /// Short label used in the CSV `decision` column.
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Continue => "continue",
            Verdict::RescaleLr(_) => "rescale",
            Verdict::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDecision {
    pub verdict: Verdict,
    pub reason: String,
    /// Epoch (1-based) the decision was made after.
    pub epoch: usize,
}

impl ControllerDecision {
    pub(crate) fn new(verdict: Verdict, epoch: usize, reason: impl Into<String>) -> Self {
        ControllerDecision {
            verdict,
            reason: reason.into(),
            epoch,
        }
    }
}

impl fmt::Display for ControllerDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.verdict {
            Verdict::RescaleLr(lr) => write!(
                f,
                "epoch {}: rescale lr to {lr:e} ({})",
                self.epoch, self.reason
            ),
            v => write!(f, "epoch {}: {} ({})", self.epoch, v.label(), self.reason),
        }
    }
}

/// Per-epoch signals a scheduler may look at.
#[derive(Debug, Clone, Copy, Default)]
pub struct Signals<'a> {
    pub model_velocity: &'a [f64],
    pub val_loss: Option<&'a [f64]>,
}

/// A run's scheduler: the velocity controller or one of the baselines.
#[derive(Debug, Clone)]
pub enum Scheduler {
    Neve(NeveController),
    Baseline {
        cfg: BaselineSchedulerConfig,
        stopped: bool,
    },
}

impl Scheduler {
    pub fn neve(cfg: ControllerConfig) -> Result<Self> {
        Ok(Scheduler::Neve(NeveController::new(cfg)?))
    }

    pub fn baseline(cfg: BaselineSchedulerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Scheduler::Baseline {
            cfg,
            stopped: false,
        })
    }

    pub fn decide(
        &mut self,
        signals: Signals<'_>,
        lr: f64,
        epoch: usize,
    ) -> Result<ControllerDecision> {
        match self {
            Scheduler::Neve(c) => {
                if signals.model_velocity.len() != epoch {
                    return Err(Error::Structural(format!(
                        "velocity history has {} entries at epoch {epoch}",
                        signals.model_velocity.len()
                    )));
                }
                c.decide(signals.model_velocity, lr)
            }
            Scheduler::Baseline { cfg, stopped } => {
                if *stopped {
                    return Err(Error::Structural("decision requested after stop".into()));
                }
                let d = baseline_decide(cfg, signals.val_loss, lr, epoch)?;
                *stopped = d.verdict == Verdict::Stop;
                Ok(d)
            }
        }
    }
}
