use serde::{Deserialize, Serialize};

use super::{ControllerDecision, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSchedulerConfig {
    /// Constant learning rate until the epoch cap.
    Fixed,
    /// Multiply the rate by `factor` after each listed epoch.
    StepDecay { milestones: Vec<usize>, factor: f64 },
    /// Validation-loss plateau: rescale after `patience` epochs without a new
    /// best, stop after `stop_patience` consecutive such epochs.
    Vloss {
        patience: usize,
        factor: f64,
        stop_patience: usize,
    },
}

impl BaselineSchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaselineSchedulerConfig::Fixed => Ok(()),
            BaselineSchedulerConfig::StepDecay { milestones, factor } => {
                if milestones.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config(
                        "scheduler.milestones",
                        "must be strictly increasing",
                    ));
                }
                if milestones.first() == Some(&0) {
                    return Err(Error::config("scheduler.milestones", "epochs start at 1"));
                }
                check_factor(*factor)
            }
            BaselineSchedulerConfig::Vloss {
                patience,
                factor,
                stop_patience,
            } => {
                if *patience < 1 {
                    return Err(Error::config("scheduler.patience", "must be >= 1"));
                }
                if *stop_patience < 1 {
                    return Err(Error::config("scheduler.stop_patience", "must be >= 1"));
                }
                check_factor(*factor)
            }
        }
    }

    pub fn needs_validation(&self) -> bool {
        matches!(self, BaselineSchedulerConfig::Vloss { .. })
    }
}

fn check_factor(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::config("scheduler.factor", "must be in (0, 1)"))
    }
}

/// Decision after `epoch` (1-based). For `vloss`, `val_loss` holds one entry
/// per epoch so far; the plateau counters are rebuilt from it, so the result
/// depends only on the inputs.
pub fn baseline_decide(
    cfg: &BaselineSchedulerConfig,
    val_loss: Option<&[f64]>,
    lr: f64,
    epoch: usize,
) -> Result<ControllerDecision> {
    match cfg {
        BaselineSchedulerConfig::Fixed => Ok(ControllerDecision::new(
            Verdict::Continue,
            epoch,
            "fixed schedule",
        )),
        BaselineSchedulerConfig::StepDecay { milestones, factor } => {
            if milestones.contains(&epoch) {
                Ok(ControllerDecision::new(
                    Verdict::RescaleLr(lr * factor),
                    epoch,
                    format!("milestone {epoch}"),
                ))
            } else {
                Ok(ControllerDecision::new(
                    Verdict::Continue,
                    epoch,
                    "between milestones",
                ))
            }
        }
        BaselineSchedulerConfig::Vloss {
            patience,
            factor,
            stop_patience,
        } => {
            let series = val_loss.ok_or_else(|| {
                Error::config(
                    "dataset.validation_fraction",
                    "vloss scheduler needs a validation series",
                )
            })?;
            if series.len() != epoch || epoch == 0 {
                return Err(Error::Structural(format!(
                    "validation series has {} entries at epoch {epoch}",
                    series.len()
                )));
            }
            let mut best = f64::INFINITY;
            let mut since_rescale = 0;
            let mut since_best = 0;
            let mut verdict = Verdict::Continue;
            for &v in series {
                verdict = Verdict::Continue;
                if v < best {
                    best = v;
                    since_rescale = 0;
                    since_best = 0;
                } else {
                    since_rescale += 1;
                    since_best += 1;
                }
                if since_best >= *stop_patience {
                    verdict = Verdict::Stop;
                } else if since_rescale >= *patience {
                    verdict = Verdict::RescaleLr(lr * factor);
                    since_rescale = 0;
                }
            }
            let reason = match verdict {
                Verdict::Stop => format!("{since_best} epochs without validation improvement"),
                Verdict::RescaleLr(_) => format!("validation loss flat for {patience} epochs"),
                Verdict::Continue => format!("best validation loss {best:.4}"),
            };
            Ok(ControllerDecision::new(verdict, epoch, reason))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_step_decay(epochs: usize) -> Vec<f64> {
        let cfg = BaselineSchedulerConfig::StepDecay {
            milestones: vec![100, 150],
            factor: 0.1,
        };
        let mut lr = 0.1;
        let mut out = Vec::new();
        for e in 1..=epochs {
            if let Verdict::RescaleLr(n) = baseline_decide(&cfg, None, lr, e).unwrap().verdict {
                lr = n;
            }
            out.push(lr);
        }
        out
    }

    #[test]
    fn step_decay_milestones() {
        let lrs = run_step_decay(160);
        assert_eq!(lrs[98], 0.1);
        assert!((lrs[99] - 0.01).abs() < 1e-15);
        assert!((lrs[148] - 0.01).abs() < 1e-15);
        assert!((lrs[149] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn vloss_keeps_going_while_improving() {
        let cfg = BaselineSchedulerConfig::Vloss {
            patience: 3,
            factor: 0.1,
            stop_patience: 6,
        };
        let series: Vec<f64> = (0..50).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        for e in 1..=50 {
            let d = baseline_decide(&cfg, Some(&series[..e]), 0.1, e).unwrap();
            assert_eq!(d.verdict, Verdict::Continue);
        }
    }

    #[test]
    fn vloss_rescales_after_patience_flat_epochs() {
        let cfg = BaselineSchedulerConfig::Vloss {
            patience: 5,
            factor: 0.1,
            stop_patience: 20,
        };
        let flat = [0.7; 6];
        let verdicts: Vec<_> = (1..=6)
            .map(|e| {
                baseline_decide(&cfg, Some(&flat[..e]), 0.1, e)
                    .unwrap()
                    .verdict
            })
            .collect();
        assert!(verdicts[..5].iter().all(|v| *v == Verdict::Continue));
        assert!(matches!(verdicts[5], Verdict::RescaleLr(lr) if (lr - 0.01).abs() < 1e-15));
    }

    #[test]
    fn vloss_stops_after_stop_patience() {
        let cfg = BaselineSchedulerConfig::Vloss {
            patience: 2,
            factor: 0.5,
            stop_patience: 5,
        };
        let series = [1.0, 0.9, 0.95, 0.95, 0.96, 0.91, 0.92];
        let v = |e: usize| {
            baseline_decide(&cfg, Some(&series[..e]), 0.1, e)
                .unwrap()
                .verdict
        };
        assert!(matches!(v(4), Verdict::RescaleLr(_)));
        assert_eq!(v(5), Verdict::Continue);
        assert!(matches!(v(6), Verdict::RescaleLr(_)));
        assert_eq!(v(7), Verdict::Stop);
    }

    #[test]
    fn vloss_without_series_is_a_config_error() {
        let cfg = BaselineSchedulerConfig::Vloss {
            patience: 5,
            factor: 0.1,
            stop_patience: 10,
        };
        assert!(matches!(
            baseline_decide(&cfg, None, 0.1, 1),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn milestones_must_increase() {
        let cfg = BaselineSchedulerConfig::StepDecay {
            milestones: vec![10, 10],
            factor: 0.1,
        };
        assert!(cfg.validate().is_err());
    }
}
