use serde::{Deserialize, Serialize};

use super::{ControllerDecision, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Stop once the model velocity falls below this.
    pub eps: f64,
    /// Learning-rate rescale factor on a velocity plateau.
    pub alpha: f64,
    /// Plateau patience in epochs; the window holds `patience + 1` values.
    pub patience: usize,
    /// Velocity smoothing constant.
    pub mu: f64,
    /// A window is a plateau when `max - min <= plateau_rel_span * mean`.
    pub plateau_rel_span: f64,
    /// Epochs after a rescale before another may fire. Defaults to `patience`.
    pub cooldown: Option<usize>,
    pub eta_min: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            eps: 1e-3,
            alpha: 0.1,
            patience: 5,
            mu: crate::velocity::DEFAULT_MU,
            plateau_rel_span: 0.05,
            cooldown: None,
            eta_min: None,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("scheduler.eps", "must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("scheduler.alpha", "must be in (0, 1)"));
        }
        if self.patience < 1 {
            return Err(Error::config("scheduler.patience", "must be >= 1"));
        }
        if !(self.plateau_rel_span > 0.0 && self.plateau_rel_span < 1.0) {
            return Err(Error::config(
                "scheduler.plateau_rel_span",
                "must be in (0, 1)",
            ));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config("scheduler.mu", "must be >= 0"));
        }
        if let Some(m) = self.eta_min {
            if !(m >= 0.0) {
                return Err(Error::config("scheduler.eta_min", "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn cooldown(&self) -> usize {
        self.cooldown.unwrap_or(self.patience)
    }
}

/// The controller's only memory between epochs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RescaleBook {
    pub last_rescale_epoch: Option<usize>,
}

/// Decision after epoch `history.len()`, given the model velocity after each
/// epoch so far. Stop wins over a plateau.
pub fn neve_decide(
    history: &[f64],
    cfg: &ControllerConfig,
    lr: f64,
    book: &RescaleBook,
) -> Result<ControllerDecision> {
    let epoch = history.len();
    let &latest = history
        .last()
        .ok_or_else(|| Error::Structural("empty velocity history".into()))?;

    if latest < cfg.eps {
        return Ok(ControllerDecision::new(
            Verdict::Stop,
            epoch,
            format!("model velocity {latest:.3e} < eps {:.1e}", cfg.eps),
        ));
    }

    let window = cfg.patience + 1;
    if history.len() < window {
        return Ok(ControllerDecision::new(
            Verdict::Continue,
            epoch,
            "plateau window not yet full",
        ));
    }
    let cooldown = cfg.cooldown();
    if let Some(last) = book.last_rescale_epoch {
        if epoch - last < cooldown {
            return Ok(ControllerDecision::new(
                Verdict::Continue,
                epoch,
                format!("cooling down since rescale at epoch {last}"),
            ));
        }
    }

    let w = &history[history.len() - window..];
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let span = max - min;
    if span > cfg.plateau_rel_span * mean {
        return Ok(ControllerDecision::new(
            Verdict::Continue,
            epoch,
            format!("velocity still moving (span {span:.3e}, mean {mean:.3e})"),
        ));
    }

    let mut next = cfg.alpha * lr;
    if let Some(floor) = cfg.eta_min {
        next = next.max(floor);
    }
    if !(next < lr) {
        return Ok(ControllerDecision::new(
            Verdict::Continue,
            epoch,
            "velocity plateau but learning rate at its floor",
        ));
    }
    Ok(ControllerDecision::new(
        Verdict::RescaleLr(next),
        epoch,
        format!(
            "velocity plateau (span {span:.3e} <= {} x mean {mean:.3e})",
            cfg.plateau_rel_span
        ),
    ))
}

#[derive(Debug, Clone)]
pub struct NeveController {
    cfg: ControllerConfig,
    book: RescaleBook,
    stopped: bool,
}

impl NeveController {
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(NeveController {
            cfg,
            book: RescaleBook::default(),
            stopped: false,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn book(&self) -> RescaleBook {
        self.book
    }

    pub fn decide(&mut self, history: &[f64], lr: f64) -> Result<ControllerDecision> {
        if self.stopped {
            return Err(Error::Structural("decision requested after stop".into()));
        }
        let d = neve_decide(history, &self.cfg, lr, &self.book)?;
        match d.verdict {
            Verdict::RescaleLr(_) => self.book.last_rescale_epoch = Some(d.epoch),
            Verdict::Stop => self.stopped = true,
            Verdict::Continue => {}
        }
        Ok(d)
    }
}

/// Re-derives the full decision sequence from a recorded velocity series.
pub fn replay_neve(
    history: &[f64],
    cfg: &ControllerConfig,
    lr0: f64,
) -> Result<Vec<ControllerDecision>> {
    let mut c = NeveController::new(cfg.clone())?;
    let mut lr = lr0;
    let mut out = Vec::with_capacity(history.len());
    for t in 1..=history.len() {
        let d = c.decide(&history[..t], lr)?;
        if let Verdict::RescaleLr(next) = d.verdict {
            lr = next;
        }
        let stop = d.verdict == Verdict::Stop;
        out.push(d);
        if stop {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> ControllerConfig {
        ControllerConfig::default()
    }

    #[test]
    fn below_threshold_stops() {
        let d = neve_decide(&[9e-4], &cfg(), 0.1, &RescaleBook::default()).unwrap();
        assert_eq!(d.verdict, Verdict::Stop);
    }

    #[test]
    fn flat_window_rescales() {
        let h = [0.200, 0.201, 0.199, 0.2005, 0.2002, 0.1998];
        // span 0.0012 against 0.05 * mean(~0.2001) = ~0.0100
        let d = neve_decide(&h, &cfg(), 0.1, &RescaleBook::default()).unwrap();
        match d.verdict {
            Verdict::RescaleLr(lr) => assert!((lr - 0.01).abs() < 1e-15),
            v => panic!("expected rescale, got {v:?}"),
        }
    }

    #[test]
    fn short_halving_series_continues() {
        let d = neve_decide(&[0.8, 0.4, 0.2], &cfg(), 0.1, &RescaleBook::default()).unwrap();
        assert_eq!(d.verdict, Verdict::Continue);
    }

    #[test]
    fn stop_beats_plateau() {
        let h = [9e-4; 6];
        let d = neve_decide(&h, &cfg(), 0.1, &RescaleBook::default()).unwrap();
        assert_eq!(d.verdict, Verdict::Stop);
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(neve_decide(&[], &cfg(), 0.1, &RescaleBook::default()).is_err());
    }

    #[test]
    fn cooldown_blocks_back_to_back_rescales() {
        let mut c = NeveController::new(cfg()).unwrap();
        let flat = [0.2; 20];
        let mut lr = 0.1;
        let mut rescales = Vec::new();
        for t in 1..=flat.len() {
            let d = c.decide(&flat[..t], lr).unwrap();
            if let Verdict::RescaleLr(n) = d.verdict {
                lr = n;
                rescales.push(t);
            }
        }
        assert_eq!(rescales, vec![6, 11, 16]);
        assert!((lr - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn eta_min_floors_the_rescale() {
        let c = ControllerConfig {
            eta_min: Some(0.05),
            ..cfg()
        };
        let h = [0.2; 6];
        let d = neve_decide(&h, &c, 0.1, &RescaleBook::default()).unwrap();
        assert_eq!(d.verdict, Verdict::RescaleLr(0.05));
        let d = neve_decide(&h, &c, 0.05, &RescaleBook::default()).unwrap();
        assert_eq!(d.verdict, Verdict::Continue);
    }

    #[test]
    fn no_decisions_after_stop() {
        let mut c = NeveController::new(cfg()).unwrap();
        c.decide(&[1e-5], 0.1).unwrap();
        assert!(c.decide(&[1e-5, 1e-5], 0.1).is_err());
    }

    #[test]
    fn invalid_configs_name_their_field() {
        let bad = ControllerConfig {
            alpha: 1.0,
            ..cfg()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("scheduler.alpha"));
        let bad = ControllerConfig {
            patience: 0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn lr_is_alpha_power_of_rescales(series in prop::collection::vec(1e-4f64..1.0, 1..80)) {
            let c = cfg();
            let decisions = replay_neve(&series, &c, 0.1).unwrap();
            let mut lr = 0.1;
            let mut k = 0;
            for d in &decisions {
                if let Verdict::RescaleLr(n) = d.verdict {
                    prop_assert!(n < lr);
                    lr = n;
                    k += 1;
                }
                if series[d.epoch - 1] < c.eps {
                    prop_assert_eq!(d.verdict, Verdict::Stop);
                }
            }
            let mut expect = 0.1;
            for _ in 0..k {
                expect *= c.alpha;
            }
            prop_assert_eq!(lr, expect);
            // replay is deterministic
            prop_assert_eq!(decisions, replay_neve(&series, &c, 0.1).unwrap());
        }
    }
}
