//! Scripted comparisons and ablation grids built on `run_suite`.

use std::fmt::Write as _;

use super::config::{ExperimentConfig, SchedulerSpec};
use super::plot::LineChart;
use super::suite::{run_suite, SuiteSummary};
use crate::controller::{epsilon_analysis, ControllerConfig};
use crate::data::AuxSource;
use crate::error::{Error, Result};
use crate::nn::{OptimizerKind, OptimizerSpec};

/// One labelled variant of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    /// The swept value, when the sweep is over a number.
    pub param: Option<f64>,
    pub validation_fraction: f64,
    pub summary: SuiteSummary,
}

fn run_variant(cfg: &ExperimentConfig, label: String, param: Option<f64>) -> Result<SweepRow> {
    cfg.validate()?;
    let data = cfg.prepare_data()?;
    let summary = run_suite(cfg, &data)?;
    Ok(SweepRow {
        label,
        param,
        validation_fraction: cfg.dataset.validation_fraction,
        summary,
    })
}

fn neve_config(base: &ExperimentConfig) -> ControllerConfig {
    base.scheduler.neve_config().cloned().unwrap_or_default()
}

/// Drops aux sources that need a validation split.
fn without_heldout(cfg: &mut ExperimentConfig) {
    cfg.aux
        .sources
        .retain(|s| *s != AuxSource::HeldoutValidation);
    if cfg.aux.sources.is_empty() {
        cfg.aux.sources.push(AuxSource::GaussianNoise);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    /// One step-decay baseline per milestone list; the best is the reference.
    pub step_milestones: Vec<Vec<usize>>,
    pub step_factor: f64,
    pub vloss_fraction: f64,
    pub vloss_patience: usize,
    pub vloss_stop_patience: usize,
    pub vloss_factor: f64,
}

impl CompareSpec {
    /// Milestones at 1/2 and 3/4, and at 1/4, 1/2 and 3/4 of the budget.
    pub fn for_budget(max_epochs: usize) -> Self {
        let at = |num: usize, den: usize| (max_epochs * num / den).max(1);
        let mut step_milestones =
            vec![vec![at(1, 2), at(3, 4)], vec![at(1, 4), at(1, 2), at(3, 4)]];
        for m in &mut step_milestones {
            m.dedup();
        }
        step_milestones.dedup();
        CompareSpec {
            step_milestones,
            step_factor: 0.1,
            vloss_fraction: 0.3,
            vloss_patience: 5,
            vloss_stop_patience: 10,
            vloss_factor: 0.1,
        }
    }
}

/// NeVe (no validation split) against fixed, step-decay and vloss, all on
/// the same model, budget and seeds.
pub fn compare(base: &ExperimentConfig, spec: &CompareSpec) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut plain = base.clone();
    plain.dataset.validation_fraction = 0.0;
    without_heldout(&mut plain);

    let mut c = plain.clone();
    c.scheduler = SchedulerSpec::Neve(neve_config(base));
    rows.push(run_variant(&c, "neve".into(), None)?);

    let mut c = plain.clone();
    c.scheduler = SchedulerSpec::Fixed;
    rows.push(run_variant(&c, "fixed".into(), None)?);

    for m in &spec.step_milestones {
        let mut c = plain.clone();
        c.scheduler = SchedulerSpec::StepDecay {
            milestones: m.clone(),
            factor: spec.step_factor,
        };
        let label = format!(
            "step_decay[{}]",
            m.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        rows.push(run_variant(&c, label, None)?);
    }

    let mut c = plain.clone();
    c.dataset.validation_fraction = spec.vloss_fraction;
    c.scheduler = SchedulerSpec::Vloss {
        patience: spec.vloss_patience,
        factor: spec.vloss_factor,
        stop_patience: spec.vloss_stop_patience,
    };
    rows.push(run_variant(&c, "vloss".into(), None)?);
    Ok(rows)
}

/// NeVe at each stop threshold.
pub fn epsilon_sweep(base: &ExperimentConfig, eps: &[f64]) -> Result<Vec<SweepRow>> {
    if eps.is_empty() {
        return Err(Error::config("eps_list", "at least one value is required"));
    }
    eps.iter()
        .map(|&e| {
            let mut c = base.clone();
            let mut nc = neve_config(base);
            nc.eps = e;
            c.scheduler = SchedulerSpec::Neve(nc);
            run_variant(&c, format!("eps={e:e}"), Some(e))
        })
        .collect()
}

/// NeVe with a held-out aux set carved from training data at each
/// fraction, then with Gaussian-noise aux sets of each size.
pub fn aux_sweep(
    base: &ExperimentConfig,
    fractions: &[f64],
    sizes: &[usize],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut neve = base.clone();
    neve.scheduler = SchedulerSpec::Neve(neve_config(base));
    for &f in fractions {
        let mut c = neve.clone();
        c.dataset.validation_fraction = f;
        c.aux.sources = if f > 0.0 {
            vec![AuxSource::HeldoutValidation]
        } else {
            vec![AuxSource::GaussianNoise]
        };
        let label = if f > 0.0 {
            format!("heldout val={:.0}%", 100.0 * f)
        } else {
            "noise val=0%".into()
        };
        rows.push(run_variant(&c, label, Some(f))?);
    }
    for &n in sizes {
        let mut c = neve.clone();
        c.dataset.validation_fraction = 0.0;
        c.aux.sources = vec![AuxSource::GaussianNoise];
        c.aux.count = n;
        rows.push(run_variant(&c, format!("noise n={n}"), Some(n as f64))?);
    }
    Ok(rows)
}

/// SGD (as configured) and Adam at `adam_lr`, each under NeVe and fixed.
pub fn optim_compare(base: &ExperimentConfig, adam_lr: f64) -> Result<Vec<SweepRow>> {
    let mut sgd = base.optimizer;
    if !matches!(sgd.kind, OptimizerKind::Sgd { .. }) {
        sgd = OptimizerSpec::sgd(0.1, 0.9, base.optimizer.weight_decay);
    }
    let adam = OptimizerSpec {
        kind: OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        lr: adam_lr,
        weight_decay: sgd.weight_decay,
    };
    let mut plain = base.clone();
    plain.dataset.validation_fraction = 0.0;
    without_heldout(&mut plain);
    let mut rows = Vec::new();
    for (name, opt) in [("sgd", sgd), ("adam", adam)] {
        for sched in [SchedulerSpec::Neve(neve_config(base)), SchedulerSpec::Fixed] {
            let mut c = plain.clone();
            c.optimizer = opt;
            let label = format!("{name}/{}", sched.label());
            c.scheduler = sched;
            rows.push(run_variant(&c, label, None)?);
        }
    }
    Ok(rows)
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let w = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(9);
    let mut out = format!(
        "{:<w$}  {:>5}  {:>17}  {:>13}  {:>7}  {:>6}\n",
        "scheduler", "val%", "test acc", "epochs", "stopped", "failed"
    );
    for r in rows {
        let s = &r.summary;
        let acc = format!("{:.4} ± {:.4}", s.test_acc.mean, s.test_acc.std);
        let ep = format!("{:.1} ± {:.1}", s.epochs.mean, s.epochs.std);
        let _ = writeln!(
            out,
            "{:<w$}  {:>5.0}  {:>17}  {:>13}  {:>3}/{:<3}  {:>6}",
            r.label,
            100.0 * r.validation_fraction,
            acc,
            ep,
            s.stopped,
            s.outcomes.len() - s.failed.len(),
            s.failed.len()
        );
    }
    out
}

/// Accuracy and epochs against the swept parameter (log10 on x).
pub fn sweep_chart(rows: &[SweepRow], title: &str, x_label: &str, log_x: bool) -> (String, String) {
    let pts = |f: fn(&SuiteSummary) -> f64| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| {
                let p = r.param?;
                let x = if log_x { p.log10() } else { p };
                Some((x, f(&r.summary)))
            })
            .collect()
    };
    let xl = if log_x {
        format!("log10 {x_label}")
    } else {
        x_label.to_string()
    };
    let acc = LineChart::new(&format!("{title}: test accuracy"), &xl, "test accuracy")
        .series("mean", pts(|s| s.test_acc.mean))
        .render();
    let ep = LineChart::new(&format!("{title}: epochs"), &xl, "epochs")
        .series("mean", pts(|s| s.epochs.mean))
        .render();
    (acc, ep)
}

/// Two-column table of the softmax output-variation bound.
pub fn epsilon_table(eps: &[f64]) -> Result<String> {
    let mut out = format!("{:>12}  {:>14}\n", "eps", "max_delta_y");
    for &e in eps {
        let a = epsilon_analysis(e)?;
        let _ = writeln!(out, "{:>12e}  {:>14.6e}", e, a.max_delta);
    }
    Ok(out)
}

/// The bound on a log-spaced ε grid.
pub fn epsilon_chart(lo: f64, hi: f64, points: usize) -> Result<String> {
    if !(lo > 0.0 && hi < 1.0 && lo < hi && points >= 2) {
        return Err(Error::Domain(format!(
            "need 0 < lo < hi < 1 and >= 2 points, got {lo}, {hi}, {points}"
        )));
    }
    let (a, b) = (lo.log10(), hi.log10());
    let pts: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let x = a + (b - a) * i as f64 / (points - 1) as f64;
            epsilon_analysis(10f64.powf(x)).map(|r| (x, r.max_delta))
        })
        .collect::<Result<_>>()?;
    Ok(
        LineChart::new("softmax output variation bound", "log10 eps", "max delta y")
            .series("max delta y", pts)
            .log_y()
            .render(),
    )
}
