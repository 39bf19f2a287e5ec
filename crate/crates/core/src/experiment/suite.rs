//! Multi-seed runs, summary statistics and on-disk outputs.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, PreparedData};
use super::plot::LineChart;
use super::record::{records_to_csv, source_velocity_csv};
use super::runner::{run_training, RunOutcome, RunStatus};
use crate::error::{Error, Result};

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> MeanStd {
        if xs.is_empty() {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
                n: 0,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
            n: xs.len(),
        }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(2);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.std)
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Ranks starting at 1; ties get the average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone)]
pub struct SuiteSummary {
    pub label: String,
    pub outcomes: Vec<RunOutcome>,
    /// Seeds whose runs failed, with the reason.
    pub failed: Vec<(u64, String)>,
    pub test_acc: MeanStd,
    pub train_acc: MeanStd,
    pub epochs: MeanStd,
    pub stopped: usize,
}

impl SuiteSummary {
    fn from_outcomes(label: &str, outcomes: Vec<RunOutcome>) -> Self {
        let ok: Vec<&RunOutcome> = outcomes.iter().filter(|o| !o.failed()).collect();
        let failed = outcomes
            .iter()
            .filter_map(|o| match &o.status {
                RunStatus::Failed(m) => Some((o.seed, m.clone())),
                _ => None,
            })
            .collect();
        let pick = |f: fn(&RunOutcome) -> f64| -> Vec<f64> { ok.iter().map(|o| f(o)).collect() };
        SuiteSummary {
            label: label.into(),
            test_acc: MeanStd::of(&pick(|o| o.last().map_or(f64::NAN, |r| r.test_acc))),
            train_acc: MeanStd::of(&pick(|o| o.last().map_or(f64::NAN, |r| r.train_acc))),
            epochs: MeanStd::of(&pick(|o| o.epochs_run() as f64)),
            stopped: ok.iter().filter(|o| o.stop_epoch().is_some()).count(),
            failed,
            outcomes,
        }
    }

    pub fn completed(&self) -> impl Iterator<Item = &RunOutcome> {
        self.outcomes.iter().filter(|o| !o.failed())
    }
}

/// Runs every seed of `cfg` (in parallel) on the same prepared data.
/// Failed seeds are reported on stderr and excluded from the statistics.
pub fn run_suite(cfg: &ExperimentConfig, data: &PreparedData) -> Result<SuiteSummary> {
    run_suite_with(cfg, data, None)
}

pub fn run_suite_with(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    neuron_dir: Option<&Path>,
) -> Result<SuiteSummary> {
    if cfg.seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    cfg.validate()?;
    let outcomes: Vec<RunOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&s| run_training(cfg, data, s, neuron_dir))
        .collect::<Result<_>>()?;
    let summary = SuiteSummary::from_outcomes(cfg.scheduler.label(), outcomes);
    for (seed, msg) in &summary.failed {
        eprintln!("warning: seed {seed} failed and is excluded: {msg}");
    }
    Ok(summary)
}

/// Creates `dir` and checks that it accepts files.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write_check");
    std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes the CSVs and charts of one run into `dir`.
pub fn write_run_outputs(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    let tag = format!("seed{}", outcome.seed);
    let recs = &outcome.records;
    write(dir.join(format!("run_{tag}.csv")), &records_to_csv(recs))?;
    if recs.first().is_some_and(|r| !r.source_velocity.is_empty()) {
        write(
            dir.join(format!("velocity_{tag}.csv")),
            &source_velocity_csv(recs),
        )?;
        let sources: Vec<&str> = recs[0]
            .source_velocity
            .iter()
            .map(|(s, _)| s.label())
            .collect();
        let mut chart = LineChart::new(
            &format!("model velocity ({tag})"),
            "epoch",
            "model velocity",
        )
        .log_y();
        for (k, name) in sources.iter().enumerate() {
            chart = chart.series(
                name,
                recs.iter()
                    .map(|r| (r.epoch as f64, r.source_velocity[k].1))
                    .collect(),
            );
        }
        if let Some(e) = outcome.stop_epoch() {
            chart = chart.marker(e as f64, format!("stop @ {e}"));
        }
        write(dir.join(format!("velocity_{tag}.svg")), &chart.render())?;
    }
    let mut loss = LineChart::new(&format!("loss ({tag})"), "epoch", "loss")
        .series(
            "train",
            recs.iter()
                .map(|r| (r.epoch as f64, r.train_loss))
                .collect(),
        )
        .series(
            "test",
            recs.iter().map(|r| (r.epoch as f64, r.test_loss)).collect(),
        );
    if recs.iter().any(|r| r.val_loss.is_some()) {
        loss = loss.series(
            "validation",
            recs.iter()
                .filter_map(|r| Some((r.epoch as f64, r.val_loss?)))
                .collect(),
        );
    }
    let mut acc = LineChart::new(&format!("accuracy ({tag})"), "epoch", "accuracy")
        .series(
            "train",
            recs.iter().map(|r| (r.epoch as f64, r.train_acc)).collect(),
        )
        .series(
            "test",
            recs.iter().map(|r| (r.epoch as f64, r.test_acc)).collect(),
        );
    let mut lr = LineChart::new(&format!("learning rate ({tag})"), "epoch", "learning rate")
        .series(
            "lr",
            recs.iter()
                .map(|r| (r.epoch as f64, r.learning_rate))
                .collect(),
        )
        .log_y();
    if let Some(e) = outcome.stop_epoch() {
        loss = loss.marker(e as f64, format!("stop @ {e}"));
        acc = acc.marker(e as f64, format!("stop @ {e}"));
        lr = lr.marker(e as f64, format!("stop @ {e}"));
    }
    write(dir.join(format!("loss_{tag}.svg")), &loss.render())?;
    write(dir.join(format!("accuracy_{tag}.svg")), &acc.render())?;
    write(dir.join(format!("lr_{tag}.svg")), &lr.render())?;
    Ok(())
}

pub fn summary_text(s: &SuiteSummary) -> String {
    let mut out = format!(
        "scheduler: {}\nseeds: {} ({} failed)\ntest acc: {:.4}\ntrain acc: {:.4}\nepochs: {:.1}\nstopped by scheduler: {}\n",
        s.label,
        s.outcomes.len(),
        s.failed.len(),
        s.test_acc,
        s.train_acc,
        s.epochs,
        s.stopped
    );
    for o in &s.outcomes {
        let status = match &o.status {
            RunStatus::Stopped(e) => format!("stopped at epoch {e}"),
            RunStatus::Exhausted => "ran to max_epochs".to_string(),
            RunStatus::Failed(m) => format!("failed: {m}"),
        };
        let acc = o.last().map_or(f64::NAN, |r| r.test_acc);
        out.push_str(&format!("  seed {}: {status}, test acc {acc:.4}\n", o.seed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn correlation_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[9.0, 3.0, 1.0, 0.5]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 4]), None);
    }
}
