//! Command-line front end. `run` is what the `neve` binary calls.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::{ExperimentConfig, SchedulerSpec};
use super::suite::{ensure_writable, run_suite_with, summary_text, write_run_outputs};
use super::sweeps::{
    aux_sweep, compare, epsilon_chart, epsilon_sweep, epsilon_table, optim_compare, sweep_chart,
    sweep_table, CompareSpec, SweepRow,
};
use crate::controller::epsilon_analysis;
use crate::data::AuxSource;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "neve",
    version,
    about = "Train small networks with a neural-velocity learning-rate controller"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration over one or more seeds.
    Train(RunArgs),
    /// NeVe against fixed, step-decay and validation-loss schedulers.
    Compare(CompareArgs),
    /// Epochs-to-stop and accuracy against the stop threshold.
    EpsilonSweep(EpsSweepArgs),
    /// Accuracy against validation fraction and against aux size.
    AuxSweep(AuxSweepArgs),
    /// Closed-form bound on softmax output variation for given thresholds.
    EpsilonAnalysis(EpsAnalysisArgs),
    /// SGD against Adam, each under NeVe and a fixed rate.
    OptimCompare(OptimArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Blobs,
    Mnist,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(short, long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration to start from.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Override a config key, e.g. `--set scheduler.eps=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Output directory (overrides the config and NEVE_OUTPUT_DIR).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Dataset directory (MNIST).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Aux sources to track velocity on, e.g. `noise,heldout,train`.
    #[arg(long, value_delimiter = ',')]
    probe_aux: Option<Vec<String>>,
    #[arg(long)]
    aux_count: Option<usize>,
    /// Stop threshold (NeVe scheduler).
    #[arg(long)]
    eps: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Write per-neuron change rate and velocity every epoch.
    #[arg(long)]
    dump_neurons: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Step-decay milestones; repeat for several baselines, e.g. `--milestones 30,45`.
    #[arg(long)]
    milestones: Vec<String>,
    #[arg(long, default_value_t = 0.3)]
    vloss_fraction: f64,
    #[arg(long, default_value_t = 5)]
    vloss_patience: usize,
    #[arg(long, default_value_t = 10)]
    vloss_stop_patience: usize,
}

#[derive(Debug, Args)]
struct EpsSweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2,1e-1")]
    eps_list: Vec<f64>,
}

#[derive(Debug, Args)]
struct AuxSweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Validation fractions for the held-out aux variants.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3")]
    fractions: Vec<f64>,
    /// Gaussian-noise aux set sizes.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
    sizes: Vec<usize>,
}

#[derive(Debug, Args)]
struct EpsAnalysisArgs {
    /// Thresholds to tabulate.
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2,1e-1,0.5")]
    eps: Vec<f64>,
    /// Also write the table and an SVG curve here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1e-3)]
    adam_lr: f64,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => ExperimentConfig::load(path, &self.overrides)?,
            (None, p) => {
                let base = match p {
                    Some(Preset::Mnist) => ExperimentConfig::mnist_default("data/mnist5k"),
                    Some(Preset::Blobs) | None => ExperimentConfig::blobs_default(),
                };
                base.with_overrides(&self.overrides)?
            }
        };
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(n) = self.max_epochs {
            cfg.max_epochs = n;
        }
        if let Some(n) = self.batch_size {
            cfg.batch_size = n;
        }
        if let Some(o) = &self.output {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(d) = &self.data_dir {
            cfg.dataset.dir = Some(d.clone());
        }
        if let Some(f) = self.validation_fraction {
            cfg.dataset.validation_fraction = f;
        }
        if let Some(list) = &self.probe_aux {
            cfg.aux.sources = list
                .iter()
                .map(|s| {
                    AuxSource::parse(s).ok_or_else(|| {
                        Error::config("aux.sources", format!("unknown aux source `{s}`"))
                    })
                })
                .collect::<Result<_>>()?;
        }
        if let Some(n) = self.aux_count {
            cfg.aux.count = n;
        }
        if let Some(e) = self.eps {
            match &mut cfg.scheduler {
                SchedulerSpec::Neve(c) => c.eps = e,
                _ => {
                    return Err(Error::config(
                        "scheduler.eps",
                        "--eps needs the neve scheduler",
                    ))
                }
            }
        }
        if let Some(lr) = self.lr {
            cfg.optimizer.lr = lr;
        }
        if self.dump_neurons {
            cfg.aux.dump_neurons = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Prepares the output directory and echoes the effective config into it.
fn start_output(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.resolved_output_dir();
    ensure_writable(&dir)?;
    write_file(&dir.join("effective_config.toml"), &cfg.to_toml())?;
    Ok(dir)
}

fn train(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.config()?;
    let dir = start_output(&cfg)?;
    let data = cfg.prepare_data()?;
    let neuron_dir = if cfg.aux.dump_neurons {
        let d = dir.join("neurons");
        ensure_writable(&d)?;
        Some(d)
    } else {
        None
    };
    let summary = run_suite_with(&cfg, &data, neuron_dir.as_deref())?;
    for o in &summary.outcomes {
        write_run_outputs(&dir, o)?;
    }
    let text = summary_text(&summary);
    write_file(&dir.join("summary.txt"), &text)?;
    let _ = writeln!(out, "{text}outputs: {}", dir.display());
    Ok(())
}

fn report(dir: &Path, name: &str, rows: &[SweepRow], out: &mut dyn Write) -> Result<()> {
    let table = sweep_table(rows);
    write_file(&dir.join(format!("{name}.txt")), &table)?;
    let _ = writeln!(out, "{table}outputs: {}", dir.display());
    Ok(())
}

fn parse_milestones(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::config("milestones", format!("bad milestone `{x}`")))
        })
        .collect()
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(&a, out),
        Command::Compare(a) => {
            let cfg = a.run.config()?;
            let mut spec = CompareSpec::for_budget(cfg.max_epochs);
            if !a.milestones.is_empty() {
                spec.step_milestones = a
                    .milestones
                    .iter()
                    .map(|m| parse_milestones(m))
                    .collect::<Result<_>>()?;
            }
            spec.vloss_fraction = a.vloss_fraction;
            spec.vloss_patience = a.vloss_patience;
            spec.vloss_stop_patience = a.vloss_stop_patience;
            let dir = start_output(&cfg)?;
            let rows = compare(&cfg, &spec)?;
            report(&dir, "compare", &rows, out)
        }
        Command::EpsilonSweep(a) => {
            let cfg = a.run.config()?;
            let dir = start_output(&cfg)?;
            let rows = epsilon_sweep(&cfg, &a.eps_list)?;
            let (acc, ep) = sweep_chart(&rows, "epsilon sweep", "eps", true);
            write_file(&dir.join("epsilon_sweep_accuracy.svg"), &acc)?;
            write_file(&dir.join("epsilon_sweep_epochs.svg"), &ep)?;
            report(&dir, "epsilon_sweep", &rows, out)
        }
        Command::AuxSweep(a) => {
            let cfg = a.run.config()?;
            let dir = start_output(&cfg)?;
            let rows = aux_sweep(&cfg, &a.fractions, &a.sizes)?;
            let nf = a.fractions.len();
            let (acc, _) = sweep_chart(&rows[..nf], "held-out aux", "validation fraction", false);
            write_file(&dir.join("aux_sweep_fraction.svg"), &acc)?;
            let (acc, _) = sweep_chart(&rows[nf..], "noise aux", "aux size", true);
            write_file(&dir.join("aux_sweep_size.svg"), &acc)?;
            report(&dir, "aux_sweep", &rows, out)
        }
        Command::EpsilonAnalysis(a) => {
            let table = epsilon_table(&a.eps)?;
            let _ = write!(out, "{table}");
            if let [e] = a.eps[..] {
                let r = epsilon_analysis(e)?;
                let _ = writeln!(
                    out,
                    "p* = {:.6}, max delta y = {:.4e} (≈ {:.1e})",
                    r.p_star, r.max_delta, r.max_delta
                );
            }
            if let Some(dir) = a.output {
                ensure_writable(&dir)?;
                write_file(&dir.join("epsilon_analysis.txt"), &table)?;
                write_file(
                    &dir.join("epsilon_analysis.svg"),
                    &epsilon_chart(1e-5, 0.9, 200)?,
                )?;
            }
            Ok(())
        }
        Command::OptimCompare(a) => {
            let cfg = a.run.config()?;
            let dir = start_output(&cfg)?;
            let rows = optim_compare(&cfg, a.adam_lr)?;
            report(&dir, "optim_compare", &rows, out)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("neve").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn epsilon_analysis_prints_bound() {
        let (code, out, _) = run_str(&["epsilon-analysis", "--eps", "1e-3"]);
        assert_eq!(code, 0);
        assert!(out.contains("≈ 3.7e-4"), "{out}");
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run_str(&["train", "--bogus"]);
        assert_eq!(code, 2);
        assert!(err.contains("Usage"), "{err}");
        let (code, _, _) = run_str(&["frobnicate"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn eps_flag_requires_neve() {
        let (code, _, err) = run_str(&[
            "train",
            "--set",
            "scheduler={kind=\"fixed\"}",
            "--eps",
            "0.1",
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("scheduler.eps"), "{err}");
    }
}
