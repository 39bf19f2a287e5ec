//! The training loop: train, probe, evaluate, decide, apply.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, PreparedData};
use super::record::{neuron_dump_csv, RunRecord};
use crate::controller::{ControllerDecision, Scheduler, Signals, Verdict};
use crate::data::{augment, make_aux_from, make_aux_noise, AugmentRecipe, AuxSet, AuxSource};
use crate::error::{Error, Result};
use crate::nn::{Model, Optimizer};
use crate::velocity::{VelocityTracker, DEFAULT_MU};

const CAPTURE_CHUNK: usize = 256;
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const AUGMENT_STREAM: u64 = 0x4155_474d;

/// Stepwise access to one seeded run.
pub struct Trainer<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a PreparedData,
    model: Model,
    opt: Optimizer,
    scheduler: Scheduler,
    aux: Vec<(AuxSet, VelocityTracker)>,
    shuffle_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
    order: Vec<usize>,
    epoch: usize,
    velocity: Vec<f64>,
    val_loss: Vec<f64>,
    records: Vec<RunRecord>,
    last_decision: Option<ControllerDecision>,
    stopped: bool,
}

impl<'a> Trainer<'a> {
    /// Builds the model, optimizer and aux sets, and takes the epoch-0 capture.
    pub fn new(cfg: &'a ExperimentConfig, data: &'a PreparedData, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let arch = cfg.model.arch()?;
        let model = Model::build(&arch, seed)?;
        let opt = cfg.optimizer.build(&model);
        let scheduler = match cfg.scheduler.neve_config() {
            Some(c) => Scheduler::neve(c.clone())?,
            None => Scheduler::baseline(cfg.scheduler.baseline().expect("baseline"))?,
        };
        if cfg
            .scheduler
            .baseline()
            .is_some_and(|b| b.needs_validation())
            && data.val.is_none()
        {
            return Err(Error::config(
                "dataset.validation_fraction",
                "vloss scheduler requires a validation split",
            ));
        }
        let mu = cfg.scheduler.neve_config().map_or(DEFAULT_MU, |c| c.mu);
        let aux_seed = cfg.aux.seed.wrapping_add(seed);
        let mut aux = Vec::new();
        for src in &cfg.aux.sources {
            let set = match src {
                AuxSource::GaussianNoise => make_aux_noise(cfg.aux.count, &arch.input, aux_seed)?,
                AuxSource::HeldoutValidation => {
                    let val = data.val.as_ref().ok_or_else(|| {
                        Error::config(
                            "aux.sources",
                            "heldout aux source requires dataset.validation_fraction > 0",
                        )
                    })?;
                    make_aux_from(val, cfg.aux.count, *src, aux_seed)?
                }
                AuxSource::Train => make_aux_from(&data.train, cfg.aux.count, *src, aux_seed)?,
            };
            let cap = model.capture(set.samples(), CAPTURE_CHUNK)?;
            let tracker = VelocityTracker::new(&cap, mu)?;
            aux.push((set, tracker));
        }
        Ok(Trainer {
            cfg,
            data,
            model,
            opt,
            scheduler,
            aux,
            shuffle_rng: ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_STREAM),
            augment_rng: ChaCha8Rng::seed_from_u64(seed ^ AUGMENT_STREAM),
            order: (0..data.train.len()).collect(),
            epoch: 0,
            velocity: Vec::new(),
            val_loss: Vec::new(),
            records: Vec::new(),
            last_decision: None,
            stopped: false,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn learning_rate(&self) -> f64 {
        self.opt.learning_rate()
    }

    /// Overrides the rate used from the next epoch on.
    pub fn set_learning_rate(&mut self, lr: f64) -> Result<()> {
        self.opt.set_learning_rate(lr)
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<RunRecord> {
        self.records
    }

    pub fn into_parts(self) -> (Model, Vec<RunRecord>) {
        (self.model, self.records)
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn is_done(&self) -> bool {
        self.stopped || self.epoch >= self.cfg.max_epochs
    }

    pub fn aux_sets(&self) -> impl Iterator<Item = &AuxSet> {
        self.aux.iter().map(|(s, _)| s)
    }

    pub fn trackers(&self) -> impl Iterator<Item = &VelocityTracker> {
        self.aux.iter().map(|(_, t)| t)
    }

    /// Velocity history of the first aux source.
    pub fn velocity_history(&self) -> &[f64] {
        &self.velocity
    }

    pub fn last_decision(&self) -> Option<&ControllerDecision> {
        self.last_decision.as_ref()
    }

    /// One pass over the shuffled training set. Returns (mean loss, accuracy).
    fn train_epoch(&mut self) -> Result<(f64, f64)> {
        let train = &self.data.train;
        self.order.shuffle(&mut self.shuffle_rng);
        let bs = self.cfg.batch_size;
        let recipe = self.cfg.dataset.augment;
        let mut loss = 0.0;
        let mut hits = 0usize;
        for chunk in self.order.chunks(bs) {
            let mut batch = train.samples.select_rows(chunk);
            if recipe != AugmentRecipe::None {
                batch = augment(&batch, &recipe, &mut self.augment_rng)?;
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let s = self.model.train_step(&batch, &labels, &mut self.opt)?;
            loss += s.loss * chunk.len() as f64;
            hits += s.hits;
        }
        let n = train.len() as f64;
        Ok((loss / n, hits as f64 / n))
    }

    /// Runs one full epoch and returns its record.
    pub fn step(&mut self) -> Result<RunRecord> {
        if self.stopped {
            return Err(Error::Structural("training already stopped".into()));
        }
        let started = Instant::now();
        self.epoch += 1;
        let epoch = self.epoch;
        let (train_loss, train_acc) = self.train_epoch()?;

        let mut source_velocity = Vec::with_capacity(self.aux.len());
        for (set, tracker) in &mut self.aux {
            let cap = self.model.capture(set.samples(), CAPTURE_CHUNK)?;
            let v = tracker.observe(&cap)?;
            if !v.is_finite() {
                return Err(Error::numeric(
                    format!("velocity on {} aux set", set.source().label()),
                    format!("model velocity {v} at epoch {epoch}"),
                ));
            }
            source_velocity.push((set.source(), v));
        }
        let model_velocity = source_velocity.first().map(|&(_, v)| v);
        if let Some(v) = model_velocity {
            self.velocity.push(v);
        }

        let (test_loss, test_acc) = self
            .model
            .evaluate_samples(&self.data.test.samples, &self.data.test.labels)?;
        let val_loss = match &self.data.val {
            Some(v) => {
                let (l, _) = self.model.evaluate_samples(&v.samples, &v.labels)?;
                self.val_loss.push(l);
                Some(l)
            }
            None => None,
        };

        let lr = self.opt.learning_rate();
        let decision = self.scheduler.decide(
            Signals {
                model_velocity: &self.velocity,
                val_loss: self.data.val.as_ref().map(|_| self.val_loss.as_slice()),
            },
            lr,
            epoch,
        )?;
        match decision.verdict {
            Verdict::RescaleLr(new_lr) => self.opt.set_learning_rate(new_lr)?,
            Verdict::Stop => self.stopped = true,
            Verdict::Continue => {}
        }
        let record = RunRecord {
            epoch,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
            val_loss,
            model_velocity,
            learning_rate: self.opt.learning_rate(),
            decision: decision.verdict,
            wall_seconds: started.elapsed().as_secs_f64(),
            source_velocity,
        };
        self.last_decision = Some(decision);
        self.records.push(record.clone());
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    /// Stopped by the scheduler at this epoch.
    Stopped(usize),
    /// Ran to `max_epochs`.
    Exhausted,
    /// Aborted; records up to the failure are kept.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub status: RunStatus,
    /// Parameters after the last completed step.
    pub model: Model,
}

impl RunOutcome {
    pub fn failed(&self) -> bool {
        matches!(self.status, RunStatus::Failed(_))
    }

    pub fn stop_epoch(&self) -> Option<usize> {
        match self.status {
            RunStatus::Stopped(e) => Some(e),
            _ => None,
        }
    }

    pub fn epochs_run(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&RunRecord> {
        self.records.last()
    }

    /// Epochs until the first rescale, if any.
    pub fn first_rescale(&self) -> Option<usize> {
        self.records
            .iter()
            .find(|r| matches!(r.decision, Verdict::RescaleLr(_)))
            .map(|r| r.epoch)
    }
}

/// Runs one seed to completion. Configuration errors are returned;
/// failures during training are recorded in the outcome.
///
/// With `neuron_dir`, per-neuron change rates and velocities of the first aux
/// source are written there after every epoch.
pub fn run_training(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    seed: u64,
    neuron_dir: Option<&Path>,
) -> Result<RunOutcome> {
    let mut trainer = Trainer::new(cfg, data, seed)?;
    let mut status = RunStatus::Exhausted;
    while !trainer.is_done() {
        match trainer.step() {
            Ok(rec) => {
                if let Some(dir) = neuron_dir {
                    if let Some(t) = trainer.trackers().next() {
                        let st = t.state();
                        let path: PathBuf =
                            dir.join(format!("neurons_seed{seed}_epoch{}.csv", rec.epoch));
                        let ids = &trainer.model().probe_neurons();
                        std::fs::write(&path, neuron_dump_csv(ids, &st.rho, &st.velocity))
                            .map_err(|e| Error::io(&path, e))?;
                    }
                }
                if rec.decision == Verdict::Stop {
                    status = RunStatus::Stopped(rec.epoch);
                }
            }
            Err(e) => {
                status = RunStatus::Failed(e.to_string());
                break;
            }
        }
    }
    let (model, records) = trainer.into_parts();
    Ok(RunOutcome {
        seed,
        records,
        status,
        model,
    })
}
