//! Experiment configuration: one TOML file, with dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{BaselineSchedulerConfig, ControllerConfig};
use crate::data::{
    circle_centers, gen_blobs, load_cifar10, load_mnist_dir, split, AugmentRecipe, AuxSource,
    Dataset, SplitSpec, Standardizer,
};
use crate::error::{Error, Result};
use crate::nn::{ArchSpec, LayerSpec, OptimizerSpec};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "NEVE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Mnist,
    Cifar10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Blobs: training points.
    #[serde(default)]
    pub n: Option<usize>,
    /// Blobs: test points.
    #[serde(default)]
    pub test_n: Option<usize>,
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Blobs: centers on a circle of this radius unless `centers` is given.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub data_seed: u64,
    /// MNIST: directory with the four standard IDX files (optionally `.gz`).
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// CIFAR-10: training batch files and the test batch.
    #[serde(default)]
    pub train_files: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub test_file: Option<PathBuf>,
    /// Keep a stratified subset of this many training samples.
    #[serde(default)]
    pub subset: Option<usize>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub validation_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub augment: AugmentRecipe,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Shorthand: `[in, hidden..., classes]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
}

impl ModelSpec {
    pub fn mlp(widths: &[usize]) -> Self {
        ModelSpec {
            mlp: Some(widths.to_vec()),
            ..Default::default()
        }
    }

    pub fn arch(&self) -> Result<ArchSpec> {
        match (&self.mlp, &self.input, &self.layers) {
            (Some(w), None, None) => {
                if w.len() < 2 {
                    return Err(Error::config("model.mlp", "needs at least [in, classes]"));
                }
                Ok(ArchSpec::mlp(w))
            }
            (None, Some(input), Some(layers)) => Ok(ArchSpec {
                input: input.clone(),
                layers: layers.clone(),
            }),
            (None, _, _) => Err(Error::config(
                "model",
                "give either `mlp` or both `input` and `layers`",
            )),
            (Some(_), _, _) => Err(Error::config(
                "model.mlp",
                "cannot be combined with `input`/`layers`",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerSpec {
    Neve(ControllerConfig),
    Fixed,
    StepDecay {
        milestones: Vec<usize>,
        factor: f64,
    },
    Vloss {
        patience: usize,
        factor: f64,
        stop_patience: usize,
    },
}

impl SchedulerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            SchedulerSpec::Neve(_) => "neve",
            SchedulerSpec::Fixed => "fixed",
            SchedulerSpec::StepDecay { .. } => "step_decay",
            SchedulerSpec::Vloss { .. } => "vloss",
        }
    }

    pub fn baseline(&self) -> Option<BaselineSchedulerConfig> {
        match self {
            SchedulerSpec::Neve(_) => None,
            SchedulerSpec::Fixed => Some(BaselineSchedulerConfig::Fixed),
            SchedulerSpec::StepDecay { milestones, factor } => {
                Some(BaselineSchedulerConfig::StepDecay {
                    milestones: milestones.clone(),
                    factor: *factor,
                })
            }
            SchedulerSpec::Vloss {
                patience,
                factor,
                stop_patience,
            } => Some(BaselineSchedulerConfig::Vloss {
                patience: *patience,
                factor: *factor,
                stop_patience: *stop_patience,
            }),
        }
    }

    pub fn neve_config(&self) -> Option<&ControllerConfig> {
        match self {
            SchedulerSpec::Neve(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxSpec {
    /// Velocity is tracked on every source; the first one drives decisions.
    #[serde(default = "default_sources")]
    pub sources: Vec<AuxSource>,
    #[serde(default = "default_aux_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Write per-neuron (rho, v) files each epoch.
    #[serde(default)]
    pub dump_neurons: bool,
}

fn default_sources() -> Vec<AuxSource> {
    vec![AuxSource::GaussianNoise]
}

fn default_aux_count() -> usize {
    100
}

impl Default for AuxSpec {
    fn default() -> Self {
        AuxSpec {
            sources: default_sources(),
            count: default_aux_count(),
            seed: 0,
            dump_neurons: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub optimizer: OptimizerSpec,
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub aux: AuxSpec,
    pub max_epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "run".into()
}
fn default_batch() -> usize {
    64
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Train/validation/test parts ready for a run.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Dataset,
}

impl ExperimentConfig {
    /// Four Gaussian blobs on a circle of radius 1.5, MLP [2, 64, 64, 4], SGD at 0.1.
    pub fn blobs_default() -> Self {
        ExperimentConfig {
            name: "blobs".into(),
            dataset: DatasetSpec {
                kind: DatasetKind::Blobs,
                n: Some(2000),
                test_n: Some(2000),
                classes: Some(4),
                sigma: Some(0.3),
                radius: Some(1.5),
                centers: None,
                data_seed: 0,
                dir: None,
                train_files: None,
                test_file: None,
                subset: None,
                standardize: false,
                validation_fraction: 0.0,
                split_seed: 0,
                augment: AugmentRecipe::None,
            },
            model: ModelSpec::mlp(&[2, 64, 64, 4]),
            optimizer: OptimizerSpec::sgd(0.1, 0.9, 1e-4),
            scheduler: SchedulerSpec::Neve(ControllerConfig::default()),
            aux: AuxSpec::default(),
            max_epochs: 200,
            batch_size: 256,
            seeds: vec![0],
            output_dir: None,
        }
    }

    /// MNIST subset under `dir`, MLP [784, 128, 64, 10].
    pub fn mnist_default(dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            name: "mnist".into(),
            dataset: DatasetSpec {
                kind: DatasetKind::Mnist,
                n: None,
                test_n: None,
                classes: None,
                sigma: None,
                radius: None,
                centers: None,
                data_seed: 0,
                dir: Some(dir.into()),
                train_files: None,
                test_file: None,
                subset: Some(4000),
                standardize: true,
                validation_fraction: 0.0,
                split_seed: 0,
                augment: AugmentRecipe::None,
            },
            model: ModelSpec::mlp(&[784, 128, 64, 10]),
            optimizer: OptimizerSpec::sgd(0.1, 0.9, 1e-4),
            scheduler: SchedulerSpec::Neve(ControllerConfig::default()),
            aux: AuxSpec::default(),
            max_epochs: 60,
            batch_size: 64,
            seeds: vec![0],
            output_dir: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table =
            toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        Self::from_table(value)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(field_of(&e), e.message().to_string()))?;
        Ok(cfg)
    }

    /// Reads `path`, applies `key=value` overrides, then deserializes.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        let mut cfg = Self::from_table(table)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Applies overrides to an already-built config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table =
            toml::Table::try_from(self).map_err(|e| Error::config("config", e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        Self::from_table(table)
    }

    /// Relative dataset paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.exists() {
                let cand = base.join(&*p);
                if cand.exists() {
                    *p = cand;
                }
            }
        };
        if let Some(d) = self.dataset.dir.as_mut() {
            fix(d);
        }
        if let Some(fs) = self.dataset.train_files.as_mut() {
            fs.iter_mut().for_each(fix);
        }
        if let Some(t) = self.dataset.test_file.as_mut() {
            fix(t);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("# unserializable: {e}\n"))
    }

    /// Output directory: explicit setting, else the environment, else `runs/<name>`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output_dir {
            return d.clone();
        }
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) => PathBuf::from(d).join(&self.name),
            None => PathBuf::from("runs").join(&self.name),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        self.optimizer.validate()?;
        let arch = self.model.arch()?;
        let ds = &self.dataset;
        if !(0.0..1.0).contains(&ds.validation_fraction) {
            return Err(Error::config(
                "dataset.validation_fraction",
                "must be in [0, 1)",
            ));
        }
        match ds.kind {
            DatasetKind::Blobs => {
                for (field, v) in [("dataset.n", ds.n), ("dataset.test_n", ds.test_n)] {
                    if v.is_none() {
                        return Err(Error::config(field, "required for blobs"));
                    }
                }
                if ds.sigma.is_none() {
                    return Err(Error::config("dataset.sigma", "required for blobs"));
                }
                if ds.centers.is_none() && (ds.classes.is_none() || ds.radius.is_none()) {
                    return Err(Error::config(
                        "dataset.centers",
                        "give `centers`, or `classes` and `radius`",
                    ));
                }
            }
            DatasetKind::Mnist => {
                if ds.dir.is_none() {
                    return Err(Error::config("dataset.dir", "required for mnist"));
                }
            }
            DatasetKind::Cifar10 => {
                if ds.train_files.as_ref().is_none_or(|f| f.is_empty()) {
                    return Err(Error::config("dataset.train_files", "required for cifar10"));
                }
                if ds.test_file.is_none() {
                    return Err(Error::config("dataset.test_file", "required for cifar10"));
                }
            }
        }
        ds.augment
            .validate(&arch.input)
            .or_else(|e| match ds.augment {
                AugmentRecipe::None => Ok(()),
                _ => Err(e),
            })?;
        match &self.scheduler {
            SchedulerSpec::Neve(c) => {
                c.validate()?;
                if self.aux.sources.is_empty() {
                    return Err(Error::config(
                        "aux.sources",
                        "neve scheduler needs an aux source",
                    ));
                }
            }
            other => {
                let b = other.baseline().expect("non-neve scheduler is a baseline");
                b.validate()?;
                if b.needs_validation() && ds.validation_fraction <= 0.0 {
                    return Err(Error::config(
                        "dataset.validation_fraction",
                        "vloss scheduler requires validation_fraction > 0",
                    ));
                }
            }
        }
        if !self.aux.sources.is_empty() && self.aux.count == 0 {
            return Err(Error::config("aux.count", "must be >= 1"));
        }
        if self.aux.sources.contains(&AuxSource::HeldoutValidation) && ds.validation_fraction <= 0.0
        {
            return Err(Error::config(
                "aux.sources",
                "heldout aux source requires dataset.validation_fraction > 0",
            ));
        }
        Ok(())
    }

    /// Builds the train/validation/test datasets. Deterministic in the config.
    pub fn prepare_data(&self) -> Result<PreparedData> {
        let ds = &self.dataset;
        let (full, mut test) =
            match ds.kind {
                DatasetKind::Blobs => {
                    let centers = match &ds.centers {
                        Some(c) => c.clone(),
                        None => circle_centers(ds.classes.unwrap_or(2), ds.radius.unwrap_or(1.0)),
                    };
                    let k = centers.len();
                    let sigma = ds.sigma.unwrap_or(0.1);
                    let train = gen_blobs(ds.n.unwrap_or(0), k, &centers, sigma, ds.data_seed)?;
                    let test = gen_blobs(
                        ds.test_n.unwrap_or(0),
                        k,
                        &centers,
                        sigma,
                        ds.data_seed.wrapping_add(0x7e57),
                    )?;
                    (train, test)
                }
                DatasetKind::Mnist => {
                    let dir = ds
                        .dir
                        .as_ref()
                        .ok_or_else(|| Error::config("dataset.dir", "required for mnist"))?;
                    load_mnist_dir(dir)?
                }
                DatasetKind::Cifar10 => {
                    let files = ds.train_files.as_ref().ok_or_else(|| {
                        Error::config("dataset.train_files", "required for cifar10")
                    })?;
                    let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
                    let test = ds.test_file.as_ref().ok_or_else(|| {
                        Error::config("dataset.test_file", "required for cifar10")
                    })?;
                    (load_cifar10(&refs)?, load_cifar10(&[test.as_path()])?)
                }
            };
        let full = match ds.subset {
            Some(n) => full.stratified_head(n, ds.split_seed)?,
            None => full,
        };
        let (mut train, mut val) = split(
            &full,
            &SplitSpec {
                validation_fraction: ds.validation_fraction,
                seed: ds.split_seed,
            },
        )?;
        if ds.standardize {
            let s = Standardizer::fit(&train);
            s.apply(&mut train);
            s.apply(&mut test);
            if let Some(v) = val.as_mut() {
                s.apply(v);
            }
        }
        let arch = self.model.arch()?;
        if train.meta.input_shape.iter().product::<usize>() != arch.input_len() {
            return Err(Error::config(
                "model",
                format!(
                    "model input {:?} does not match dataset samples {:?}",
                    arch.input, train.meta.input_shape
                ),
            ));
        }
        if let Some(k) = arch.classes() {
            if k < train.meta.classes {
                return Err(Error::config(
                    "model",
                    format!("model has {k} outputs for {} classes", train.meta.classes),
                ));
            }
        }
        Ok(PreparedData { train, val, test })
    }
}

fn field_of(e: &toml::de::Error) -> String {
    // toml messages look like "missing field `x`" or "unknown field `x`, expected ..."
    let msg = e.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "config".into()
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

/// Applies `a.b.c=value` overrides, creating intermediate tables as needed.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| Error::config(ov.clone(), "override must look like key=value"))?;
        let parts: Vec<&str> = key.trim().split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::config(key, "empty key segment"));
        }
        let mut cur = &mut *table;
        for p in &parts[..parts.len() - 1] {
            let entry = cur
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
        }
        cur.insert(
            parts[parts.len() - 1].to_string(),
            parse_value(value.trim()),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::blobs_default().validate().unwrap();
        ExperimentConfig::mnist_default("x").validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::blobs_default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_replace_nested_keys() {
        let cfg = ExperimentConfig::blobs_default()
            .with_overrides(&[
                "scheduler.eps=1e-4".into(),
                "max_epochs=7".into(),
                "optimizer.kind=adam".into(),
                "optimizer.lr=0.001".into(),
                "aux.sources=[\"noise\", \"train\"]".into(),
            ])
            .unwrap();
        assert_eq!(cfg.max_epochs, 7);
        assert_eq!(cfg.scheduler.neve_config().unwrap().eps, 1e-4);
        assert!(matches!(
            cfg.optimizer.kind,
            crate::nn::OptimizerKind::Adam { .. }
        ));
        assert_eq!(cfg.aux.sources.len(), 2);
    }

    #[test]
    fn missing_dataset_dir_names_the_field() {
        let mut cfg = ExperimentConfig::mnist_default("x");
        cfg.dataset.dir = None;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("dataset.dir"), "{err}");
    }

    #[test]
    fn vloss_without_validation_is_rejected() {
        let mut cfg = ExperimentConfig::blobs_default();
        cfg.scheduler = SchedulerSpec::Vloss {
            patience: 5,
            factor: 0.1,
            stop_patience: 10,
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("validation_fraction"), "{err}");
        cfg.dataset.validation_fraction = 0.3;
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_reported() {
        let mut t = toml::Table::try_from(ExperimentConfig::blobs_default()).unwrap();
        apply_overrides(&mut t, &["scheduler.epsilon=0.1".into()]).unwrap();
        let err = ExperimentConfig::from_table(t).unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");
    }

    #[test]
    fn blobs_data_is_deterministic() {
        let cfg = ExperimentConfig::blobs_default();
        let a = cfg.prepare_data().unwrap();
        let b = cfg.prepare_data().unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_ne!(a.train.samples, a.test.samples);
    }
}
