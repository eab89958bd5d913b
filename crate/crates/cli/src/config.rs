//! The experiment config file and the data it describes.

use std::fs;
use std::path::{Path, PathBuf};

use pdpsgd::data::{load_idx, split_indices, synthetic_lowrank, Dataset, SplitSpec, SyntheticSpec};
use pdpsgd::exec::Exec;
use pdpsgd::models::{Model, ModelSpec};
use pdpsgd::optim::{Algorithm, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::absolute;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used for the default run directory name.
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    pub split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Idx(IdxSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    /// Held-out files; without them the examples left over by the split are
    /// the test set.
    #[serde(default)]
    pub test_images: Option<PathBuf>,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Independent repetitions; repetition `r` offsets every seed by `r · seed_stride`.
    #[serde(default = "default_repeats")]
    pub repeat_seeds: usize,
    #[serde(default = "default_stride")]
    pub seed_stride: u64,
    #[serde(default)]
    pub exec: Exec,
}

fn default_repeats() -> usize {
    1
}
fn default_stride() -> u64 {
    1000
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            repeat_seeds: 1,
            seed_stride: 1000,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub csv: bool,
    #[serde(default = "default_true")]
    pub json: bool,
    /// Also write the stored iterates and final parameters as JSON.
    #[serde(default)]
    pub checkpoints: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            csv: true,
            json: true,
            checkpoints: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses `path`, rejecting unknown keys, and makes data paths absolute
    /// so the echoed config can be rerun from anywhere.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("reading {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataSource::Idx(idx) = &mut cfg.dataset.source {
            for p in [Some(&mut idx.train_images), Some(&mut idx.train_labels)]
                .into_iter()
                .chain([idx.test_images.as_mut(), idx.test_labels.as_mut()])
                .flatten()
            {
                if p.is_relative() {
                    *p = absolute(&base.join(&*p))?;
                }
            }
        }
        Ok(cfg)
    }

    /// Checks that need no data.
    pub fn validate_static(&self) -> CliResult<()> {
        if self.run.repeat_seeds == 0 {
            return Err(CliError::usage("run.repeat_seeds must be at least 1"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::usage(format!("name {:?} is not a plain directory name", self.name)));
        }
        if let DataSource::Idx(idx) = &self.dataset.source {
            if idx.test_images.is_some() != idx.test_labels.is_some() {
                return Err(CliError::usage("test_images and test_labels must be given together"));
            }
        }
        Ok(())
    }
}

/// Private, public and test sets ready for training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub private: Dataset,
    pub public: Option<Dataset>,
    pub test: Option<Dataset>,
}

impl PreparedData {
    pub fn load(cfg: &DatasetConfig) -> CliResult<Self> {
        let (pool, held_out) = match &cfg.source {
            DataSource::Synthetic(spec) => (synthetic_lowrank(spec)?.dataset, None),
            DataSource::Idx(idx) => {
                let train = load_idx(&idx.train_images, &idx.train_labels)?;
                let test = match (&idx.test_images, &idx.test_labels) {
                    (Some(i), Some(l)) => Some(load_idx(i, l)?),
                    _ => None,
                };
                (train, test)
            }
        };
        let (private, public, rest) = split_indices(pool.len(), &cfg.split)?;
        let test = match held_out {
            Some(t) => Some(t),
            None if rest.is_empty() => None,
            None => Some(pool.subset(&rest)?),
        };
        Ok(Self {
            private: pool.subset(&private)?,
            public: if public.is_empty() { None } else { Some(pool.subset(&public)?) },
            test,
        })
    }

    pub fn class_count(&self) -> usize {
        [Some(&self.private), self.public.as_ref(), self.test.as_ref()]
            .into_iter()
            .flatten()
            .map(Dataset::class_count)
            .max()
            .unwrap_or(2)
    }

    /// The public set as the trainer should see it.
    pub fn public_for(&self, algorithm: Algorithm) -> Option<&Dataset> {
        self.public.as_ref().filter(|_| algorithm == Algorithm::PdpSgd)
    }

    /// Builds the model and validates the training section against it.
    pub fn validate(&self, spec: &ModelSpec, train: &TrainConfig) -> CliResult<Model> {
        let model = spec.build(self.private.feature_dim(), self.class_count())?;
        let public = self.public_for(train.algorithm).map(Dataset::len);
        train.validate(model.param_count(), self.private.len(), public)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset.source]
kind = "idx"
train_images = "imgs"
train_labels = "../labels"

[dataset.split]
private_size = 5
public_size = 1
seed = 0

[model]
family = "logistic"

[train]
algorithm = "dp_sgd"
epochs = 1
batch_size = 2
step_size = 0.5
clip = 1.0
"#;

    fn load_text(text: &str) -> (tempfile::TempDir, CliResult<ExperimentConfig>) {
        let dir = tempfile::TempDir::new().unwrap();
        let sub = dir.path().join("cfg");
        fs::create_dir(&sub).unwrap();
        let path = sub.join("e.toml");
        fs::write(&path, text).unwrap();
        let cfg = ExperimentConfig::load(&path);
        (dir, cfg)
    }

    #[test]
    fn relative_data_paths_resolve_against_the_config_file() {
        let (dir, cfg) = load_text(MINIMAL);
        let cfg = cfg.unwrap();
        let DataSource::Idx(idx) = &cfg.dataset.source else { panic!("idx source expected") };
        let base = std::path::absolute(dir.path()).unwrap();
        assert_eq!(idx.train_images, base.join("cfg").join("imgs"));
        assert!(idx.train_labels.is_absolute());
        assert!(idx.train_labels.ends_with("cfg/../labels"));
    }

    #[test]
    fn echo_round_trips_with_defaults_materialised() {
        let (_dir, cfg) = load_text(MINIMAL);
        let cfg = cfg.unwrap();
        let echoed = toml::to_string(&cfg).unwrap();
        for key in ["delta = ", "projection_start_epoch = 1", "repeat_seeds = 1", "init_seed = 0", "noise = 1"] {
            assert!(echoed.contains(key), "{key} missing from\n{echoed}");
        }
        let back: ExperimentConfig = toml::from_str(&echoed).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_source_kind_and_keys_are_rejected() {
        let (_d, r) = load_text(&MINIMAL.replace("kind = \"idx\"", "kind = \"csv\""));
        assert!(r.is_err());
        let (_d, r) = load_text(&MINIMAL.replace("seed = 0", "seed = 0\nshuffle = true"));
        assert!(r.unwrap_err().message.contains("shuffle"));
        let (_d, r) = load_text(&format!("{MINIMAL}\n[extra]\nx = 1\n"));
        assert!(r.is_err());
    }

    #[test]
    fn static_validation() {
        let (_d, cfg) = load_text(MINIMAL);
        let mut cfg = cfg.unwrap();
        cfg.validate_static().unwrap();
        cfg.run.repeat_seeds = 0;
        assert!(cfg.validate_static().is_err());
        cfg.run.repeat_seeds = 1;
        cfg.name = "a/b".into();
        assert!(cfg.validate_static().is_err());
        cfg.name = "ok".into();
        if let DataSource::Idx(idx) = &mut cfg.dataset.source {
            idx.test_images = Some("t".into());
        }
        assert!(cfg.validate_static().is_err());
    }

    #[test]
    fn leftover_examples_become_the_test_set() {
        let cfg = DatasetConfig {
            source: DataSource::Synthetic(SyntheticSpec {
                features: 4,
                n: 50,
                rank: 2,
                label_noise: 0.0,
                classes: 2,
                seed: 1,
            }),
            split: SplitSpec { private_size: 30, public_size: 5, seed: 2 },
        };
        let d = PreparedData::load(&cfg).unwrap();
        assert_eq!(d.private.len(), 30);
        assert_eq!(d.public.as_ref().map(Dataset::len), Some(5));
        assert_eq!(d.test.as_ref().map(Dataset::len), Some(15));
        assert!(d.public_for(Algorithm::DpSgd).is_none());
        assert!(d.public_for(Algorithm::PdpSgd).is_some());

        let mut all = cfg.clone();
        all.split = SplitSpec { private_size: 50, public_size: 0, seed: 2 };
        let d = PreparedData::load(&all).unwrap();
        assert!(d.public.is_none() && d.test.is_none());
    }
}
