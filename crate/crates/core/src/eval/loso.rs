use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, FoldResult, GridPoint, SweepRow};
use crate::data::{loso_split, window_trials, ChannelStats, Dataset, Samples, TrialRecord, Windowing};
use crate::error::{Error, Result};
use crate::model::{DisentangledModel, ModelConfig};
use crate::training::{init_model, train, TrainConfig};

/// Layer widths; the input width and head output sizes come from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub encoder_hidden: usize,
    pub latent_dim: usize,
    pub head_hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            encoder_hidden: 100,
            latent_dim: 100,
            head_hidden: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosoConfig {
    pub train: TrainConfig,
    pub architecture: Architecture,
    pub val_frac: f64,
    pub windowing: Option<Windowing>,
}

impl Default for LosoConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            architecture: Architecture::default(),
            val_frac: 0.1,
            windowing: None,
        }
    }
}

impl LosoConfig {
    pub fn at(&self, point: GridPoint) -> LosoConfig {
        let mut cfg = *self;
        cfg.train.lambda_a = point.lambda_a;
        cfg.train.lambda_n = point.lambda_n;
        cfg.train.r_n = point.r_n;
        cfg
    }

    pub fn point(&self) -> GridPoint {
        GridPoint::new(self.train.lambda_a, self.train.lambda_n, self.train.r_n)
    }

    pub fn model_config(&self, dataset: &Dataset) -> Result<ModelConfig> {
        let (c, t) = dataset
            .shape()
            .ok_or_else(|| Error::Validation("dataset has no trials".into()))?;
        let t = self.windowing.map_or(t, |w| w.window);
        let cfg = ModelConfig {
            input_dim: c * t,
            encoder_hidden: self.architecture.encoder_hidden,
            latent_dim: self.architecture.latent_dim,
            r_n: self.train.r_n,
            head_hidden: self.architecture.head_hidden,
            num_classes: dataset.num_classes,
            num_subjects: dataset.num_subjects,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 or 1 runs serially.
    pub jobs: usize,
    /// Per-fold training logs are written here when set.
    pub log_dir: Option<PathBuf>,
}

fn samples(trials: &[TrialRecord], stats: &ChannelStats, windowing: Option<Windowing>) -> Result<Samples> {
    let std: Vec<TrialRecord> = trials.iter().map(|t| stats.apply(t)).collect::<Result<_>>()?;
    match windowing {
        Some(w) => Samples::from_trials(&window_trials(&std, w)?),
        None => Samples::from_trials(&std),
    }
}

/// Split, standardize on the training part, train, and score one held-out
/// subject. Fold seed is `train.seed + held_out_subject`.
pub fn run_fold(
    dataset: &Dataset,
    config: &LosoConfig,
    held_out_subject: usize,
    log_dir: Option<&Path>,
) -> Result<FoldResult> {
    fit_fold(dataset, config, held_out_subject, log_dir).map(|(_, r)| r)
}

/// [`run_fold`] that also hands back the trained model and the channel
/// statistics it was trained with; the model is `None` for a diverged fold.
pub fn fit_fold(
    dataset: &Dataset,
    config: &LosoConfig,
    held_out_subject: usize,
    log_dir: Option<&Path>,
) -> Result<(Option<(DisentangledModel, ChannelStats)>, FoldResult)> {
    let seed = config.train.seed.wrapping_add(held_out_subject as u64);
    let split = loso_split(dataset, held_out_subject, config.val_frac, seed)?;
    if split.train.is_empty() {
        return Err(Error::Validation(format!(
            "no training trials left after holding out subject {held_out_subject}"
        )));
    }
    let stats = ChannelStats::from_trials(&split.train)?;
    let train_set = samples(&split.train, &stats, config.windowing)?;
    let val_set = samples(&split.val, &stats, config.windowing)?;
    let test_set = samples(&split.test, &stats, config.windowing)?;

    let model = init_model(config.model_config(dataset)?, seed)?;
    let train_cfg = TrainConfig {
        seed,
        ..config.train
    };
    let (model, history) = match train(model, &train_set, &val_set, &train_cfg) {
        Ok(r) => r,
        Err(Error::NonFinite(msg)) => {
            log::warn!("fold {held_out_subject} diverged: {msg}");
            return Ok((None, FoldResult::failed(held_out_subject, msg)));
        }
        Err(e) => return Err(e),
    };
    if let Some(dir) = log_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("fold_{held_out_subject:02}.jsonl"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        history
            .write_ndjson(held_out_subject, BufWriter::new(file))
            .map_err(|e| Error::io(&path, e))?;
    }

    let mode = config.train.conditioning_mode;
    let test = evaluate(&model, &test_set, mode)?;
    let (n_val, adv_correct, nuis_correct) = if val_set.is_empty() {
        (0, 0, 0)
    } else {
        let val = evaluate(&model, &val_set, mode)?;
        (val.n, val.adv_correct, val.nuis_correct)
    };
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let result = FoldResult {
        held_out_subject,
        n_test_trials: test.n,
        main_correct: test.main_correct,
        n_val_trials: n_val,
        adv_correct,
        nuis_correct,
        main_acc: test.main_acc(),
        adv_acc: ratio(adv_correct, n_val),
        nuis_acc: ratio(nuis_correct, n_val),
        best_epoch: history.best_epoch,
        epochs_run: history.epochs.len(),
        failed: None,
        predictions: test.records,
    };
    Ok((Some((model, stats)), result))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))
}

/// Every subject held out once, for one hyperparameter point.
pub fn run_loso(dataset: &Dataset, config: &LosoConfig, options: &RunOptions) -> Result<SweepRow> {
    let rows = sweep(dataset, &[config.point()], config, options)?;
    Ok(rows.into_iter().next().expect("one grid point gives one row"))
}

/// One leave-one-subject-out run per grid point. Folds of all rows are
/// scheduled together on `options.jobs` workers; results are ordered by
/// grid row then subject regardless of scheduling.
pub fn sweep(
    dataset: &Dataset,
    grid: &[GridPoint],
    base: &LosoConfig,
    options: &RunOptions,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Validation("empty hyperparameter grid".into()));
    }
    let subjects = dataset.subjects();
    if subjects.len() < 2 {
        return Err(Error::Validation(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    let configs: Vec<LosoConfig> = grid.iter().map(|p| base.at(*p)).collect();
    for c in &configs {
        c.train.validate()?;
        c.model_config(dataset)?;
    }
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|r| subjects.iter().map(move |&s| (r, s)))
        .collect();
    let log_dir = |row: usize| {
        options
            .log_dir
            .as_ref()
            .map(|d| if grid.len() == 1 { d.clone() } else { d.join(format!("row{row}")) })
    };
    let run = |&(row, s): &(usize, usize)| run_fold(dataset, &configs[row], s, log_dir(row).as_deref());
    let results: Vec<FoldResult> = if options.jobs > 1 {
        pool(options.jobs)?.install(|| tasks.par_iter().map(run).collect::<Result<_>>())?
    } else {
        tasks.iter().map(run).collect::<Result<_>>()?
    };

    let mut results = results.into_iter();
    Ok(grid
        .iter()
        .map(|p| SweepRow::from_folds(*p, results.by_ref().take(subjects.len()).collect()))
        .collect())
}

/// Runs the sweep `repeats` times with base seeds `seed, seed + 1000, ...`.
pub fn sweep_repeated(
    dataset: &Dataset,
    grid: &[GridPoint],
    base: &LosoConfig,
    options: &RunOptions,
    repeats: usize,
) -> Result<Vec<Vec<SweepRow>>> {
    (0..repeats.max(1))
        .map(|r| {
            let mut cfg = *base;
            cfg.train.seed = base.train.seed.wrapping_add(1000 * r as u64);
            let opts = RunOptions {
                jobs: options.jobs,
                log_dir: options
                    .log_dir
                    .as_ref()
                    .map(|d| if repeats > 1 { d.join(format!("repeat{r}")) } else { d.clone() }),
            };
            sweep(dataset, grid, &cfg, &opts)
        })
        .collect()
}
