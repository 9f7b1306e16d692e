//! C interface to `datl-core`.
//!
//! Objects cross the boundary as opaque handles created by a `datl_*`
//! constructor and released with the matching `*_free`. Every fallible call
//! returns a [`DatlStatus`]; on failure the message is available from
//! [`datl_last_error_message`] on the same thread. Panics never unwind into
//! the caller: they are reported as [`DatlStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use datl_core::data::{
    dedup_relaxation, load_dataset, synth_generate, ChannelStats, Dataset, Samples, SyntheticConfig, Windowing,
    RELAXATION_LABEL,
};
use datl_core::error::Error;
use datl_core::eval::{evaluate, fit_fold, run_loso, LosoConfig, RunOptions, SweepRow};
use datl_core::model::{ConditioningMode, DisentangledModel};
use datl_core::nn::SgdConfig;
use datl_core::training::{random_model_grad_check, TrainConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatlStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an out-of-range argument.
    InvalidArgument = 1,
    Validation = 2,
    Parse = 3,
    Io = 4,
    NonFinite = 5,
    State = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatlConditioningMode {
    OnehotTrain = 0,
    Zeros = 1,
    Uniform = 2,
    NuisancePosterior = 3,
}

impl From<DatlConditioningMode> for ConditioningMode {
    fn from(m: DatlConditioningMode) -> Self {
        match m {
            DatlConditioningMode::OnehotTrain => ConditioningMode::OnehotTrain,
            DatlConditioningMode::Zeros => ConditioningMode::Zeros,
            DatlConditioningMode::Uniform => ConditioningMode::Uniform,
            DatlConditioningMode::NuisancePosterior => ConditioningMode::NuisancePosterior,
        }
    }
}

/// Synthetic generator settings.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatlSynthConfig {
    pub num_subjects: usize,
    pub num_classes: usize,
    pub channels: usize,
    pub samples: usize,
    pub task_effect: f64,
    pub subject_effect: f64,
    pub noise: f64,
    pub trials_per_pair: usize,
    pub seed: u64,
}

/// Training and evaluation settings. `window == 0` disables windowing.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatlTrainConfig {
    pub lambda_a: f64,
    pub lambda_n: f64,
    pub r_n: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub conditioning_mode: DatlConditioningMode,
    pub encoder_hidden: usize,
    pub latent_dim: usize,
    pub head_hidden: usize,
    pub val_frac: f64,
    pub window: usize,
    pub stride: usize,
}

/// Accuracies of the classifier, adversary and nuisance network.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DatlAccuracy {
    pub main_acc: f64,
    pub adv_acc: f64,
    pub nuis_acc: f64,
}

pub struct DatlDataset {
    inner: Dataset,
}

pub struct DatlModel {
    inner: DisentangledModel,
    /// Standardization fitted with the model, applied before evaluation.
    stats: Option<ChannelStats>,
}

pub struct DatlSweepRow {
    inner: SweepRow,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DatlStatus {
    match err {
        Error::Dimension { .. } | Error::Validation(_) => DatlStatus::Validation,
        Error::Parse { .. } | Error::Json(_) => DatlStatus::Parse,
        Error::Io { .. } => DatlStatus::Io,
        Error::NonFinite(_) => DatlStatus::NonFinite,
        Error::State(_) => DatlStatus::State,
    }
}

struct Failure(DatlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(DatlStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DatlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DatlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DatlStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(invalid("path is null"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid("output pointer is null"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid("handle is null"))
}

fn loso_config(c: &DatlTrainConfig) -> LosoConfig {
    let defaults = LosoConfig::default();
    LosoConfig {
        train: TrainConfig {
            lambda_a: c.lambda_a,
            lambda_n: c.lambda_n,
            r_n: c.r_n,
            sgd: SgdConfig {
                learning_rate: c.learning_rate,
                batch_size: c.batch_size,
                epochs: c.epochs,
            },
            seed: c.seed,
            conditioning_mode: c.conditioning_mode.into(),
            early_stop_patience: c.early_stop_patience,
            ..defaults.train
        },
        architecture: datl_core::eval::Architecture {
            encoder_hidden: c.encoder_hidden,
            latent_dim: c.latent_dim,
            head_hidden: c.head_hidden,
        },
        val_frac: c.val_frac,
        windowing: (c.window > 0).then_some(Windowing {
            window: c.window,
            stride: c.stride,
        }),
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn datl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn datl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn datl_synth_config_default() -> DatlSynthConfig {
    let d = SyntheticConfig::default();
    DatlSynthConfig {
        num_subjects: d.num_subjects,
        num_classes: d.num_classes,
        channels: d.channels,
        samples: d.samples,
        task_effect: d.task_effect,
        subject_effect: d.subject_effect,
        noise: d.noise,
        trials_per_pair: d.trials_per_pair,
        seed: d.seed,
    }
}

#[no_mangle]
pub extern "C" fn datl_train_config_default() -> DatlTrainConfig {
    let d = LosoConfig::default();
    DatlTrainConfig {
        lambda_a: d.train.lambda_a,
        lambda_n: d.train.lambda_n,
        r_n: d.train.r_n,
        learning_rate: d.train.sgd.learning_rate,
        batch_size: d.train.sgd.batch_size,
        epochs: d.train.sgd.epochs,
        early_stop_patience: d.train.early_stop_patience,
        seed: d.train.seed,
        conditioning_mode: DatlConditioningMode::NuisancePosterior,
        encoder_hidden: d.architecture.encoder_hidden,
        latent_dim: d.architecture.latent_dim,
        head_hidden: d.architecture.head_hidden,
        val_frac: d.val_frac,
        window: 0,
        stride: 0,
    }
}

/// Generates a synthetic dataset.
///
/// # Safety
/// `config` must point to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn datl_synth_generate(config: *const DatlSynthConfig, out: *mut *mut DatlDataset) -> DatlStatus {
    guard(|| {
        let c = handle(config)?;
        let out = out_arg(out)?;
        let data = synth_generate(&SyntheticConfig {
            num_subjects: c.num_subjects,
            num_classes: c.num_classes,
            channels: c.channels,
            samples: c.samples,
            task_effect: c.task_effect,
            subject_effect: c.subject_effect,
            noise: c.noise,
            trials_per_pair: c.trials_per_pair,
            seed: c.seed,
        })?;
        *out = Box::into_raw(Box::new(DatlDataset { inner: data }));
        Ok(())
    })
}

/// Loads a dataset manifest, keeping one relaxation trial per subject.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn datl_dataset_load(manifest_path: *const c_char, out: *mut *mut DatlDataset) -> DatlStatus {
    guard(|| {
        let path = path_arg(manifest_path)?;
        let out = out_arg(out)?;
        let data = dedup_relaxation(&load_dataset(&path)?, RELAXATION_LABEL);
        *out = Box::into_raw(Box::new(DatlDataset { inner: data }));
        Ok(())
    })
}

/// Number of trials, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn datl_dataset_num_trials(dataset: *const DatlDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// Number of subject classes, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn datl_dataset_num_subjects(dataset: *const DatlDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.num_subjects)
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn datl_dataset_free(dataset: *mut DatlDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains on every subject except `held_out_subject` and returns the model
/// together with the held-out accuracies.
///
/// # Safety
/// Pointers must be valid; `out_accuracy` may be null.
#[no_mangle]
pub unsafe extern "C" fn datl_train_fold(
    dataset: *const DatlDataset,
    config: *const DatlTrainConfig,
    held_out_subject: usize,
    out_model: *mut *mut DatlModel,
    out_accuracy: *mut DatlAccuracy,
) -> DatlStatus {
    guard(|| {
        let data = handle(dataset)?;
        let cfg = loso_config(handle(config)?);
        let out_model = out_arg(out_model)?;
        let (fitted, fold) = fit_fold(&data.inner, &cfg, held_out_subject, None)?;
        let Some((model, stats)) = fitted else {
            return Err(Failure(
                DatlStatus::NonFinite,
                fold.failed.unwrap_or_else(|| "training diverged".into()),
            ));
        };
        if let Some(acc) = out_accuracy.as_mut() {
            *acc = DatlAccuracy {
                main_acc: fold.main_acc,
                adv_acc: fold.adv_acc,
                nuis_acc: fold.nuis_acc,
            };
        }
        *out_model = Box::into_raw(Box::new(DatlModel {
            inner: model,
            stats: Some(stats),
        }));
        Ok(())
    })
}

/// Loads a checkpoint written by [`datl_model_save`] or `datl train`. The
/// loaded model applies no standardization.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn datl_model_load(path: *const c_char, out: *mut *mut DatlModel) -> DatlStatus {
    guard(|| {
        let path = path_arg(path)?;
        let out = out_arg(out)?;
        let model = DisentangledModel::load(&path)?;
        *out = Box::into_raw(Box::new(DatlModel { inner: model, stats: None }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn datl_model_save(model: *const DatlModel, path: *const c_char) -> DatlStatus {
    guard(|| {
        let model = handle(model)?;
        let path = path_arg(path)?;
        model.inner.save(&path)?;
        Ok(())
    })
}

/// Scores all three heads on every trial of `dataset`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn datl_model_evaluate(
    model: *const DatlModel,
    dataset: *const DatlDataset,
    mode: DatlConditioningMode,
    out: *mut DatlAccuracy,
) -> DatlStatus {
    guard(|| {
        let model = handle(model)?;
        let data = handle(dataset)?;
        let out = out_arg(out)?;
        let trials = match &model.stats {
            Some(stats) => data.inner.trials.iter().map(|t| stats.apply(t)).collect::<Result<Vec<_>, _>>()?,
            None => data.inner.trials.clone(),
        };
        let ev = evaluate(&model.inner, &Samples::from_trials(&trials)?, mode.into())?;
        *out = DatlAccuracy {
            main_acc: ev.main_acc(),
            adv_acc: ev.adv_acc(),
            nuis_acc: ev.nuis_acc(),
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn datl_model_free(model: *mut DatlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Leave-one-subject-out evaluation on `jobs` worker threads.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn datl_run_loso(
    dataset: *const DatlDataset,
    config: *const DatlTrainConfig,
    jobs: usize,
    out: *mut *mut DatlSweepRow,
) -> DatlStatus {
    guard(|| {
        let data = handle(dataset)?;
        let cfg = loso_config(handle(config)?);
        let out = out_arg(out)?;
        let row = run_loso(&data.inner, &cfg, &RunOptions { jobs, log_dir: None })?;
        *out = Box::into_raw(Box::new(DatlSweepRow { inner: row }));
        Ok(())
    })
}

/// Pooled accuracies of a LOSO run.
///
/// # Safety
/// `row` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn datl_sweep_row_accuracy(row: *const DatlSweepRow, out: *mut DatlAccuracy) -> DatlStatus {
    guard(|| {
        let row = &handle(row)?.inner;
        *out_arg(out)? = DatlAccuracy {
            main_acc: row.main_acc,
            adv_acc: row.adv_acc,
            nuis_acc: row.nuis_acc,
        };
        Ok(())
    })
}

/// Number of folds, or 0 for a null handle.
///
/// # Safety
/// `row` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn datl_sweep_row_num_folds(row: *const DatlSweepRow) -> usize {
    row.as_ref().map_or(0, |r| r.inner.folds.len())
}

/// Held-out subject and main accuracy of fold `index`. A diverged fold
/// reports [`DatlStatus::NonFinite`].
///
/// # Safety
/// `row` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn datl_sweep_row_fold(
    row: *const DatlSweepRow,
    index: usize,
    out_subject: *mut usize,
    out_main_acc: *mut f64,
) -> DatlStatus {
    guard(|| {
        let row = &handle(row)?.inner;
        let fold = row
            .folds
            .get(index)
            .ok_or_else(|| invalid(&format!("fold index {index} out of range ({} folds)", row.folds.len())))?;
        *out_arg(out_subject)? = fold.held_out_subject;
        if let Some(reason) = &fold.failed {
            return Err(Failure(DatlStatus::NonFinite, reason.clone()));
        }
        *out_arg(out_main_acc)? = fold.main_acc;
        Ok(())
    })
}

/// # Safety
/// `row` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn datl_sweep_row_free(row: *mut DatlSweepRow) {
    if !row.is_null() {
        drop(Box::from_raw(row));
    }
}

/// Finite-difference gradient check of a small random model; writes the
/// maximum relative error.
///
/// # Safety
/// `out_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn datl_gradcheck(seed: u64, eps: f64, out_error: *mut f64) -> DatlStatus {
    guard(|| {
        let out = out_arg(out_error)?;
        *out = random_model_grad_check(seed, eps)?;
        Ok(())
    })
}
