use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, TrialRecord};
use crate::error::{Error, Result};
use crate::nn::Matrix;

const STD_FLOOR: f64 = 1e-8;

/// Keeps only the lowest-`trial_id` trial carrying `relaxation_label` for
/// each subject. Other labels pass through untouched, order is preserved.
pub fn dedup_relaxation(dataset: &Dataset, relaxation_label: usize) -> Dataset {
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for t in dataset.trials.iter().filter(|t| t.label == relaxation_label) {
        first
            .entry(t.subject_id)
            .and_modify(|id| *id = (*id).min(t.trial_id))
            .or_insert(t.trial_id);
    }
    for s in dataset.subjects() {
        if !first.contains_key(&s) {
            log::warn!("subject {s} has no relaxation trial; keeping its other trials");
        }
    }
    let trials = dataset
        .trials
        .iter()
        .filter(|t| t.label != relaxation_label || first.get(&t.subject_id) == Some(&t.trial_id))
        .cloned()
        .collect();
    Dataset {
        trials,
        ..dataset.clone()
    }
}

/// Averages each whole second of `raw` and keeps the first `samples` seconds.
/// A trailing partial second is dropped.
pub fn downsample_to_1hz(raw: &[f64], native_rate: usize, samples: usize) -> Result<Vec<f64>> {
    if native_rate == 0 {
        return Err(Error::Validation("native rate must be at least 1 Hz".into()));
    }
    let seconds = raw.len() / native_rate;
    if seconds < samples {
        return Err(Error::Validation(format!(
            "signal covers {seconds} s at {native_rate} Hz, need {samples} s"
        )));
    }
    Ok(raw
        .chunks_exact(native_rate)
        .take(samples)
        .map(|w| w.iter().sum::<f64>() / native_rate as f64)
        .collect())
}

/// Per-channel mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Pools every sample of every trial, channel by channel.
    pub fn from_trials(trials: &[TrialRecord]) -> Result<Self> {
        let channels = trials
            .first()
            .map(|t| t.signal.rows())
            .ok_or_else(|| Error::Validation("cannot compute channel stats from zero trials".into()))?;
        let mut sum = vec![0.0; channels];
        let mut count = 0usize;
        for t in trials {
            if t.signal.rows() != channels {
                return Err(Error::dim(
                    "ChannelStats",
                    format!("{channels} channels"),
                    t.signal.shape_str(),
                ));
            }
            for (c, s) in sum.iter_mut().enumerate() {
                *s += t.signal.row(c).iter().sum::<f64>();
            }
            count += t.signal.cols();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; channels];
        for t in trials {
            for (c, acc) in sq.iter_mut().enumerate() {
                *acc += t.signal.row(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
        }
        let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, trial: &TrialRecord) -> Result<TrialRecord> {
        if trial.signal.rows() != self.mean.len() {
            return Err(Error::dim(
                "standardize",
                format!("{} channels", self.mean.len()),
                trial.signal.shape_str(),
            ));
        }
        let mut out = trial.clone();
        for c in 0..self.mean.len() {
            let (mu, sd) = (self.mean[c], self.std[c].max(STD_FLOOR));
            for v in out.signal.row_mut(c) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }
}

/// Z-scores every trial of `dataset` with statistics from `stats_source` only.
pub fn standardize(dataset: &Dataset, stats_source: &[TrialRecord]) -> Result<Dataset> {
    let stats = ChannelStats::from_trials(stats_source)?;
    let trials = dataset
        .trials
        .iter()
        .map(|t| stats.apply(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        trials,
        num_subjects: dataset.num_subjects,
        num_classes: dataset.num_classes,
        stats: Some(stats),
    })
}

/// Row-major: element `(c, t)` lands at `c * T + t`.
pub fn flatten(trial: &TrialRecord) -> Vec<f64> {
    trial.signal.as_slice().to_vec()
}

pub fn unflatten(flat: &[f64], channels: usize, samples: usize) -> Result<Matrix> {
    Matrix::from_vec(channels, samples, flat.to_vec())
}

/// Sliding windows over the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Windowing {
    pub window: usize,
    pub stride: usize,
}

/// Cuts each trial into windows of `window` samples every `stride` samples.
/// Windows keep their parent's subject, label and trial id.
pub fn window_trials(trials: &[TrialRecord], windowing: Windowing) -> Result<Vec<TrialRecord>> {
    let Windowing { window, stride } = windowing;
    if window == 0 || stride == 0 {
        return Err(Error::Validation("window and stride must be at least 1".into()));
    }
    let mut out = Vec::new();
    for t in trials {
        let len = t.signal.cols();
        if window > len {
            return Err(Error::Validation(format!(
                "window {window} longer than trial of {len} samples"
            )));
        }
        let mut start = 0;
        while start + window <= len {
            let signal = t.signal.column_slice(start, start + window)?;
            out.push(TrialRecord { signal, ..t.clone() });
            start += stride;
        }
    }
    Ok(out)
}
