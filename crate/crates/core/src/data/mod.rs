//! Trials, datasets, ingestion of the canonical CSV layout, preprocessing,
//! leave-one-subject-out splitting and a synthetic generator.

mod io;
mod preprocess;
mod split;
mod synth;

pub use io::{load_dataset, load_dataset_with, write_dataset, CHANNEL_NAMES, MANIFEST_HEADER};
pub use preprocess::{
    dedup_relaxation, downsample_to_1hz, flatten, standardize, unflatten, window_trials,
    ChannelStats, Windowing,
};
pub use split::{loso_split, LosoSplit};
pub use synth::{synth_generate, SyntheticConfig};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Channels in the wearable recordings.
pub const NUM_CHANNELS: usize = 7;
/// One-second samples per trial.
pub const NUM_SAMPLES: usize = 300;
/// Stress states: physical, cognitive, emotional, relaxation.
pub const NUM_STRESS_LABELS: usize = 4;
pub const LABEL_NAMES: [&str; NUM_STRESS_LABELS] = ["physical", "cognitive", "emotional", "relaxation"];
pub const RELAXATION_LABEL: usize = 3;

/// Round-half-up used wherever a fraction becomes a count.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// 1-based subject id.
    pub subject_id: usize,
    pub label: usize,
    pub trial_id: usize,
    /// `channels x samples`
    pub signal: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trials: Vec<TrialRecord>,
    pub num_subjects: usize,
    pub num_classes: usize,
    /// Set once the trials have been standardized.
    pub stats: Option<ChannelStats>,
}

impl Dataset {
    pub fn new(trials: Vec<TrialRecord>, num_subjects: usize, num_classes: usize) -> Self {
        Self {
            trials,
            num_subjects,
            num_classes,
            stats: None,
        }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Sorted distinct subject ids present.
    pub fn subjects(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.trials.iter().map(|t| t.subject_id).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.trials.first().map(|t| t.signal.shape())
    }
}

/// Flattened design matrix plus labels, ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    /// One flattened trial (or window) per row.
    pub x: Matrix,
    pub labels: Vec<usize>,
    /// 1-based subject ids.
    pub subjects: Vec<usize>,
    /// Row -> parent trial index, for vote aggregation over windows.
    pub groups: Vec<usize>,
    pub n_groups: usize,
}

impl Samples {
    /// Rows in input order; rows sharing `(subject_id, trial_id)` share a group.
    pub fn from_trials(trials: &[TrialRecord]) -> Result<Self> {
        let width = trials.first().map_or(0, |t| t.signal.rows() * t.signal.cols());
        let mut values = Vec::with_capacity(trials.len() * width);
        let mut keys: HashMap<(usize, usize), usize> = HashMap::new();
        let mut groups = Vec::with_capacity(trials.len());
        for t in trials {
            let flat = flatten(t);
            if flat.len() != width {
                return Err(Error::dim(
                    "Samples::from_trials",
                    format!("{width} features"),
                    format!("trial {} of subject {} has {}", t.trial_id, t.subject_id, flat.len()),
                ));
            }
            values.extend_from_slice(&flat);
            let key = (t.subject_id, t.trial_id);
            let next = keys.len();
            groups.push(*keys.entry(key).or_insert(next));
        }
        Ok(Self {
            x: Matrix::from_vec(trials.len(), width, values)?,
            labels: trials.iter().map(|t| t.label).collect(),
            subjects: trials.iter().map(|t| t.subject_id).collect(),
            groups,
            n_groups: keys.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Subject ids shifted to 0-based class indices.
    pub fn subject_classes(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s - 1).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Samples {
        let mut remap: Vec<Option<usize>> = vec![None; self.n_groups];
        let mut groups = Vec::with_capacity(idx.len());
        let mut n_groups = 0;
        for &i in idx {
            let g = self.groups[i];
            let ng = *remap[g].get_or_insert_with(|| {
                n_groups += 1;
                n_groups - 1
            });
            groups.push(ng);
        }
        Samples {
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            subjects: idx.iter().map(|&i| self.subjects[i]).collect(),
            groups,
            n_groups,
        }
    }
}
