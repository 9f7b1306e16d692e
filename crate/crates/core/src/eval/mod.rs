//! Leave-one-subject-out evaluation, hyperparameter sweeps, configuration
//! selection, latent probes and report files.

mod loso;
mod probe;
mod report;
mod select;

pub use loso::{fit_fold, run_fold, run_loso, sweep, sweep_repeated, Architecture, LosoConfig, RunOptions};
pub use probe::{fit_softmax_regression, probe_subject_information, LatentSlice, SoftmaxRegression};
pub use report::{
    box_stats, emit_reports, write_repeats, quantile, read_per_subject, read_sweep_table, BoxStats, FoldEntry, ReportRow,
    PER_SUBJECT_FILE, SWEEP_REPEATS_FILE, SWEEP_TABLE_FILE,
};
pub use select::select_config;

use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::model::{ConditioningMode, DisentangledModel};
use crate::nn::Encoder;

/// One hyperparameter point `(lambda_A, lambda_N, r_N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda_a: f64,
    pub lambda_n: f64,
    pub r_n: f64,
}

impl GridPoint {
    pub const fn new(lambda_a: f64, lambda_n: f64, r_n: f64) -> Self {
        Self {
            lambda_a,
            lambda_n,
            r_n,
        }
    }
}

/// Non-adversarial, two adversarial, and five disentangled settings.
pub const TABLE1_GRID: [GridPoint; 8] = [
    GridPoint::new(0.0, 0.0, 0.0),
    GridPoint::new(0.005, 0.0, 0.0),
    GridPoint::new(0.1, 0.0, 0.0),
    GridPoint::new(0.1, 0.001, 0.2),
    GridPoint::new(0.1, 0.005, 0.2),
    GridPoint::new(0.1, 0.05, 0.2),
    GridPoint::new(0.1, 0.1, 0.2),
    GridPoint::new(0.1, 0.2, 0.2),
];

/// Reads a grid CSV with header `lambda_a,lambda_n,r_n`.
pub fn read_grid_file(path: &std::path::Path) -> Result<Vec<GridPoint>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        file: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut grid = Vec::new();
    for (i, row) in reader.deserialize::<GridPoint>().enumerate() {
        grid.push(row.map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line: i + 2,
            msg: e.to_string(),
        })?);
    }
    if grid.is_empty() {
        return Err(Error::Validation(format!("grid file {} has no rows", path.display())));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPrediction {
    pub subject_id: usize,
    pub y_true: usize,
    pub y_pred: usize,
    /// 1-based subject predicted by the adversary.
    pub s_pred_adv: usize,
    /// 1-based subject predicted by the nuisance network.
    pub s_pred_nuis: usize,
}

/// Counts of correct argmax decisions per head, one unit per trial. When
/// trials were windowed, each head's trial decision is the majority vote of
/// its windows (ties to the lowest index).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub main_correct: usize,
    pub adv_correct: usize,
    pub nuis_correct: usize,
    pub records: Vec<TrialPrediction>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Evaluation {
    pub fn main_acc(&self) -> f64 {
        ratio(self.main_correct, self.n)
    }

    pub fn adv_acc(&self) -> f64 {
        ratio(self.adv_correct, self.n)
    }

    pub fn nuis_acc(&self) -> f64 {
        ratio(self.nuis_correct, self.n)
    }
}

fn vote(preds: &[usize], groups: &[usize], n_groups: usize, n_classes: usize) -> Vec<usize> {
    let mut counts = vec![vec![0usize; n_classes]; n_groups];
    for (&p, &g) in preds.iter().zip(groups) {
        counts[g][p] += 1;
    }
    counts
        .iter()
        .map(|c| {
            let mut best = 0;
            for (j, &v) in c.iter().enumerate() {
                if v > c[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Argmax decoding of all three heads, with the classifier conditioned per
/// `mode`.
pub fn evaluate<E: Encoder>(
    model: &DisentangledModel<E>,
    samples: &Samples,
    mode: ConditioningMode,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Validation("cannot evaluate on zero trials".into()));
    }
    let out = model.infer(&samples.x, &samples.subjects, mode)?;
    let (l, s) = (model.config.num_classes, model.config.num_subjects);
    let y_pred = vote(&out.y_logits.argmax_rows(), &samples.groups, samples.n_groups, l);
    let adv_pred = vote(&out.adv_logits.argmax_rows(), &samples.groups, samples.n_groups, s);
    let nuis_pred = vote(&out.nuis_logits.argmax_rows(), &samples.groups, samples.n_groups, s);

    // first row of each group carries its labels
    let mut first_row = vec![usize::MAX; samples.n_groups];
    for (row, &g) in samples.groups.iter().enumerate() {
        if first_row[g] == usize::MAX {
            first_row[g] = row;
        }
    }
    let mut ev = Evaluation {
        n: samples.n_groups,
        ..Evaluation::default()
    };
    for (g, &row) in first_row.iter().enumerate() {
        let rec = TrialPrediction {
            subject_id: samples.subjects[row],
            y_true: samples.labels[row],
            y_pred: y_pred[g],
            s_pred_adv: adv_pred[g] + 1,
            s_pred_nuis: nuis_pred[g] + 1,
        };
        ev.main_correct += usize::from(rec.y_pred == rec.y_true);
        ev.adv_correct += usize::from(rec.s_pred_adv == rec.subject_id);
        ev.nuis_correct += usize::from(rec.s_pred_nuis == rec.subject_id);
        ev.records.push(rec);
    }
    Ok(ev)
}

/// Outcome of one held-out subject. The main classifier is scored on the
/// held-out subject's trials. The two subject heads are scored on the fold's
/// validation trials, whose subjects were seen in training: a held-out
/// subject's id is never a training target, so subject decoding on the test
/// trials would be zero by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out_subject: usize,
    pub n_test_trials: usize,
    pub main_correct: usize,
    pub n_val_trials: usize,
    pub adv_correct: usize,
    pub nuis_correct: usize,
    pub main_acc: f64,
    pub adv_acc: f64,
    pub nuis_acc: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Set when training diverged; counts above are then zero.
    pub failed: Option<String>,
    pub predictions: Vec<TrialPrediction>,
}

impl FoldResult {
    pub fn failed(held_out_subject: usize, reason: String) -> Self {
        Self {
            held_out_subject,
            n_test_trials: 0,
            main_correct: 0,
            n_val_trials: 0,
            adv_correct: 0,
            nuis_correct: 0,
            main_acc: 0.0,
            adv_acc: 0.0,
            nuis_acc: 0.0,
            best_epoch: 0,
            epochs_run: 0,
            failed: Some(reason),
            predictions: Vec::new(),
        }
    }
}

/// All folds for one grid point, with accuracies pooled over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: GridPoint,
    pub main_acc: f64,
    pub adv_acc: f64,
    pub nuis_acc: f64,
    pub n_folds_failed: usize,
    pub folds: Vec<FoldResult>,
}

impl SweepRow {
    pub fn from_folds(point: GridPoint, folds: Vec<FoldResult>) -> Self {
        let ok = || folds.iter().filter(|f| f.failed.is_none());
        let main = ok().map(|f| f.main_correct).sum();
        let n_test = ok().map(|f| f.n_test_trials).sum();
        let adv = ok().map(|f| f.adv_correct).sum();
        let nuis = ok().map(|f| f.nuis_correct).sum();
        let n_val = ok().map(|f| f.n_val_trials).sum();
        Self {
            point,
            main_acc: ratio(main, n_test),
            adv_acc: ratio(adv, n_val),
            nuis_acc: ratio(nuis, n_val),
            n_folds_failed: folds.iter().filter(|f| f.failed.is_some()).count(),
            folds,
        }
    }

    pub fn n_test_trials(&self) -> usize {
        self.folds.iter().filter(|f| f.failed.is_none()).map(|f| f.n_test_trials).sum()
    }

    pub fn n_val_trials(&self) -> usize {
        self.folds.iter().filter(|f| f.failed.is_none()).map(|f| f.n_val_trials).sum()
    }
}
