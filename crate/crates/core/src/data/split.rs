use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{round_half_up, Dataset, TrialRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LosoSplit {
    pub train: Vec<TrialRecord>,
    pub val: Vec<TrialRecord>,
    pub test: Vec<TrialRecord>,
}

/// Holds out every trial of `held_out_subject` as the test set and splits
/// the remaining trials at random into train and validation, with
/// `round_half_up(val_frac * n_remaining)` validation trials.
pub fn loso_split(dataset: &Dataset, held_out_subject: usize, val_frac: f64, seed: u64) -> Result<LosoSplit> {
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::Validation(format!("val_frac must lie in (0, 1), got {val_frac}")));
    }
    let (test, mut rest): (Vec<_>, Vec<_>) = dataset
        .trials
        .iter()
        .cloned()
        .partition(|t| t.subject_id == held_out_subject);
    if test.is_empty() {
        return Err(Error::Validation(format!(
            "subject {held_out_subject} has no trials in the dataset"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rest.shuffle(&mut rng);
    let n_val = round_half_up(val_frac * rest.len() as f64).min(rest.len());
    let train = rest.split_off(n_val);
    Ok(LosoSplit {
        train,
        val: rest,
        test,
    })
}
