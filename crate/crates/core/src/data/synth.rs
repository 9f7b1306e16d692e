//! Trials drawn as `X[c, t] = mu_y[c, t] + nu_s[c] + eps`: a fixed pattern
//! per class, a constant offset per subject and channel, and i.i.d. noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, TrialRecord};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
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

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_subjects: 20,
            num_classes: 4,
            channels: 7,
            samples: 300,
            task_effect: 1.0,
            subject_effect: 1.0,
            noise: 0.5,
            trials_per_pair: 1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.task_effect, self.subject_effect, self.noise];
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Validation(format!("effect scales must be >= 0, got {sigmas:?}")));
        }
        if self.num_subjects == 0
            || self.num_classes == 0
            || self.channels == 0
            || self.samples == 0
            || self.trials_per_pair == 0
        {
            return Err(Error::Validation("synthetic counts must all be at least 1".into()));
        }
        Ok(())
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v * scale
        })
        .collect()
}

/// Subjects `1..=S`; each subject gets `trials_per_pair` trials per class
/// with `trial_id = label * trials_per_pair + repetition`.
pub fn synth_generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (c, t) = (cfg.channels, cfg.samples);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let class_patterns: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| normals(&mut rng, c * t, cfg.task_effect))
        .collect();
    let subject_offsets: Vec<Vec<f64>> = (0..cfg.num_subjects)
        .map(|_| normals(&mut rng, c, cfg.subject_effect))
        .collect();

    let mut trials = Vec::with_capacity(cfg.num_subjects * cfg.num_classes * cfg.trials_per_pair);
    for s in 0..cfg.num_subjects {
        for y in 0..cfg.num_classes {
            for rep in 0..cfg.trials_per_pair {
                let noise = normals(&mut rng, c * t, cfg.noise);
                let values = (0..c * t)
                    .map(|i| class_patterns[y][i] + subject_offsets[s][i / t] + noise[i])
                    .collect();
                trials.push(TrialRecord {
                    subject_id: s + 1,
                    label: y,
                    trial_id: y * cfg.trials_per_pair + rep,
                    signal: Matrix::from_vec(c, t, values)?,
                });
            }
        }
    }
    Ok(Dataset::new(trials, cfg.num_subjects, cfg.num_classes))
}
