//! Alternating adversarial training.
//!
//! Each minibatch runs three sub-updates in a fixed order:
//!
//! 1. the adversary steps on `CE(s | z_a)` with everything else frozen;
//! 2. the nuisance network steps on `CE(s | z_n)` with everything else frozen;
//! 3. encoder and classifier (and, optionally, the nuisance network) step on
//!    `CE_task + lambda_N * CE_nuis - lambda_A * CE_adv`, with the adversary
//!    frozen. The negative adversary term pushes subject information out of
//!    `z_a`; the nuisance term pulls it into `z_n`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Evaluation};
use crate::model::{condition_matrix, ConditioningMode, DisentangledModel, HeadOutputs, LogitGrads, ModelConfig, ModelGrads};
use crate::nn::{sgd_step, softmax_cross_entropy, Encoder, GradSet, Matrix, Mlp, Parameterized, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_a: f64,
    pub lambda_n: f64,
    pub r_n: f64,
    pub sgd: SgdConfig,
    pub seed: u64,
    /// Classifier conditioning used when scoring validation and test trials.
    pub conditioning_mode: ConditioningMode,
    /// Epochs without a validation improvement before stopping.
    pub early_stop_patience: usize,
    pub adversary_steps: usize,
    /// Also step the nuisance network through the `lambda_N` term of the
    /// joint update.
    pub nuisance_in_joint_step: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_a: 0.0,
            lambda_n: 0.0,
            r_n: 0.0,
            sgd: SgdConfig::default(),
            seed: 0,
            conditioning_mode: ConditioningMode::default(),
            early_stop_patience: 50,
            adversary_steps: 1,
            nuisance_in_joint_step: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_a", self.lambda_a), ("lambda_n", self.lambda_n)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.r_n) {
            return Err(Error::Validation(format!("r_n must lie in [0, 1], got {}", self.r_n)));
        }
        if self.adversary_steps == 0 {
            return Err(Error::Validation("adversary_steps must be at least 1".into()));
        }
        self.sgd.validate()
    }
}

/// The encoder-classifier objective as a quantity to minimize:
/// `ce_task + lambda_n * ce_nuis - lambda_a * ce_adv`.
pub fn encoder_classifier_loss(ce_task: f64, ce_nuis: f64, ce_adv: f64, lambda_a: f64, lambda_n: f64) -> f64 {
    ce_task + lambda_n * ce_nuis - lambda_a * ce_adv
}

/// Model with the default encoder, initialized from `seed`.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<DisentangledModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DisentangledModel::new(config, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchUpdateReport {
    pub ce_task: f64,
    pub ce_adv: f64,
    pub ce_nuis: f64,
    pub encoder_loss: f64,
}

/// Cached forward pass for one batch, shared by the three sub-updates.
pub struct BatchState {
    pub outputs: HeadOutputs,
    z_a: Matrix,
    z_n: Matrix,
    subject_classes: Vec<usize>,
}

/// Forward pass with the classifier conditioned on the one-hot true subject.
/// Leaves encoder and classifier activations cached for [`joint_step`].
pub fn forward_batch<E: Encoder>(model: &mut DisentangledModel<E>, batch: &Samples) -> Result<BatchState> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let s_cond = condition_matrix(
        &batch.subjects,
        ConditioningMode::OnehotTrain,
        model.config.num_subjects,
        None,
    )?;
    let outputs = model.forward_all(&batch.x, &s_cond)?;
    let (z_a, z_n) = model.split(&outputs.z)?;
    Ok(BatchState {
        outputs,
        z_a,
        z_n,
        subject_classes: batch.subject_classes(),
    })
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{name} cross-entropy is {v}")))
    }
}

fn step_group(params: Vec<&mut [f64]>, grads: Option<GradSet>, lr: f64) -> Result<()> {
    match grads {
        Some(g) => sgd_step(params, &g, lr),
        None => Ok(()),
    }
}

/// Sub-update 1: the adversary alone steps on `CE(s | z_a)`. Returns the
/// cross-entropy before the (first) step.
pub fn adversary_step<E: Encoder>(
    model: &mut DisentangledModel<E>,
    state: &BatchState,
    config: &TrainConfig,
) -> Result<f64> {
    let mut first = None;
    for _ in 0..config.adversary_steps {
        let logits = model.adversary.forward(&state.z_a)?;
        let (ce, grad) = softmax_cross_entropy(&logits, &state.subject_classes)?;
        first.get_or_insert(finite("adversary", ce)?);
        let g = model.backward(
            &LogitGrads {
                adversary: Some(grad),
                ..LogitGrads::default()
            },
            false,
        )?;
        step_group(model.adversary.params_mut(), g.adversary, config.sgd.learning_rate)?;
    }
    Ok(first.unwrap_or(f64::NAN))
}

/// Sub-update 2: the nuisance network alone steps on `CE(s | z_n)`.
pub fn nuisance_step<E: Encoder>(
    model: &mut DisentangledModel<E>,
    state: &BatchState,
    config: &TrainConfig,
) -> Result<f64> {
    let logits = model.nuisance.forward(&state.z_n)?;
    let (ce, grad) = softmax_cross_entropy(&logits, &state.subject_classes)?;
    finite("nuisance", ce)?;
    let g = model.backward(
        &LogitGrads {
            nuisance: Some(grad),
            ..LogitGrads::default()
        },
        false,
    )?;
    step_group(model.nuisance.params_mut(), g.nuisance, config.sgd.learning_rate)?;
    Ok(ce)
}

/// Weighted head gradients for the current caches. Terms whose weight is
/// exactly zero are skipped, so they never touch the encoder gradient.
fn weighted_logit_grads(
    task_logits: &Matrix,
    adv_logits: &Matrix,
    nuis_logits: &Matrix,
    labels: &[usize],
    subject_classes: &[usize],
    lambda_a: f64,
    lambda_n: f64,
) -> Result<(f64, f64, f64, LogitGrads)> {
    let (ce_task, g_task) = softmax_cross_entropy(task_logits, labels)?;
    let (ce_adv, g_adv) = softmax_cross_entropy(adv_logits, subject_classes)?;
    let (ce_nuis, g_nuis) = softmax_cross_entropy(nuis_logits, subject_classes)?;
    finite("task", ce_task)?;
    finite("adversary", ce_adv)?;
    finite("nuisance", ce_nuis)?;
    let grads = LogitGrads {
        task: Some(g_task),
        adversary: (lambda_a != 0.0).then(|| g_adv.map(|v| -lambda_a * v)),
        nuisance: (lambda_n != 0.0).then(|| g_nuis.map(|v| lambda_n * v)),
    };
    Ok((ce_task, ce_adv, ce_nuis, grads))
}

/// Sub-update 3: encoder and classifier (plus the nuisance network when
/// configured) step on the combined objective; the adversary is frozen.
/// Must follow [`forward_batch`] on the same batch with no other forward
/// pass through the encoder or classifier in between.
pub fn joint_step<E: Encoder>(
    model: &mut DisentangledModel<E>,
    state: &BatchState,
    batch: &Samples,
    config: &TrainConfig,
) -> Result<f64> {
    let (lambda_a, lambda_n) = (config.lambda_a, config.lambda_n);
    // Refresh head caches after sub-updates 1 and 2.
    let adv_logits = if lambda_a != 0.0 {
        model.adversary.forward(&state.z_a)?
    } else {
        model.adversary.predict(&state.z_a)?
    };
    let nuis_logits = if lambda_n != 0.0 {
        model.nuisance.forward(&state.z_n)?
    } else {
        model.nuisance.predict(&state.z_n)?
    };
    let (ce_task, ce_adv, ce_nuis, grads) = weighted_logit_grads(
        &state.outputs.y_logits,
        &adv_logits,
        &nuis_logits,
        &batch.labels,
        &state.subject_classes,
        lambda_a,
        lambda_n,
    )?;
    let g = model.backward(&grads, true)?;
    let lr = config.sgd.learning_rate;
    step_group(model.encoder.params_mut(), g.encoder, lr)?;
    step_group(model.classifier.params_mut(), g.classifier, lr)?;
    if config.nuisance_in_joint_step {
        step_group(model.nuisance.params_mut(), g.nuisance, lr)?;
    }
    Ok(encoder_classifier_loss(ce_task, ce_nuis, ce_adv, lambda_a, lambda_n))
}

/// One alternating update on a minibatch. Reported losses are measured
/// before any parameter changes.
pub fn train_batch<E: Encoder>(
    model: &mut DisentangledModel<E>,
    batch: &Samples,
    config: &TrainConfig,
) -> Result<BatchUpdateReport> {
    let state = forward_batch(model, batch)?;
    let subj = &state.subject_classes;
    let (ce_task, _) = softmax_cross_entropy(&state.outputs.y_logits, &batch.labels)?;
    let (ce_adv, _) = softmax_cross_entropy(&state.outputs.adv_logits, subj)?;
    let (ce_nuis, _) = softmax_cross_entropy(&state.outputs.nuis_logits, subj)?;
    finite("task", ce_task)?;
    adversary_step(model, &state, config)?;
    nuisance_step(model, &state, config)?;
    joint_step(model, &state, batch, config)?;
    Ok(BatchUpdateReport {
        ce_task,
        ce_adv,
        ce_nuis,
        encoder_loss: encoder_classifier_loss(ce_task, ce_nuis, ce_adv, config.lambda_a, config.lambda_n),
    })
}

/// Which cross-entropy terms to differentiate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub task: f64,
    pub nuisance: f64,
    pub adversary: f64,
}

impl TermWeights {
    /// Weights of the joint objective, `(1, lambda_n, -lambda_a)`.
    pub fn joint(lambda_a: f64, lambda_n: f64) -> Self {
        Self {
            task: 1.0,
            nuisance: lambda_n,
            adversary: -lambda_a,
        }
    }
}

/// `sum_k w_k * CE_k` on a fresh forward pass and its gradient w.r.t. every
/// parameter group reached by a nonzero term.
pub fn objective_gradients<E: Encoder>(
    model: &mut DisentangledModel<E>,
    batch: &Samples,
    weights: TermWeights,
) -> Result<(f64, ModelGrads)> {
    let state = forward_batch(model, batch)?;
    let subj = &state.subject_classes;
    let (ce_task, g_task) = softmax_cross_entropy(&state.outputs.y_logits, &batch.labels)?;
    let (ce_adv, g_adv) = softmax_cross_entropy(&state.outputs.adv_logits, subj)?;
    let (ce_nuis, g_nuis) = softmax_cross_entropy(&state.outputs.nuis_logits, subj)?;
    let scaled = |w: f64, g: Matrix| (w != 0.0).then(|| g.map(|v| w * v));
    let grads = LogitGrads {
        task: scaled(weights.task, g_task),
        adversary: scaled(weights.adversary, g_adv),
        nuisance: scaled(weights.nuisance, g_nuis),
    };
    let loss = weights.task * ce_task + weights.nuisance * ce_nuis + weights.adversary * ce_adv;
    Ok((loss, model.backward(&grads, true)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: f64,
    pub adv_loss: f64,
    pub nuis_loss: f64,
    pub encoder_loss: f64,
    pub val_main_acc: Option<f64>,
    pub val_adv_acc: Option<f64>,
    pub val_nuis_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl EpochHistory {
    /// Newline-delimited JSON, one object per epoch, tagged with `fold`.
    pub fn write_ndjson<W: Write>(&self, fold: usize, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            fold: usize,
            #[serde(flatten)]
            record: &'a EpochRecord,
        }
        for record in &self.epochs {
            let line = serde_json::to_string(&Line { fold, record }).map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Trains for up to `sgd.epochs` epochs with a per-epoch seeded shuffle and
/// returns the parameters from the epoch with the best validation main
/// accuracy. Ties go to the latest such epoch, so the subject heads keep
/// training while the main accuracy sits on a plateau; a tie also resets the
/// patience counter. Without validation data the final parameters are kept.
pub fn train<E: Encoder>(
    mut model: DisentangledModel<E>,
    train_set: &Samples,
    val_set: &Samples,
    config: &TrainConfig,
) -> Result<(DisentangledModel<E>, EpochHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = EpochHistory::default();
    let mut best: Option<(f64, DisentangledModel<E>)> = None;
    let mut since_best = 0;

    for epoch in 0..config.sgd.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut n_batches = 0.0;
        for chunk in order.chunks(config.sgd.batch_size) {
            let batch = train_set.select(chunk);
            let r = train_batch(&mut model, &batch, config)?;
            for (s, v) in sums.iter_mut().zip([r.ce_task, r.ce_adv, r.ce_nuis, r.encoder_loss]) {
                *s += v;
            }
            n_batches += 1.0;
        }
        let val: Option<Evaluation> = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&model, val_set, config.conditioning_mode)?)
        };
        history.epochs.push(EpochRecord {
            epoch,
            task_loss: sums[0] / n_batches,
            adv_loss: sums[1] / n_batches,
            nuis_loss: sums[2] / n_batches,
            encoder_loss: sums[3] / n_batches,
            val_main_acc: val.as_ref().map(Evaluation::main_acc),
            val_adv_acc: val.as_ref().map(Evaluation::adv_acc),
            val_nuis_acc: val.as_ref().map(Evaluation::nuis_acc),
        });

        let Some(val) = val else {
            history.best_epoch = epoch;
            continue;
        };
        let acc = val.main_acc();
        if best.as_ref().is_none_or(|(b, _)| acc >= *b) {
            best = Some((acc, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    let model = best.map_or(model, |(_, m)| m);
    Ok((model, history))
}

/// Gradient-check harness over all model parameters for a fixed batch and
/// term weighting.
pub struct ObjectiveProbe<'a> {
    pub model: DisentangledModel<Mlp>,
    pub batch: &'a Samples,
    pub weights: TermWeights,
}

impl crate::nn::GradCheckable for ObjectiveProbe<'_> {
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.model.params_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        let s_cond = condition_matrix(
            &self.batch.subjects,
            ConditioningMode::OnehotTrain,
            self.model.config.num_subjects,
            None,
        )?;
        let out = self.model.predict_all(&self.batch.x, &s_cond)?;
        let subj = self.batch.subject_classes();
        let (t, _) = softmax_cross_entropy(&out.y_logits, &self.batch.labels)?;
        let (a, _) = softmax_cross_entropy(&out.adv_logits, &subj)?;
        let (n, _) = softmax_cross_entropy(&out.nuis_logits, &subj)?;
        Ok(self.weights.task * t + self.weights.nuisance * n + self.weights.adversary * a)
    }

    fn gradients(&mut self) -> Result<GradSet> {
        let (_, g) = objective_gradients(&mut self.model, self.batch, self.weights)?;
        Ok(g.into_full_set(&self.model))
    }
}

/// Gradient check of the joint objective with every term active, on a small
/// randomly initialized model and random batch drawn from `seed`.
pub fn random_model_grad_check(seed: u64, eps: f64) -> Result<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        input_dim: rng.random_range(3..8),
        encoder_hidden: rng.random_range(3..7),
        latent_dim: rng.random_range(4..8),
        r_n: 0.5,
        head_hidden: rng.random_range(3..6),
        num_classes: rng.random_range(2..5),
        num_subjects: rng.random_range(2..5),
    };
    let mut model = DisentangledModel::new(config, &mut rng)?;
    // Zero-initialized biases can put a dead-encoder row exactly on a head's
    // ReLU kink, where finite differences are meaningless.
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let n = rng.random_range(3..9);
    let x: Vec<f64> = (0..n * config.input_dim).map(|_| rng.sample(StandardNormal)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..config.num_classes)).collect();
    let subjects: Vec<usize> = (0..n).map(|_| rng.random_range(1..=config.num_subjects)).collect();
    let batch = Samples {
        x: Matrix::from_vec(n, config.input_dim, x)?,
        labels,
        subjects,
        groups: (0..n).collect(),
        n_groups: n,
    };
    let mut probe = ObjectiveProbe {
        model,
        batch: &batch,
        weights: TermWeights::joint(rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)),
    };
    crate::nn::grad_check(&mut probe, eps)
}
