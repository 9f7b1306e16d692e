//! Encoder with a split latent code and three heads: an adversary reading
//! `z_a`, a nuisance network reading `z_n`, and a subject-conditioned main
//! classifier reading the whole of `z`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Encoder, GradSet, Matrix, Mlp, Parameterized};

/// How the classifier's subject slot is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// One-hot of the trial's subject id.
    OnehotTrain,
    Zeros,
    Uniform,
    /// Softmax of the nuisance head's own logits for the trial.
    #[default]
    NuisancePosterior,
}

impl ConditioningMode {
    pub const ALL: [ConditioningMode; 4] = [
        ConditioningMode::OnehotTrain,
        ConditioningMode::Zeros,
        ConditioningMode::Uniform,
        ConditioningMode::NuisancePosterior,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditioningMode::OnehotTrain => "onehot_train",
            ConditioningMode::Zeros => "zeros",
            ConditioningMode::Uniform => "uniform",
            ConditioningMode::NuisancePosterior => "nuisance_posterior",
        }
    }
}

impl fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditioningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown conditioning mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Flattened trial length, `C * T`.
    pub input_dim: usize,
    pub encoder_hidden: usize,
    pub latent_dim: usize,
    pub r_n: f64,
    pub head_hidden: usize,
    pub num_classes: usize,
    pub num_subjects: usize,
}

impl ModelConfig {
    /// 7 channels x 300 one-second samples, 4 stress states, 20 subjects.
    pub fn stress_dataset(r_n: f64) -> Self {
        Self {
            input_dim: 7 * 300,
            encoder_hidden: 100,
            latent_dim: 100,
            r_n,
            head_hidden: 100,
            num_classes: 4,
            num_subjects: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.encoder_hidden == 0 || self.head_hidden == 0 {
            return Err(Error::Validation(
                "latent_dim, encoder_hidden and head_hidden must be at least 1".into(),
            ));
        }
        if self.num_classes < 2 || self.num_subjects < 1 {
            return Err(Error::Validation(format!(
                "need at least 2 classes and 1 subject, got L={} S={}",
                self.num_classes, self.num_subjects
            )));
        }
        nuisance_dim(self.latent_dim, self.r_n)?;
        Ok(())
    }

    pub fn nuisance_dim(&self) -> usize {
        nuisance_dim(self.latent_dim, self.r_n).unwrap_or(0)
    }

    pub fn adversary_dim(&self) -> usize {
        self.latent_dim - self.nuisance_dim()
    }
}

/// `round_half_up(d * r_n)`, the width of `z_n`.
pub fn nuisance_dim(latent_dim: usize, r_n: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&r_n) {
        return Err(Error::Validation(format!("r_N must lie in [0, 1], got {r_n}")));
    }
    let n = (latent_dim as f64 * r_n + 0.5).floor() as usize;
    Ok(n.min(latent_dim))
}

/// Splits `z` column-wise into `(z_a, z_n)`: the first `d - dim(z_n)`
/// columns feed the adversary, the rest the nuisance network.
pub fn split_latent(z: &Matrix, r_n: f64) -> Result<(Matrix, Matrix)> {
    let d = z.cols();
    let n_dim = nuisance_dim(d, r_n)?;
    let a_dim = d - n_dim;
    Ok((z.column_slice(0, a_dim)?, z.column_slice(a_dim, d)?))
}

/// Length-`num_subjects` condition vector for one trial. `subject` is 1-based.
pub fn condition_vector(
    subject: usize,
    mode: ConditioningMode,
    num_subjects: usize,
    nuisance_logits: Option<&[f64]>,
) -> Result<Vec<f64>> {
    match mode {
        ConditioningMode::OnehotTrain => {
            if subject == 0 || subject > num_subjects {
                return Err(Error::Validation(format!(
                    "subject {subject} outside 1..={num_subjects}"
                )));
            }
            let mut v = vec![0.0; num_subjects];
            v[subject - 1] = 1.0;
            Ok(v)
        }
        ConditioningMode::Zeros => Ok(vec![0.0; num_subjects]),
        ConditioningMode::Uniform => Ok(vec![1.0 / num_subjects as f64; num_subjects]),
        ConditioningMode::NuisancePosterior => {
            let logits = nuisance_logits.ok_or_else(|| {
                Error::Validation("nuisance_posterior conditioning needs nuisance logits".into())
            })?;
            if logits.len() != num_subjects {
                return Err(Error::dim(
                    "condition_vector",
                    format!("{num_subjects} subjects"),
                    format!("{} logits", logits.len()),
                ));
            }
            let m = Matrix::from_vec(1, num_subjects, logits.to_vec())?;
            Ok(softmax_rows(&m).into_vec())
        }
    }
}

/// Stacks [`condition_vector`] for a batch.
pub fn condition_matrix(
    subjects: &[usize],
    mode: ConditioningMode,
    num_subjects: usize,
    nuisance_logits: Option<&Matrix>,
) -> Result<Matrix> {
    if let Some(l) = nuisance_logits {
        if l.rows() != subjects.len() {
            return Err(Error::dim(
                "condition_matrix",
                format!("{} subjects", subjects.len()),
                format!("logits {}", l.shape_str()),
            ));
        }
    }
    let mut out = Matrix::zeros(subjects.len(), num_subjects);
    for (r, &s) in subjects.iter().enumerate() {
        let v = condition_vector(s, mode, num_subjects, nuisance_logits.map(|l| l.row(r)))?;
        out.row_mut(r).copy_from_slice(&v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    /// Latent code `[z_a, z_n]`.
    pub z: Matrix,
    pub y_logits: Matrix,
    pub adv_logits: Matrix,
    pub nuis_logits: Matrix,
}

/// Upstream gradients for each head's logits. `None` skips that head.
#[derive(Debug, Clone, Default)]
pub struct LogitGrads {
    pub task: Option<Matrix>,
    pub adversary: Option<Matrix>,
    pub nuisance: Option<Matrix>,
}

/// Per-group parameter gradients. `None` means the group was not touched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelGrads {
    pub encoder: Option<GradSet>,
    pub adversary: Option<GradSet>,
    pub nuisance: Option<GradSet>,
    pub classifier: Option<GradSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisentangledModel<E = Mlp> {
    pub config: ModelConfig,
    pub encoder: E,
    pub adversary: Mlp,
    pub nuisance: Mlp,
    pub classifier: Mlp,
}

impl DisentangledModel<Mlp> {
    /// Glorot-initialized model with the default two-layer dense encoder.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = Mlp::new(rng, config.input_dim, config.encoder_hidden, config.latent_dim);
        Self::with_encoder(config, encoder, rng)
    }
}

impl<E: Encoder> DisentangledModel<E> {
    pub fn with_encoder<R: Rng + ?Sized>(config: ModelConfig, encoder: E, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if encoder.input_dim() != config.input_dim || encoder.output_dim() != config.latent_dim {
            return Err(Error::dim(
                "DisentangledModel::with_encoder",
                format!("config {}->{}", config.input_dim, config.latent_dim),
                format!("encoder {}->{}", encoder.input_dim(), encoder.output_dim()),
            ));
        }
        let s = config.num_subjects;
        let h = config.head_hidden;
        let adversary = Mlp::new(rng, config.adversary_dim(), h, s);
        let nuisance = Mlp::new(rng, config.nuisance_dim(), h, s);
        let classifier = Mlp::new(rng, config.latent_dim + s, h, config.num_classes);
        Ok(Self {
            config,
            encoder,
            adversary,
            nuisance,
            classifier,
        })
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::dim(
                "encode",
                format!("input {}", x.shape_str()),
                format!("input_dim {}", self.config.input_dim),
            ));
        }
        Ok(())
    }

    fn check_condition(&self, x: &Matrix, s_cond: &Matrix) -> Result<()> {
        if s_cond.shape() != (x.rows(), self.config.num_subjects) {
            return Err(Error::dim(
                "forward_all",
                format!("condition {}", s_cond.shape_str()),
                format!("expected {}x{}", x.rows(), self.config.num_subjects),
            ));
        }
        Ok(())
    }

    /// `z = layer2(relu(layer1(x)))`, shape `n x d`.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        self.encoder.predict(x)
    }

    pub fn split(&self, z: &Matrix) -> Result<(Matrix, Matrix)> {
        split_latent(z, self.config.r_n)
    }

    /// Evaluates all heads without caching activations.
    pub fn predict_all(&self, x: &Matrix, s_cond: &Matrix) -> Result<HeadOutputs> {
        self.check_condition(x, s_cond)?;
        let z = self.encode(x)?;
        self.heads_from_latent(&z, s_cond)
    }

    pub fn heads_from_latent(&self, z: &Matrix, s_cond: &Matrix) -> Result<HeadOutputs> {
        let (z_a, z_n) = self.split(z)?;
        Ok(HeadOutputs {
            adv_logits: self.adversary.predict(&z_a)?,
            nuis_logits: self.nuisance.predict(&z_n)?,
            y_logits: self.classifier.predict(&Matrix::hconcat(&[&z_a, &z_n, s_cond])?)?,
            z: z.clone(),
        })
    }

    /// Evaluates all heads, caching activations for [`Self::backward`].
    pub fn forward_all(&mut self, x: &Matrix, s_cond: &Matrix) -> Result<HeadOutputs> {
        self.check_input(x)?;
        self.check_condition(x, s_cond)?;
        let z = self.encoder.forward(x)?;
        let (z_a, z_n) = self.split(&z)?;
        Ok(HeadOutputs {
            adv_logits: self.adversary.forward(&z_a)?,
            nuis_logits: self.nuisance.forward(&z_n)?,
            y_logits: self.classifier.forward(&Matrix::hconcat(&[&z_a, &z_n, s_cond])?)?,
            z,
        })
    }

    /// Inference with the classifier conditioned per `mode`. `subjects` are
    /// 1-based ids, only read in `OnehotTrain` mode.
    pub fn infer(&self, x: &Matrix, subjects: &[usize], mode: ConditioningMode) -> Result<HeadOutputs> {
        if subjects.len() != x.rows() {
            return Err(Error::dim(
                "infer",
                format!("input {}", x.shape_str()),
                format!("{} subject ids", subjects.len()),
            ));
        }
        let z = self.encode(x)?;
        let (z_a, z_n) = self.split(&z)?;
        let nuis_logits = self.nuisance.predict(&z_n)?;
        let s_cond = condition_matrix(subjects, mode, self.config.num_subjects, Some(&nuis_logits))?;
        Ok(HeadOutputs {
            adv_logits: self.adversary.predict(&z_a)?,
            y_logits: self.classifier.predict(&Matrix::hconcat(&[&z_a, &z_n, &s_cond])?)?,
            nuis_logits,
            z,
        })
    }

    /// Backpropagates the given logit gradients through the cached forward
    /// pass. The encoder gradient is the sum of every supplied head's
    /// contribution through `z`; it is only computed when `with_encoder`.
    pub fn backward(&self, grads: &LogitGrads, with_encoder: bool) -> Result<ModelGrads> {
        let d = self.config.latent_dim;
        let a_dim = self.config.adversary_dim();
        let mut grad_z: Option<Matrix> = None;
        let mut out = ModelGrads::default();

        let mut accumulate = |gin: &Matrix, offset: usize| -> Result<()> {
            let gz = grad_z.get_or_insert_with(|| Matrix::zeros(gin.rows(), d));
            if gz.rows() != gin.rows() {
                return Err(Error::dim("backward", gz.shape_str(), gin.shape_str()));
            }
            for r in 0..gin.rows() {
                let src = gin.row(r);
                let dst = &mut gz.row_mut(r)[offset..offset + src.len().min(d - offset)];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += b;
                }
            }
            Ok(())
        };

        if let Some(g) = &grads.task {
            let (gin, mg) = self.classifier.backward_full(g)?;
            // drop the condition slice; it carries no parameters
            accumulate(&gin.column_slice(0, d)?, 0)?;
            out.classifier = Some(mg.into_set());
        }
        if let Some(g) = &grads.nuisance {
            let (gin, mg) = self.nuisance.backward_full(g)?;
            accumulate(&gin, a_dim)?;
            out.nuisance = Some(mg.into_set());
        }
        if let Some(g) = &grads.adversary {
            let (gin, mg) = self.adversary.backward_full(g)?;
            accumulate(&gin, 0)?;
            out.adversary = Some(mg.into_set());
        }
        if with_encoder {
            if let Some(gz) = grad_z {
                out.encoder = Some(self.encoder.backward(&gz)?);
            }
        }
        Ok(out)
    }
}

impl<E: Encoder> Parameterized for DisentangledModel<E> {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.params();
        p.extend(self.adversary.params());
        p.extend(self.nuisance.params());
        p.extend(self.classifier.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.params_mut();
        p.extend(self.adversary.params_mut());
        p.extend(self.nuisance.params_mut());
        p.extend(self.classifier.params_mut());
        p
    }
}

impl ModelGrads {
    /// Flattens into [`Parameterized::params`] order, zero-filling untouched groups.
    pub fn into_full_set<E: Encoder>(self, model: &DisentangledModel<E>) -> GradSet {
        fn fill(g: Option<GradSet>, p: Vec<&[f64]>) -> GradSet {
            g.unwrap_or_else(|| p.iter().map(|t| vec![0.0; t.len()]).collect())
        }
        let mut out = fill(self.encoder, model.encoder.params());
        out.extend(fill(self.adversary, model.adversary.params()));
        out.extend(fill(self.nuisance, model.nuisance.params()));
        out.extend(fill(self.classifier, model.classifier.params()));
        out
    }
}

const CHECKPOINT_FORMAT: &str = "datl-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint<M> {
    format: String,
    version: u32,
    model: M,
}

impl DisentangledModel<Mlp> {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            model: self,
        })?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint<Self> = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let m = ck.model;
        m.config.validate()?;
        let shapes_ok = m.encoder.input_dim() == m.config.input_dim
            && m.encoder.output_dim() == m.config.latent_dim
            && m.adversary.input_dim() == m.config.adversary_dim()
            && m.nuisance.input_dim() == m.config.nuisance_dim()
            && m.classifier.input_dim() == m.config.latent_dim + m.config.num_subjects
            && m.classifier.output_dim() == m.config.num_classes;
        if !shapes_ok {
            return Err(Error::Validation(
                "checkpoint parameter shapes disagree with its config".into(),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config(r_n: f64) -> ModelConfig {
        ModelConfig {
            input_dim: 6,
            encoder_hidden: 5,
            latent_dim: 10,
            r_n,
            head_hidden: 4,
            num_classes: 3,
            num_subjects: 5,
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn split_dims_follow_round_half_up() {
        assert_eq!(nuisance_dim(100, 0.2).unwrap(), 20);
        assert_eq!(nuisance_dim(10, 0.25).unwrap(), 3);
        assert_eq!(nuisance_dim(10, 0.0).unwrap(), 0);
        assert_eq!(nuisance_dim(10, 1.0).unwrap(), 10);
        let z = Matrix::zeros(2, 100);
        let (a, n) = split_latent(&z, 0.2).unwrap();
        assert_eq!((a.cols(), n.cols()), (80, 20));
        let (a, n) = split_latent(&z, 0.0).unwrap();
        assert_eq!((a.cols(), n.cols()), (100, 0));
    }

    #[test]
    fn split_rejects_out_of_range_ratio() {
        assert!(split_latent(&Matrix::zeros(1, 4), 1.5).is_err());
        assert!(split_latent(&Matrix::zeros(1, 4), -0.1).is_err());
    }

    #[test]
    fn condition_vectors() {
        let v = condition_vector(3, ConditioningMode::OnehotTrain, 20, None).unwrap();
        assert_eq!(v[2], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        let u = condition_vector(1, ConditioningMode::Uniform, 20, None).unwrap();
        assert!(u.iter().all(|&x| x == 0.05));
        let z = condition_vector(1, ConditioningMode::Zeros, 20, None).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
        let p = condition_vector(1, ConditioningMode::NuisancePosterior, 20, Some(&[0.7; 20])).unwrap();
        assert!(p.iter().all(|&x| (x - 0.05).abs() < 1e-15));
        assert!(condition_vector(1, ConditioningMode::NuisancePosterior, 20, None).is_err());
        assert!(condition_vector(21, ConditioningMode::OnehotTrain, 20, None).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in ConditioningMode::ALL {
            assert_eq!(m.as_str().parse::<ConditioningMode>().unwrap(), m);
        }
        assert!("bogus".parse::<ConditioningMode>().is_err());
    }

    #[test]
    fn zero_encoder_gives_zero_latent() {
        let mut m = DisentangledModel::new(small_config(0.2), &mut rng(1)).unwrap();
        for p in m.encoder.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        let z = m.encode(&Matrix::from_rows(&[[1.0; 6], [2.0; 6]]).unwrap()).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_is_deterministic_per_seed() {
        let x = crate::nn::init_glorot(&mut rng(9), 3, 6);
        let a = DisentangledModel::new(small_config(0.2), &mut rng(4)).unwrap();
        let b = DisentangledModel::new(small_config(0.2), &mut rng(4)).unwrap();
        assert_eq!(a.encode(&x).unwrap(), b.encode(&x).unwrap());
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let m = DisentangledModel::new(small_config(0.2), &mut rng(1)).unwrap();
        assert!(m.encode(&Matrix::zeros(1, 5)).unwrap_err().is_validation());
    }

    #[test]
    fn dataset_config_shapes_and_parameter_count() {
        let cfg = ModelConfig::stress_dataset(0.2);
        let m = DisentangledModel::new(cfg, &mut rng(2)).unwrap();
        let x = Matrix::zeros(3, 2100);
        let s = condition_matrix(&[1, 2, 3], ConditioningMode::OnehotTrain, 20, None).unwrap();
        let out = m.predict_all(&x, &s).unwrap();
        assert_eq!(m.encode(&x).unwrap().shape(), (3, 100));
        assert_eq!(out.y_logits.shape(), (3, 4));
        assert_eq!(out.adv_logits.shape(), (3, 20));
        assert_eq!(out.nuis_logits.shape(), (3, 20));

        let encoder = (2100 * 100 + 100) + (100 * 100 + 100);
        let adversary = (80 * 100 + 100) + (100 * 20 + 20);
        let nuisance = (20 * 100 + 100) + (100 * 20 + 20);
        let classifier = (120 * 100 + 100) + (100 * 4 + 4);
        assert_eq!(m.encoder.param_count(), encoder);
        assert_eq!(m.param_count(), encoder + adversary + nuisance + classifier);
        assert_eq!(m.param_count(), 246_944);
    }

    #[test]
    fn empty_nuisance_slice_gives_constant_logits() {
        let m = DisentangledModel::new(small_config(0.0), &mut rng(3)).unwrap();
        let x = crate::nn::init_glorot(&mut rng(8), 4, 6);
        let s = condition_matrix(&[1, 2, 3, 4], ConditioningMode::OnehotTrain, 5, None).unwrap();
        let out = m.predict_all(&x, &s).unwrap();
        for r in 1..4 {
            assert_eq!(out.nuis_logits.row(r), out.nuis_logits.row(0));
        }
    }

    #[test]
    fn adversary_ignores_nuisance_slice_and_vice_versa() {
        let m = DisentangledModel::new(small_config(0.3), &mut rng(5)).unwrap();
        let x = crate::nn::init_glorot(&mut rng(6), 2, 6);
        let s = condition_matrix(&[1, 2], ConditioningMode::OnehotTrain, 5, None).unwrap();
        let z = m.encode(&x).unwrap();
        let base = m.heads_from_latent(&z, &s).unwrap();
        let a_dim = m.config.adversary_dim();

        let mut zn = z.clone();
        for r in 0..zn.rows() {
            for c in a_dim..zn.cols() {
                zn.set(r, c, zn.get(r, c) + 0.37);
            }
        }
        let pert = m.heads_from_latent(&zn, &s).unwrap();
        assert_eq!(pert.adv_logits, base.adv_logits);
        assert_ne!(pert.nuis_logits, base.nuis_logits);

        let mut za = z.clone();
        for r in 0..za.rows() {
            for c in 0..a_dim {
                za.set(r, c, za.get(r, c) - 0.51);
            }
        }
        let pert = m.heads_from_latent(&za, &s).unwrap();
        assert_eq!(pert.nuis_logits, base.nuis_logits);
        assert_ne!(pert.adv_logits, base.adv_logits);
    }

    #[test]
    fn classifier_reads_the_condition() {
        let m = DisentangledModel::new(small_config(0.2), &mut rng(7)).unwrap();
        let x = crate::nn::init_glorot(&mut rng(10), 1, 6);
        let a = m.infer(&x, &[1], ConditioningMode::OnehotTrain).unwrap();
        let b = m.infer(&x, &[4], ConditioningMode::OnehotTrain).unwrap();
        assert_ne!(a.y_logits, b.y_logits);
        assert_eq!(a.adv_logits, b.adv_logits);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = DisentangledModel::new(small_config(0.2), &mut rng(11)).unwrap();
        let text = m.to_checkpoint_json().unwrap();
        let back = DisentangledModel::from_checkpoint_json(&text).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.params().iter().zip(m.params()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_rejects_foreign_format() {
        let m = DisentangledModel::new(small_config(0.2), &mut rng(12)).unwrap();
        let text = m.to_checkpoint_json().unwrap().replace("datl-checkpoint", "other");
        assert!(DisentangledModel::from_checkpoint_json(&text).is_err());
    }
}
