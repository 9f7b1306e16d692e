use datl_core::data::{synth_generate, Samples, SyntheticConfig};
use datl_core::eval::{evaluate, probe_subject_information, LatentSlice};
use datl_core::model::{ConditioningMode, DisentangledModel, ModelConfig};
use datl_core::nn::{sgd_step, softmax_cross_entropy, Encoder, Parameterized, SgdConfig};
use datl_core::training::{
    adversary_step, encoder_classifier_loss, forward_batch, init_model, objective_gradients, train, train_batch,
    TermWeights, TrainConfig,
};

fn synth(samples: usize, trials_per_pair: usize, subject_effect: f64, seed: u64) -> (Samples, ModelConfig) {
    let data = synth_generate(&SyntheticConfig {
        samples,
        trials_per_pair,
        subject_effect,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let samples = Samples::from_trials(&data.trials).unwrap();
    let mut cfg = ModelConfig::stress_dataset(0.0);
    cfg.input_dim = samples.x.cols();
    cfg.num_subjects = data.num_subjects;
    (samples, cfg)
}

fn bits(params: Vec<&[f64]>) -> Vec<u64> {
    params.iter().flat_map(|p| p.iter().map(|v| v.to_bits())).collect()
}

#[test]
fn zero_lambda_matches_plain_classifier_training() {
    let (samples, mcfg) = synth(10, 1, 1.0, 3);
    let cfg = TrainConfig::default();
    let mut model = init_model(mcfg, 3).unwrap();
    let mut plain = model.clone();
    for chunk in (0..samples.len()).collect::<Vec<_>>().chunks(16) {
        let batch = samples.select(chunk);
        train_batch(&mut model, &batch, &cfg).unwrap();

        let (_, g) = objective_gradients(&mut plain, &batch, TermWeights { task: 1.0, nuisance: 0.0, adversary: 0.0 }).unwrap();
        let lr = cfg.sgd.learning_rate;
        sgd_step(plain.encoder.params_mut(), &g.encoder.unwrap(), lr).unwrap();
        sgd_step(plain.classifier.params_mut(), &g.classifier.unwrap(), lr).unwrap();
    }
    assert_eq!(bits(model.encoder.params()), bits(plain.encoder.params()));
    assert_eq!(bits(model.classifier.params()), bits(plain.classifier.params()));
}

#[test]
fn zero_lambda_ignores_subject_head_settings() {
    let (samples, mcfg) = synth(10, 1, 1.0, 4);
    let a = TrainConfig {
        sgd: SgdConfig { epochs: 5, ..SgdConfig::default() },
        ..TrainConfig::default()
    };
    let b = TrainConfig {
        adversary_steps: 3,
        nuisance_in_joint_step: false,
        ..a
    };
    let empty = samples.select(&[]);
    let (ma, _) = train(init_model(mcfg, 4).unwrap(), &samples, &empty, &a).unwrap();
    let (mb, _) = train(init_model(mcfg, 4).unwrap(), &samples, &empty, &b).unwrap();
    assert_eq!(bits(ma.encoder.params()), bits(mb.encoder.params()));
    assert_eq!(bits(ma.classifier.params()), bits(mb.classifier.params()));
    assert_ne!(bits(ma.adversary.params()), bits(mb.adversary.params()));
}

#[test]
fn reported_losses_compose() {
    let (samples, mut mcfg) = synth(10, 1, 1.0, 5);
    mcfg.r_n = 0.2;
    let cfg = TrainConfig { lambda_a: 0.1, lambda_n: 0.005, r_n: 0.2, ..TrainConfig::default() };
    let mut model = init_model(mcfg, 5).unwrap();
    let r = train_batch(&mut model, &samples.select(&[0, 1, 2, 3, 4, 5]), &cfg).unwrap();
    assert_eq!(r.encoder_loss, encoder_classifier_loss(r.ce_task, r.ce_nuis, r.ce_adv, 0.1, 0.005));
}

#[test]
fn small_adversary_step_does_not_increase_its_loss() {
    let (samples, mcfg) = synth(10, 1, 1.0, 6);
    let cfg = TrainConfig {
        sgd: SgdConfig { learning_rate: 1e-4, ..SgdConfig::default() },
        ..TrainConfig::default()
    };
    let mut model = init_model(mcfg, 6).unwrap();
    let batch = samples.select(&(0..16).collect::<Vec<_>>());
    let state = forward_batch(&mut model, &batch).unwrap();
    let before = adversary_step(&mut model, &state, &cfg).unwrap();
    let (za, _) = model.split(&state.outputs.z).unwrap();
    let logits = model.adversary.predict(&za).unwrap();
    let (after, _) = softmax_cross_entropy(&logits, &batch.subject_classes()).unwrap();
    assert!(after <= before, "{after} > {before}");
}

#[test]
fn training_is_deterministic() {
    let (samples, mcfg) = synth(8, 1, 1.0, 7);
    let cfg = TrainConfig {
        lambda_a: 0.1,
        sgd: SgdConfig { epochs: 4, ..SgdConfig::default() },
        seed: 7,
        ..TrainConfig::default()
    };
    let val = samples.select(&[0, 5, 9]);
    let (a, ha) = train(init_model(mcfg, 7).unwrap(), &samples, &val, &cfg).unwrap();
    let (b, hb) = train(init_model(mcfg, 7).unwrap(), &samples, &val, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn memorized_subjects_are_decoded_on_training_data() {
    let (samples, mcfg) = synth(10, 2, 1.0, 8);
    let cfg = TrainConfig {
        sgd: SgdConfig { epochs: 60, ..SgdConfig::default() },
        ..TrainConfig::default()
    };
    let (model, _) = train(init_model(mcfg, 8).unwrap(), &samples, &samples.select(&[]), &cfg).unwrap();
    let ev = evaluate(&model, &samples, ConditioningMode::OnehotTrain).unwrap();
    assert!(ev.adv_acc() > 0.5, "adv_acc {}", ev.adv_acc());
}

#[test]
fn untrained_encoder_carries_subject_information() {
    let (samples, mcfg) = synth(10, 5, 3.0, 9);
    let model: DisentangledModel = init_model(mcfg, 9).unwrap();
    let acc = probe_subject_information(&model, &samples, LatentSlice::Full, 9).unwrap();
    assert!(acc > 3.0 / 20.0, "probe accuracy {acc}");
}

#[test]
fn empty_nuisance_slice_probe_is_majority_baseline() {
    let (samples, mcfg) = synth(6, 1, 1.0, 10);
    let model = init_model(mcfg, 10).unwrap();
    let acc = probe_subject_information(&model, &samples, LatentSlice::Nuisance, 1).unwrap();
    // 80 trials, 4 per subject: the held-out 30% has at most a handful from any one subject.
    assert!(acc <= 4.0 / 24.0, "{acc}");
    let one = samples.select(&[0, 1, 2, 3]);
    assert!(probe_subject_information(&model, &one, LatentSlice::Adversary, 1).unwrap_err().is_validation());
}

fn final_val_adv(lambda_a: f64, seed: u64) -> (f64, f64) {
    let (samples, mcfg) = synth(10, 3, 2.0, seed);
    let n = samples.len();
    let val: Vec<usize> = (0..n).filter(|i| i % 5 == 0).collect();
    let fit: Vec<usize> = (0..n).filter(|i| i % 5 != 0).collect();
    let cfg = TrainConfig {
        lambda_a,
        sgd: SgdConfig { epochs: 60, ..SgdConfig::default() },
        seed,
        ..TrainConfig::default()
    };
    let (model, history) = train(init_model(mcfg, seed).unwrap(), &samples.select(&fit), &samples.select(&val), &cfg).unwrap();
    let last = history.epochs.last().unwrap().val_adv_acc.unwrap();
    let probe = probe_subject_information(&model, &samples, LatentSlice::Adversary, seed).unwrap();
    (last, probe)
}

#[test]
fn adversarial_training_removes_subject_information() {
    let mut below = 0;
    let mut probe_ok = 0;
    for seed in 1..=5 {
        let (base_adv, base_probe) = final_val_adv(0.0, seed);
        let (adv_adv, adv_probe) = final_val_adv(0.1, seed);
        below += usize::from(adv_adv < base_adv);
        probe_ok += usize::from(adv_probe <= base_probe);
    }
    assert!(below >= 3, "adversary below baseline in {below}/5 seeds");
    assert!(probe_ok >= 3, "probe on z_a not above baseline in {probe_ok}/5 seeds");
}
