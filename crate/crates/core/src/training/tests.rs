use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dsp::MelSpectrogram;
use crate::model::{Model, ModelConfig};
use crate::numerics::{OpKind, Tape, Tensor};
use crate::text::{TokenSeq, EOS, SOS};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mel(frames: usize, seed: u64) -> Arc<MelSpectrogram> {
    let mut r = rng(seed);
    let data = (0..64 * frames).map(|_| r.random_range(-6.0f32..1.0)).collect();
    Arc::new(MelSpectrogram::new(64, frames, data).unwrap())
}

fn seq(words: &[usize]) -> TokenSeq {
    let mut ids = vec![SOS];
    ids.extend_from_slice(words);
    ids.push(EOS);
    TokenSeq::new(ids).unwrap()
}

fn clip(name: &str, seed: u64, captions: &[&[usize]]) -> ClipData {
    ClipData {
        name: name.into(),
        mel: mel(24, seed),
        captions: captions.iter().map(|c| seq(c)).collect(),
    }
}

fn three_clips() -> Vec<ClipData> {
    vec![
        clip("a.wav", 1, &[&[4, 5]]),
        clip("b.wav", 2, &[&[6, 7, 8]]),
        clip("c.wav", 3, &[&[9, 4]]),
    ]
}

#[test]
fn schedule_matches_examples() {
    let cfg = TrainConfig::default();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
    assert!(close(lr_schedule(2, &cfg).unwrap(), 2e-4));
    assert!(close(lr_schedule(10, &cfg).unwrap(), 5e-4));
    assert!(close(lr_schedule(20, &cfg).unwrap(), 5e-5));
    assert!(matches!(lr_schedule(0, &cfg), Err(crate::Error::Contract(_))));
}

#[test]
fn schedule_is_piecewise_over_all_epochs() {
    let cfg = TrainConfig::default();
    for epoch in 1..=30usize {
        let want = match epoch {
            1..=5 => 5e-4 * epoch as f64 / 5.0,
            6..=15 => 5e-4,
            16..=25 => 5e-5,
            _ => 5e-6,
        };
        let got = lr_schedule(epoch, &cfg).unwrap();
        assert!((got - want).abs() <= 1e-12 * want, "epoch {epoch}: {got} vs {want}");
    }
}

#[test]
fn one_negative_per_positive() {
    let clips = three_clips();
    let base = sample_positives(&clips, &mut rng(0)).unwrap();
    let ext = make_negatives(&clips, &base, 1.0, &mut rng(1)).unwrap();
    assert_eq!(ext.len(), 6);
    let negs: Vec<_> = ext.iter().filter(|e| e.y == 1).collect();
    assert_eq!(negs.len(), 3);
    for n in negs {
        assert_ne!(n.tokens, clips[n.clip_id].captions[0]);
        assert!(Arc::ptr_eq(&n.mel, &clips[n.clip_id].mel));
    }
}

#[test]
fn zero_ratio_returns_base() {
    let clips = three_clips();
    let base = sample_positives(&clips, &mut rng(0)).unwrap();
    let ext = make_negatives(&clips, &base, 0.0, &mut rng(1)).unwrap();
    assert_eq!(ext.len(), base.len());
    for (a, b) in ext.iter().zip(&base) {
        assert_eq!((a.clip_id, a.y, &a.tokens), (b.clip_id, b.y, &b.tokens));
    }
}

#[test]
fn ratio_floors_the_negative_count() {
    let clips = three_clips();
    let base = sample_positives(&clips, &mut rng(0)).unwrap();
    let ext = make_negatives(&clips, &base, 0.5, &mut rng(1)).unwrap();
    assert_eq!(ext.iter().filter(|e| e.y == 1).count(), 1);
    let ext = make_negatives(&clips, &base, 2.0, &mut rng(1)).unwrap();
    assert_eq!(ext.iter().filter(|e| e.y == 1).count(), 6);
}

#[test]
fn single_clip_has_no_negatives() {
    let clips = vec![clip("a.wav", 1, &[&[4, 5], &[5, 4]])];
    let base = sample_positives(&clips, &mut rng(0)).unwrap();
    assert!(matches!(
        make_negatives(&clips, &base, 1.0, &mut rng(1)),
        Err(crate::Error::Input(_))
    ));
}

#[test]
fn five_caption_clip_never_gets_its_own_caption() {
    let clips = vec![
        clip("x.wav", 1, &[&[4], &[5], &[6], &[7], &[8]]),
        clip("y.wav", 2, &[&[9], &[4], &[10], &[11], &[12]]),
        clip("z.wav", 3, &[&[13], &[14], &[5], &[15], &[16]]),
    ];
    let own: HashSet<&TokenSeq> = clips[0].captions.iter().collect();
    for seed in 0..1000 {
        let mut r = rng(seed);
        let base = sample_positives(&clips, &mut r).unwrap();
        for e in make_negatives(&clips, &base, 1.0, &mut r).unwrap() {
            if e.y == 1 && e.clip_id == 0 {
                assert!(!own.contains(&e.tokens), "seed {seed}");
            }
        }
    }
}

#[test]
fn negatives_are_deterministic_under_seed() {
    let clips = three_clips();
    let draw = |seed| {
        let mut r = rng(seed);
        let base = sample_positives(&clips, &mut r).unwrap();
        make_negatives(&clips, &base, 1.0, &mut r)
            .unwrap()
            .into_iter()
            .map(|e| (e.clip_id, e.y, e.tokens))
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(4), draw(4));
}

#[test]
fn cross_entropy_of_uniform_logits_is_log_v() {
    let mut tape = Tape::<f64>::new(false);
    let logits = tape.leaf(Tensor::zeros(&[3, 4]));
    let l = ce_loss(&mut tape, logits, &[0, 1, 3], &[true; 3]).unwrap();
    assert!((tape.value(l).item().unwrap() - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn cross_entropy_vanishes_with_margin() {
    let mut last = f64::INFINITY;
    for margin in [1.0, 5.0, 20.0, 50.0] {
        let mut tape = Tape::<f64>::new(false);
        let logits = tape.leaf(Tensor::new(&[1, 3], vec![0.0, margin, 0.0]).unwrap());
        let l = ce_loss(&mut tape, logits, &[1], &[true]).unwrap();
        let v = tape.value(l).item().unwrap();
        assert!(v < last);
        last = v;
    }
    assert!(last < 1e-20);
}

#[test]
fn masked_positions_leave_the_denominator() {
    let rows = vec![
        0.0, 1.0, 2.0, //
        1.0, 0.0, 0.0, //
        3.0, 0.0, 1.0, //
        0.5, 0.5, 0.0,
    ];
    let targets = [2, 0, 1, 2];
    let nll = |r: &[f64], t: usize| {
        let lse = r.iter().map(|v| v.exp()).sum::<f64>().ln();
        lse - r[t]
    };
    // Positions 1 and 3 masked: mean of the two remaining terms.
    let want = (nll(&rows[0..3], 2) + nll(&rows[6..9], 1)) / 2.0;
    let mut tape = Tape::<f64>::new(false);
    let logits = tape.leaf(Tensor::new(&[4, 3], rows.clone()).unwrap());
    let l = ce_loss(&mut tape, logits, &targets, &[true, false, true, false]).unwrap();
    assert!((tape.value(l).item().unwrap() - want).abs() < 1e-12);
    let mut tape = Tape::<f64>::new(false);
    let logits = tape.leaf(Tensor::new(&[4, 3], rows).unwrap());
    assert!(matches!(
        ce_loss(&mut tape, logits, &targets, &[false; 4]),
        Err(crate::Error::Contract(_))
    ));
}

#[test]
fn classifier_loss_examples() {
    assert!((cl_loss(0.5, 0).unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!((cl_loss(0.5, 1).unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!(cl_loss(1.0 - 1e-12, 1).unwrap() < 1e-11);
    assert!((cl_loss(0.9, 0).unwrap() - 10f64.ln()).abs() < 1e-12);
    assert!(matches!(cl_loss(1.0, 0), Err(crate::Error::Domain(_))));
    assert!(matches!(cl_loss(0.0, 1), Err(crate::Error::Domain(_))));
}

#[test]
fn total_loss_examples() {
    assert_eq!(total_loss(7.3, 0.5, 1), 0.5);
    assert_eq!(total_loss(2.0, 0.5, 0), 2.5);
}

fn negatives_only_batch() -> Vec<TrainingExample> {
    vec![
        TrainingExample {
            mel: mel(24, 1),
            tokens: seq(&[6, 7]),
            y: 1,
            clip_id: 0,
        },
        TrainingExample {
            mel: mel(30, 2),
            tokens: seq(&[4, 5, 9]),
            y: 1,
            clip_id: 1,
        },
    ]
}

fn step_with(gate: GateMode) -> (Model<f32>, LossBreakdown) {
    let mut model = Model::<f32>::new(&ModelConfig::micro(), 10, &mut rng(3)).unwrap();
    let mut adam = Adam::new(&model.params, 0.9, 0.999, 1e-8);
    let mut tape = Tape::new(true);
    let opts = LossOptions {
        contrastive: true,
        gate,
    };
    let (loss, parts) = batch_loss(
        &model.net,
        &mut tape,
        &model.params,
        &negatives_only_batch(),
        opts,
        &mut rng(4),
    )
    .unwrap();
    tape.backward(loss, &mut model.params).unwrap();
    tape.apply_buffer_updates(&mut model.params).unwrap();
    clip_global_norm(&mut model.params, 1.0);
    adam.step(&mut model.params, 1e-3).unwrap();
    (model, parts)
}

#[test]
fn gating_removes_captioning_gradient_exactly() {
    let (skip, skip_parts) = step_with(GateMode::Skip);
    let (mult, mult_parts) = step_with(GateMode::Multiply);
    assert_eq!(skip_parts.total.to_bits(), mult_parts.total.to_bits());
    for ((_, a), (_, b)) in skip.params.iter().zip(mult.params.iter()) {
        assert_eq!(a.grad.data(), b.grad.data(), "{}", a.name);
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.value), bits(&b.value), "{}", a.name);
    }
    let head = skip.params.by_name("decoder.head.weight").unwrap();
    assert!(head.grad.data().iter().all(|&g| g == 0.0));
}

#[test]
fn negatives_only_total_is_mean_classifier_loss() {
    let (_, parts) = step_with(GateMode::Multiply);
    assert_eq!(parts.ce, None);
    assert!((parts.total - parts.cl.unwrap()).abs() < 1e-6);
}

#[test]
fn captioning_only_rejects_mismatched_pairs() {
    let model = Model::<f32>::new(&ModelConfig::micro(), 10, &mut rng(3)).unwrap();
    let opts = LossOptions {
        contrastive: false,
        gate: GateMode::Skip,
    };
    let err = batch_loss(
        &model.net,
        &mut Tape::new(true),
        &model.params,
        &negatives_only_batch(),
        opts,
        &mut rng(4),
    )
    .unwrap_err();
    assert!(matches!(err, crate::Error::Contract(_)));
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let check = full_model_check(None).unwrap();
    assert!(check.max_rel_error < GRAD_TOLERANCE, "{check:?}");
    assert!(check.coordinates > 1000);
}

#[test]
fn full_model_check_catches_a_broken_adjoint() {
    let check = full_model_check(Some(OpKind::LayerNorm)).unwrap();
    assert!(check.max_rel_error > 1e-2, "{check:?}");
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut store = crate::numerics::ParamStore::<f64>::new();
    let id = store.add("w", Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
    store.get_mut(id).grad = Tensor::new(&[3], vec![0.5, -2.0, 0.0]).unwrap();
    let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
    adam.step(&mut store, 0.1).unwrap();
    let w = store.value(id).data();
    // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
    assert!((w[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))).abs() < 1e-12);
    assert!((w[1] - (2.0 + 0.1 * 2.0 / (2.0 + 1e-8))).abs() < 1e-12);
    assert_eq!(w[2], 3.0);
    assert_eq!(adam.steps(), 1);
}

#[test]
fn clipping_rescales_to_the_ceiling() {
    let mut store = crate::numerics::ParamStore::<f64>::new();
    let a = store.add("a", Tensor::zeros(&[1])).unwrap();
    let b = store.add("b", Tensor::zeros(&[1])).unwrap();
    let buf = store.add_buffer("stats", Tensor::zeros(&[1])).unwrap();
    store.get_mut(a).grad = Tensor::new(&[1], vec![3.0]).unwrap();
    store.get_mut(b).grad = Tensor::new(&[1], vec![4.0]).unwrap();
    store.get_mut(buf).grad = Tensor::new(&[1], vec![100.0]).unwrap();
    assert_eq!(clip_global_norm(&mut store, 1.0), 5.0);
    assert!((store.get(a).grad.data()[0] - 0.6).abs() < 1e-15);
    assert!((store.get(b).grad.data()[0] - 0.8).abs() < 1e-15);
    assert_eq!(clip_global_norm(&mut store, 10.0), 1.0);
}

fn tiny_training_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs: 2,
        learning_rate: 1e-3,
        warmup_epochs: 1,
        seed: 7,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_under_seed() {
    let clips = three_clips();
    let run = || {
        let mut model = Model::<f32>::new(&ModelConfig::micro(), 10, &mut rng(5)).unwrap();
        train(&clips, &mut model, &tiny_training_config(), |_| Ok(()), |_, _| Ok(())).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.steps.len(), 4);
    assert_eq!(a, b);
}

#[test]
fn training_reports_each_step_and_epoch() {
    let clips = three_clips();
    let mut model = Model::<f32>::new(&ModelConfig::micro(), 10, &mut rng(5)).unwrap();
    let (mut seen, mut epochs) = (0, Vec::new());
    let report = train(
        &clips,
        &mut model,
        &tiny_training_config(),
        |row| {
            seen += 1;
            assert_eq!(row.step, seen);
            assert!(row.cl.is_some());
            Ok(())
        },
        |e, _| {
            epochs.push(e);
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(seen, report.steps.len());
    assert_eq!(epochs, vec![1, 2]);
    assert_eq!(report.epoch_totals.len(), 2);
}

#[test]
fn training_changes_batch_norm_statistics() {
    let clips = three_clips();
    let mut model = Model::<f32>::new(&ModelConfig::micro(), 10, &mut rng(5)).unwrap();
    let before = model.params.by_name("encoder.block0.conv0.bn.running_mean").unwrap().value.clone();
    train(&clips, &mut model, &tiny_training_config(), |_| Ok(()), |_, _| Ok(())).unwrap();
    let after = &model.params.by_name("encoder.block0.conv0.bn.running_mean").unwrap().value;
    assert_ne!(&before, after);
}

#[test]
fn loss_log_writes_empty_fields_for_absent_terms() {
    let mut log = LossCsv::new(Vec::new());
    log.write(&StepLog {
        step: 1,
        epoch: 1,
        lr: 0.5,
        ce: Some(2.0),
        cl: None,
        total: 2.0,
    })
    .unwrap();
    let text = String::from_utf8(log.into_inner().unwrap()).unwrap();
    assert_eq!(text, "step,epoch,lr,ce,cl,total\n1,1,0.5,2.0,,2.0\n");
}

#[test]
fn loss_log_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loss.csv");
    let rows = vec![
        StepLog {
            step: 1,
            epoch: 1,
            lr: 1e-4,
            ce: Some(3.25),
            cl: Some(0.69),
            total: 3.94,
        },
        StepLog {
            step: 2,
            epoch: 1,
            lr: 1e-4,
            ce: None,
            cl: Some(0.7),
            total: 0.7,
        },
    ];
    let mut log = LossCsv::create(&path).unwrap();
    for r in &rows {
        log.write(r).unwrap();
    }
    drop(log);
    assert_eq!(read_loss_csv(&path).unwrap(), rows);
}

#[test]
fn pair_probability_is_in_the_open_interval() {
    let model = Model::<f32>::new(&ModelConfig::micro(), 10, &mut rng(5)).unwrap();
    let p = pair_probability(&model, &mel(24, 9), &seq(&[4, 5])).unwrap();
    assert!(p > 0.0 && p < 1.0);
}
