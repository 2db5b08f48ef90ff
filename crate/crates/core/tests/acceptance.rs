//! Runs every acceptance criterion and prints one line per criterion.
//! Exits nonzero when a blocking criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use cl4ac::data::{
    clips_from_manifest, load_manifest, merge_splits, read_checkpoint, synth_dataset, write_checkpoint, Checkpoint,
    CheckpointConfig, FeatureCache, SynthSpec,
};
use cl4ac::dsp::{
    log_mel, spec_augment_with_masks, stft_power, AudioClip, DspConfig, MaskAxis, MelFilterbank, MelSpectrogram,
    SpecAugmentConfig,
};
use cl4ac::metrics::{bleu, cider_d, rouge_l, EvalCorpus, EvalItem};
use cl4ac::model::{greedy_decode, Model, ModelConfig};
use cl4ac::numerics::{Tape, Tensor};
use cl4ac::text::{TokenSeq, Vocabulary, EOS, SOS};
use cl4ac::training::{
    batch_loss, clip_global_norm, make_negatives, pair_probability, sample_positives, train, Adam, ClipData, GateMode,
    LossOptions, TrainConfig, TrainingExample, GRAD_TOLERANCE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Line {
    name: &'static str,
    blocking: bool,
    outcome: Option<Outcome>,
    seconds: f64,
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn synthetic(dir: &Path, n_clips: usize, seed: u64) -> (Vec<ClipData>, Vocabulary) {
    let spec = SynthSpec {
        n_clips,
        seed,
        ..SynthSpec::default()
    };
    let (manifest, _) = synth_dataset(&spec, dir).unwrap();
    let captions: Vec<&str> = manifest.rows.iter().flat_map(|r| r.captions.iter().map(String::as_str)).collect();
    let vocab = Vocabulary::build(&captions, 1).unwrap();
    let cache = FeatureCache::new(&dir.join("cache"), DspConfig::default()).unwrap();
    let clips = clips_from_manifest(&manifest, &cache, &vocab).unwrap();
    (clips, vocab)
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let rows = cl4ac::cli::gradcheck_rows(None).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let worst = rows.iter().map(|r| r.check.max_rel_error).fold(0.0, f64::max);
    let failing: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.family.as_str()).collect();
    check(
        failing.is_empty() && worst < GRAD_TOLERANCE && secs < 60.0,
        format!("{} families, worst max_rel_error {worst:.2e}, failing {failing:?}, {secs:.1} s", rows.len()),
    )
}

fn gating_exactness() -> Outcome {
    let mel = |frames: usize, seed: u64| {
        let mut r = rng(seed);
        let data = (0..64 * frames).map(|_| r.random_range(-8.0f32..0.0)).collect();
        Arc::new(MelSpectrogram::new(64, frames, data).unwrap())
    };
    let batch = vec![
        TrainingExample {
            mel: mel(24, 1),
            tokens: TokenSeq::new(vec![SOS, 6, 7, EOS]).unwrap(),
            y: 1,
            clip_id: 0,
        },
        TrainingExample {
            mel: mel(30, 2),
            tokens: TokenSeq::new(vec![SOS, 4, 5, 9, EOS]).unwrap(),
            y: 1,
            clip_id: 1,
        },
    ];
    let step = |gate| {
        let mut model = Model::<f32>::new(&ModelConfig::micro(), 10, &mut rng(3)).unwrap();
        let mut adam = Adam::new(&model.params, 0.9, 0.999, 1e-8);
        let mut tape = Tape::new(true);
        let opts = LossOptions { contrastive: true, gate };
        let (loss, _) = batch_loss(&model.net, &mut tape, &model.params, &batch, opts, &mut rng(4)).unwrap();
        tape.backward(loss, &mut model.params).unwrap();
        tape.apply_buffer_updates(&mut model.params).unwrap();
        clip_global_norm(&mut model.params, 1.0);
        adam.step(&mut model.params, 1e-3).unwrap();
        model
    };
    let (skip, mult) = (step(GateMode::Skip), step(GateMode::Multiply));
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let differing: Vec<&str> = skip
        .params
        .iter()
        .zip(mult.params.iter())
        .filter(|((_, a), (_, b))| bits(&a.value) != bits(&b.value))
        .map(|((_, a), _)| a.name.as_str())
        .collect();
    check(
        differing.is_empty(),
        format!("{} parameter tensors compared, differing {differing:?}", skip.params.len()),
    )
}

fn eval_ce(model: &Model<f32>, clips: &[ClipData]) -> f64 {
    let batch: Vec<TrainingExample> = clips
        .iter()
        .enumerate()
        .map(|(i, c)| TrainingExample {
            mel: c.mel.clone(),
            tokens: c.captions[0].clone(),
            y: 0,
            clip_id: i,
        })
        .collect();
    let opts = LossOptions {
        contrastive: false,
        gate: GateMode::Skip,
    };
    let (_, parts) = batch_loss(&model.net, &mut Tape::new(false), &model.params, &batch, opts, &mut rng(0)).unwrap();
    parts.ce.unwrap()
}

fn exact_decodes(model: &Model<f32>, clips: &[ClipData]) -> usize {
    clips
        .iter()
        .filter(|c| greedy_decode(model, &c.mel, 35).unwrap() == c.captions[0].words())
        .count()
}

type OverfitRun = (Model<f32>, Vec<ClipData>, Option<(usize, f64)>, f64);

/// Trains the 8-clip overfit model. Returns the model and the first epoch
/// (checked every 10) at which both conditions held.
fn overfit_run(dir: &Path) -> OverfitRun {
    let (clips, vocab) = synthetic(dir, 8, 1);
    let cfg = TrainConfig {
        epochs: 300,
        learning_rate: 3e-3,
        warmup_epochs: 5,
        decay_every: 100_000,
        spec_augment: false,
        ..TrainConfig::default()
    };
    let mut model = Model::<f32>::new(&ModelConfig::micro(), vocab.len(), &mut rng(0)).unwrap();
    let mut reached = None;
    let mut last_ce = f64::NAN;
    train(&clips, &mut model, &cfg, |_| Ok(()), |epoch, m| {
        if epoch % 10 == 0 && reached.is_none() {
            last_ce = eval_ce(m, &clips);
            if last_ce < 0.05 && exact_decodes(m, &clips) == clips.len() {
                reached = Some((epoch, last_ce));
            }
        }
        Ok(())
    })
    .unwrap();
    (model, clips, reached, last_ce)
}

fn overfit(reached: Option<(usize, f64)>, last_ce: f64, secs: f64) -> Outcome {
    match reached {
        Some((epoch, ce)) => check(
            secs < 600.0,
            format!("CE {ce:.4} and 8/8 exact decodes at epoch {epoch}, {secs:.1} s"),
        ),
        None => Err(format!("not reached within 300 epochs, last CE {last_ce:.4}")),
    }
}

struct Contrastive {
    cross: (f64, f64),
    uniform: (f64, f64),
    cl_model: Model<f32>,
    train: Vec<ClipData>,
    held_out: Vec<ClipData>,
    vocab: Vocabulary,
}

fn contrastive_config() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    }
}

fn contrastive_run(dir: &Path) -> Contrastive {
    let (clips, vocab) = synthetic(dir, 80, 2);
    let (tr, te) = clips.split_at(64);
    let mut model = Model::<f32>::new(&ModelConfig::micro(), vocab.len(), &mut rng(0)).unwrap();
    train(tr, &mut model, &contrastive_config(), |_| Ok(()), |_, _| Ok(())).unwrap();

    // Adjacent clips alternate grammar, so the next clip's caption is always
    // a cross-grammar negative.
    let (mut correct, mut gap) = (0, 0.0);
    for (i, c) in te.iter().enumerate() {
        let pos = pair_probability(&model, &c.mel, &c.captions[0]).unwrap();
        let neg = pair_probability(&model, &c.mel, &te[(i + 1) % te.len()].captions[0]).unwrap();
        correct += (pos < 0.5) as usize + (neg > 0.5) as usize;
        gap += neg - pos;
    }
    let cross = (correct as f64 / (2 * te.len()) as f64, gap / te.len() as f64);

    let mut r = rng(99);
    let positives = sample_positives(te, &mut r).unwrap();
    let pairs = make_negatives(te, &positives, 1.0, &mut r).unwrap();
    let (mut correct, mut sums, mut counts) = (0, [0.0; 2], [0usize; 2]);
    for ex in &pairs {
        let p = pair_probability(&model, &ex.mel, &ex.tokens).unwrap();
        correct += ((p > 0.5) == (ex.y == 1)) as usize;
        sums[ex.y as usize] += p;
        counts[ex.y as usize] += 1;
    }
    let uniform = (
        correct as f64 / pairs.len() as f64,
        sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64,
    );
    Contrastive {
        cross,
        uniform,
        cl_model: model,
        train: tr.to_vec(),
        held_out: te.to_vec(),
        vocab,
    }
}

fn held_out_bleu1(model: &Model<f32>, clips: &[ClipData], vocab: &Vocabulary) -> f64 {
    let words = |ids: &[usize]| vocab.decode(ids).split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let items = clips
        .iter()
        .map(|c| EvalItem {
            candidate: words(&greedy_decode(model, &c.mel, 35).unwrap()),
            references: c.captions.iter().map(|t| words(t.words())).collect(),
        })
        .collect();
    bleu(&EvalCorpus::new(items).unwrap(), 1).unwrap()
}

fn cl_benefit(c: &Contrastive) -> Outcome {
    let mut baseline = Model::<f32>::new(&ModelConfig::micro(), c.vocab.len(), &mut rng(0)).unwrap();
    let cfg = TrainConfig {
        contrastive: false,
        ..contrastive_config()
    };
    train(&c.train, &mut baseline, &cfg, |_| Ok(()), |_, _| Ok(())).unwrap();
    let with_cl = held_out_bleu1(&c.cl_model, &c.held_out, &c.vocab);
    let without = held_out_bleu1(&baseline, &c.held_out, &c.vocab);
    check(
        with_cl >= without - 0.02,
        format!("held-out BLEU-1 with CL {with_cl:.4}, without {without:.4}"),
    )
}

fn metric_oracles() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let items = common::random_corpus(seed);
        let corpus = common::to_corpus(&items);
        for n in 1..=4 {
            worst = worst.max((bleu(&corpus, n).unwrap() - common::oracle::bleu(&items, n)).abs());
        }
        worst = worst.max((rouge_l(&corpus) - common::oracle::rouge_l(&items)).abs());
        worst = worst.max((cider_d(&corpus).unwrap() - common::oracle::cider_d(&items)).abs());
    }
    let item = |cand: &str, refs: &[&str]| EvalItem {
        candidate: cand.split_whitespace().map(str::to_string).collect(),
        references: refs.iter().map(|r| r.split_whitespace().map(str::to_string).collect()).collect(),
    };
    let b1 = bleu(&EvalCorpus::new(vec![item("the cat sat", &["the cat sat down"])]).unwrap(), 1).unwrap();
    let rl = rouge_l(&EvalCorpus::new(vec![item("a b c d", &["a c d e"])]).unwrap());
    let cd = cider_d(
        &EvalCorpus::new(vec![
            item("a dog barks loudly", &["a dog barks loudly"]),
            item("rain on the tin", &["rain on the tin"]),
        ])
        .unwrap(),
    )
    .unwrap();
    check(
        worst < 1e-6 && (b1 - 0.7165).abs() < 1e-4 && (rl - 0.75).abs() < 1e-12 && (cd - 10.0).abs() < 1e-9,
        format!("50 corpora, worst deviation {worst:.1e}; BLEU-1 {b1:.4}, ROUGE-L {rl:.4}, CIDEr-D {cd:.4}"),
    )
}

fn dsp_invariants() -> Outcome {
    let cfg = DspConfig::default();
    let mut r = rng(7);
    let mut bad_frames = Vec::new();
    for len in 1024..=4096usize {
        let samples: Vec<f32> = (0..len).map(|_| r.random_range(-0.5..0.5)).collect();
        let clip = AudioClip::new(samples, 16000).unwrap();
        let expected = (len - 1024) / 512 + 1;
        let power = stft_power(&clip, 1024, 512).unwrap();
        let mel = log_mel(&clip).unwrap();
        if power.frames != expected || mel.frames != expected || cfg.frame_count(len) != Some(expected) {
            bad_frames.push(len);
        }
    }

    // 689.0625 Hz is exactly bin 16 at 44.1 kHz; the others are bin-centred too.
    let sr = 44100u32;
    let bank = MelFilterbank::new(64, sr, 1024, 0.0, sr as f64 / 2.0).unwrap();
    let mut bad_tones = Vec::new();
    for bin in [16usize, 5, 40, 123, 300, 480] {
        let f = bin as f64 * sr as f64 / 1024.0;
        let samples: Vec<f32> = (0..22050)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / sr as f64).sin()) as f32)
            .collect();
        let clip = AudioClip::new(samples, sr).unwrap();
        let power = stft_power(&clip, 1024, 512).unwrap();
        let band = (0..64).max_by(|&a, &b| bank.row(a)[bin].total_cmp(&bank.row(b)[bin])).unwrap();
        let mel = log_mel(&clip).unwrap();
        for t in 0..power.frames {
            let peak = (0..power.bins).max_by(|&a, &b| power.at(a, t).total_cmp(&power.at(b, t))).unwrap();
            let top = (0..64).max_by(|&a, &b| mel.at(a, t).total_cmp(&mel.at(b, t))).unwrap();
            if peak != bin || top != band {
                bad_tones.push((bin, t));
            }
        }
    }

    let mut bad_masks = 0;
    for seed in 0..200 {
        let mut r = rng(seed);
        let frames = r.random_range(16..80);
        let data = (0..64 * frames).map(|_| r.random_range(-20.0f32..0.0)).collect();
        let mel = MelSpectrogram::new(64, frames, data).unwrap();
        let (out, masks) = spec_augment_with_masks(&mel, &SpecAugmentConfig::default_for(64, frames), &mut r).unwrap();
        let fill = mel.mean();
        for b in 0..64 {
            for t in 0..frames {
                let masked = masks.iter().any(|m| {
                    let i = if m.axis == MaskAxis::Frequency { b } else { t };
                    (m.start..m.start + m.width).contains(&i)
                });
                let ok = if masked {
                    out.at(b, t) == fill
                } else {
                    out.at(b, t).to_bits() == mel.at(b, t).to_bits()
                };
                bad_masks += (!ok) as usize;
            }
        }
    }
    check(
        bad_frames.is_empty() && bad_tones.is_empty() && bad_masks == 0,
        format!(
            "frame count over 3073 lengths: {} wrong; tone frames off-bin: {}; mis-masked cells over 200 draws: {bad_masks}",
            bad_frames.len(),
            bad_tones.len()
        ),
    )
}

fn determinism_and_persistence(dir: &Path, trained: &Model<f32>, clips: &[ClipData]) -> Outcome {
    let (data, vocab) = synthetic(&dir.join("det"), 8, 4);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 11,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = Model::<f32>::new(&ModelConfig::micro(), vocab.len(), &mut rng(5)).unwrap();
        let report = train(&data, &mut model, &cfg, |_| Ok(()), |_, _| Ok(())).unwrap();
        (report, model)
    };
    let ((ra, ma), (rb, mb)) = (run(), run());
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let loss_bits = |r: &cl4ac::training::TrainReport| {
        r.steps
            .iter()
            .map(|s| (s.ce.map(f64::to_bits), s.cl.map(f64::to_bits), s.total.to_bits()))
            .collect::<Vec<_>>()
    };
    let same_losses = ra.steps.len() >= 10 && loss_bits(&ra) == loss_bits(&rb);
    let same_params = ma.params.iter().zip(mb.params.iter()).all(|((_, a), (_, b))| bits(&a.value) == bits(&b.value));

    let ckpt = Checkpoint {
        config: CheckpointConfig {
            model: ModelConfig::micro(),
            dsp: DspConfig::default(),
        },
        vocab: Vocabulary::from_corpus_tokens((4..trained.net.vocab_size()).map(|i| format!("w{i}"))).unwrap(),
        model: trained.clone(),
    };
    let bytes = write_checkpoint(&ckpt).unwrap();
    let loaded = read_checkpoint(&bytes, Path::new("memory")).unwrap();
    let idempotent = write_checkpoint(&loaded).unwrap() == bytes;
    let mut r = rng(21);
    let mut inputs: Vec<MelSpectrogram> = clips.iter().map(|c| (*c.mel).clone()).collect();
    while inputs.len() < 20 {
        let frames = r.random_range(16..80);
        let data = (0..64 * frames).map(|_| r.random_range(-20.0f32..0.0)).collect();
        inputs.push(MelSpectrogram::new(64, frames, data).unwrap());
    }
    let mismatched = inputs
        .iter()
        .filter(|m| greedy_decode(trained, m, 35).unwrap() != greedy_decode(&loaded.model, m, 35).unwrap())
        .count();
    check(
        same_losses && same_params && idempotent && mismatched == 0,
        format!(
            "{} seeded steps equal: {}; parameters equal: {same_params}; save/load/save identical: {idempotent}; decodes differing after reload: {mismatched}/20",
            ra.steps.len(),
            same_losses
        ),
    )
}

fn clotho(root: &Path) -> Outcome {
    let split = |name: &str| load_manifest(&root.join(format!("clotho_captions_{name}.csv")), &root.join(name));
    let dev = split("development").map_err(|e| e.to_string())?;
    let val = split("validation").map_err(|e| e.to_string())?;
    let merged = merge_splits(&dev, &val).map_err(|e| e.to_string())?;
    let captions: Vec<&str> = merged.rows.iter().flat_map(|r| r.captions.iter().map(String::as_str)).collect();
    let vocab = Vocabulary::build(&captions, 1).map_err(|e| e.to_string())?;
    check(
        vocab.corpus_len() == 4367 && merged.len() == 4884,
        format!("vocabulary {} words, merged training clips {}", vocab.corpus_len(), merged.len()),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    // `started` lets a criterion include training done before its check.
    let mut run = |name: &'static str, blocking: bool, started: Instant, f: &mut dyn FnMut() -> Option<Outcome>| {
        let t = started;
        let outcome = f();
        lines.push(Line {
            name,
            blocking,
            outcome,
            seconds: t.elapsed().as_secs_f64(),
        });
        let l = lines.last().unwrap();
        print_line(l);
    };

    run("gradient suite", true, Instant::now(), &mut || Some(gradient_suite()));
    run("gating exactness", true, Instant::now(), &mut || Some(gating_exactness()));

    let t = Instant::now();
    let (trained, overfit_clips, reached, last_ce) = overfit_run(&dir.path().join("overfit"));
    let overfit_secs = t.elapsed().as_secs_f64();
    run("overfit oracle", true, t, &mut || Some(overfit(reached, last_ce, overfit_secs)));

    let t = Instant::now();
    let contrastive = contrastive_run(&dir.path().join("contrastive"));
    run("contrastive discrimination", true, t, &mut || {
        let (acc, gap) = contrastive.cross;
        let (uacc, ugap) = contrastive.uniform;
        Some(check(
            acc >= 0.9 && gap >= 0.3,
            format!(
                "held-out cross-grammar accuracy {acc:.3}, gap {gap:.3} (any-caption negatives: accuracy {uacc:.3}, gap {ugap:.3})"
            ),
        ))
    });
    run("CL-benefit smoke check (informational)", false, Instant::now(), &mut || Some(cl_benefit(&contrastive)));
    run("metric oracles", true, Instant::now(), &mut || Some(metric_oracles()));
    run("DSP invariants", true, Instant::now(), &mut || Some(dsp_invariants()));
    run("determinism and persistence", true, Instant::now(), &mut || {
        Some(determinism_and_persistence(dir.path(), &trained, &overfit_clips))
    });
    run("Clotho conditional checks", true, Instant::now(), &mut || {
        std::env::var_os("CL4AC_CLOTHO_DIR").map(|d| clotho(&PathBuf::from(d)))
    });

    let failed = lines.iter().filter(|l| l.blocking && matches!(l.outcome, Some(Err(_)))).count();
    println!("acceptance: {} criteria, {failed} blocking failures", lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn print_line(l: &Line) {
    let (status, detail) = match &l.outcome {
        Some(Ok(d)) => ("PASS", d.as_str()),
        Some(Err(d)) => ("FAIL", d.as_str()),
        None => ("SKIP", "CL4AC_CLOTHO_DIR not set"),
    };
    println!("{status} {}: {detail} [{:.1} s]", l.name, l.seconds);
}
