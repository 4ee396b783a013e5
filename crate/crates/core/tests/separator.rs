use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use vocalid::separator::*;
use vocalid::signal::AudioBuffer;
use vocalid::Error;
use vocalid_nn::{grad_check, seeded, Tape, Tensor};

type TestRng = rand::rngs::StdRng;

fn audio(samples: Vec<f64>) -> AudioBuffer {
    AudioBuffer::new(samples, 16_000).unwrap()
}

fn small(kind: SkipKind) -> SeparatorConfig {
    SeparatorConfig { channels: [8, 6, 4], skip_kind: kind, ..Default::default() }
}

#[test]
fn reduced_networks_pass_gradient_checks() {
    for kind in [SkipKind::Gru, SkipKind::Lstm] {
        let cfg = SeparatorConfig { bins: 17, channels: [5, 4, 3], kernel: 3, stride: 2, skip_kind: kind };
        let model = SeparatorModel::init(cfg.clone(), &mut seeded(3)).unwrap();
        let mut rng = TestRng::seed_from_u64(4);
        let x = Tensor::from_fn(&[1, 17, 16], |_| rng.gen_range(0.0..2.0));
        let target = Tensor::from_fn(&[1, 17, 16], |_| rng.gen_range(0.0..1.0));
        let mut params = model.params.clone();
        let report = grad_check(&mut params, |tape: &mut Tape, p| {
            let xv = tape.input(x.clone())?;
            let y = sepnet_output(tape, &cfg, p, xv)
                .map_err(|e| vocalid_nn::NnError::InvalidArgument { op: "sepnet", reason: e.to_string() })?;
            tape.l1_loss(y, &target)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{kind:?}: {report:?}");
    }
}

#[test]
fn network_output_is_nonnegative_and_same_shape() {
    for kind in [SkipKind::Gru, SkipKind::Lstm] {
        let model = SeparatorModel::init(small(kind), &mut seeded(1)).unwrap();
        let mut rng = TestRng::seed_from_u64(2);
        let x = Array2::from_shape_fn((257, 24), |_| rng.gen_range(0.0..3.0));
        let y = sepnet_forward(&x, &model).unwrap();
        assert_eq!(y.dim(), x.dim());
        assert!(y.iter().all(|&v| v >= 0.0));
        assert!(sepnet_forward(&Array2::zeros((257, 20)), &model).is_err());
    }
}

#[test]
fn si_sdr_reference_points() {
    let mut rng = TestRng::seed_from_u64(5);
    let r: Vec<f64> = (0..4000).map(|_| rng.gen_range(-0.4..0.4)).collect();
    let reference = audio(r.clone());
    assert_eq!(si_sdr(&reference, &reference).unwrap(), SI_SDR_CAP_DB);
    assert_eq!(si_sdr(&reference, &audio(r.iter().map(|v| 2.0 * v).collect())).unwrap(), SI_SDR_CAP_DB);

    // Noise made exactly orthogonal to the reference, scaled to a tenth of its norm.
    let mut n: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    let proj = n.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    n.iter_mut().zip(&r).for_each(|(a, b)| *a -= proj * b);
    let scale = 0.1 * rr.sqrt() / n.iter().map(|v| v * v).sum::<f64>().sqrt();
    let noisy = audio(r.iter().zip(&n).map(|(a, b)| a + scale * b).collect());
    assert!((si_sdr(&reference, &noisy).unwrap() - 20.0).abs() < 1e-6);

    assert_eq!(si_sdr(&reference, &audio(vec![0.0; 4000])).unwrap(), -SI_SDR_CAP_DB);
    assert!(si_sdr(&audio(vec![0.0; 10]), &audio(vec![1.0; 10])).is_err());
    assert!(si_sdr(&reference, &audio(vec![0.0; 10])).is_err());
}

#[test]
fn separation_keeps_length_and_silence() {
    let model = SeparatorModel::init(small(SkipKind::Gru), &mut seeded(0)).unwrap();
    let out = separate(&audio(vec![0.0; 40_000]), &model, 1.0).unwrap();
    assert_eq!(out.audio.len(), 40_000);
    assert!(out.audio.samples().iter().all(|&v| v == 0.0));
    assert_eq!(out.snippets.len(), 3);
    assert_eq!(out.snippets[2].valid_frames, 50);

    let mut rng = TestRng::seed_from_u64(8);
    let noise = audio((0..23_456).map(|_| rng.gen_range(-0.5..0.5)).collect());
    let a = separate(&noise, &model, 1.0).unwrap();
    assert_eq!(a.audio.len(), 23_456);
    assert_eq!(a.audio, separate(&noise, &model, 1.0).unwrap().audio);
}

#[test]
fn estimates_never_exceed_the_mixture() {
    let model = SeparatorModel::init(small(SkipKind::Lstm), &mut seeded(2)).unwrap();
    let mut rng = TestRng::seed_from_u64(3);
    let mix = Array2::from_shape_fn((257, 13), |_| rng.gen_range(0.0..0.2));
    let est = estimate_vocal_magnitude(&mix, &model).unwrap();
    assert_eq!(est.dim(), mix.dim());
    assert!(est.iter().zip(&mix).all(|(e, m)| *e >= 0.0 && e <= m));
}

/// A steady tone (the "vocal") over white noise.
fn tone_pair(id: usize, seconds: f64, seed: u64) -> SnippetPair {
    let n = (seconds * 16_000.0) as usize;
    let mut rng = TestRng::seed_from_u64(seed);
    let f = 300.0 + 50.0 * id as f64;
    let vocal: Vec<f64> = (0..n).map(|i| 0.3 * (2.0 * PI * f * i as f64 / 16_000.0).sin()).collect();
    let mixture = vocal.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
    SnippetPair { id: format!("pair{id}"), mixture: audio(mixture), vocal: audio(vocal) }
}

#[test]
fn training_reduces_loss_deterministically() {
    let pairs: Vec<_> = (0..4).map(|i| tone_pair(i, 1.2, i as u64)).collect();
    let train = SeparatorTrainConfig { epochs: 6, crop_frames: 32, batch_size: 2, snippet_seconds: 1.0, ..Default::default() };
    let a = train_separator(&pairs, &small(SkipKind::Gru), &train).unwrap();
    let l = &a.epoch_losses;
    assert!(l.last().unwrap() < &l[0], "{l:?}");
    let b = train_separator(&pairs, &small(SkipKind::Gru), &train).unwrap();
    assert!(a.model.params.same_values(&b.model.params));
}

#[test]
fn mismatched_pairs_are_rejected() {
    let mut pair = tone_pair(0, 1.0, 0);
    pair.vocal = audio(vec![0.0; 100]);
    let err = train_separator(&[pair.clone()], &small(SkipKind::Gru), &SeparatorTrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::PairLengthMismatch { .. }), "{err:?}");
    let model = SeparatorModel::init(small(SkipKind::Gru), &mut seeded(0)).unwrap();
    assert!(matches!(eval_separation(&[pair], &model, 6.0), Err(Error::PairLengthMismatch { .. })));
}

#[test]
fn passing_the_mixture_through_scores_the_baseline() {
    let pair = tone_pair(1, 2.0, 4);
    let mix = pair.mixture.clone();
    let base = si_sdr(&pair.vocal, &mix).unwrap();
    let report = report_from_scores(vec![TrackScore { id: pair.id, si_sdr: base, baseline: base, improvement: 0.0 }]);
    assert_eq!(report.median, report.baseline_median);
    assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
}

#[test]
fn bundles_round_trip_for_both_skip_kinds() {
    for kind in [SkipKind::Gru, SkipKind::Lstm] {
        let m = SeparatorModel::init(small(kind), &mut seeded(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = SeparatorModel::load(dir.path()).unwrap();
        assert_eq!(back.config, m.config);
        assert!(back.params.same_values(&m.params));
    }
}
