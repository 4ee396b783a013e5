use std::fs;

use vocalid::manifest::read_jsonl;
use vocalid::segmenter::Label;
use vocalid::signal::{stft, AudioBuffer, StftConfig};
use vocalid::synthdata::*;

fn profiles() -> Vec<SingerProfile> {
    generate_profiles(6, 42).unwrap()
}

/// Autocorrelation pitch per 40 ms frame, for frames louder than a fraction
/// of the overall RMS. The first lag within 90% of the best peak wins, which
/// avoids picking a multiple of the period.
fn pitch_track(a: &AudioBuffer) -> Vec<f64> {
    let x = a.samples();
    let sr = a.sample_rate() as f64;
    let (frame, hop) = (640, 320);
    let (min_lag, max_lag) = ((sr / 1000.0) as usize, (sr / 80.0) as usize);
    let loud = 0.3 * a.rms();
    let mut out = Vec::new();
    let mut start = 0;
    while start + frame + max_lag <= x.len() {
        let w = &x[start..start + frame];
        let energy: f64 = w.iter().map(|v| v * v).sum();
        if (energy / frame as f64).sqrt() > loud {
            let r: Vec<f64> = (min_lag..=max_lag)
                .map(|lag| w.iter().zip(&x[start + lag..]).map(|(a, b)| a * b).sum::<f64>() / energy)
                .collect();
            let best = r.iter().cloned().fold(f64::MIN, f64::max);
            // First local maximum that comes close to the global one.
            let i = (1..r.len() - 1)
                .find(|&i| r[i] >= 0.9 * best && r[i] >= r[i - 1] && r[i] >= r[i + 1])
                .unwrap_or(0);
            out.push(sr / (min_lag + i) as f64);
        }
        start += hop;
    }
    out
}

#[test]
fn vocals_are_deterministic_and_stay_in_range() {
    for (k, p) in profiles().iter().enumerate() {
        let a = synth_vocal(p, 3.0, 100 + k as u64).unwrap();
        assert_eq!(a, synth_vocal(p, 3.0, 100 + k as u64).unwrap());
        let track = pitch_track(&a);
        assert!(track.len() > 50);
        let [lo, hi] = p.f0_range;
        let inside = track.iter().filter(|&&f| f >= 0.97 * lo && f <= 1.03 * hi).count();
        assert!(inside as f64 >= 0.9 * track.len() as f64, "{}: {inside}/{} in {lo}–{hi}", p.name, track.len());
    }
}

#[test]
fn disjoint_ranges_separate_by_mean_pitch() {
    let ps = profiles();
    let (low, high) = (&ps[0], &ps[5]);
    assert!(low.f0_range[1] < high.f0_range[0]);
    let mean = |p: &SingerProfile, seed| {
        let t = pitch_track(&synth_vocal(p, 2.0, seed).unwrap());
        t.iter().sum::<f64>() / t.len() as f64
    };
    for seed in 0..5 {
        let boundary = (low.f0_range[1] * high.f0_range[0]).sqrt();
        assert!(mean(low, seed) < boundary && mean(high, seed) > boundary);
    }
}

#[test]
fn instrumentals_are_deterministic_and_normalized() {
    for seed in 0..5 {
        let a = synth_instrumental(2.0, seed).unwrap();
        assert_eq!(a, synth_instrumental(2.0, seed).unwrap());
        assert_eq!(a.len(), 32_000);
        assert!((0.05..=0.5).contains(&a.rms()), "rms {}", a.rms());
    }
    assert!(synth_instrumental(0.0, 0).is_err());
}

fn centroid(a: &AudioBuffer) -> f64 {
    let cfg = StftConfig::default();
    let s = stft(a, &cfg).unwrap();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for ((bin, _), m) in s.magnitude.indexed_iter() {
        num += bin as f64 * bin_hz * m * m;
        den += m * m;
    }
    num / den
}

#[test]
fn vocal_and_instrumental_centroids_differ() {
    let ps = profiles();
    let (mut v, mut i) = (Vec::new(), Vec::new());
    for seed in 0..50u64 {
        v.push(centroid(&synth_vocal(&ps[seed as usize % ps.len()], 1.0, seed).unwrap()));
        i.push(centroid(&synth_instrumental(1.0, seed).unwrap()));
    }
    let stats = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64)
    };
    let ((mv, vv), (mi, vi)) = (stats(&v), stats(&i));
    let t = (mv - mi).abs() / ((vv + vi) / 50.0).sqrt();
    assert!(t > 5.0, "vocal {mv:.0} Hz, instrumental {mi:.0} Hz, t = {t:.2}");
}

#[test]
fn songs_mix_additively_along_the_recipe() {
    let ps = profiles();
    for seed in 0..4 {
        let recipe = random_recipe(seed as usize % 6, 9.0, seed).unwrap();
        let song = synth_song(&recipe, &ps).unwrap();
        assert!((SNR_RANGE_DB[0]..=SNR_RANGE_DB[1]).contains(&song.snr_db));
        for ((m, v), i) in song.mixture.samples().iter().zip(song.vocal.samples()).zip(song.instrumental.samples()) {
            assert!((m - i - v).abs() < 1e-9);
        }

        // Boundaries land on the nearest sample.
        let tol = 0.5 / 16_000.0 + 1e-12;
        let (mut t, mut exact) = (0.0, 0.0);
        assert_eq!(song.timeline.segments.len(), recipe.sections.len());
        for (seg, sec) in song.timeline.segments.iter().zip(&recipe.sections) {
            exact += sec.duration_s;
            assert!(seg.start == t && (seg.end - exact).abs() < tol);
            let expected = if sec.kind == SectionKind::Vocal { Label::Vocal } else { Label::NonVocal };
            assert_eq!(seg.label, expected);
            if seg.label == Label::NonVocal {
                let sr = song.vocal.sample_rate() as f64;
                let part = song.vocal.slice((seg.start * sr).ceil() as usize, (seg.end * sr).floor() as usize);
                assert_eq!(part.rms(), 0.0);
            }
            t = seg.end;
        }
    }
}

#[test]
fn invalid_recipes_are_rejected() {
    let ps = profiles();
    let short = SongRecipe {
        sections: vec![
            Section { duration_s: 2.0, kind: SectionKind::Instrumental },
            Section { duration_s: 2.0, kind: SectionKind::Vocal },
        ],
        singer: 0,
        tempo: 100.0,
        seed: 0,
    };
    assert!(synth_song(&short, &ps).is_err());
    let all_vocal = SongRecipe { sections: vec![Section { duration_s: 9.0, kind: SectionKind::Vocal }], ..short.clone() };
    assert!(synth_song(&all_vocal, &ps).is_err());
    assert!(random_recipe(0, 5.0, 0).is_err());
}

#[test]
fn profiles_have_well_separated_pitch() {
    for n in [2, 6, 18] {
        let ps = generate_profiles(n, 7).unwrap();
        for (a, pa) in ps.iter().enumerate() {
            for pb in &ps[a + 1..] {
                assert!((pa.mean_f0() - pb.mean_f0()).abs() >= 30.0);
            }
        }
    }
}

#[test]
fn default_dataset_has_balanced_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let summary = build_dataset(&DatasetSpec::default(), dir.path()).unwrap();
    assert_eq!(summary.clips.len(), 120);
    let cls: Vec<ClassificationLine> = read_jsonl(&dir.path().join(CLASSIFICATION_MANIFEST)).unwrap();
    assert_eq!(cls.len(), 120);
    for p in &summary.profiles {
        let mine: Vec<_> = cls.iter().filter(|l| l.singer == p.name).collect();
        assert_eq!(mine.len(), 20);
        assert_eq!(mine.iter().filter(|l| l.split == Split::Test).count(), 4);
    }
    let seg: Vec<SegmentationLine> = read_jsonl(&dir.path().join(SEGMENTATION_MANIFEST)).unwrap();
    let pairs: Vec<PairLine> = read_jsonl(&dir.path().join(SEPARATION_MANIFEST)).unwrap();
    assert_eq!((seg.len(), pairs.len()), (120, 120));
    assert!(dir.path().join(DATASET_FILE).exists());
}

#[test]
fn rebuilding_reproduces_identical_files() {
    let spec = DatasetSpec { num_singers: 2, clips_per_singer: 2, clip_seconds: 8.0, ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    build_dataset(&spec, a.path()).unwrap();
    build_dataset(&spec, b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path().join("audio")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for n in names {
        assert_eq!(fs::read(a.path().join("audio").join(&n)).unwrap(), fs::read(b.path().join("audio").join(&n)).unwrap());
    }
    for m in [SEGMENTATION_MANIFEST, SEPARATION_MANIFEST, CLASSIFICATION_MANIFEST, DATASET_FILE] {
        assert_eq!(fs::read(a.path().join(m)).unwrap(), fs::read(b.path().join(m)).unwrap());
    }
}
