use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use vocalid::segmenter::{viterbi_smooth, FrameProbs, Label, TransitionModel};
use vocalid::signal::{expm1_expand, istft, log1p_compress, mfcc, stft, AudioBuffer, StftConfig};

use crate::{ensure, within, Outcome};

type TestRng = rand::rngs::StdRng;

/// Exhaustive MAP search over all 2^T label paths.
fn brute_force(p: &[f64], tm: &TransitionModel) -> Vec<Label> {
    let stay = [tm.p_stay_non_vocal, tm.p_stay_vocal];
    let prior = [1.0 - tm.prior_vocal, tm.prior_vocal];
    let mut best = (f64::NEG_INFINITY, 0u32);
    for path in 0..(1u32 << p.len()) {
        let state = |i: usize| ((path >> i) & 1) as usize;
        let emit = |i: usize| if state(i) == 1 { p[i] } else { 1.0 - p[i] };
        let mut score = prior[state(0)].ln() + emit(0).ln();
        for i in 1..p.len() {
            let a = if state(i) == state(i - 1) { stay[state(i - 1)] } else { 1.0 - stay[state(i - 1)] };
            score += a.ln() + emit(i).ln();
        }
        if score > best.0 {
            best = (score, path);
        }
    }
    (0..p.len()).map(|i| Label::from_index(((best.1 >> i) & 1) as usize)).collect()
}

pub fn viterbi() -> Outcome {
    let start = Instant::now();
    let mut rng = TestRng::seed_from_u64(77);
    for n in 0..1000 {
        let t = rng.gen_range(1..=12);
        let p: Vec<f64> = (0..t).map(|_| rng.gen_range(0.001..0.999)).collect();
        let tm = TransitionModel {
            p_stay_vocal: rng.gen_range(0.05..0.99),
            p_stay_non_vocal: rng.gen_range(0.05..0.99),
            prior_vocal: rng.gen_range(0.05..0.95),
        };
        let got = viterbi_smooth(&FrameProbs { p_vocal: p.clone(), hop_seconds: 0.01 }, &tm).map_err(|e| e.to_string())?;
        ensure!(got == brute_force(&p, &tm), "instance {n} differs: p = {p:?}, {tm:?}");
    }
    within(start.elapsed(), Duration::from_secs(10), "viterbi check")?;
    Ok("1000/1000 instances match exhaustive search".into())
}

fn noise(len: usize, seed: u64) -> AudioBuffer {
    let mut rng = TestRng::seed_from_u64(seed);
    AudioBuffer::new((0..len).map(|_| rng.gen_range(-0.9..0.9)).collect(), 16_000).unwrap()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Reflect-padded, periodic-Hann-windowed frame built without the library.
fn frame(x: &[f64], n: usize, hop: usize, t: usize) -> Vec<f64> {
    let len = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut q = (t * hop + i) as isize - (n / 2) as isize;
            while q < 0 || q >= len {
                if q < 0 {
                    q = -q;
                }
                if q >= len {
                    q = 2 * (len - 1) - q;
                }
            }
            (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()) * x[q as usize]
        })
        .collect()
}

fn naive_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in frame.iter().enumerate() {
                let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn naive_mfcc(x: &[f64], cfg: &StftConfig, filters: usize, coeffs: usize) -> Vec<Vec<f64>> {
    let n = cfg.fft_size;
    let sr = cfg.sample_rate as f64;
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(sr / 2.0);
    let edge: Vec<usize> =
        (0..filters + 2).map(|i| (inv(top * i as f64 / (filters + 1) as f64) * n as f64 / sr).round() as usize).collect();
    (0..x.len().div_ceil(cfg.hop))
        .map(|t| {
            let power = naive_power(&frame(x, n, cfg.hop, t));
            let logs: Vec<f64> = (0..filters)
                .map(|f| {
                    let (l, c, r) = (edge[f], edge[f + 1], edge[f + 2]);
                    let e: f64 = power
                        .iter()
                        .enumerate()
                        .map(|(k, p)| {
                            let w = if k >= l && k <= c {
                                (k - l) as f64 / (c - l) as f64
                            } else if k > c && k <= r {
                                (r - k) as f64 / (r - c) as f64
                            } else {
                                0.0
                            };
                            w * p
                        })
                        .sum();
                    e.max(1e-10).ln()
                })
                .collect();
            (0..coeffs)
                .map(|k| {
                    let scale = (if k == 0 { 1.0 } else { 2.0 } / filters as f64).sqrt();
                    scale
                        * logs
                            .iter()
                            .enumerate()
                            .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * filters) as f64).cos())
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

pub fn oracles() -> Outcome {
    let cfg = StftConfig::default();
    let mut worst_stft = 0.0f64;
    for seed in 0..10 {
        let x = noise(16_000, seed);
        let y = istft(&stft(&x, &cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure!(y.len() == x.len(), "round trip changed length {} to {}", x.len(), y.len());
        worst_stft = worst_stft.max(rel_l2(y.samples(), x.samples()));
    }
    ensure!(worst_stft < 1e-6, "istft(stft(x)) relative error {worst_stft:e}");

    let mut worst_mfcc = 0.0f64;
    for seed in [101u64, 102] {
        let x = noise(4800, seed);
        let got = mfcc(&stft(&x, &cfg).map_err(|e| e.to_string())?, 26, 13).map_err(|e| e.to_string())?;
        let want = naive_mfcc(x.samples(), &cfg, 26, 13);
        ensure!(got.frames() == want.len(), "mfcc frames {} vs oracle {}", got.frames(), want.len());
        for (t, row) in want.iter().enumerate() {
            for (k, w) in row.iter().enumerate() {
                worst_mfcc = worst_mfcc.max((got.data[[t, k]] - w).abs() / w.abs().max(1.0));
            }
        }
    }
    ensure!(worst_mfcc < 1e-6, "mfcc deviates from naive oracle by {worst_mfcc:e}");

    let mut rng = TestRng::seed_from_u64(9);
    let m = Array2::from_shape_fn((257, 200), |_| rng.gen_range(0.0f64..1e4) * rng.gen_range(0.0f64..1.0).powi(4));
    let back = expm1_expand(&log1p_compress(&m).map_err(|e| e.to_string())?);
    let worst_log = back.iter().zip(m.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(worst_log < 1e-9, "log1p/expm1 round trip error {worst_log:e}");

    Ok(format!("stft {worst_stft:.1e}, mfcc {worst_mfcc:.1e}, log1p {worst_log:.1e}"))
}
