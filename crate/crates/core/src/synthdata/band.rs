use std::f64::consts::PI;

use rand::Rng;
use vocalid_nn::seeded;

use super::{derive_seed, Biquad, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

/// RMS of a synthesized instrumental before mixing.
pub const INSTRUMENTAL_RMS: f64 = 0.12;

/// Semitone offsets of the chord tones above the root.
const MAJOR: [f64; 3] = [0.0, 4.0, 7.0];
const MINOR: [f64; 3] = [0.0, 3.0, 7.0];

pub fn synth_instrumental(duration_s: f64, seed: u64) -> Result<AudioBuffer> {
    let tempo = seeded(derive_seed(seed, 0x7470)).gen_range(84.0..132.0);
    synth_instrumental_with_tempo(duration_s, tempo, seed)
}

/// Low sawtooth triads that change every two bars, a kick and hi-hat on the
/// beat grid, and a low-passed noise floor. Output RMS is
/// [`INSTRUMENTAL_RMS`].
pub fn synth_instrumental_with_tempo(duration_s: f64, tempo_bpm: f64, seed: u64) -> Result<AudioBuffer> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidInput(format!("instrumental duration {duration_s} s must be positive")));
    }
    if !(20.0..=400.0).contains(&tempo_bpm) {
        return Err(Error::InvalidInput(format!("tempo {tempo_bpm} bpm outside 20–400")));
    }
    let sr = SAMPLE_RATE as f64;
    let n = (duration_s * sr).round() as usize;
    let mut rng = seeded(derive_seed(seed, 0x696e));
    let beat = 60.0 / tempo_bpm;
    let chord_len = 8.0 * beat;

    let chords = (duration_s / chord_len).ceil() as usize + 1;
    // Per chord, per voice: frequency and harmonic amplitudes.
    let voicings: Vec<Vec<(f64, Vec<f64>)>> = (0..chords)
        .map(|_| {
            let root = 55.0 * 2f64.powf(rng.gen_range(0..12) as f64 / 12.0);
            let shape = if rng.gen_bool(0.5) { MAJOR } else { MINOR };
            shape
                .iter()
                .map(|s| {
                    let f = root * 2f64.powf(s / 12.0);
                    let amps = (1..=(4000.0 / f) as usize)
                        .map(|k| (-(k as f64) * f / 1200.0).exp() / k as f64)
                        .collect();
                    (f, amps)
                })
                .collect()
        })
        .collect();

    let mut pad = vec![0.0; n];
    let mut phases = [0.0f64; 3];
    for (i, v) in pad.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let c = (t / chord_len) as usize;
        let pos = t - c as f64 * chord_len;
        let env = (pos / 0.05).min(1.0) * (0.6 + 0.4 * (-pos / chord_len * 2.0).exp());
        let mut sum = 0.0;
        for (p, (f, amps)) in phases.iter_mut().zip(&voicings[c]) {
            *p = (*p + 2.0 * PI * f / sr) % (2.0 * PI);
            let (s1, c1) = p.sin_cos();
            let (mut prev, mut cur) = (0.0, s1);
            for a in amps {
                sum += a * cur;
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
            }
        }
        *v = env * sum;
    }

    let mut kicks = vec![0.0; n];
    let mut hats = vec![0.0; n];
    let beats = (duration_s / beat).ceil() as usize;
    for b in 0..beats {
        let start = (b as f64 * beat * sr) as usize;
        if b % 2 == 0 {
            for j in 0..((0.25 * sr) as usize).min(n.saturating_sub(start)) {
                let t = j as f64 / sr;
                let f = 50.0 + 90.0 * (-t / 0.03).exp();
                kicks[start + j] += 1.2 * (-t / 0.07).exp() * (2.0 * PI * f * t).sin();
            }
        }
        for offset in [0.0, 0.5] {
            let h_start = start + (offset * beat * sr) as usize;
            for j in 0..((0.05 * sr) as usize).min(n.saturating_sub(h_start)) {
                let t = j as f64 / sr;
                hats[h_start + j] += 0.5 * (-t / 0.012).exp() * rng.gen_range(-1.0..1.0);
            }
        }
    }
    let mut hat_filter = Biquad::highpass(6000.0, 0.7);
    let mut floor_filter = Biquad::lowpass(800.0, 0.7);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let noise = floor_filter.process(rng.gen_range(-1.0..1.0));
        out.push(pad[i] + kicks[i] + hat_filter.process(hats[i]) + 0.05 * noise);
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= INSTRUMENTAL_RMS / rms);
    }
    Ok(AudioBuffer::new(out, SAMPLE_RATE)?)
}
