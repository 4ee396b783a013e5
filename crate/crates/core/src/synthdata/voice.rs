use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use vocalid_nn::seeded;

use super::{derive_seed, Biquad, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

/// RMS of a synthesized vocal before mixing.
pub const VOCAL_RMS: f64 = 0.08;
/// Highest harmonic frequency kept in the glottal source.
const SOURCE_CEILING_HZ: f64 = 7000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingerProfile {
    pub name: String,
    /// Lowest and highest fundamental, Hz.
    pub f0_range: [f64; 2],
    pub vibrato_rate: f64,
    /// Peak vibrato excursion in cents.
    pub vibrato_depth: f64,
    pub formant_centers: [f64; 3],
    /// Breath-noise to voice ratio.
    pub breathiness: f64,
}

impl SingerProfile {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.f0_range;
        if !(80.0..=1000.0).contains(&lo) || !(80.0..=1000.0).contains(&hi) || lo >= hi {
            return Err(Error::InvalidInput(format!("{}: f0 range {lo}–{hi} Hz outside 80–1000 Hz", self.name)));
        }
        let f = self.formant_centers;
        if !(f[0] < f[1] && f[1] < f[2]) || f[2] >= SAMPLE_RATE as f64 / 2.0 {
            return Err(Error::InvalidInput(format!("{}: formants {f:?} must increase below Nyquist", self.name)));
        }
        if !(0.0..=0.5).contains(&self.breathiness) {
            return Err(Error::InvalidInput(format!("{}: breathiness {} outside [0, 0.5]", self.name, self.breathiness)));
        }
        if self.vibrato_rate < 0.0 || self.vibrato_depth < 0.0 {
            return Err(Error::InvalidInput(format!("{}: vibrato must be nonnegative", self.name)));
        }
        Ok(())
    }

    /// Geometric centre of the pitch range.
    pub fn mean_f0(&self) -> f64 {
        (self.f0_range[0] * self.f0_range[1]).sqrt()
    }
}

/// Note targets wander by up to ±3 semitones, reflected back into the
/// range shrunk by the vibrato excursion; consecutive notes glide.
fn pitch_track(profile: &SingerProfile, samples: usize, rng: &mut impl Rng) -> Vec<f64> {
    let margin = 2f64.powf(profile.vibrato_depth / 1200.0) * 1.01;
    let lo = (profile.f0_range[0] * margin).ln();
    let hi = (profile.f0_range[1] / margin).ln().max(lo);
    let reflect = |mut v: f64| {
        for _ in 0..4 {
            if v < lo {
                v = 2.0 * lo - v;
            }
            if v > hi {
                v = 2.0 * hi - v;
            }
        }
        v.clamp(lo, hi)
    };
    let sr = SAMPLE_RATE as f64;
    let glide = (-1.0 / (0.03 * sr)).exp();
    let mut target = rng.gen_range(lo..=hi);
    let mut current = target;
    let mut remaining = 0usize;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        if remaining == 0 {
            target = reflect(target + rng.gen_range(-3.0..=3.0) / 12.0 * std::f64::consts::LN_2);
            remaining = (rng.gen_range(0.2..0.6) * sr) as usize;
        }
        remaining -= 1;
        current = glide * current + (1.0 - glide) * target;
        out.push(current);
    }
    out
}

/// Harmonic glottal source through three parallel formant resonators plus
/// breath noise. Output RMS is [`VOCAL_RMS`].
pub fn synth_vocal(profile: &SingerProfile, duration_s: f64, seed: u64) -> Result<AudioBuffer> {
    profile.validate()?;
    if !(duration_s > 0.0) {
        return Err(Error::InvalidInput(format!("vocal duration {duration_s} s must be positive")));
    }
    let sr = SAMPLE_RATE as f64;
    let n = (duration_s * sr).round() as usize;
    let mut rng = seeded(derive_seed(seed, 0x766f));
    let log_f0 = pitch_track(profile, n, &mut rng);
    let vib_phase0 = rng.gen_range(0.0..2.0 * PI);
    let trem_rate = rng.gen_range(0.3..0.8);

    let gains = [1.0, 0.55, 0.3];
    let mut formants: Vec<Biquad> = profile
        .formant_centers
        .iter()
        .map(|&f| Biquad::bandpass(f, (f / 90.0).max(4.0)))
        .collect();

    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for (i, lf) in log_f0.iter().enumerate() {
        let t = i as f64 / sr;
        let vib = profile.vibrato_depth / 1200.0 * (2.0 * PI * profile.vibrato_rate * t + vib_phase0).sin();
        let f0 = lf.exp() * 2f64.powf(vib);
        phase = (phase + 2.0 * PI * f0 / sr) % (2.0 * PI);
        let harmonics = (SOURCE_CEILING_HZ / f0).floor().max(1.0) as usize;
        // sin(kφ) by the Chebyshev recurrence.
        let (s1, c1) = phase.sin_cos();
        let (mut prev, mut cur) = (0.0, s1);
        let mut source = 0.0;
        for k in 1..=harmonics {
            source += cur / k as f64;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        let amp = 0.85 + 0.15 * (2.0 * PI * trem_rate * t).sin();
        let excitation = amp * (source + profile.breathiness * 3.0 * rng.gen_range(-1.0..1.0));
        let voiced: f64 = formants.iter_mut().zip(gains).map(|(f, g)| g * f.process(excitation)).sum();
        out.push(voiced + 0.03 * excitation);
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= VOCAL_RMS / rms);
    }
    Ok(AudioBuffer::new(out, SAMPLE_RATE)?)
}
