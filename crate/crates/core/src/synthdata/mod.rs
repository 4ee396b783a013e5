//! Deterministic synthetic songs: singer profiles, vocal and instrumental
//! synthesis, mixing with exact stems and annotations, and dataset export.

mod band;
mod dataset;
mod voice;

pub use band::{synth_instrumental, synth_instrumental_with_tempo, INSTRUMENTAL_RMS};
pub use dataset::{
    build_dataset, generate_profiles, random_recipe, ClassificationLine, ClipRecord, DatasetSpec, DatasetSummary,
    PairLine, SegmentationLine, Split, CLASSIFICATION_MANIFEST, DATASET_FILE, SEGMENTATION_MANIFEST,
    SEPARATION_MANIFEST,
};
pub use voice::{synth_vocal, SingerProfile, VOCAL_RMS};

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use vocalid_nn::seeded;

use crate::error::{Error, Result};
use crate::segmenter::{Label, Segment, SegmentTimeline};
use crate::signal::AudioBuffer;

pub const SAMPLE_RATE: u32 = 16_000;
pub const MIN_SONG_SECONDS: f64 = 8.0;
/// Mixing SNR bounds in dB (vocal-active RMS over instrumental RMS).
pub const SNR_RANGE_DB: [f64; 2] = [0.0, 10.0];
/// Mixture peak kept below this by scaling both stems together.
const PEAK_LIMIT: f64 = 0.95;
const FADE_SECONDS: f64 = 0.01;

/// SplitMix64 finalizer over `seed` and a stream tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Direct-form-I biquad with RBJ cookbook coefficients.
#[derive(Clone, Debug)]
pub(crate) struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Self { b: b.map(|v| v / a0), a: [a1 / a0, a2 / a0], x: [0.0; 2], y: [0.0; 2] }
    }

    fn omega(freq: f64, q: f64) -> (f64, f64) {
        let w0 = 2.0 * PI * freq / SAMPLE_RATE as f64;
        (w0.cos(), w0.sin() / (2.0 * q))
    }

    /// Unit peak gain at `freq`.
    pub fn bandpass(freq: f64, q: f64) -> Self {
        let (cos, alpha) = Self::omega(freq, q);
        Self::from_raw([alpha, 0.0, -alpha], 1.0 + alpha, -2.0 * cos, 1.0 - alpha)
    }

    pub fn lowpass(freq: f64, q: f64) -> Self {
        let (cos, alpha) = Self::omega(freq, q);
        let k = (1.0 - cos) / 2.0;
        Self::from_raw([k, 2.0 * k, k], 1.0 + alpha, -2.0 * cos, 1.0 - alpha)
    }

    pub fn highpass(freq: f64, q: f64) -> Self {
        let (cos, alpha) = Self::omega(freq, q);
        let k = (1.0 + cos) / 2.0;
        Self::from_raw([k, -2.0 * k, k], 1.0 + alpha, -2.0 * cos, 1.0 - alpha)
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1] - self.a[0] * self.y[0] - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Vocal,
    Instrumental,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub duration_s: f64,
    pub kind: SectionKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SongRecipe {
    pub sections: Vec<Section>,
    /// Index into the profile list.
    pub singer: usize,
    pub tempo: f64,
    pub seed: u64,
}

impl SongRecipe {
    pub fn duration(&self) -> f64 {
        self.sections.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self, singers: usize) -> Result<()> {
        if self.singer >= singers {
            return Err(Error::InvalidInput(format!("recipe singer {} but only {singers} profiles", self.singer)));
        }
        if self.duration() < MIN_SONG_SECONDS - 1e-9 {
            return Err(Error::InvalidInput(format!(
                "recipe lasts {:.2} s; songs need at least {MIN_SONG_SECONDS} s",
                self.duration()
            )));
        }
        if self.sections.iter().any(|s| !(s.duration_s > 0.0)) {
            return Err(Error::InvalidInput("recipe sections need positive durations".into()));
        }
        for kind in [SectionKind::Vocal, SectionKind::Instrumental] {
            if !self.sections.iter().any(|s| s.kind == kind) {
                return Err(Error::InvalidInput(format!("recipe has no {kind:?} section")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthSong {
    pub mixture: AudioBuffer,
    pub vocal: AudioBuffer,
    pub instrumental: AudioBuffer,
    pub timeline: SegmentTimeline,
    pub snr_db: f64,
}

/// Sample index where each section starts, plus the total length.
fn section_bounds(recipe: &SongRecipe) -> Vec<usize> {
    let sr = SAMPLE_RATE as f64;
    let mut t = 0.0;
    let mut bounds = vec![0];
    for s in &recipe.sections {
        t += s.duration_s;
        bounds.push((t * sr).round() as usize);
    }
    bounds
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }
}

/// Renders a recipe: the vocal stem is silent outside vocal sections and the
/// mixture is exactly `vocal + instrumental`.
pub fn synth_song(recipe: &SongRecipe, profiles: &[SingerProfile]) -> Result<SynthSong> {
    recipe.validate(profiles.len())?;
    let profile = &profiles[recipe.singer];
    let bounds = section_bounds(recipe);
    let n = *bounds.last().unwrap();
    let sr = SAMPLE_RATE as f64;

    let instrumental = synth_instrumental_with_tempo(n as f64 / sr, recipe.tempo, derive_seed(recipe.seed, 1))?;
    let mut instrumental = instrumental.into_samples();
    instrumental.resize(n, 0.0);

    let mut vocal = vec![0.0; n];
    let fade = (FADE_SECONDS * sr) as usize;
    let mut active = Vec::new();
    for (k, s) in recipe.sections.iter().enumerate() {
        if s.kind != SectionKind::Vocal {
            continue;
        }
        let (a, b) = (bounds[k], bounds[k + 1]);
        let v = synth_vocal(profile, (b - a) as f64 / sr, derive_seed(recipe.seed, 100 + k as u64))?;
        let len = b - a;
        for (j, &x) in v.samples().iter().take(len).enumerate() {
            let edge = j.min(len - 1 - j);
            let g = if edge < fade { 0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos() } else { 1.0 };
            vocal[a + j] = g * x;
        }
        active.extend_from_slice(&vocal[a..b]);
    }

    let snr_db = seeded(derive_seed(recipe.seed, 2)).gen_range(SNR_RANGE_DB[0]..=SNR_RANGE_DB[1]);
    let gain = rms(&active) / (rms(&instrumental) * 10f64.powf(snr_db / 20.0));
    instrumental.iter_mut().for_each(|v| *v *= gain);

    let peak = vocal.iter().zip(&instrumental).map(|(v, i)| (v + i).abs()).fold(0.0, f64::max);
    if peak > PEAK_LIMIT {
        let scale = PEAK_LIMIT / peak;
        vocal.iter_mut().for_each(|v| *v *= scale);
        instrumental.iter_mut().for_each(|v| *v *= scale);
    }
    let mixture: Vec<f64> = vocal.iter().zip(&instrumental).map(|(v, i)| v + i).collect();

    let mut segments: Vec<Segment> = Vec::new();
    for (k, s) in recipe.sections.iter().enumerate() {
        let label = match s.kind {
            SectionKind::Vocal => Label::Vocal,
            SectionKind::Instrumental => Label::NonVocal,
        };
        let (start, end) = (bounds[k] as f64 / sr, bounds[k + 1] as f64 / sr);
        match segments.last_mut() {
            Some(prev) if prev.label == label => prev.end = end,
            _ => segments.push(Segment { start, end, label }),
        }
    }

    Ok(SynthSong {
        mixture: AudioBuffer::new(mixture, SAMPLE_RATE)?,
        vocal: AudioBuffer::new(vocal, SAMPLE_RATE)?,
        instrumental: AudioBuffer::new(instrumental, SAMPLE_RATE)?,
        timeline: SegmentTimeline { hop_seconds: 0.01, segments },
        snr_db,
    })
}
