//! Vocal separation on log1p magnitude spectrograms: strided 1-D conv
//! encoder, recurrent skip connections, transposed-conv decoder, and
//! scale-invariant SDR evaluation.

mod net;
mod train;

pub use net::{sepnet_forward, sepnet_output, SeparatorConfig, SeparatorModel, SkipKind, ARCHITECTURE};
pub use train::{train_separator, SeparatorTrainConfig};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    chop_covering, expm1_expand, istft, log1p_compress, stft, to_pipeline_rate, AudioBuffer, ComplexSpectrogram,
    StftConfig,
};

pub const DEFAULT_SNIPPET_SECONDS: f64 = 6.0;
/// Bound on reported SI-SDR magnitudes, reached by exact (or exactly wrong)
/// estimates.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// A mixture and its isolated vocal stem.
#[derive(Clone, Debug)]
pub struct SnippetPair {
    pub id: String,
    pub mixture: AudioBuffer,
    pub vocal: AudioBuffer,
}

impl SnippetPair {
    pub fn check(&self) -> Result<()> {
        if self.mixture.len() != self.vocal.len() || self.mixture.sample_rate() != self.vocal.sample_rate() {
            return Err(Error::PairLengthMismatch {
                id: self.id.clone(),
                mixture: self.mixture.len(),
                vocal: self.vocal.len(),
            });
        }
        Ok(())
    }
}

/// JSON-lines pair manifest entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub mixture: String,
    pub vocal: String,
}

/// Estimated vocal magnitude for one snippet: log1p, network, expm1, then
/// bin-wise capped at the mixture magnitude. Frame counts that are not a
/// multiple of the network stride product are zero-padded and cropped back.
pub fn estimate_vocal_magnitude(mixture_mag: &Array2<f64>, model: &SeparatorModel) -> Result<Array2<f64>> {
    let (bins, frames) = mixture_mag.dim();
    let multiple = model.config.frame_multiple();
    let padded_frames = frames.div_ceil(multiple).max(1) * multiple;
    let mut x = Array2::zeros((bins, padded_frames));
    x.slice_mut(s![.., ..frames]).assign(&log1p_compress(mixture_mag)?);
    let y = sepnet_forward(&x, model)?;
    let mut est = expm1_expand(&y.slice(s![.., ..frames]).to_owned());
    est.zip_mut_with(mixture_mag, |e, m| *e = e.min(*m));
    Ok(est)
}

/// One separated snippet on the shared STFT grid.
#[derive(Clone, Debug)]
pub struct SeparatedSnippet {
    /// Estimated vocal magnitude with the mixture phase.
    pub spectrogram: ComplexSpectrogram,
    /// Frames that cover real (non-padding) audio.
    pub valid_frames: usize,
}

#[derive(Clone, Debug)]
pub struct Separation {
    pub snippets: Vec<SeparatedSnippet>,
    /// Reconstructed vocal, exactly as long as the input.
    pub audio: AudioBuffer,
}

/// Chops the mixture into snippets (the last zero-padded), estimates each
/// vocal magnitude, resynthesizes with the mixture phase and trims the
/// concatenation to the input length.
pub fn separate(mixture: &AudioBuffer, model: &SeparatorModel, snippet_seconds: f64) -> Result<Separation> {
    if mixture.is_empty() {
        return Err(Error::InvalidInput("cannot separate empty audio".into()));
    }
    let audio = to_pipeline_rate(mixture)?;
    let cfg = StftConfig::default();
    let chopped = chop_covering(&audio, snippet_seconds)?;
    let mut snippets = Vec::with_capacity(chopped.snippets.len());
    let mut parts = Vec::with_capacity(chopped.snippets.len());
    for (snip, &valid) in chopped.snippets.iter().zip(&chopped.valid_lengths) {
        let spec = stft(snip, &cfg)?;
        let est = spec.with_magnitude(estimate_vocal_magnitude(&spec.magnitude, model)?)?;
        parts.push(istft(&est)?.slice(0, valid));
        snippets.push(SeparatedSnippet { spectrogram: est, valid_frames: cfg.frames_for(valid) });
    }
    Ok(Separation { snippets, audio: AudioBuffer::concat(&parts)? })
}

/// Scale-invariant SDR in dB, clamped to ±[`SI_SDR_CAP_DB`].
pub fn si_sdr(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::InvalidInput(format!(
            "reference has {} samples, estimate has {}",
            reference.len(),
            estimate.len()
        )));
    }
    let r = reference.samples();
    let e = estimate.samples();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::InvalidInput("SI-SDR reference is identically zero".into()));
    }
    let alpha = r.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = alpha * alpha * rr;
    let residual: f64 = r.iter().zip(e).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    let db = if target == 0.0 {
        -SI_SDR_CAP_DB
    } else if residual == 0.0 {
        SI_SDR_CAP_DB
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackScore {
    pub id: String,
    pub si_sdr: f64,
    /// SI-SDR of the unprocessed mixture against the vocal stem.
    pub baseline: f64,
    pub improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub per_track: Vec<TrackScore>,
    pub median: f64,
    pub mean: f64,
    pub baseline_median: f64,
    pub baseline_mean: f64,
    pub median_improvement: f64,
    pub mean_improvement: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn report_from_scores(per_track: Vec<TrackScore>) -> SeparationReport {
    let sdr: Vec<f64> = per_track.iter().map(|t| t.si_sdr).collect();
    let base: Vec<f64> = per_track.iter().map(|t| t.baseline).collect();
    let gain: Vec<f64> = per_track.iter().map(|t| t.improvement).collect();
    SeparationReport {
        median: median(&sdr),
        mean: mean(&sdr),
        baseline_median: median(&base),
        baseline_mean: mean(&base),
        median_improvement: median(&gain),
        mean_improvement: mean(&gain),
        per_track,
    }
}

pub fn eval_separation(pairs: &[SnippetPair], model: &SeparatorModel, snippet_seconds: f64) -> Result<SeparationReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("separation evaluation set is empty".into()));
    }
    let mut scores = Vec::with_capacity(pairs.len());
    for pair in pairs {
        pair.check()?;
        let vocal = to_pipeline_rate(&pair.vocal)?;
        let mixture = to_pipeline_rate(&pair.mixture)?;
        let estimate = separate(&mixture, model, snippet_seconds)?.audio;
        let si_sdr_value = si_sdr(&vocal, &estimate)?;
        let baseline = si_sdr(&vocal, &mixture)?;
        scores.push(TrackScore {
            id: pair.id.clone(),
            si_sdr: si_sdr_value,
            baseline,
            improvement: si_sdr_value - baseline,
        });
    }
    Ok(report_from_scores(scores))
}
