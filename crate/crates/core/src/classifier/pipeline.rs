use ndarray::s;
use serde::{Deserialize, Serialize};

use super::net::{classnet_forward, features_from_spectrogram, ClassifierModel};
use crate::error::{Error, Result};
use crate::segmenter::{segment_song, SegmentTimeline, SegmenterModel, TransitionModel, MIN_SEGMENT_SECONDS};
use crate::separator::{separate, SeparatorModel, DEFAULT_SNIPPET_SECONDS};
use crate::signal::{chop_covering, stft, to_pipeline_rate, AudioBuffer, FeatureMatrix, StftConfig};

pub const MIN_SONG_SECONDS: f64 = 1.0;
/// Trailing snippets with less real audio than this are ignored when the
/// song has other snippets.
pub const MIN_SNIPPET_SECONDS: f64 = 1.0;

/// Where classifier features come from.
#[derive(Clone, Copy, Debug)]
pub enum FeatureSource<'a> {
    /// Separated vocal magnitude.
    Separated(&'a SeparatorModel),
    /// Mixture magnitude, bypassing separation.
    Mixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub singer: usize,
    pub name: String,
    pub distribution: Vec<f64>,
    pub snippets: Vec<Vec<f64>>,
}

/// Samples inside the vocal intervals of `timeline`, concatenated.
pub fn vocal_audio(song: &AudioBuffer, timeline: &SegmentTimeline) -> Result<AudioBuffer> {
    let sr = song.sample_rate() as f64;
    let parts: Vec<AudioBuffer> = timeline
        .vocal_intervals()
        .map(|seg| {
            let start = ((seg.start * sr).round() as usize).min(song.len());
            let end = ((seg.end * sr).round() as usize).min(song.len());
            song.slice(start, end)
        })
        .filter(|p| !p.is_empty())
        .collect();
    if parts.is_empty() {
        return Err(Error::NoVocalContent);
    }
    Ok(AudioBuffer::concat(&parts)?)
}

/// Per-snippet feature matrices over the real (non-padding) frames.
pub fn snippet_features(audio: &AudioBuffer, source: FeatureSource, snippet_seconds: f64) -> Result<Vec<FeatureMatrix>> {
    let audio = to_pipeline_rate(audio)?;
    let cfg = StftConfig::default();
    let mut out = Vec::new();
    match source {
        FeatureSource::Separated(model) => {
            for snip in separate(&audio, model, snippet_seconds)?.snippets {
                let mag = snip.spectrogram.magnitude.slice(s![.., ..snip.valid_frames]).to_owned();
                out.push((snip.valid_frames, features_from_spectrogram(&mag, &cfg)?));
            }
        }
        FeatureSource::Mixture => {
            let chopped = chop_covering(&audio, snippet_seconds)?;
            for (snip, &valid) in chopped.snippets.iter().zip(&chopped.valid_lengths) {
                let frames = cfg.frames_for(valid);
                let mag = stft(snip, &cfg)?.magnitude.slice(s![.., ..frames]).to_owned();
                out.push((frames, features_from_spectrogram(&mag, &cfg)?));
            }
        }
    }
    let min_frames = (MIN_SNIPPET_SECONDS / cfg.hop_seconds()).round() as usize;
    if out.len() > 1 && out.last().is_some_and(|(f, _)| *f < min_frames) {
        out.pop();
    }
    Ok(out.into_iter().map(|(_, f)| f).collect())
}

/// Mean of the snippet distributions; argmax with ties to the lowest index.
pub fn predict_from_features(snippets: &[FeatureMatrix], model: &ClassifierModel) -> Result<Prediction> {
    if snippets.is_empty() {
        return Err(Error::NoVocalContent);
    }
    let per_snippet = snippets.iter().map(|f| classnet_forward(f, model)).collect::<Result<Vec<_>>>()?;
    let distribution = mean_distribution(&per_snippet);
    let singer = argmax(&distribution);
    Ok(Prediction { singer, name: model.labels.name(singer).to_string(), distribution, snippets: per_snippet })
}

pub(crate) fn mean_distribution(ds: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = vec![0.0; ds[0].len()];
    for d in ds {
        for (m, p) in mean.iter_mut().zip(d) {
            *m += p;
        }
    }
    let n = ds.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

pub(crate) fn argmax(d: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in d.iter().enumerate() {
        if p > d[best] {
            best = i;
        }
    }
    best
}

/// Trained models and settings for song-level identification.
#[derive(Clone, Copy, Debug)]
pub struct Pipeline<'a> {
    pub segmenter: &'a SegmenterModel,
    pub source: FeatureSource<'a>,
    pub classifier: &'a ClassifierModel,
    pub transitions: TransitionModel,
    pub min_segment_seconds: f64,
    pub snippet_seconds: f64,
}

impl<'a> Pipeline<'a> {
    pub fn new(segmenter: &'a SegmenterModel, source: FeatureSource<'a>, classifier: &'a ClassifierModel) -> Self {
        Self {
            segmenter,
            source,
            classifier,
            transitions: TransitionModel::default(),
            min_segment_seconds: MIN_SEGMENT_SECONDS,
            snippet_seconds: DEFAULT_SNIPPET_SECONDS,
        }
    }

    /// Segments the song and returns the features of its vocal part.
    pub fn song_features(&self, song: &AudioBuffer) -> Result<Vec<FeatureMatrix>> {
        let seconds = song.duration_seconds();
        if seconds < MIN_SONG_SECONDS {
            return Err(Error::TooShort { seconds, minimum: MIN_SONG_SECONDS });
        }
        let song = to_pipeline_rate(song)?;
        let seg = segment_song(&song, self.segmenter, &self.transitions, self.min_segment_seconds)?;
        let vocal = vocal_audio(&song, &seg.smoothed)?;
        snippet_features(&vocal, self.source, self.snippet_seconds)
    }

    pub fn predict_song(&self, song: &AudioBuffer) -> Result<Prediction> {
        predict_from_features(&self.song_features(song)?, self.classifier)
    }
}

pub fn predict_song(song: &AudioBuffer, pipeline: &Pipeline) -> Result<Prediction> {
    pipeline.predict_song(song)
}
