//! Vocal / non-vocal frame classification: a small CNN over 500 ms feature
//! windows, HMM smoothing, and interval extraction.

mod net;
mod timeline;
mod train;
mod viterbi;

pub use net::{
    features_from_magnitude, frame_probabilities, frame_probabilities_from_features, segmenter_features,
    segnet_forward, segnet_logits, FrameProbs, SegmenterConfig, SegmenterModel, ARCHITECTURE, CLASSES, SUMMARY_BANDS,
};
pub use timeline::{
    eval_segmentation, eval_segmentation_pooled, timeline_from_labels, timeline_from_labels_with_min, Label, Segment, SegmentTimeline,
    SegmentationScores, MIN_SEGMENT_SECONDS,
};
pub use train::{train_segmenter, train_segmenter_on_features, LabelledFeatures, SegmenterTrainConfig};
pub use viterbi::{argmax_labels, log_emission, viterbi_smooth, TransitionModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

/// JSON-lines training manifest entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationEntry {
    pub path: String,
    pub segments: Vec<Segment>,
}

/// Labels, unsmoothed and smoothed, for one song.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub probs: FrameProbs,
    pub raw: SegmentTimeline,
    pub smoothed: SegmentTimeline,
}

/// Segments precomputed probabilities two ways: framewise argmax without
/// merging, and Viterbi followed by the minimum-length merge.
pub fn segment_probs(probs: FrameProbs, tm: &TransitionModel, min_segment_seconds: f64) -> Result<Segmentation> {
    let raw = timeline_from_labels_with_min(&argmax_labels(&probs), probs.hop_seconds, 0.0)?;
    let smoothed = timeline_from_labels_with_min(&viterbi_smooth(&probs, tm)?, probs.hop_seconds, min_segment_seconds)?;
    Ok(Segmentation { probs, raw, smoothed })
}

pub fn segment_song(
    song: &AudioBuffer,
    model: &SegmenterModel,
    tm: &TransitionModel,
    min_segment_seconds: f64,
) -> Result<Segmentation> {
    segment_probs(frame_probabilities(song, model)?, tm, min_segment_seconds)
}

/// Scores of one song with and without HMM smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SongSegmentationScores {
    pub id: String,
    pub cnn: SegmentationScores,
    pub cnn_viterbi: SegmentationScores,
}

/// Frame-pooled precision of the network alone and with HMM smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub cnn: SegmentationScores,
    pub cnn_viterbi: SegmentationScores,
    pub per_song: Vec<SongSegmentationScores>,
}

pub fn eval_segmenter(
    songs: &[(String, AudioBuffer, SegmentTimeline)],
    model: &SegmenterModel,
    tm: &TransitionModel,
    min_segment_seconds: f64,
) -> Result<SegmentationReport> {
    let segmented = songs
        .iter()
        .map(|(id, audio, truth)| Ok((id.clone(), segment_song(audio, model, tm, min_segment_seconds)?, truth.clone())))
        .collect::<Result<Vec<_>>>()?;
    segmentation_report(&segmented)
}

/// Report over already segmented songs: `(id, segmentation, ground truth)`.
pub fn segmentation_report(songs: &[(String, Segmentation, SegmentTimeline)]) -> Result<SegmentationReport> {
    if songs.is_empty() {
        return Err(Error::InvalidInput("segmentation evaluation set is empty".into()));
    }
    let (mut raw, mut smooth, mut per_song) = (Vec::new(), Vec::new(), Vec::new());
    for (id, seg, truth) in songs {
        per_song.push(SongSegmentationScores {
            id: id.clone(),
            cnn: eval_segmentation(&seg.raw, truth)?,
            cnn_viterbi: eval_segmentation(&seg.smoothed, truth)?,
        });
        raw.push((seg.raw.clone(), truth.clone()));
        smooth.push((seg.smoothed.clone(), truth.clone()));
    }
    Ok(SegmentationReport {
        cnn: eval_segmentation_pooled(&raw)?,
        cnn_viterbi: eval_segmentation_pooled(&smooth)?,
        per_song,
    })
}
