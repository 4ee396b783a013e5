//! Singer identification from vocal features: a stacked bidirectional LSTM
//! over MFCC frames with mean pooling, truncated-BPTT training, song-level
//! prediction, and stratified cross-validation.

mod cv;
mod metrics;
mod net;
mod pipeline;
mod train;

pub use cv::{cross_validate, stratified_kfold, CvReport, FoldReport, SongFeatures, SongOutcome};
pub use metrics::{prf_metrics, ClassMetrics, PrfReport};
pub use net::{
    classnet_forward, classnet_logits, features_from_spectrogram, ClassifierConfig, ClassifierModel, LabelMap,
    ARCHITECTURE, FEATURE_DIMS,
};
pub use pipeline::{
    predict_from_features, predict_song, snippet_features, vocal_audio, FeatureSource, Pipeline, Prediction,
    MIN_SNIPPET_SECONDS, MIN_SONG_SECONDS,
};
pub use train::{train_classifier, ClassifierTrainConfig, LabelledSequence};

use serde::{Deserialize, Serialize};

/// JSON-lines manifest entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEntry {
    pub path: String,
    pub singer: String,
}
