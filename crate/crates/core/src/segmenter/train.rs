use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use vocalid_nn::{adam_step, seeded, AdamConfig, Mode, Tape};

use super::net::{segmenter_features, window_batch, SegmenterConfig, SegmenterModel};
use super::timeline::{Label, SegmentTimeline};
use crate::error::{Error, Result};
use crate::norm::FeatureNorm;
use crate::signal::{AudioBuffer, FeatureMatrix};
use crate::Trained;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmenterTrainConfig {
    pub epochs: usize,
    /// Batches drawn per epoch.
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SegmenterTrainConfig {
    fn default() -> Self {
        Self { epochs: 5, steps_per_epoch: 40, batch_size: 64, learning_rate: 1e-3, seed: 0 }
    }
}

/// Raw (unstandardized) features with their per-frame ground truth.
#[derive(Clone, Debug)]
pub struct LabelledFeatures {
    pub features: FeatureMatrix,
    pub labels: Vec<Label>,
}

impl LabelledFeatures {
    pub fn from_song(audio: &AudioBuffer, truth: &SegmentTimeline) -> Result<Self> {
        let features = segmenter_features(audio)?;
        let labels = truth.frame_labels(features.frames(), features.hop_seconds);
        Ok(Self { features, labels })
    }
}

pub fn train_segmenter(
    data: &[(AudioBuffer, SegmentTimeline)],
    config: &SegmenterConfig,
    train: &SegmenterTrainConfig,
) -> Result<Trained<SegmenterModel>> {
    let songs = data
        .iter()
        .map(|(a, t)| LabelledFeatures::from_song(a, t))
        .collect::<Result<Vec<_>>>()?;
    train_segmenter_on_features(&songs, config, train)
}

/// Trains on precomputed features. Each step draws half of the batch from
/// vocal frames and half from non-vocal frames, uniformly with replacement.
pub fn train_segmenter_on_features(
    songs: &[LabelledFeatures],
    config: &SegmenterConfig,
    train: &SegmenterTrainConfig,
) -> Result<Trained<SegmenterModel>> {
    if songs.is_empty() {
        return Err(Error::InvalidInput("segmentation training set is empty".into()));
    }
    if train.batch_size < 2 {
        return Err(Error::InvalidInput("segmenter batches need at least 2 windows".into()));
    }
    let mut pools: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for (s, song) in songs.iter().enumerate() {
        if song.labels.len() != song.features.frames() {
            return Err(Error::InvalidInput(format!("song {s}: label count differs from frame count")));
        }
        for (t, l) in song.labels.iter().enumerate() {
            pools[l.index()].push((s, t));
        }
    }
    if pools.iter().any(Vec::is_empty) {
        return Err(Error::SingleClass { stage: "segmentation" });
    }

    let norm = FeatureNorm::fit(songs.iter().map(|s| &s.features.data))?;
    let standardized = songs
        .iter()
        .map(|s| norm.apply(&s.features.data))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = seeded(train.seed);
    let mut model = SegmenterModel::init(config.clone(), norm, &mut rng)?;
    let mut adam = AdamConfig::with_learning_rate(train.learning_rate);
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let per_class = [train.batch_size / 2, train.batch_size - train.batch_size / 2];

    for _ in 0..train.epochs {
        let mut total = 0.0;
        for _ in 0..train.steps_per_epoch {
            let mut picks: Vec<((usize, usize), usize)> = Vec::with_capacity(train.batch_size);
            for (class, pool) in pools.iter().enumerate() {
                for _ in 0..per_class[class] {
                    picks.push((pool[rng.gen_range(0..pool.len())], class));
                }
            }
            picks.shuffle(&mut rng);

            let window = config.window_frames;
            let mut data = Vec::with_capacity(picks.len() * window * config.feature_dims);
            for &((s, t), _) in &picks {
                data.extend(window_batch(&standardized[s], &[t], window)?.into_data());
            }
            let labels: Vec<usize> = picks.iter().map(|&(_, c)| c).collect();
            let mut tape = Tape::new();
            let x = tape.input(vocalid_nn::Tensor::new(&[picks.len(), 1, window, config.feature_dims], data)?)?;
            let logits = model.logits(&mut tape, x, Mode::Train, &mut rng)?;
            let loss = tape.softmax_xent(logits, &labels)?;
            total += tape.value(loss.loss).item();
            tape.backward(loss.loss, &mut model.params)?;
            adam_step(&mut model.params, &mut adam)?;
        }
        epoch_losses.push(total / train.steps_per_epoch.max(1) as f64);
    }
    Ok(Trained { model, epoch_losses })
}
