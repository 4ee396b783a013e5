use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use vocalid_nn::{adam_step, clip_grad_norm, seeded, AdamConfig, Tape, Tensor};

use super::net::{sepnet_output, SeparatorConfig, SeparatorModel};
use super::SnippetPair;
use crate::error::{Error, Result};
use crate::signal::{chop_covering, log1p_compress, stft, to_pipeline_rate, StftConfig};
use crate::Trained;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatorTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Frames of the random excerpt taken from each snippet per step.
    pub crop_frames: usize,
    pub learning_rate: f64,
    pub snippet_seconds: f64,
    /// Global gradient-norm limit applied before each update.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for SeparatorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 4,
            crop_frames: 128,
            learning_rate: 1e-3,
            snippet_seconds: super::DEFAULT_SNIPPET_SECONDS,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

/// log1p magnitudes of one training snippet.
struct Example {
    mixture: Array2<f64>,
    vocal: Array2<f64>,
}

fn examples(pairs: &[SnippetPair], snippet_seconds: f64) -> Result<Vec<Example>> {
    let cfg = StftConfig::default();
    let mut out = Vec::new();
    for pair in pairs {
        pair.check()?;
        let mix = chop_covering(&to_pipeline_rate(&pair.mixture)?, snippet_seconds)?;
        let voc = chop_covering(&to_pipeline_rate(&pair.vocal)?, snippet_seconds)?;
        for (m, v) in mix.snippets.iter().zip(&voc.snippets) {
            out.push(Example {
                mixture: log1p_compress(&stft(m, &cfg)?.magnitude)?,
                vocal: log1p_compress(&stft(v, &cfg)?.magnitude)?,
            });
        }
    }
    Ok(out)
}

fn stack(parts: &[Array2<f64>]) -> Result<Tensor> {
    let (bins, frames) = parts[0].dim();
    let data = parts.iter().flat_map(|p| p.iter().copied()).collect();
    Ok(Tensor::new(&[parts.len(), bins, frames], data)?)
}

/// L1 regression of vocal log1p magnitudes from mixture log1p magnitudes.
/// An epoch visits every snippet once in shuffled order, each as a random
/// `crop_frames` excerpt.
pub fn train_separator(
    pairs: &[SnippetPair],
    config: &SeparatorConfig,
    train: &SeparatorTrainConfig,
) -> Result<Trained<SeparatorModel>> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("separation training set is empty".into()));
    }
    if train.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let data = examples(pairs, train.snippet_seconds)?;
    if let Some(e) = data.iter().find(|e| e.mixture.nrows() != config.bins) {
        return Err(Error::InvalidInput(format!(
            "spectrograms have {} bins, the separator expects {}",
            e.mixture.nrows(),
            config.bins
        )));
    }
    let multiple = config.frame_multiple();
    let frames = data[0].mixture.ncols();
    let crop = (train.crop_frames.min(frames) / multiple) * multiple;
    if crop == 0 {
        return Err(Error::InvalidInput(format!(
            "snippets of {frames} frames are too short for the separator (need {multiple})"
        )));
    }

    let mut rng = seeded(train.seed);
    let mut model = SeparatorModel::init(config.clone(), &mut rng)?;
    let mut adam = AdamConfig::with_learning_rate(train.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    for _ in 0..train.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for batch in order.chunks(train.batch_size) {
            let mut xs = Vec::with_capacity(batch.len());
            let mut ys = Vec::with_capacity(batch.len());
            for &i in batch {
                let e = &data[i];
                let start = rng.gen_range(0..=e.mixture.ncols() - crop);
                xs.push(e.mixture.slice(s![.., start..start + crop]).to_owned());
                ys.push(e.vocal.slice(s![.., start..start + crop]).to_owned());
            }
            let mut tape = Tape::new();
            let x = tape.input(stack(&xs)?)?;
            let pred = sepnet_output(&mut tape, config, &model.params, x)?;
            let loss = tape.l1_loss(pred, &stack(&ys)?)?;
            total += tape.value(loss).item();
            steps += 1;
            tape.backward(loss, &mut model.params)?;
            if let Some(limit) = train.clip_norm {
                clip_grad_norm(&mut model.params, limit);
            }
            adam_step(&mut model.params, &mut adam)?;
        }
        epoch_losses.push(total / steps.max(1) as f64);
    }
    Ok(Trained { model, epoch_losses })
}
