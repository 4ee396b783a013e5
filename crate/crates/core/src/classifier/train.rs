use rand::Rng;
use serde::{Deserialize, Serialize};
use vocalid_nn::{adam_step, clip_grad_norm, seeded, AdamConfig, Tape, Tensor};

use super::net::{classnet_logits, ClassifierConfig, ClassifierModel, LabelMap};
use crate::error::{Error, Result};
use crate::norm::FeatureNorm;
use crate::signal::FeatureMatrix;
use crate::Trained;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    /// Frames per truncated-BPTT chunk.
    pub tbptt_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self { epochs: 5, tbptt_len: 20, batch_size: 64, learning_rate: 1e-3, clip_norm: Some(5.0), seed: 0 }
    }
}

/// One training sequence (typically a snippet) and its class index.
#[derive(Clone, Debug)]
pub struct LabelledSequence {
    pub features: FeatureMatrix,
    pub label: usize,
}

/// Cuts every sequence into non-overlapping `tbptt_len`-frame chunks
/// (dropping the remainder) and trains on batches that cycle through the
/// classes, each slot filled with a random chunk of its class. Recurrent
/// state starts from zero in every chunk. An epoch has as many steps as
/// it takes to cover the chunk count once.
pub fn train_classifier(
    data: &[LabelledSequence],
    labels: LabelMap,
    config: &ClassifierConfig,
    train: &ClassifierTrainConfig,
) -> Result<Trained<ClassifierModel>> {
    config.validate()?;
    if train.tbptt_len == 0 || train.batch_size == 0 {
        return Err(Error::InvalidInput("chunk length and batch size must be positive".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("classification training set is empty".into()));
    }
    if let Some(bad) = data.iter().find(|s| s.label >= config.num_singers) {
        return Err(Error::InvalidInput(format!("label {} out of range for {} singers", bad.label, config.num_singers)));
    }
    let mut present: Vec<usize> = data.iter().map(|s| s.label).collect();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::SingleClass { stage: "classification" });
    }

    let norm = FeatureNorm::fit(data.iter().map(|s| &s.features.data))?;
    let len = train.tbptt_len;
    let dims = config.feature_dims;
    // Standardized chunks, each stored frame-major, grouped by class.
    let mut pools: Vec<Vec<Vec<f64>>> = vec![Vec::new(); config.num_singers];
    for s in data {
        let x = norm.apply(&s.features.data)?;
        for c in 0..x.nrows() / len {
            let chunk = x.slice(ndarray::s![c * len..(c + 1) * len, ..]);
            pools[s.label].push(chunk.iter().copied().collect());
        }
    }
    let classes: Vec<usize> = present.into_iter().filter(|&c| !pools[c].is_empty()).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!("fewer than two classes have a sequence of at least {len} frames")));
    }
    let total_chunks: usize = pools.iter().map(Vec::len).sum();
    let steps = total_chunks.div_ceil(train.batch_size);

    let mut rng = seeded(train.seed);
    let mut model = ClassifierModel::init(config.clone(), labels, norm, &mut rng)?;
    let mut adam = AdamConfig::with_learning_rate(train.learning_rate);
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let batch = train.batch_size;
    let mut slot = 0usize;

    for _ in 0..train.epochs {
        let mut total = 0.0;
        for _ in 0..steps {
            let mut picked: Vec<(&[f64], usize)> = Vec::with_capacity(batch);
            for _ in 0..batch {
                let class = classes[slot % classes.len()];
                slot += 1;
                let pool = &pools[class];
                picked.push((&pool[rng.gen_range(0..pool.len())], class));
            }
            // [T × batch × dims]
            let mut x = Vec::with_capacity(len * batch * dims);
            for t in 0..len {
                for (chunk, _) in &picked {
                    x.extend_from_slice(&chunk[t * dims..(t + 1) * dims]);
                }
            }
            let targets: Vec<usize> = picked.iter().map(|&(_, c)| c).collect();
            let mut tape = Tape::new();
            let input = tape.input(Tensor::new(&[len, batch, dims], x)?)?;
            let logits = classnet_logits(&mut tape, &model.config, &model.params, input)?;
            let loss = tape.softmax_xent(logits, &targets)?;
            total += tape.value(loss.loss).item();
            tape.backward(loss.loss, &mut model.params)?;
            if let Some(max) = train.clip_norm {
                clip_grad_norm(&mut model.params, max);
            }
            adam_step(&mut model.params, &mut adam)?;
        }
        epoch_losses.push(total / steps as f64);
    }
    Ok(Trained { model, epoch_losses })
}
