use std::path::Path;

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use vocalid_nn::{
    expect_architecture, load_bundle, save_bundle, seeded, softmax_rows, validate_layout, Mode, NnRng, ParamId,
    ParameterSet, Tape, Tensor, Var,
};

use crate::error::{Error, Result};
use crate::norm::FeatureNorm;
use crate::signal::{log_mel_energies, mfcc_from_magnitude, stft, to_pipeline_rate, AudioBuffer, FeatureMatrix, StftConfig};

pub const ARCHITECTURE: &str = "vocal-segmenter-cnn";
pub const CLASSES: usize = 2;
pub const MFCC_FILTERS: usize = 26;
pub const MFCC_COEFFS: usize = 13;
/// Contiguous groups of log-mel filters averaged into the extra feature columns.
pub const SUMMARY_BANDS: [usize; 7] = [4, 4, 4, 4, 4, 3, 3];
/// Scoring batch size for inference.
const INFERENCE_CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub window_frames: usize,
    pub feature_dims: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: [usize; 2],
    pub pool1: [usize; 2],
    pub conv2_filters: usize,
    pub conv2_kernel: [usize; 2],
    pub pool2: [usize; 2],
    pub dense_units: [usize; 2],
    pub dropout: [f64; 2],
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            window_frames: 50,
            feature_dims: MFCC_COEFFS + SUMMARY_BANDS.len(),
            conv1_filters: 128,
            conv1_kernel: [10, 10],
            pool1: [5, 5],
            conv2_filters: 32,
            conv2_kernel: [5, 5],
            pool2: [2, 2],
            dense_units: [128, 128],
            dropout: [0.75, 0.5],
        }
    }
}

impl SegmenterConfig {
    /// Spatial size after both pooling stages.
    pub fn pooled_size(&self) -> [usize; 2] {
        let h = self.window_frames / self.pool1[0] / self.pool2[0];
        let w = self.feature_dims / self.pool1[1] / self.pool2[1];
        [h, w]
    }

    pub fn flattened_len(&self) -> usize {
        let [h, w] = self.pooled_size();
        self.conv2_filters * h * w
    }

    pub fn validate(&self) -> Result<()> {
        if self.flattened_len() == 0 {
            return Err(Error::InvalidInput(format!(
                "a {}×{} window does not survive pooling by {:?} then {:?}",
                self.window_frames, self.feature_dims, self.pool1, self.pool2
            )));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::InvalidInput(format!("dropout rates {:?} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn window_seconds(&self, hop_seconds: f64) -> f64 {
        self.window_frames as f64 * hop_seconds
    }
}

/// Per-frame vocal probabilities on the STFT hop grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameProbs {
    pub p_vocal: Vec<f64>,
    pub hop_seconds: f64,
}

struct LayerIds {
    conv1: (ParamId, ParamId),
    conv2: (ParamId, ParamId),
    dense1: (ParamId, ParamId),
    dense2: (ParamId, ParamId),
    out: (ParamId, ParamId),
}

/// Trained (or freshly initialized) segmentation network with the feature
/// standardization it was trained under.
#[derive(Clone, Debug)]
pub struct SegmenterModel {
    pub config: SegmenterConfig,
    pub norm: FeatureNorm,
    pub params: ParameterSet,
}

fn layer_pair(params: &ParameterSet, name: &str) -> Result<(ParamId, ParamId)> {
    Ok((params.id(&format!("{name}.weight"))?, params.id(&format!("{name}.bias"))?))
}

impl LayerIds {
    fn lookup(p: &ParameterSet) -> Result<Self> {
        Ok(LayerIds {
            conv1: layer_pair(p, "conv1")?,
            conv2: layer_pair(p, "conv2")?,
            dense1: layer_pair(p, "dense1")?,
            dense2: layer_pair(p, "dense2")?,
            out: layer_pair(p, "out")?,
        })
    }
}

impl SegmenterModel {
    pub fn init<R: Rng + ?Sized>(config: SegmenterConfig, norm: FeatureNorm, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = Self::fresh_params(&config, rng)?;
        Ok(Self { config, norm, params })
    }

    fn fresh_params<R: Rng + ?Sized>(c: &SegmenterConfig, rng: &mut R) -> Result<ParameterSet> {
        let mut p = ParameterSet::new();
        let [k1h, k1w] = c.conv1_kernel;
        let [k2h, k2w] = c.conv2_kernel;
        p.insert_glorot("conv1.weight", &[c.conv1_filters, 1, k1h, k1w], k1h * k1w, c.conv1_filters * k1h * k1w, rng)?;
        p.insert_zeros("conv1.bias", &[c.conv1_filters])?;
        let fan = k2h * k2w;
        p.insert_glorot(
            "conv2.weight",
            &[c.conv2_filters, c.conv1_filters, k2h, k2w],
            c.conv1_filters * fan,
            c.conv2_filters * fan,
            rng,
        )?;
        p.insert_zeros("conv2.bias", &[c.conv2_filters])?;
        let widths = [c.flattened_len(), c.dense_units[0], c.dense_units[1], CLASSES];
        for (name, w) in ["dense1", "dense2", "out"].iter().zip(widths.windows(2)) {
            p.insert_glorot(format!("{name}.weight"), &[w[0], w[1]], w[0], w[1], rng)?;
            p.insert_zeros(format!("{name}.bias"), &[w[1]])?;
        }
        Ok(p)
    }

    pub(crate) fn logits<R: Rng + ?Sized>(&self, tape: &mut Tape, x: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        segnet_logits(tape, &self.config, &self.params, x, mode, rng, None)
    }

    /// Activation shapes for one window (see [`segnet_logits`]), in
    /// `[batch × channels × frames × dims]` layout.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[1, 1, self.config.window_frames, self.config.feature_dims]))?;
        let mut trace = Vec::new();
        segnet_logits(&mut tape, &self.config, &self.params, x, Mode::Eval, &mut seeded(0), Some(&mut trace))?;
        Ok(trace)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let hyper = json!({ "config": self.config, "norm": self.norm });
        save_bundle(dir, ARCHITECTURE, hyper, &self.params)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let bundle = load_bundle(dir)?;
        expect_architecture(&bundle, ARCHITECTURE)?;
        let config: SegmenterConfig = serde_json::from_value(bundle.hyperparameters["config"].clone())?;
        let norm: FeatureNorm = serde_json::from_value(bundle.hyperparameters["norm"].clone())?;
        config.validate()?;
        validate_layout(&Self::fresh_params(&config, &mut seeded(0))?, &bundle.params)?;
        if norm.dims() != config.feature_dims {
            return Err(Error::InvalidInput(format!(
                "bundle normalization has {} dims, network expects {}",
                norm.dims(),
                config.feature_dims
            )));
        }
        Ok(Self { config, norm, params: bundle.params })
    }
}

/// Records the network on `tape` for `x: [batch × 1 × window × dims]` and
/// returns `[batch × 2]` logits. `trace` receives the shape after conv1,
/// pool1, conv2, pool2 and flattening.
pub fn segnet_logits<R: Rng + ?Sized>(
    tape: &mut Tape,
    c: &SegmenterConfig,
    params: &ParameterSet,
    x: Var,
    mode: Mode,
    rng: &mut R,
    mut trace: Option<&mut Vec<Vec<usize>>>,
) -> Result<Var> {
    let ids = LayerIds::lookup(params)?;
    let mut record = |tape: &Tape, v: Var| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(tape.shape(v).to_vec());
        }
    };
    let batch = tape.shape(x)[0];
    let param = |tape: &mut Tape, (w, b): (ParamId, ParamId)| -> Result<(Var, Var)> {
        Ok((tape.param(params, w)?, tape.param(params, b)?))
    };

    let (w, b) = param(tape, ids.conv1)?;
    let h = tape.conv2d_same(x, w, b)?;
    let h = tape.relu(h)?;
    record(tape, h);
    let h = tape.maxpool2d(h, c.pool1[0], c.pool1[1])?;
    record(tape, h);
    let (w, b) = param(tape, ids.conv2)?;
    let h = tape.conv2d_same(h, w, b)?;
    let h = tape.relu(h)?;
    record(tape, h);
    let h = tape.maxpool2d(h, c.pool2[0], c.pool2[1])?;
    record(tape, h);
    let h = tape.reshape(h, &[batch, c.flattened_len()])?;
    record(tape, h);
    let (w, b) = param(tape, ids.dense1)?;
    let h = tape.dense(h, w, b)?;
    let h = tape.relu(h)?;
    let h = tape.dropout(h, c.dropout[0], mode, rng)?;
    let (w, b) = param(tape, ids.dense2)?;
    let h = tape.dense(h, w, b)?;
    let h = tape.relu(h)?;
    let h = tape.dropout(h, c.dropout[1], mode, rng)?;
    let (w, b) = param(tape, ids.out)?;
    tape.dense(h, w, b).map_err(Into::into)
}

/// Class probabilities `[non-vocal, vocal]` for one standardized
/// `window_frames × feature_dims` window.
pub fn segnet_forward(window: &Array2<f64>, model: &SegmenterModel, mode: Mode, rng: &mut NnRng) -> Result<[f64; 2]> {
    let c = &model.config;
    if window.dim() != (c.window_frames, c.feature_dims) {
        return Err(Error::InvalidInput(format!(
            "window is {}×{}, the segmenter expects {}×{}",
            window.nrows(),
            window.ncols(),
            c.window_frames,
            c.feature_dims
        )));
    }
    let mut tape = Tape::new();
    let x = tape.input(Tensor::new(&[1, 1, c.window_frames, c.feature_dims], window.iter().copied().collect())?)?;
    let logits = model.logits(&mut tape, x, mode, rng)?;
    let probs = softmax_rows(tape.value(logits))?;
    Ok([probs.data()[0], probs.data()[1]])
}

/// Segmenter input features (`frames × 20`): 13 MFCCs followed by the mean
/// log-mel energy of each [`SUMMARY_BANDS`] group.
pub fn features_from_magnitude(magnitude: &Array2<f64>, cfg: &StftConfig) -> Result<FeatureMatrix> {
    let mfcc = mfcc_from_magnitude(magnitude, cfg, MFCC_FILTERS, MFCC_COEFFS)?;
    let log_mel = log_mel_energies(magnitude, cfg, MFCC_FILTERS)?;
    let frames = mfcc.frames();
    let mut data = Array2::zeros((frames, MFCC_COEFFS + SUMMARY_BANDS.len()));
    data.slice_mut(s![.., ..MFCC_COEFFS]).assign(&mfcc.data);
    let mut start = 0;
    for (j, &width) in SUMMARY_BANDS.iter().enumerate() {
        let band = log_mel.slice(s![.., start..start + width]);
        for t in 0..frames {
            data[[t, MFCC_COEFFS + j]] = band.row(t).mean().unwrap_or(0.0);
        }
        start += width;
    }
    Ok(FeatureMatrix { data, hop_seconds: mfcc.hop_seconds })
}

pub fn segmenter_features(audio: &AudioBuffer) -> Result<FeatureMatrix> {
    let audio = to_pipeline_rate(audio)?;
    let spec = stft(&audio, &StftConfig::default())?;
    features_from_magnitude(&spec.magnitude, &spec.config)
}

/// Stacks windows centred on `centers` (frames `t − w/2 .. t + w/2`, edge
/// frames replicated) into `[batch × 1 × window × dims]`.
pub(crate) fn window_batch(features: &Array2<f64>, centers: &[usize], window: usize) -> Result<Tensor> {
    let (frames, dims) = features.dim();
    let half = (window / 2) as isize;
    let mut data = Vec::with_capacity(centers.len() * window * dims);
    for &c in centers {
        for i in 0..window as isize {
            let t = (c as isize - half + i).clamp(0, frames as isize - 1) as usize;
            data.extend(features.row(t).iter());
        }
    }
    Ok(Tensor::new(&[centers.len(), 1, window, dims], data)?)
}

/// Scores every frame of already-standardized features.
pub fn frame_probabilities_from_features(features: &FeatureMatrix, model: &SegmenterModel) -> Result<FrameProbs> {
    let c = &model.config;
    if features.dims() != c.feature_dims {
        return Err(Error::InvalidInput(format!(
            "features have {} dims, the segmenter expects {}",
            features.dims(),
            c.feature_dims
        )));
    }
    let centers: Vec<usize> = (0..features.frames()).collect();
    let mut p_vocal = Vec::with_capacity(centers.len());
    let mut rng = seeded(0);
    for chunk in centers.chunks(INFERENCE_CHUNK) {
        let mut tape = Tape::new();
        let x = tape.input(window_batch(&features.data, chunk, c.window_frames)?)?;
        let logits = model.logits(&mut tape, x, Mode::Eval, &mut rng)?;
        let probs = softmax_rows(tape.value(logits))?;
        p_vocal.extend(probs.data().chunks_exact(CLASSES).map(|row| row[1]));
    }
    Ok(FrameProbs { p_vocal, hop_seconds: features.hop_seconds })
}

/// One vocal probability per 10 ms frame of `song`.
pub fn frame_probabilities(song: &AudioBuffer, model: &SegmenterModel) -> Result<FrameProbs> {
    let hop = StftConfig::default().hop_seconds();
    let minimum = model.config.window_seconds(hop);
    if song.duration_seconds() + 1e-9 < minimum {
        return Err(Error::TooShort { seconds: song.duration_seconds(), minimum });
    }
    let raw = segmenter_features(song)?;
    let features = FeatureMatrix { data: model.norm.apply(&raw.data)?, hop_seconds: raw.hop_seconds };
    frame_probabilities_from_features(&features, model)
}
