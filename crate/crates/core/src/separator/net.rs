use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use vocalid_nn::{
    expect_architecture, load_bundle, save_bundle, seeded, validate_layout, GruWeights, LstmWeights, ParameterSet,
    Tape, Tensor, Var,
};

use crate::error::{Error, Result};

pub const ARCHITECTURE: &str = "vocal-separator-unet";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipKind {
    Gru,
    Lstm,
}

impl std::str::FromStr for SkipKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(SkipKind::Gru),
            "lstm" => Ok(SkipKind::Lstm),
            other => Err(Error::InvalidInput(format!("unknown skip kind {other:?}; expected gru or lstm"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatorConfig {
    /// Frequency bins of the input spectrogram (input and output channels).
    pub bins: usize,
    /// Encoder output channels per layer; the decoder mirrors them.
    pub channels: [usize; 3],
    pub kernel: usize,
    pub stride: usize,
    pub skip_kind: SkipKind,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        Self { bins: 257, channels: [256, 128, 64], kernel: 5, stride: 2, skip_kind: SkipKind::Gru }
    }
}

impl SeparatorConfig {
    /// Frame counts must be a multiple of this to survive the strided stack.
    pub fn frame_multiple(&self) -> usize {
        self.stride.pow(3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.channels.contains(&0) || self.kernel == 0 || self.stride == 0 {
            return Err(Error::InvalidInput(format!("degenerate separator configuration {self:?}")));
        }
        Ok(())
    }
}

/// Vocal separation network and its configuration.
#[derive(Clone, Debug)]
pub struct SeparatorModel {
    pub config: SeparatorConfig,
    pub params: ParameterSet,
}

fn insert_skip<R: Rng + ?Sized>(p: &mut ParameterSet, name: &str, kind: SkipKind, width: usize, rng: &mut R) -> Result<()> {
    let gates = match kind {
        SkipKind::Gru => 3,
        SkipKind::Lstm => 4,
    };
    p.insert_glorot(format!("{name}.w_ih"), &[width, gates * width], width, width, rng)?;
    p.insert_glorot(format!("{name}.w_hh"), &[width, gates * width], width, width, rng)?;
    match kind {
        SkipKind::Gru => {
            p.insert_zeros(format!("{name}.b_ih"), &[3 * width])?;
            p.insert_zeros(format!("{name}.b_hh"), &[3 * width])?;
        }
        SkipKind::Lstm => {
            // Forget-gate bias of one, gate order [i, f, g, o].
            let b = Tensor::from_fn(&[4 * width], |i| if (width..2 * width).contains(&i) { 1.0 } else { 0.0 });
            p.insert(format!("{name}.b"), b)?;
        }
    }
    Ok(())
}

impl SeparatorModel {
    pub fn init<R: Rng + ?Sized>(config: SeparatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = Self::fresh_params(&config, rng)?;
        Ok(Self { config, params })
    }

    fn fresh_params<R: Rng + ?Sized>(c: &SeparatorConfig, rng: &mut R) -> Result<ParameterSet> {
        let mut p = ParameterSet::new();
        let k = c.kernel;
        let widths = [c.bins, c.channels[0], c.channels[1], c.channels[2]];
        for (i, w) in widths.windows(2).enumerate() {
            p.insert_glorot(format!("enc{}.weight", i + 1), &[w[1], w[0], k], w[0] * k, w[1] * k, rng)?;
            p.insert_zeros(format!("enc{}.bias", i + 1), &[w[1]])?;
        }
        for (i, &w) in c.channels.iter().enumerate() {
            insert_skip(&mut p, &format!("skip{}", i + 1), c.skip_kind, w, rng)?;
        }
        // Decoder from the bottleneck outwards; transposed kernels are [in × out × k].
        for (i, w) in widths.windows(2).rev().enumerate() {
            p.insert_glorot(format!("dec{}.weight", i + 1), &[w[1], w[0], k], w[1] * k, w[0] * k, rng)?;
            p.insert_zeros(format!("dec{}.bias", i + 1), &[w[0]])?;
        }
        Ok(p)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_bundle(dir, ARCHITECTURE, json!({ "config": self.config }), &self.params)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let bundle = load_bundle(dir)?;
        expect_architecture(&bundle, ARCHITECTURE)?;
        let config: SeparatorConfig = serde_json::from_value(bundle.hyperparameters["config"].clone())?;
        config.validate()?;
        validate_layout(&Self::fresh_params(&config, &mut seeded(0))?, &bundle.params)?;
        Ok(Self { config, params: bundle.params })
    }
}

/// Recurrent mapping of `[batch × ch × T]` over its time axis.
fn skip_layer(tape: &mut Tape, params: &ParameterSet, name: &str, kind: SkipKind, x: Var) -> Result<Var> {
    let p = |tape: &mut Tape, suffix: &str| -> Result<Var> {
        Ok(tape.param(params, params.id(&format!("{name}.{suffix}"))?)?)
    };
    let seq = tape.permute3(x, [2, 0, 1])?;
    let h = match kind {
        SkipKind::Gru => {
            let w = GruWeights { w_ih: p(tape, "w_ih")?, w_hh: p(tape, "w_hh")?, b_ih: p(tape, "b_ih")?, b_hh: p(tape, "b_hh")? };
            tape.gru_seq(seq, &w)?
        }
        SkipKind::Lstm => {
            let w = LstmWeights { w_ih: p(tape, "w_ih")?, w_hh: p(tape, "w_hh")?, b: p(tape, "b")? };
            tape.lstm_seq(seq, &w, false)?
        }
    };
    Ok(tape.permute3(h, [1, 2, 0])?)
}

fn conv_params(tape: &mut Tape, params: &ParameterSet, name: &str) -> Result<(Var, Var)> {
    Ok((
        tape.param(params, params.id(&format!("{name}.weight"))?)?,
        tape.param(params, params.id(&format!("{name}.bias"))?)?,
    ))
}

/// Records the network for `x: [batch × bins × T]` (log1p magnitudes, `T` a
/// multiple of `stride³`) and returns a same-shaped nonnegative estimate.
///
/// Encoder outputs `e1, e2, e3` (at `T/2, T/4, T/8`) each pass through their
/// recurrent skip layer. The bottleneck is `e3 + skip3(e3)`; every decoder
/// stage adds the matching skip output to its transposed-convolution output
/// before the ReLU.
pub fn sepnet_output(tape: &mut Tape, c: &SeparatorConfig, params: &ParameterSet, x: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[1] != c.bins {
        return Err(Error::InvalidInput(format!(
            "separator input has shape {shape:?}, expected [batch × {} × T]",
            c.bins
        )));
    }
    let frames = shape[2];
    if frames < c.frame_multiple() || !frames.is_multiple_of(c.frame_multiple()) {
        return Err(Error::InvalidInput(format!(
            "separator input has {frames} frames; need a positive multiple of {}",
            c.frame_multiple()
        )));
    }

    let mut encoded = Vec::with_capacity(3);
    let mut h = x;
    for i in 1..=3 {
        let (w, b) = conv_params(tape, params, &format!("enc{i}"))?;
        let y = tape.conv1d(h, w, Some(b), c.stride)?;
        h = tape.relu(y)?;
        encoded.push(h);
    }
    let mut skips = Vec::with_capacity(3);
    for (i, &e) in encoded.iter().enumerate() {
        skips.push(skip_layer(tape, params, &format!("skip{}", i + 1), c.skip_kind, e)?);
    }

    let mut h = tape.add(encoded[2], skips[2])?;
    for i in 1..=3 {
        let (w, b) = conv_params(tape, params, &format!("dec{i}"))?;
        let up = tape.conv1d_transpose(h, w, Some(b), c.stride)?;
        let merged = if i < 3 { tape.add(up, skips[2 - i])? } else { up };
        h = tape.relu(merged)?;
    }
    Ok(h)
}

/// Runs the network on one `bins × T` log1p magnitude matrix.
pub fn sepnet_forward(x: &Array2<f64>, model: &SeparatorModel) -> Result<Array2<f64>> {
    let (bins, frames) = x.dim();
    let mut tape = Tape::new();
    let input = tape.input(Tensor::new(&[1, bins, frames], x.iter().copied().collect())?)?;
    let out = sepnet_output(&mut tape, &model.config, &model.params, input)?;
    Ok(Array2::from_shape_vec((bins, frames), tape.value(out).data().to_vec()).expect("shape checked by the network"))
}
