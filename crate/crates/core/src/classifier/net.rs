use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use vocalid_nn::{
    expect_architecture, load_bundle, save_bundle, seeded, softmax_rows, validate_layout, BiLstmLayer, LstmWeights,
    ParameterSet, Tape, Tensor, Var,
};

use crate::error::{Error, Result};
use crate::manifest::{read_json, write_json};
use crate::norm::FeatureNorm;
use crate::signal::{add_deltas, mfcc_from_magnitude, FeatureMatrix, StftConfig};

pub const ARCHITECTURE: &str = "singer-classifier-bilstm";
pub const META_FILE: &str = "meta.json";
pub const MFCC_FILTERS: usize = 26;
pub const MFCC_COEFFS: usize = 13;
pub const FEATURE_DIMS: usize = 3 * MFCC_COEFFS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub feature_dims: usize,
    pub layers: usize,
    /// LSTM units per direction.
    pub hidden: usize,
    pub num_singers: usize,
}

impl ClassifierConfig {
    pub fn new(num_singers: usize) -> Self {
        Self { feature_dims: FEATURE_DIMS, layers: 3, hidden: 25, num_singers }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_singers < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 singers, got {}", self.num_singers)));
        }
        if self.layers == 0 || self.hidden == 0 || self.feature_dims == 0 {
            return Err(Error::InvalidInput(format!("degenerate classifier configuration {self:?}")));
        }
        Ok(())
    }
}

/// Singer names in class-index order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub names: Vec<String>,
}

impl LabelMap {
    /// Sorted, de-duplicated names.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v: Vec<String> = names.into_iter().map(str::to_string).collect();
        v.sort();
        v.dedup();
        Self { names: v }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown singer {name:?}")))
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    labels: LabelMap,
    norm: FeatureNorm,
}

#[derive(Clone, Debug)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub labels: LabelMap,
    pub norm: FeatureNorm,
    pub params: ParameterSet,
}

fn insert_lstm<R: Rng + ?Sized>(p: &mut ParameterSet, name: &str, input: usize, h: usize, rng: &mut R) -> Result<()> {
    p.insert_glorot(format!("{name}.w_ih"), &[input, 4 * h], input, h, rng)?;
    p.insert_glorot(format!("{name}.w_hh"), &[h, 4 * h], h, h, rng)?;
    let b = Tensor::from_fn(&[4 * h], |i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 });
    p.insert(format!("{name}.b"), b)?;
    Ok(())
}

impl ClassifierModel {
    pub fn init<R: Rng + ?Sized>(config: ClassifierConfig, labels: LabelMap, norm: FeatureNorm, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if labels.len() != config.num_singers {
            return Err(Error::InvalidInput(format!(
                "label map has {} singers, configuration {}",
                labels.len(),
                config.num_singers
            )));
        }
        let params = Self::fresh_params(&config, rng)?;
        Ok(Self { config, labels, norm, params })
    }

    fn fresh_params<R: Rng + ?Sized>(c: &ClassifierConfig, rng: &mut R) -> Result<ParameterSet> {
        let mut p = ParameterSet::new();
        for layer in 0..c.layers {
            let input = if layer == 0 { c.feature_dims } else { 2 * c.hidden };
            insert_lstm(&mut p, &format!("lstm{}.fwd", layer + 1), input, c.hidden, rng)?;
            insert_lstm(&mut p, &format!("lstm{}.bwd", layer + 1), input, c.hidden, rng)?;
        }
        p.insert_glorot("out.weight", &[2 * c.hidden, c.num_singers], 2 * c.hidden, c.num_singers, rng)?;
        p.insert_zeros("out.bias", &[c.num_singers])?;
        Ok(p)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_bundle(dir, ARCHITECTURE, json!({ "config": self.config }), &self.params)?;
        write_json(&dir.join(META_FILE), &Meta { labels: self.labels.clone(), norm: self.norm.clone() })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let bundle = load_bundle(dir)?;
        expect_architecture(&bundle, ARCHITECTURE)?;
        let config: ClassifierConfig = serde_json::from_value(bundle.hyperparameters["config"].clone())?;
        config.validate()?;
        validate_layout(&Self::fresh_params(&config, &mut seeded(0))?, &bundle.params)?;
        let meta: Meta = read_json(&dir.join(META_FILE))?;
        if meta.labels.len() != config.num_singers || meta.norm.dims() != config.feature_dims {
            return Err(Error::InvalidInput(format!(
                "{}: label map or normalization does not match the network",
                dir.join(META_FILE).display()
            )));
        }
        Ok(Self { config, labels: meta.labels, norm: meta.norm, params: bundle.params })
    }
}

/// Records the network for `x: [T × batch × dims]` (standardized features)
/// and returns `[batch × singers]` logits: stacked BiLSTM, mean over time,
/// dense.
pub fn classnet_logits(tape: &mut Tape, c: &ClassifierConfig, params: &ParameterSet, x: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[2] != c.feature_dims || shape[0] == 0 {
        return Err(Error::InvalidInput(format!(
            "classifier input has shape {shape:?}, expected [T ≥ 1 × batch × {}]",
            c.feature_dims
        )));
    }
    let p = |tape: &mut Tape, name: String| -> Result<Var> { Ok(tape.param(params, params.id(&name)?)?) };
    let mut layers = Vec::with_capacity(c.layers);
    for l in 1..=c.layers {
        let dir = |tape: &mut Tape, d: &str| -> Result<LstmWeights> {
            Ok(LstmWeights {
                w_ih: p(tape, format!("lstm{l}.{d}.w_ih"))?,
                w_hh: p(tape, format!("lstm{l}.{d}.w_hh"))?,
                b: p(tape, format!("lstm{l}.{d}.b"))?,
            })
        };
        layers.push(BiLstmLayer { forward: dir(tape, "fwd")?, backward: dir(tape, "bwd")? });
    }
    let h = tape.bilstm_seq(x, &layers)?;
    let pooled = tape.mean_leading(h)?;
    let (w, b) = (p(tape, "out.weight".into())?, p(tape, "out.bias".into())?);
    Ok(tape.dense(pooled, w, b)?)
}

/// `[T × 1 × dims]` tensor from a `T × dims` matrix.
pub(crate) fn sequence_tensor(m: &Array2<f64>) -> Result<Tensor> {
    let (t, d) = m.dim();
    Ok(Tensor::new(&[t, 1, d], m.iter().copied().collect())?)
}

/// Singer distribution for one snippet's raw (unstandardized) features.
pub fn classnet_forward(f: &FeatureMatrix, model: &ClassifierModel) -> Result<Vec<f64>> {
    if f.dims() != model.config.feature_dims {
        return Err(Error::InvalidInput(format!(
            "features have {} dims, the classifier expects {}",
            f.dims(),
            model.config.feature_dims
        )));
    }
    if f.frames() == 0 {
        return Err(Error::InvalidInput("cannot classify zero frames".into()));
    }
    let mut tape = Tape::new();
    let x = tape.input(sequence_tensor(&model.norm.apply(&f.data)?)?)?;
    let logits = classnet_logits(&mut tape, &model.config, &model.params, x)?;
    Ok(softmax_rows(tape.value(logits))?.into_data())
}

/// 13 MFCCs from 26 mel bands of the squared magnitude, plus deltas and
/// accelerations: `T × 39`.
pub fn features_from_spectrogram(magnitude: &Array2<f64>, cfg: &StftConfig) -> Result<FeatureMatrix> {
    Ok(add_deltas(&mfcc_from_magnitude(magnitude, cfg, MFCC_FILTERS, MFCC_COEFFS)?)?)
}
