use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vocalid::classifier::ClassifierModel;
use vocalid::manifest::read_json;
use vocalid::segmenter::{SegmenterModel, TransitionModel, MIN_SEGMENT_SECONDS};
use vocalid::separator::{SeparatorModel, DEFAULT_SNIPPET_SECONDS};
use vocalid::signal::StftConfig;
use vocalid::{Error, Result};

fn default_min_segment() -> f64 {
    MIN_SEGMENT_SECONDS
}

fn default_snippet() -> f64 {
    DEFAULT_SNIPPET_SECONDS
}

/// Everything `identify` needs. Relative bundle paths resolve against the
/// directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub segmenter: PathBuf,
    pub separator: PathBuf,
    pub classifier: PathBuf,
    /// Classifier trained on mixture features, used by `identify --raw`.
    #[serde(default)]
    pub raw_classifier: Option<PathBuf>,
    #[serde(default)]
    pub stft: StftConfig,
    #[serde(default)]
    pub hmm: TransitionModel,
    #[serde(default = "default_min_segment")]
    pub min_segment_seconds: f64,
    #[serde(default = "default_snippet")]
    pub snippet_seconds: f64,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.segmenter, &mut cfg.separator, &mut cfg.classifier] {
            *p = base.join(&*p);
        }
        if let Some(p) = cfg.raw_classifier.as_mut() {
            *p = base.join(&*p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stft != StftConfig::default() {
            return Err(Error::InvalidInput(format!(
                "models are trained on the {:?} grid; got {:?}",
                StftConfig::default(),
                self.stft
            )));
        }
        self.hmm.validate()?;
        if !(self.snippet_seconds > 0.0) || !(self.min_segment_seconds >= 0.0) {
            return Err(Error::InvalidInput("snippet and minimum segment lengths must be positive".into()));
        }
        Ok(())
    }

    pub fn segmenter(&self) -> Result<SegmenterModel> {
        SegmenterModel::load(&self.segmenter)
    }

    pub fn separator(&self) -> Result<SeparatorModel> {
        SeparatorModel::load(&self.separator)
    }

    pub fn classifier(&self, raw: bool) -> Result<ClassifierModel> {
        match (&self.raw_classifier, raw) {
            (Some(p), true) => ClassifierModel::load(p),
            _ => ClassifierModel::load(&self.classifier),
        }
    }
}
