use super::{Result, SignalError};

/// Mono PCM audio in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Builds a buffer, clamping samples into `[-1, 1]`. Non-finite samples
    /// and a zero sample rate are rejected.
    pub fn new(mut samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidSampleRate(sample_rate));
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::NonFiniteSample { index });
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(AudioBuffer { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Samples in `[start, end)`, clipped to the buffer.
    pub fn slice(&self, start: usize, end: usize) -> AudioBuffer {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Concatenates buffers that share a sample rate.
    pub fn concat(parts: &[AudioBuffer]) -> Result<AudioBuffer> {
        let Some(first) = parts.first() else {
            return Err(SignalError::InvalidConfig("nothing to concatenate".into()));
        };
        if let Some(other) = parts.iter().find(|p| p.sample_rate != first.sample_rate) {
            return Err(SignalError::InvalidConfig(format!(
                "cannot concatenate {} Hz with {} Hz audio",
                first.sample_rate, other.sample_rate
            )));
        }
        Ok(AudioBuffer {
            samples: parts.iter().flat_map(|p| p.samples.iter().copied()).collect(),
            sample_rate: first.sample_rate,
        })
    }
}

fn snippet_len(a: &AudioBuffer, snippet_seconds: f64) -> Result<usize> {
    if !(snippet_seconds > 0.0) {
        return Err(SignalError::InvalidConfig(format!("snippet length {snippet_seconds} s must be positive")));
    }
    Ok(((snippet_seconds * a.sample_rate as f64).round() as usize).max(1))
}

fn padded_snippet(a: &AudioBuffer, start: usize, len: usize) -> AudioBuffer {
    let mut samples = a.samples[start..(start + len).min(a.len())].to_vec();
    samples.resize(len, 0.0);
    AudioBuffer {
        samples,
        sample_rate: a.sample_rate,
    }
}

/// Splits audio into consecutive, non-overlapping snippets. A final
/// remainder of at least half a snippet is zero-padded to full length;
/// anything shorter is dropped.
pub fn chop(a: &AudioBuffer, snippet_seconds: f64) -> Result<Vec<AudioBuffer>> {
    let len = snippet_len(a, snippet_seconds)?;
    let full = a.len() / len;
    let remainder = a.len() % len;
    let count = if remainder > 0 && 2 * remainder >= len { full + 1 } else { full };
    Ok((0..count).map(|i| padded_snippet(a, i * len, len)).collect())
}

/// Snippets that cover every input sample (the last one zero-padded).
#[derive(Clone, Debug)]
pub struct CoveringSnippets {
    pub snippets: Vec<AudioBuffer>,
    /// Number of real (non-padding) samples in each snippet.
    pub valid_lengths: Vec<usize>,
}

/// Like [`chop`], but always pads the final remainder so that no audio is lost.
pub fn chop_covering(a: &AudioBuffer, snippet_seconds: f64) -> Result<CoveringSnippets> {
    let len = snippet_len(a, snippet_seconds)?;
    let count = a.len().div_ceil(len);
    let snippets = (0..count).map(|i| padded_snippet(a, i * len, len)).collect();
    let valid_lengths = (0..count).map(|i| len.min(a.len() - i * len)).collect();
    Ok(CoveringSnippets { snippets, valid_lengths })
}
