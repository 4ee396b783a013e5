//! Audio ingestion and deterministic DSP: WAV I/O, resampling, chopping,
//! STFT/iSTFT, log1p compression, mel filterbanks, MFCC and delta features.

mod audio;
mod features;
mod resample;
mod stft;
mod wav;

pub use audio::{chop, chop_covering, AudioBuffer, CoveringSnippets};
pub use features::{
    add_deltas, dct_ii_orthonormal, expm1_expand, hz_to_mel, log1p_compress, log_mel_energies, mel_filterbank,
    mel_to_hz, mfcc, mfcc_from_magnitude, FeatureMatrix, LOG_FLOOR,
};
pub use resample::{resample, RESAMPLER_TAPS};
pub use stft::{istft, stft, windowed_frame, ComplexSpectrogram, StftConfig};
pub use wav::{read_wav, write_wav};

use thiserror::Error;

/// Rate every input is converted to on ingestion.
pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("{path}: unsupported WAV encoding ({detail}); expected 16-bit PCM or 32-bit IEEE float")]
    UnsupportedCodec { path: String, detail: String },

    #[error("{path}: unsupported channel count {channels}; expected mono or stereo")]
    UnsupportedChannels { path: String, channels: u16 },

    #[error("{path}: truncated WAV data ({detail})")]
    Truncated { path: String, detail: String },

    #[error("{path}: malformed WAV container ({detail})")]
    Malformed { path: String, detail: String },

    #[error("{path}: audio has zero length")]
    EmptyAudio { path: String },

    #[error("audio contains a non-finite sample at index {index}")]
    NonFiniteSample { index: usize },

    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),

    #[error("negative magnitude {value} at ({row}, {col}); log1p compression needs nonnegative input")]
    NegativeMagnitude { row: usize, col: usize, value: f64 },

    #[error("mel filter {filter} spans fewer than 2 FFT bins; use fewer filters or a larger FFT")]
    FilterbankTooDense { filter: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Resamples to [`PIPELINE_SAMPLE_RATE`] unless the audio is already there.
pub fn to_pipeline_rate(a: &AudioBuffer) -> Result<AudioBuffer> {
    if a.sample_rate() == PIPELINE_SAMPLE_RATE {
        Ok(a.clone())
    } else {
        resample(a, PIPELINE_SAMPLE_RATE)
    }
}
