use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, Result, SignalError};

fn classify(path: &Path, err: hound::Error) -> SignalError {
    let path = path.display().to_string();
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => SignalError::Truncated {
            path,
            detail: e.to_string(),
        },
        hound::Error::IoError(e) => SignalError::Io(e),
        hound::Error::Unsupported => SignalError::UnsupportedCodec {
            path,
            detail: "format not handled by the WAV reader".into(),
        },
        hound::Error::FormatError(msg) => SignalError::Malformed {
            path,
            detail: msg.to_string(),
        },
        other => SignalError::Malformed {
            path,
            detail: other.to_string(),
        },
    }
}

/// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples in one
/// or two channels. Stereo is averaged to mono; 16-bit values are scaled by
/// 1/32768.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels;
    if channels != 1 && channels != 2 {
        return Err(SignalError::UnsupportedChannels {
            path: path.display().to_string(),
            channels,
        });
    }
    let declared = reader.len() as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(SignalError::UnsupportedCodec {
                path: path.display().to_string(),
                detail: format!("{bits}-bit {format:?}"),
            })
        }
    }
    .map_err(|e| match e {
        // The header parsed, so a short read here means the data chunk ends early.
        hound::Error::IoError(io) => SignalError::Truncated {
            path: path.display().to_string(),
            detail: io.to_string(),
        },
        other => classify(path, other),
    })?;
    if interleaved.len() < declared {
        return Err(SignalError::Truncated {
            path: path.display().to_string(),
            detail: format!("header declares {declared} samples, found {}", interleaved.len()),
        });
    }
    let mono: Vec<f64> = if channels == 2 {
        interleaved.chunks_exact(2).map(|f| 0.5 * (f[0] + f[1])).collect()
    } else {
        interleaved
    };
    if mono.is_empty() {
        return Err(SignalError::EmptyAudio {
            path: path.display().to_string(),
        });
    }
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Writes mono 16-bit PCM at the buffer's sample rate.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(e) => SignalError::Io(e),
        other => SignalError::Io(std::io::Error::other(other.to_string())),
    };
    let mut writer = WavWriter::create(path, spec).map_err(to_io)?;
    for &s in audio.samples() {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}
