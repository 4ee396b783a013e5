use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{AudioBuffer, Result, SignalError, PIPELINE_SAMPLE_RATE};

/// Framing parameters shared by analysis and synthesis. The window is a
/// periodic Hann window of `fft_size` samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    /// 32 ms frames every 10 ms at 16 kHz.
    fn default() -> Self {
        StftConfig {
            fft_size: 512,
            hop: 160,
            sample_rate: PIPELINE_SAMPLE_RATE,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return Err(SignalError::InvalidConfig(format!("fft_size {} is not a power of two", self.fft_size)));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(SignalError::InvalidConfig(format!(
                "hop {} must be in 1..={}",
                self.hop, self.fft_size
            )));
        }
        if self.sample_rate == 0 {
            return Err(SignalError::InvalidSampleRate(0));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn frames_for(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.fft_size as f64;
        (0..self.fft_size)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect()
    }
}

/// Magnitude/phase decomposition of a one-sided STFT, `bins × frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub magnitude: Array2<f64>,
    pub phase: Array2<f64>,
    pub config: StftConfig,
    /// Length in samples of the analysed signal.
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn bins(&self) -> usize {
        self.magnitude.nrows()
    }

    pub fn frames(&self) -> usize {
        self.magnitude.ncols()
    }

    pub fn value(&self, bin: usize, frame: usize) -> Complex<f64> {
        Complex::from_polar(self.magnitude[[bin, frame]], self.phase[[bin, frame]])
    }

    /// Same phase and framing with a replacement magnitude.
    pub fn with_magnitude(&self, magnitude: Array2<f64>) -> Result<ComplexSpectrogram> {
        if magnitude.dim() != self.magnitude.dim() {
            return Err(SignalError::InvalidConfig(format!(
                "magnitude {:?} does not match phase {:?}",
                magnitude.dim(),
                self.phase.dim()
            )));
        }
        Ok(ComplexSpectrogram {
            magnitude,
            phase: self.phase.clone(),
            config: self.config,
            signal_len: self.signal_len,
        })
    }
}

/// Index into a signal of length `len` under repeated mirror reflection
/// (edge sample not repeated).
fn reflect(index: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = index.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Hann-windowed analysis frame `t`, centred on sample `t·hop` of the
/// reflection-padded signal.
pub fn windowed_frame(a: &AudioBuffer, cfg: &StftConfig, t: usize) -> Vec<f64> {
    let window = cfg.window();
    frame_with(a.samples(), cfg, &window, t)
}

fn frame_with(samples: &[f64], cfg: &StftConfig, window: &[f64], t: usize) -> Vec<f64> {
    let start = (t * cfg.hop) as isize - (cfg.fft_size / 2) as isize;
    window
        .iter()
        .enumerate()
        .map(|(i, w)| w * samples[reflect(start + i as isize, samples.len())])
        .collect()
}

pub fn stft(a: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if a.is_empty() {
        return Err(SignalError::InvalidConfig("cannot analyse empty audio".into()));
    }
    let frames = cfg.frames_for(a.len());
    let bins = cfg.bins();
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut magnitude = Array2::zeros((bins, frames));
    let mut phase = Array2::zeros((bins, frames));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for t in 0..frames {
        for (slot, v) in buf.iter_mut().zip(frame_with(a.samples(), cfg, &window, t)) {
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            let (r, theta) = buf[k].to_polar();
            magnitude[[k, t]] = r;
            phase[[k, t]] = theta;
        }
    }
    Ok(ComplexSpectrogram {
        magnitude,
        phase,
        config: *cfg,
        signal_len: a.len(),
    })
}

/// Weighted overlap-add inverse: each inverse frame is multiplied by the
/// analysis window and the sum is divided by the summed squared window.
pub fn istft(s: &ComplexSpectrogram) -> Result<AudioBuffer> {
    let cfg = s.config;
    cfg.validate()?;
    if s.magnitude.dim() != s.phase.dim() || s.bins() != cfg.bins() {
        return Err(SignalError::InvalidConfig(format!(
            "spectrogram {:?} inconsistent with fft_size {}",
            s.magnitude.dim(),
            cfg.fft_size
        )));
    }
    let n = cfg.fft_size;
    let half = n / 2;
    let frames = s.frames();
    let window = cfg.window();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let total = (frames.saturating_sub(1)) * cfg.hop + n;
    let mut acc = vec![0.0; total];
    let mut envelope = vec![0.0; total];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..frames {
        for (k, slot) in buf.iter_mut().enumerate().take(half + 1) {
            *slot = s.value(k, t);
        }
        for k in 1..half {
            buf[n - k] = buf[k].conj();
        }
        // The DC and Nyquist bins of a real signal are real.
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        ifft.process(&mut buf);
        let offset = t * cfg.hop;
        for i in 0..n {
            acc[offset + i] += window[i] * buf[i].re / n as f64;
            envelope[offset + i] += window[i] * window[i];
        }
    }
    let out = (0..s.signal_len)
        .map(|p| {
            let idx = p + half;
            if idx >= total {
                return 0.0;
            }
            let env = if envelope[idx] < 1e-8 { 1.0 } else { envelope[idx] };
            acc[idx] / env
        })
        .collect();
    AudioBuffer::new(out, cfg.sample_rate)
}
