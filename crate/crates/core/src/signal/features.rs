use std::f64::consts::PI;

use ndarray::{s, Array2, Axis};

use super::{ComplexSpectrogram, Result, SignalError, StftConfig};

/// Floor applied to mel energies before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Per-frame features, `frames × dims`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub hop_seconds: f64,
}

impl FeatureMatrix {
    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }
}

/// Elementwise `ln(1 + x)`. Fails on the first negative entry.
pub fn log1p_compress(m: &Array2<f64>) -> Result<Array2<f64>> {
    if let Some(((row, col), &value)) = m.indexed_iter().find(|(_, &v)| v < 0.0 || v.is_nan()) {
        return Err(SignalError::NegativeMagnitude { row, col, value });
    }
    Ok(m.mapv(f64::ln_1p))
}

/// Elementwise `exp(x) − 1`, clamped at zero.
pub fn expm1_expand(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| v.exp_m1().max(0.0))
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with centres equally spaced on the HTK mel scale,
/// snapped to FFT bins, `num_filters × bins`. Each row rises linearly from
/// its left edge to 1.0 at its centre bin and falls back to 0 at its right
/// edge.
pub fn mel_filterbank(num_filters: usize, cfg: &StftConfig, f_lo: f64, f_hi: f64) -> Result<Array2<f64>> {
    cfg.validate()?;
    let nyquist = cfg.sample_rate as f64 / 2.0;
    if !(0.0 <= f_lo && f_lo < f_hi && f_hi <= nyquist) || num_filters == 0 {
        return Err(SignalError::InvalidConfig(format!(
            "need 0 ≤ f_lo < f_hi ≤ {nyquist} and at least one filter, got {num_filters} filters over [{f_lo}, {f_hi}]"
        )));
    }
    let (mel_lo, mel_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
    let bin_of = |hz: f64| (hz * cfg.fft_size as f64 / cfg.sample_rate as f64).round() as usize;
    let edges: Vec<usize> = (0..num_filters + 2)
        .map(|i| bin_of(mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (num_filters + 1) as f64)))
        .collect();
    let mut fb = Array2::zeros((num_filters, cfg.bins()));
    for f in 0..num_filters {
        let (left, centre, right) = (edges[f], edges[f + 1], edges[f + 2]);
        if !(left < centre && centre < right) {
            return Err(SignalError::FilterbankTooDense { filter: f });
        }
        for k in left..=centre {
            fb[[f, k]] = (k - left) as f64 / (centre - left) as f64;
        }
        for k in centre..=right {
            fb[[f, k]] = (right - k) as f64 / (right - centre) as f64;
        }
    }
    Ok(fb)
}

/// Orthonormal DCT-II basis, `num_coeffs × n`.
pub fn dct_ii_orthonormal(num_coeffs: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((num_coeffs, n), |(k, i)| {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Log mel energies (`frames × num_filters`) of a magnitude matrix
/// (`bins × frames`) on the full 0..Nyquist band.
pub fn log_mel_energies(magnitude: &Array2<f64>, cfg: &StftConfig, num_filters: usize) -> Result<Array2<f64>> {
    if magnitude.nrows() != cfg.bins() {
        return Err(SignalError::InvalidConfig(format!(
            "magnitude has {} bins, configuration expects {}",
            magnitude.nrows(),
            cfg.bins()
        )));
    }
    let fb = mel_filterbank(num_filters, cfg, 0.0, cfg.sample_rate as f64 / 2.0)?;
    let power = magnitude.mapv(|m| m * m);
    let energies = fb.dot(&power);
    Ok(energies.t().mapv(|e| e.max(LOG_FLOOR).ln()))
}

/// MFCCs from a magnitude matrix: power spectrum, mel filterbank, natural
/// log with floor, orthonormal DCT-II keeping coefficients `0..num_coeffs`.
pub fn mfcc_from_magnitude(
    magnitude: &Array2<f64>,
    cfg: &StftConfig,
    num_filters: usize,
    num_coeffs: usize,
) -> Result<FeatureMatrix> {
    if num_coeffs == 0 || num_coeffs > num_filters {
        return Err(SignalError::InvalidConfig(format!(
            "cannot keep {num_coeffs} coefficients from {num_filters} filters"
        )));
    }
    let log_mel = log_mel_energies(magnitude, cfg, num_filters)?;
    let dct = dct_ii_orthonormal(num_coeffs, num_filters);
    Ok(FeatureMatrix {
        data: log_mel.dot(&dct.t()),
        hop_seconds: cfg.hop_seconds(),
    })
}

pub fn mfcc(s: &ComplexSpectrogram, num_filters: usize, num_coeffs: usize) -> Result<FeatureMatrix> {
    mfcc_from_magnitude(&s.magnitude, &s.config, num_filters, num_coeffs)
}

/// Regression deltas over ±2 frames with replicate padding.
fn deltas(x: &Array2<f64>) -> Array2<f64> {
    let frames = x.nrows() as isize;
    let at = |t: isize| x.row(t.clamp(0, frames - 1) as usize);
    let denom = 2.0 * (1.0 + 4.0);
    let mut out = Array2::zeros(x.dim());
    for t in 0..frames {
        let mut row = out.row_mut(t as usize);
        for n in 1..=2isize {
            let diff = &at(t + n) - &at(t - n);
            row.scaled_add(n as f64 / denom, &diff);
        }
    }
    out
}

/// Appends first (delta) and second (acceleration) regression derivatives:
/// output columns are `[static | delta | accel]`.
pub fn add_deltas(f: &FeatureMatrix) -> Result<FeatureMatrix> {
    if f.frames() == 0 {
        return Err(SignalError::InvalidConfig("feature matrix has no frames".into()));
    }
    let d1 = deltas(&f.data);
    let d2 = deltas(&d1);
    let dims = f.dims();
    let mut data = Array2::zeros((f.frames(), 3 * dims));
    data.slice_mut(s![.., ..dims]).assign(&f.data);
    data.slice_mut(s![.., dims..2 * dims]).assign(&d1);
    data.slice_mut(s![.., 2 * dims..]).assign(&d2);
    debug_assert_eq!(data.len_of(Axis(1)), 3 * dims);
    Ok(FeatureMatrix {
        data,
        hop_seconds: f.hop_seconds,
    })
}
