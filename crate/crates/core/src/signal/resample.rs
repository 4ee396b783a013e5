use super::{AudioBuffer, Result, SignalError};

/// Length of the windowed-sinc interpolation kernel, in source samples.
pub const RESAMPLER_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Passband edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= half / k as f64;
        let sq = term * term;
        sum += sq;
        if sq < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Band-limited resampling with a 64-tap Kaiser-windowed sinc kernel. The
/// kernel is normalized to unit DC gain; samples outside the input count as
/// zero. Returns an identical copy when the rates already match.
pub fn resample(a: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(SignalError::InvalidSampleRate(target_rate));
    }
    let source_rate = a.sample_rate();
    if target_rate == source_rate {
        return Ok(a.clone());
    }
    let step = source_rate as f64 / target_rate as f64;
    let out_len = (a.len() as f64 * target_rate as f64 / source_rate as f64).round() as usize;
    // Cutoff in cycles per source sample.
    let cutoff = 0.5 * ROLLOFF * (target_rate as f64 / source_rate as f64).min(1.0);
    let half = (RESAMPLER_TAPS / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    let input = a.samples();

    let mut out = Vec::with_capacity(out_len);
    let mut weights = [0.0f64; RESAMPLER_TAPS];
    for n in 0..out_len {
        let pos = n as f64 * step;
        let base = pos.floor() as isize - (RESAMPLER_TAPS as isize / 2 - 1);
        let mut total = 0.0;
        for (i, w) in weights.iter_mut().enumerate() {
            let d = pos - (base + i as isize) as f64;
            let r = d / half;
            *w = if r.abs() >= 1.0 {
                0.0
            } else {
                2.0 * cutoff * sinc(2.0 * cutoff * d) * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            };
            total += *w;
        }
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            let k = base + i as isize;
            if k >= 0 && (k as usize) < input.len() {
                acc += w * input[k as usize];
            }
        }
        out.push(acc / total);
    }
    AudioBuffer::new(out, target_rate)
}
