//! Band-limited downsampling via a Hann-windowed sinc kernel.

use super::{DspError, Result};
use crate::scalar::Scalar;

const HALF_WIDTH: f64 = 32.0;

/// Resample to a lower (or equal) rate. The kernel is normalized per output
/// sample, so DC passes through exactly and edge samples stay unbiased.
pub fn resample<T: Scalar>(samples: &[T], src_rate: u32, dst_rate: u32) -> Result<Vec<T>> {
    if dst_rate == 0 {
        return Err(DspError::Invalid("target rate must be positive".into()));
    }
    if dst_rate > src_rate {
        return Err(DspError::Invalid(format!(
            "upsampling {} -> {} Hz is out of scope",
            src_rate, dst_rate
        )));
    }
    if dst_rate == src_rate {
        return Ok(samples.to_vec());
    }
    let ratio = dst_rate as f64 / src_rate as f64;
    let out_len = ((samples.len() as f64 * ratio).round() as usize).max(1);
    // Cutoff a touch under the target Nyquist, in cycles per source sample.
    let cutoff = 0.5 * ratio * 0.95;
    let sinc = |x: f64| {
        if x.abs() < 1e-12 {
            1.0
        } else {
            let px = std::f64::consts::PI * x;
            px.sin() / px
        }
    };

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = n as f64 / ratio;
        let lo = ((center - HALF_WIDTH).ceil() as isize).max(0) as usize;
        let hi = ((center + HALF_WIDTH).floor() as isize).min(samples.len() as isize - 1) as usize;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in lo..=hi {
            let d = k as f64 - center;
            let hann = 0.5 * (1.0 + (std::f64::consts::PI * d / HALF_WIDTH).cos());
            let w = 2.0 * cutoff * sinc(2.0 * cutoff * d) * hann;
            acc += w * samples[k].as_f64();
            norm += w;
        }
        out.push(T::from_f64(if norm.abs() > 1e-12 { acc / norm } else { 0.0 }));
    }
    Ok(out)
}
