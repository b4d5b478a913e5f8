//! Short-time Fourier transform magnitudes.

use super::fft::fft_in_place;
use super::{DspError, Result};
use crate::scalar::Scalar;

/// Hann-windowed, centered STFT magnitude (not power).
///
/// Frames are centered at `f * hop` with reflect padding at the edges, giving
/// `1 + len / hop` frames. Returns a frame-major matrix of
/// `(window / 2 + 1)` magnitudes per frame.
pub fn stft_magnitude<T: Scalar>(samples: &[T], window: usize, hop: usize) -> Result<Vec<T>> {
    if !window.is_power_of_two() || window == 0 {
        return Err(DspError::Invalid(format!("window {} must be a power of two", window)));
    }
    if hop == 0 || hop > window {
        return Err(DspError::Invalid(format!("hop {} must be in 1..={}", hop, window)));
    }
    if samples.len() < hop {
        return Err(DspError::Invalid(format!(
            "clip of {} samples is shorter than one hop ({})",
            samples.len(),
            hop
        )));
    }

    let n_frames = 1 + samples.len() / hop;
    let n_bins = window / 2 + 1;
    let len = samples.len() as isize;
    let half = (window / 2) as isize;

    // Periodic Hann window.
    let hann: Vec<T> = (0..window)
        .map(|i| {
            T::from_f64(0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / window as f64).cos()))
        })
        .collect();

    let reflect = |mut i: isize| -> usize {
        if len == 1 {
            return 0;
        }
        loop {
            if i < 0 {
                i = -i;
            } else if i >= len {
                i = 2 * (len - 1) - i;
            } else {
                return i as usize;
            }
        }
    };

    let mut out = vec![T::zero(); n_frames * n_bins];
    let mut re = vec![T::zero(); window];
    let mut im = vec![T::zero(); window];
    for f in 0..n_frames {
        let center = (f * hop) as isize;
        for (j, h) in hann.iter().enumerate() {
            let idx = reflect(center - half + j as isize);
            re[j] = samples[idx] * *h;
            im[j] = T::zero();
        }
        fft_in_place(&mut re, &mut im);
        let orow = &mut out[f * n_bins..][..n_bins];
        for (k, o) in orow.iter_mut().enumerate() {
            *o = (re[k] * re[k] + im[k] * im[k]).sqrt();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_signal_gives_zero_magnitudes() {
        let mag = stft_magnitude(&vec![0.0f64; 4096], 512, 256).unwrap();
        assert!(mag.iter().all(|&v| v == 0.0));
        assert_eq!(mag.len(), (1 + 4096 / 256) * 257);
    }

    #[test]
    fn frame_count_formula() {
        let mag = stft_magnitude(&vec![0.0f64; 240_000], 512, 256).unwrap();
        assert_eq!(mag.len() / 257, 938);
    }

    #[test]
    fn bin_centered_sine_peaks_at_its_bin() {
        // k * rate / window with k = 20: exactly bin 20 for interior frames.
        let rate = 16_000.0;
        let window = 512;
        let k = 20;
        let freq = k as f64 * rate / window as f64;
        let samples: Vec<f64> = (0..16_000)
            .map(|t| (2.0 * std::f64::consts::PI * freq * t as f64 / rate).sin())
            .collect();
        let mag = stft_magnitude(&samples, window, 256).unwrap();
        let n_bins = window / 2 + 1;
        let n_frames = mag.len() / n_bins;
        for f in 2..n_frames - 2 {
            let frame = &mag[f * n_bins..][..n_bins];
            let argmax =
                frame.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            assert_eq!(argmax, k, "frame {}", f);
        }
    }

    #[test]
    fn rejects_clip_shorter_than_hop() {
        assert!(stft_magnitude(&vec![0.0f64; 100], 512, 256).is_err());
    }

    #[test]
    fn time_reversal_mirrors_per_frame_energy() {
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64 - 1.0
        };
        // len = k*hop + 1 so reversed frame centers land on frame centers.
        let n = 8 * 256 + 1;
        let samples: Vec<f64> = (0..n).map(|_| next()).collect();
        let reversed: Vec<f64> = samples.iter().rev().cloned().collect();
        let hop = 256;
        let a = stft_magnitude(&samples, 512, hop).unwrap();
        let b = stft_magnitude(&reversed, 512, hop).unwrap();
        let n_bins = 257;
        let n_frames = a.len() / n_bins;
        let energy = |m: &[f64], f: usize| -> f64 {
            m[f * n_bins..][..n_bins].iter().map(|v| v * v).sum()
        };
        // Frame centers tile the signal exactly (n divisible by hop), so the
        // energy sequence of the reversal is the reversed energy sequence;
        // edge frames differ by reflect-padding, interior ones match.
        for f in 1..n_frames - 1 {
            let ea = energy(&a, f);
            let eb = energy(&b, n_frames - 1 - f);
            assert!(
                (ea - eb).abs() <= 1e-9 * ea.max(1.0),
                "frame {}: {} vs {}",
                f,
                ea,
                eb
            );
        }
    }
}
