//! Mel filterbank, log compression and per-bin normalization.

use super::{DspError, LogMelSpectrogram, Result};
use crate::scalar::Scalar;

/// Epsilon inside the log compression: `ln(x + LOG_EPS)`.
pub const LOG_EPS: f64 = 1e-7;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank with centers equally spaced on the mel scale,
/// peak value 1, returned as a row-major `n_mels x n_fft_bins` matrix.
pub fn mel_filterbank<T: Scalar>(
    n_mels: usize,
    n_fft_bins: usize,
    sample_rate: f64,
    f_min: f64,
    f_max: f64,
) -> Result<Vec<T>> {
    if n_mels == 0 || n_fft_bins < 2 {
        return Err(DspError::Invalid("empty filterbank requested".into()));
    }
    if !(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0 + 1e-9) {
        return Err(DspError::Invalid(format!(
            "need 0 <= f_min < f_max <= nyquist, got {}..{} at {} Hz",
            f_min, f_max, sample_rate
        )));
    }
    let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    // FFT bin center frequencies; n_fft_bins = window/2 + 1.
    let bin_hz = sample_rate / (2.0 * (n_fft_bins - 1) as f64);

    let mut fb = vec![T::zero(); n_mels * n_fft_bins];
    for m in 0..n_mels {
        let (left, center, right) = (centers[m], centers[m + 1], centers[m + 2]);
        let mut any = false;
        for bin in 0..n_fft_bins {
            let f = bin as f64 * bin_hz;
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            let w = up.min(down).max(0.0);
            if w > 0.0 {
                fb[m * n_fft_bins + bin] = T::from_f64(w);
                any = true;
            }
        }
        if !any {
            return Err(DspError::EmptyMelFilter { row: m });
        }
    }
    Ok(fb)
}

/// Elementwise `ln(x + eps)` in place.
pub fn log_compress<T: Scalar>(values: &mut [T]) {
    let eps = T::from_f64(LOG_EPS);
    for v in values.iter_mut() {
        *v = (*v + eps).ln();
    }
}

/// Per-mel-bin mean and standard deviation, computed over the training split
/// and applied everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats<T: Scalar> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub version: String,
}

impl<T: Scalar> NormalizationStats<T> {
    /// Population statistics over every frame of the given spectrograms.
    /// A bin that never varies is an error, not a division by zero later.
    pub fn compute<'a, I>(specs: I, version: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a LogMelSpectrogram<T>>,
        T: 'a,
    {
        let mut specs = specs.into_iter().peekable();
        let bins = match specs.peek() {
            Some(s) => s.bins,
            None => return Err(DspError::Invalid("no spectrograms to compute stats from".into())),
        };
        let mut sum = vec![0.0f64; bins];
        let mut sumsq = vec![0.0f64; bins];
        let mut count = 0usize;
        for spec in specs {
            if spec.bins != bins {
                return Err(DspError::Invalid("mixed bin counts across spectrograms".into()));
            }
            for b in 0..bins {
                for f in 0..spec.frames {
                    let v = spec.values[b * spec.frames + f].as_f64();
                    sum[b] += v;
                    sumsq[b] += v * v;
                }
            }
            count += spec.frames;
        }
        let n = count as f64;
        let mut mean = Vec::with_capacity(bins);
        let mut std = Vec::with_capacity(bins);
        for b in 0..bins {
            let mu = sum[b] / n;
            let var = (sumsq[b] / n - mu * mu).max(0.0);
            if var <= 0.0 {
                return Err(DspError::DegenerateBin { bin: b });
            }
            mean.push(T::from_f64(mu));
            std.push(T::from_f64(var.sqrt()));
        }
        Ok(NormalizationStats { mean, std, version: version.into() })
    }

    pub fn identity(bins: usize, version: impl Into<String>) -> Self {
        NormalizationStats {
            mean: vec![T::zero(); bins],
            std: vec![T::one(); bins],
            version: version.into(),
        }
    }

    /// Flat text serialization: a version header then one `bin mean std` row
    /// per bin, full round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = format!("# mtag-stats v1 version={}\nbin\tmean\tstd\n", self.version);
        for b in 0..self.mean.len() {
            out.push_str(&format!("{}\t{}\t{}\n", b, self.mean[b].as_f64(), self.std[b].as_f64()));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| DspError::Invalid("empty stats file".into()))?;
        let version = header
            .split("version=")
            .nth(1)
            .ok_or_else(|| DspError::Invalid("stats file missing version header".into()))?
            .trim()
            .to_string();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for line in lines.skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let _bin = cols.next();
            let m: f64 = cols
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| DspError::Invalid(format!("bad stats row: {}", line)))?;
            let s: f64 = cols
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| DspError::Invalid(format!("bad stats row: {}", line)))?;
            if s <= 0.0 {
                return Err(DspError::DegenerateBin { bin: mean.len() });
            }
            mean.push(T::from_f64(m));
            std.push(T::from_f64(s));
        }
        Ok(NormalizationStats { mean, std, version })
    }
}

/// Per-bin `(x - mean) / std`.
pub fn normalize<T: Scalar>(
    spec: &LogMelSpectrogram<T>,
    stats: &NormalizationStats<T>,
) -> Result<LogMelSpectrogram<T>> {
    if stats.mean.len() != spec.bins {
        return Err(DspError::Invalid(format!(
            "stats cover {} bins, spectrogram has {}",
            stats.mean.len(),
            spec.bins
        )));
    }
    if stats.std.iter().any(|s| *s <= T::zero()) {
        return Err(DspError::Invalid("non-positive std in normalization stats".into()));
    }
    let mut values = spec.values.clone();
    for b in 0..spec.bins {
        let (mu, sd) = (stats.mean[b], stats.std[b]);
        for v in values[b * spec.frames..][..spec.frames].iter_mut() {
            *v = (*v - mu) / sd;
        }
    }
    LogMelSpectrogram::new(spec.bins, spec.frames, values)
}

/// Inverse of [`normalize`], used by tests and sanity tooling.
pub fn denormalize<T: Scalar>(
    spec: &LogMelSpectrogram<T>,
    stats: &NormalizationStats<T>,
) -> Result<LogMelSpectrogram<T>> {
    let mut values = spec.values.clone();
    for b in 0..spec.bins {
        let (mu, sd) = (stats.mean[b], stats.std[b]);
        for v in values[b * spec.frames..][..spec.frames].iter_mut() {
            *v = *v * sd + mu;
        }
    }
    LogMelSpectrogram::new(spec.bins, spec.frames, values)
}
