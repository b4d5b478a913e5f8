//! Audio front-of-house: decoding, resampling to 16 kHz, STFT, log-mel
//! spectrograms with per-bin normalization, and fixed-length patch slicing.

mod fft;
mod mel;
mod resample;
mod stft;

pub mod cache;
pub mod wav;

pub use fft::fft_in_place;
pub use mel::{
    denormalize, hz_to_mel, log_compress, mel_filterbank, mel_to_hz, normalize,
    NormalizationStats, LOG_EPS,
};
pub use resample::resample;
pub use stft::stft_magnitude;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Error, Debug)]
pub enum DspError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("clip '{clip}' is malformed: {detail}")]
    BadClip { clip: String, detail: String },
    #[error("mel filter {row} is empty; fewer mel bins or a larger FFT is needed")]
    EmptyMelFilter { row: usize },
    #[error("mel bin {bin} is constant across the training split (std = 0)")]
    DegenerateBin { bin: usize },
    #[error("normalization stats version '{found}' does not match features '{expected}'")]
    StatsVersionMismatch { found: String, expected: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported wav: {0}")]
    UnsupportedWav(String),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Decoded mono audio.
#[derive(Debug, Clone)]
pub struct WaveformClip<T: Scalar> {
    pub clip_id: String,
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> WaveformClip<T> {
    pub fn new(clip_id: impl Into<String>, samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        let clip_id = clip_id.into();
        if sample_rate == 0 {
            return Err(DspError::BadClip { clip: clip_id, detail: "sample rate 0".into() });
        }
        if samples.is_empty() {
            return Err(DspError::BadClip { clip: clip_id, detail: "no samples".into() });
        }
        Ok(WaveformClip { clip_id, samples, sample_rate })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// 96-by-T matrix of log-magnitudes, stored bin-major (`values[bin * frames + frame]`).
#[derive(Debug, Clone)]
pub struct LogMelSpectrogram<T: Scalar> {
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> LogMelSpectrogram<T> {
    pub fn new(bins: usize, frames: usize, values: Vec<T>) -> Result<Self> {
        if bins == 0 || frames == 0 || values.len() != bins * frames {
            return Err(DspError::Invalid(format!(
                "log-mel wants {}x{} = {} values, got {}",
                bins,
                frames,
                bins * frames,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(DspError::Invalid("non-finite log-mel value".into()));
        }
        Ok(LogMelSpectrogram { bins, frames, values })
    }

    pub fn frame_column(&self, frame: usize) -> Vec<T> {
        (0..self.bins).map(|b| self.values[b * self.frames + frame]).collect()
    }
}

/// STFT/mel knobs. Defaults give the 96x938 shape for 15 s at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Exponent applied to STFT magnitudes before mel pooling (1 = magnitude).
    pub power: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate: 16_000,
            window: 512,
            hop: 256,
            n_mels: 96,
            f_min: 0.0,
            f_max: 8000.0,
            power: 1.0,
        }
    }
}

impl DspConfig {
    /// Identifier written into feature caches and stats files so mismatched
    /// preprocessing is caught at load time.
    pub fn fingerprint(&self) -> String {
        format!(
            "v1-sr{}-w{}-h{}-m{}-f{}..{}-p{}",
            self.sample_rate, self.window, self.hop, self.n_mels, self.f_min, self.f_max, self.power
        )
    }

    /// STFT frame count for a clip of `n` samples.
    pub fn frames_for_samples(&self, n: usize) -> usize {
        1 + n / self.hop
    }

    /// Frame length used when slicing patches out of a cached spectrogram.
    pub fn patch_frames(&self, seconds: f64) -> usize {
        let samples = (seconds * self.sample_rate as f64).round() as usize;
        (samples / self.hop).max(1)
    }
}

/// Full waveform-to-features pipeline: STFT magnitude (raised to
/// `config.power`), mel pooling, log compression.
pub fn log_mel<T: Scalar>(samples: &[T], config: &DspConfig) -> Result<LogMelSpectrogram<T>> {
    let mag = stft_magnitude(samples, config.window, config.hop)?;
    let n_bins = config.window / 2 + 1;
    let frames = mag.len() / n_bins;
    let fb = mel_filterbank::<T>(
        config.n_mels,
        n_bins,
        config.sample_rate as f64,
        config.f_min,
        config.f_max,
    )?;
    let mut mel = vec![T::zero(); config.n_mels * frames];
    let apply_power = (config.power - 1.0).abs() > 1e-12;
    let power = T::from_f64(config.power);
    // mag is frame-major; output is bin-major.
    for f in 0..frames {
        let frame = &mag[f * n_bins..][..n_bins];
        for m in 0..config.n_mels {
            let row = &fb[m * n_bins..][..n_bins];
            let mut acc = T::zero();
            if apply_power {
                for (w, &x) in row.iter().zip(frame) {
                    if *w > T::zero() {
                        acc += *w * x.powf(power);
                    }
                }
            } else {
                for (w, &x) in row.iter().zip(frame) {
                    acc += *w * x;
                }
            }
            mel[m * frames + f] = acc;
        }
    }
    log_compress(&mut mel);
    LogMelSpectrogram::new(config.n_mels, frames, mel)
}

/// Window start offsets for fixed-length patches at a fixed hop. A source
/// shorter than one patch yields a single (zero-padded) patch at offset 0;
/// otherwise the count is `1 + (len - patch) / hop`.
pub fn patch_starts(len: usize, patch: usize, hop: usize) -> Vec<usize> {
    assert!(patch > 0 && hop > 0, "patch and hop must be positive");
    if len <= patch {
        return vec![0];
    }
    (0..=(len - patch) / hop).map(|k| k * hop).collect()
}

/// Slice a waveform into fixed-length windows (zero-padding a short clip).
pub fn extract_patches<T: Scalar>(samples: &[T], patch: usize, hop: usize) -> Vec<Vec<T>> {
    patch_starts(samples.len(), patch, hop)
        .into_iter()
        .map(|s| {
            let mut out = vec![T::zero(); patch];
            let take = patch.min(samples.len().saturating_sub(s));
            out[..take].copy_from_slice(&samples[s..s + take]);
            out
        })
        .collect()
}

/// Patch timing expressed in whole units (samples or frames).
pub fn patch_units(seconds: f64, rate: f64) -> usize {
    ((seconds * rate).round() as usize).max(1)
}
