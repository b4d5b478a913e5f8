//! Per-clip feature cache files written by `extract` and consumed by
//! training and prediction.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic         8 bytes "MTAGFT01"
//! precision     u8      4 = f32, 8 = f64
//! kind          u8      0 = waveform (bins = 1), 1 = log-mel
//! clip_id       u16 length + UTF-8
//! sample_rate   u32
//! bins          u32
//! frames        u32
//! stats_version u16 length + UTF-8   (DSP fingerprint; empty for waveforms)
//! values        bins * frames elements, bin-major, IEEE-754 LE
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::{DspError, LogMelSpectrogram, Result};
use crate::checkpoint::write_atomic;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MTAGFT01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Waveform,
    LogMel,
}

/// Cached features for one clip: either the resampled waveform or its
/// un-normalized log-mel spectrogram.
#[derive(Debug, Clone)]
pub struct FeatureFile<T: Scalar> {
    pub clip_id: String,
    pub kind: FeatureKind,
    pub sample_rate: u32,
    pub bins: usize,
    pub frames: usize,
    pub stats_version: String,
    pub values: Vec<T>,
}

impl<T: Scalar> FeatureFile<T> {
    pub fn waveform(clip_id: impl Into<String>, samples: Vec<T>, sample_rate: u32) -> Self {
        FeatureFile {
            clip_id: clip_id.into(),
            kind: FeatureKind::Waveform,
            sample_rate,
            bins: 1,
            frames: samples.len(),
            stats_version: String::new(),
            values: samples,
        }
    }

    pub fn log_mel(
        clip_id: impl Into<String>,
        spec: LogMelSpectrogram<T>,
        sample_rate: u32,
        stats_version: impl Into<String>,
    ) -> Self {
        FeatureFile {
            clip_id: clip_id.into(),
            kind: FeatureKind::LogMel,
            sample_rate,
            bins: spec.bins,
            frames: spec.frames,
            stats_version: stats_version.into(),
            values: spec.values,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.values.len() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.push(T::BYTES as u8);
        out.push(match self.kind {
            FeatureKind::Waveform => 0,
            FeatureKind::LogMel => 1,
        });
        out.extend_from_slice(&(self.clip_id.len() as u16).to_le_bytes());
        out.extend_from_slice(self.clip_id.as_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&(self.bins as u32).to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.stats_version.len() as u16).to_le_bytes());
        out.extend_from_slice(self.stats_version.as_bytes());
        for &v in &self.values {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |m: &str| DspError::Invalid(format!("feature cache: {}", m));
        let mut at = 0usize;
        let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
            if *at + n > bytes.len() {
                return Err(DspError::Invalid("feature cache: truncated".into()));
            }
            let s = &bytes[*at..*at + n];
            *at += n;
            Ok(s)
        };
        if take(&mut at, 8)? != MAGIC {
            return Err(fail("bad magic"));
        }
        let prec = take(&mut at, 1)?[0];
        if prec as usize != T::BYTES {
            return Err(fail(&format!(
                "precision mismatch: file {} bytes, run {} bytes",
                prec,
                T::BYTES
            )));
        }
        let kind = match take(&mut at, 1)?[0] {
            0 => FeatureKind::Waveform,
            1 => FeatureKind::LogMel,
            k => return Err(fail(&format!("unknown kind {}", k))),
        };
        let idlen = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
        let clip_id = String::from_utf8(take(&mut at, idlen)?.to_vec())
            .map_err(|_| fail("clip id is not utf-8"))?;
        let sample_rate = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
        let bins = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let frames = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let svlen = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
        let stats_version = String::from_utf8(take(&mut at, svlen)?.to_vec())
            .map_err(|_| fail("stats version is not utf-8"))?;
        let raw = take(&mut at, bins * frames * T::BYTES)?;
        let values: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        if at != bytes.len() {
            return Err(fail("trailing bytes"));
        }
        Ok(FeatureFile { clip_id, kind, sample_rate, bins, frames, stats_version, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
            .map_err(|e| DspError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| DspError::Io { path: path.display().to_string(), source: e })?;
        Self::from_bytes(&bytes)
    }
}

/// Canonical cache file path for a clip.
pub fn feature_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join(format!("{}.feat", clip_id))
}

/// Canonical normalization-stats path inside a feature directory.
pub fn stats_path(dir: &Path) -> PathBuf {
    dir.join("norm_stats.tsv")
}
