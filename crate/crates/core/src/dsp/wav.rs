//! Minimal RIFF/WAV support: 16-bit PCM in, 16-bit PCM out. Multi-channel
//! files are downmixed to mono by averaging. Compressed formats are out of
//! scope for the reference path.

use std::fs;
use std::path::Path;

use super::{DspError, Result};
use crate::checkpoint::write_atomic;
use crate::scalar::Scalar;

fn io_err(path: &Path, source: std::io::Error) -> DspError {
    DspError::Io { path: path.display().to_string(), source }
}

/// Read a WAV file as mono samples in [-1, 1] plus the sample rate.
pub fn read_wav_mono<T: Scalar>(path: &Path) -> Result<(Vec<T>, u32)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DspError::UnsupportedWav(format!("{}: not a RIFF/WAVE file", path.display())));
    }
    let mut at = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None; // codec, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap()) as usize;
        let body_end = (at + 8 + size).min(bytes.len());
        let body = &bytes[at + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(DspError::UnsupportedWav("short fmt chunk".into()));
                }
                let codec = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                format = Some((codec, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        at = at + 8 + size + (size & 1);
    }
    let (codec, channels, rate, bits) =
        format.ok_or_else(|| DspError::UnsupportedWav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| DspError::UnsupportedWav("missing data chunk".into()))?;
    if codec != 1 || bits != 16 {
        return Err(DspError::UnsupportedWav(format!(
            "only 16-bit PCM is supported, got codec {} / {} bits",
            codec, bits
        )));
    }
    if channels == 0 {
        return Err(DspError::UnsupportedWav("zero channels".into()));
    }
    let ch = channels as usize;
    let n_frames = data.len() / (2 * ch);
    let scale = 1.0 / (32768.0 * ch as f64);
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0f64;
        for c in 0..ch {
            let off = (f * ch + c) * 2;
            let v = i16::from_le_bytes(data[off..off + 2].try_into().unwrap());
            acc += v as f64;
        }
        samples.push(T::from_f64(acc * scale));
    }
    if samples.is_empty() {
        return Err(DspError::UnsupportedWav(format!("{}: empty data chunk", path.display())));
    }
    Ok((samples, rate))
}

/// Write mono 16-bit PCM; values are clamped to [-1, 1] first.
pub fn write_wav_mono<T: Scalar>(path: &Path, samples: &[T], sample_rate: u32) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.as_f64().clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &out).map_err(|e| io_err(path, e))
}
