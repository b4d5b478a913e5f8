//! Synthetic desk-scale dataset: clips are mixtures of pure tones and white
//! noise whose tags are analytically determined by construction — tone k
//! present <=> tag k is 1, one regression tag is the exact noise/tone energy
//! mixing coefficient, the other the high-frequency share of the active
//! tones. That makes ground truth checkable by an independent tone detector.

use std::path::Path;

use super::manifest::{ClipRecord, DatasetManifest, Split, TagDef};
use super::split::{apply_split, split_dataset, SplitFractions};
use super::{DataError, Result};
use crate::dsp::wav::write_wav_mono;
use crate::metrics::TagKind;
use crate::rng::SeedRng;

pub const NOISE_RATIO_TAG: &str = "noise_ratio";
pub const BRIGHTNESS_TAG: &str = "brightness";
/// Tones above this frequency count toward the brightness tag.
pub const BRIGHT_HZ: f64 = 1500.0;
const GAIN: f64 = 0.15;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_clips: usize,
    /// Number of tone-presence classification tags.
    pub n_tags: usize,
    pub n_artists: usize,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    pub fractions: SplitFractions,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n_clips: usize, n_tags: usize, seed: u64) -> Result<Self> {
        if n_clips < 10 {
            return Err(DataError::Validation(format!(
                "synthetic dataset needs at least 10 clips, got {}",
                n_clips
            )));
        }
        if n_tags == 0 {
            return Err(DataError::Validation("need at least one tone tag".into()));
        }
        Ok(SynthSpec {
            n_clips,
            n_tags,
            n_artists: (n_clips / 5).max(2),
            clip_seconds: 30.0,
            sample_rate: 16_000,
            fractions: SplitFractions::new(0.6, 0.2, 0.2).expect("valid fractions"),
            seed,
        })
    }

    /// Tone frequencies, log-spaced from 300 Hz to 6 kHz so neighbours stay
    /// more than half an octave apart at the default tag count.
    pub fn tone_frequencies(&self) -> Vec<f64> {
        let n = self.n_tags;
        (0..n)
            .map(|k| {
                if n == 1 {
                    440.0
                } else {
                    300.0 * (6000.0f64 / 300.0).powf(k as f64 / (n - 1) as f64)
                }
            })
            .collect()
    }
}

/// Per-clip ground truth decided before synthesis.
struct ClipPlan {
    tones: Vec<bool>,
    phases: Vec<f64>,
    noise_ratio: f64,
}

fn plan_clip(spec: &SynthSpec, rng: &mut SeedRng) -> ClipPlan {
    // one to three tones per clip: every active tone keeps a solid share of
    // the energy budget, and the noise spread stays wide enough that a
    // constant regressor fails the noise-ratio RMSE bar
    let count = (1 + rng.below(3)).min(spec.n_tags);
    let mut tones = vec![false; spec.n_tags];
    let mut picked = 0;
    while picked < count {
        let k = rng.below(spec.n_tags);
        if !tones[k] {
            tones[k] = true;
            picked += 1;
        }
    }
    let phases = (0..spec.n_tags).map(|_| rng.next_f64() * std::f64::consts::TAU).collect();
    let noise_ratio = 0.05 + 0.40 * rng.next_f64();
    ClipPlan { tones, phases, noise_ratio }
}

fn synthesize(spec: &SynthSpec, plan: &ClipPlan, rng: &mut SeedRng) -> Vec<f64> {
    let n = (spec.clip_seconds * spec.sample_rate as f64).round() as usize;
    let freqs = spec.tone_frequencies();
    let active: Vec<(f64, f64)> = freqs
        .iter()
        .zip(&plan.phases)
        .zip(&plan.tones)
        .filter(|(_, &on)| on)
        .map(|((f, p), _)| (*f, *p))
        .collect();

    let mut tones = vec![0.0f64; n];
    for &(freq, phase) in &active {
        let w = std::f64::consts::TAU * freq / spec.sample_rate as f64;
        for (t, v) in tones.iter_mut().enumerate() {
            *v += (w * t as f64 + phase).sin();
        }
    }
    let mut noise: Vec<f64> = (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();

    let rms = |xs: &[f64]| (xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64).sqrt();
    let tone_rms = rms(&tones).max(1e-12);
    let noise_rms = rms(&noise).max(1e-12);
    for v in tones.iter_mut() {
        *v /= tone_rms;
    }
    for v in noise.iter_mut() {
        *v /= noise_rms;
    }

    let (wt, wn) = ((1.0 - plan.noise_ratio).sqrt(), plan.noise_ratio.sqrt());
    let mut out: Vec<f64> =
        tones.iter().zip(&noise).map(|(t, z)| GAIN * (wt * t + wn * z)).collect();
    // A uniform rescale keeps the tone/noise energy ratio exact.
    let peak = out.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if peak > 0.999 {
        let s = 0.999 / peak;
        for v in out.iter_mut() {
            *v *= s;
        }
    }
    out
}

/// Targets for a planned clip, aligned with [`tag_defs`].
fn targets(spec: &SynthSpec, plan: &ClipPlan) -> Vec<f64> {
    let freqs = spec.tone_frequencies();
    let n_active = plan.tones.iter().filter(|&&t| t).count() as f64;
    let bright = freqs
        .iter()
        .zip(&plan.tones)
        .filter(|(f, &on)| on && **f >= BRIGHT_HZ)
        .count() as f64;
    let mut out: Vec<f64> =
        plan.tones.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    out.push(plan.noise_ratio);
    out.push(bright / n_active);
    out
}

fn tag_defs(spec: &SynthSpec) -> Vec<TagDef> {
    let freqs = spec.tone_frequencies();
    let mut tags: Vec<TagDef> = freqs
        .iter()
        .map(|f| TagDef {
            name: format!("tone_{}", f.round() as u64),
            kind: TagKind::Classification,
        })
        .collect();
    tags.push(TagDef { name: NOISE_RATIO_TAG.into(), kind: TagKind::Regression });
    tags.push(TagDef { name: BRIGHTNESS_TAG.into(), kind: TagKind::Regression });
    tags
}

/// Generate WAV files plus a manifest under `out_dir`. Everything is a pure
/// function of the spec, so two calls with one seed write identical bytes.
pub fn generate_synthetic_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    if spec.n_clips < 10 {
        return Err(DataError::Validation("synthetic dataset needs at least 10 clips".into()));
    }
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir)
        .map_err(|e| DataError::Io { path: audio_dir.display().to_string(), source: e })?;

    let root = SeedRng::new(spec.seed);
    let mut clips = Vec::with_capacity(spec.n_clips);
    for i in 0..spec.n_clips {
        let mut rng = root.derive(i as u64);
        let plan = plan_clip(spec, &mut rng);
        let samples = synthesize(spec, &plan, &mut rng);
        let rel_path = format!("audio/clip_{:04}.wav", i);
        write_wav_mono(&out_dir.join(&rel_path), &samples, spec.sample_rate)?;
        clips.push(ClipRecord {
            clip_id: format!("clip_{:04}", i),
            audio_path: rel_path,
            artist_id: format!("artist_{:03}", i % spec.n_artists),
            duration_s: spec.clip_seconds,
            split: Split::Train,
            targets: targets(spec, &plan),
        });
    }
    let mut manifest = DatasetManifest::new(tag_defs(spec), clips)?;
    let assignment = split_dataset(&manifest, spec.fractions, spec.seed)?;
    apply_split(&mut manifest, &assignment)?;
    manifest.save(out_dir)?;
    Ok(manifest)
}
