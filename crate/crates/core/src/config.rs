//! Run configuration: a flat `key = value` text file mirroring every knob of
//! a run. Unknown keys are errors so typos surface immediately. See
//! `RunConfig::to_text` for the canonical serialization (which round-trips).

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::dsp::DspConfig;
use crate::model::{
    BackendSpec, FrontendSpec, SpectrogramFrontendSpec, TemporalShape, TimbralShape,
    WaveformFrontendSpec, WidthMult,
};

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("{file}:{line}: {detail}")]
    Parse { file: String, line: usize, detail: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "f32" => Some(Precision::F32),
            "f64" => Some(Precision::F64),
            _ => None,
        }
    }
    pub fn name(&self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bce,
    Mse,
}

impl LossKind {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "bce" => Some(LossKind::Bce),
            "mse" => Some(LossKind::Mse),
            _ => None,
        }
    }
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::Mse => "mse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontendKind {
    Waveform,
    Spectrogram,
}

impl fmt::Display for FrontendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrontendKind::Waveform => "waveform",
            FrontendKind::Spectrogram => "spectrogram",
        })
    }
}

/// Everything a run needs. `Default` is the basic waveform configuration;
/// `basic_spectrogram()` flips the front-end.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub precision: Precision,
    pub seed: u64,
    pub frontend: FrontendKind,

    pub waveform_filters: Vec<usize>,
    pub waveform_kernel: usize,
    pub waveform_pools: Vec<usize>,
    pub waveform_width: WidthMult,

    pub spectrogram_timbral: Vec<TimbralShape>,
    pub spectrogram_temporal: Vec<TemporalShape>,
    pub spectrogram_width: WidthMult,
    pub spectrogram_batch_norm: bool,

    pub backend_filters: usize,
    pub backend_dense_units: usize,
    pub backend_dropout: f64,
    pub backend_batch_norm: bool,

    /// Output count; when absent it is taken from the manifest's tag list.
    pub n_outputs: Option<usize>,

    pub dsp: DspConfig,

    pub patch_seconds: f64,
    /// Prediction hop; defaults to the patch length (non-overlapping windows).
    pub hop_seconds: Option<f64>,
    /// Predict each song from one whole-length window instead of averaging
    /// fixed patches. Off by default; kept for comparison runs.
    pub whole_song: bool,

    pub loss: LossKind,
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: u64,
    pub patience: u64,
    pub validate_every: u64,
    /// Positive-class weight for the bce loss; off (1.0) by default.
    pub pos_weight: Option<f64>,

    pub manifest_dir: Option<String>,
    pub features_dir: Option<String>,
    pub out_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let wf = WaveformFrontendSpec::seven_layer();
        let sp = SpectrogramFrontendSpec::default();
        RunConfig {
            precision: Precision::F64,
            seed: 42,
            frontend: FrontendKind::Waveform,
            waveform_filters: wf.layer_filters,
            waveform_kernel: wf.kernel,
            waveform_pools: wf.pools,
            waveform_width: WidthMult::default(),
            spectrogram_timbral: sp.timbral,
            spectrogram_temporal: sp.temporal,
            spectrogram_width: WidthMult::default(),
            spectrogram_batch_norm: false,
            backend_filters: 512,
            backend_dense_units: 500,
            backend_dropout: 0.5,
            backend_batch_norm: false,
            n_outputs: None,
            dsp: DspConfig::default(),
            patch_seconds: 15.0,
            hop_seconds: None,
            whole_song: false,
            loss: LossKind::Bce,
            batch_size: 16,
            lr: 0.001,
            max_epochs: 200,
            patience: 10,
            validate_every: 1,
            pos_weight: None,
            manifest_dir: None,
            features_dir: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn basic_spectrogram() -> Self {
        RunConfig { frontend: FrontendKind::Spectrogram, ..Default::default() }
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_seconds.unwrap_or(self.patch_seconds)
    }

    /// Patch length in the front-end's native unit (samples or frames).
    pub fn patch_len(&self) -> usize {
        match self.frontend {
            FrontendKind::Waveform => {
                crate::dsp::patch_units(self.patch_seconds, self.dsp.sample_rate as f64)
            }
            FrontendKind::Spectrogram => self.dsp.patch_frames(self.patch_seconds),
        }
    }

    pub fn hop_len(&self) -> usize {
        match self.frontend {
            FrontendKind::Waveform => {
                crate::dsp::patch_units(self.hop_seconds(), self.dsp.sample_rate as f64)
            }
            FrontendKind::Spectrogram => self.dsp.patch_frames(self.hop_seconds()),
        }
    }

    /// The front-end spec with the width multiplier applied.
    pub fn frontend_spec(&self) -> FrontendSpec {
        match self.frontend {
            FrontendKind::Waveform => {
                let base = WaveformFrontendSpec {
                    layer_filters: self.waveform_filters.clone(),
                    kernel: self.waveform_kernel,
                    pools: self.waveform_pools.clone(),
                };
                FrontendSpec::Waveform(base.with_width(self.waveform_width))
            }
            FrontendKind::Spectrogram => {
                let base = SpectrogramFrontendSpec {
                    bins: self.dsp.n_mels,
                    timbral: self.spectrogram_timbral.clone(),
                    temporal: self.spectrogram_temporal.clone(),
                    batch_norm: self.spectrogram_batch_norm,
                };
                FrontendSpec::Spectrogram(base.with_width(self.spectrogram_width))
            }
        }
    }

    pub fn backend_spec(&self, n_outputs: usize) -> BackendSpec {
        BackendSpec {
            cnn_filters: self.backend_filters,
            dense_units: self.backend_dense_units,
            n_outputs,
            dropout: self.backend_dropout,
            batch_norm: self.backend_batch_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_seconds <= 0.0 {
            return Err(ConfigError::Invalid("patch_seconds must be positive".into()));
        }
        if let Some(h) = self.hop_seconds {
            if h <= 0.0 {
                return Err(ConfigError::Invalid("hop_seconds must be positive".into()));
            }
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.backend_dropout) {
            return Err(ConfigError::Invalid("backend.dropout must be in [0,1)".into()));
        }
        if self.validate_every == 0 {
            return Err(ConfigError::Invalid("validate_every must be >= 1".into()));
        }
        if self.frontend == FrontendKind::Spectrogram {
            if self.dsp.n_mels == 0 || self.dsp.window == 0 {
                return Err(ConfigError::Invalid(
                    "spectrogram front-end requires a dsp block".into(),
                ));
            }
            for s in &self.spectrogram_timbral {
                if s.height > self.dsp.n_mels {
                    return Err(ConfigError::Invalid(format!(
                        "timbral filter height {} exceeds dsp.mels {}",
                        s.height, self.dsp.n_mels
                    )));
                }
            }
        }
        Ok(())
    }

    /// Canonical serialization; `parse` of this text reproduces the config.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# mtag config v1\n");
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("precision", self.precision.name().into());
        kv("seed", self.seed.to_string());
        kv("frontend", self.frontend.to_string());
        kv("waveform.filters", join(&self.waveform_filters));
        kv("waveform.kernel", self.waveform_kernel.to_string());
        kv("waveform.pools", join(&self.waveform_pools));
        kv("waveform.width", self.waveform_width.to_string());
        kv(
            "spectrogram.timbral",
            self.spectrogram_timbral
                .iter()
                .map(|s| format!("{}x{}x{}", s.height, s.width, s.count))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "spectrogram.temporal",
            self.spectrogram_temporal
                .iter()
                .map(|s| format!("{}x{}", s.length, s.count))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("spectrogram.width", self.spectrogram_width.to_string());
        kv("spectrogram.batch_norm", self.spectrogram_batch_norm.to_string());
        kv("backend.filters", self.backend_filters.to_string());
        kv("backend.dense_units", self.backend_dense_units.to_string());
        kv("backend.dropout", self.backend_dropout.to_string());
        kv("backend.batch_norm", self.backend_batch_norm.to_string());
        if let Some(n) = self.n_outputs {
            kv("n_outputs", n.to_string());
        }
        kv("dsp.sample_rate", self.dsp.sample_rate.to_string());
        kv("dsp.window", self.dsp.window.to_string());
        kv("dsp.hop", self.dsp.hop.to_string());
        kv("dsp.mels", self.dsp.n_mels.to_string());
        kv("dsp.fmin", self.dsp.f_min.to_string());
        kv("dsp.fmax", self.dsp.f_max.to_string());
        kv("dsp.power", self.dsp.power.to_string());
        kv("patch_seconds", self.patch_seconds.to_string());
        if let Some(h) = self.hop_seconds {
            kv("hop_seconds", h.to_string());
        }
        kv("whole_song", self.whole_song.to_string());
        kv("loss", self.loss.name().into());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", self.lr.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("patience", self.patience.to_string());
        kv("validate_every", self.validate_every.to_string());
        if let Some(w) = self.pos_weight {
            kv("pos_weight", w.to_string());
        }
        if let Some(p) = &self.manifest_dir {
            kv("paths.manifest", p.clone());
        }
        if let Some(p) = &self.features_dir {
            kv("paths.features", p.clone());
        }
        if let Some(p) = &self.out_dir {
            kv("paths.out", p.clone());
        }
        out
    }

    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                file: file.into(),
                line: i + 1,
                detail: format!("expected 'key = value', got '{}'", line),
            })?;
            let key = key.trim();
            let value = value.trim();
            let err = |detail: String| ConfigError::Parse { file: file.into(), line: i + 1, detail };
            apply_key(&mut cfg, key, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_usize_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad integer list '{}'", value)))
        .collect()
}

fn apply_key(cfg: &mut RunConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let bad = |what: &str| format!("bad {} '{}'", what, value);
    match key {
        "precision" => cfg.precision = Precision::parse(value).ok_or_else(|| bad("precision"))?,
        "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
        "frontend" => {
            cfg.frontend = match value {
                "waveform" => FrontendKind::Waveform,
                "spectrogram" => FrontendKind::Spectrogram,
                _ => return Err(bad("frontend")),
            }
        }
        "waveform.filters" => cfg.waveform_filters = parse_usize_list(value)?,
        "waveform.kernel" => cfg.waveform_kernel = value.parse().map_err(|_| bad("kernel"))?,
        "waveform.pools" => cfg.waveform_pools = parse_usize_list(value)?,
        "waveform.width" => {
            cfg.waveform_width = WidthMult::parse(value).map_err(|e| e.to_string())?
        }
        "spectrogram.timbral" => {
            cfg.spectrogram_timbral = value
                .split(',')
                .map(|s| {
                    let parts: Vec<&str> = s.trim().split('x').collect();
                    if parts.len() != 3 {
                        return Err(bad("timbral shape (want HxWxCOUNT)"));
                    }
                    Ok(TimbralShape {
                        height: parts[0].parse().map_err(|_| bad("timbral height"))?,
                        width: parts[1].parse().map_err(|_| bad("timbral width"))?,
                        count: parts[2].parse().map_err(|_| bad("timbral count"))?,
                    })
                })
                .collect::<std::result::Result<Vec<_>, _>>()?
        }
        "spectrogram.temporal" => {
            cfg.spectrogram_temporal = value
                .split(',')
                .map(|s| {
                    let parts: Vec<&str> = s.trim().split('x').collect();
                    if parts.len() != 2 {
                        return Err(bad("temporal shape (want LENxCOUNT)"));
                    }
                    Ok(TemporalShape {
                        length: parts[0].parse().map_err(|_| bad("temporal length"))?,
                        count: parts[1].parse().map_err(|_| bad("temporal count"))?,
                    })
                })
                .collect::<std::result::Result<Vec<_>, _>>()?
        }
        "spectrogram.width" => {
            cfg.spectrogram_width = WidthMult::parse(value).map_err(|e| e.to_string())?
        }
        "spectrogram.batch_norm" => {
            cfg.spectrogram_batch_norm = value.parse().map_err(|_| bad("bool"))?
        }
        "backend.filters" => cfg.backend_filters = value.parse().map_err(|_| bad("filters"))?,
        "backend.dense_units" => {
            cfg.backend_dense_units = value.parse().map_err(|_| bad("dense_units"))?
        }
        "backend.dropout" => cfg.backend_dropout = value.parse().map_err(|_| bad("dropout"))?,
        "backend.batch_norm" => cfg.backend_batch_norm = value.parse().map_err(|_| bad("bool"))?,
        "n_outputs" => cfg.n_outputs = Some(value.parse().map_err(|_| bad("n_outputs"))?),
        "dsp.sample_rate" => cfg.dsp.sample_rate = value.parse().map_err(|_| bad("rate"))?,
        "dsp.window" => cfg.dsp.window = value.parse().map_err(|_| bad("window"))?,
        "dsp.hop" => cfg.dsp.hop = value.parse().map_err(|_| bad("hop"))?,
        "dsp.mels" => cfg.dsp.n_mels = value.parse().map_err(|_| bad("mels"))?,
        "dsp.fmin" => cfg.dsp.f_min = value.parse().map_err(|_| bad("fmin"))?,
        "dsp.fmax" => cfg.dsp.f_max = value.parse().map_err(|_| bad("fmax"))?,
        "dsp.power" => cfg.dsp.power = value.parse().map_err(|_| bad("power"))?,
        "patch_seconds" => cfg.patch_seconds = value.parse().map_err(|_| bad("seconds"))?,
        "hop_seconds" => cfg.hop_seconds = Some(value.parse().map_err(|_| bad("seconds"))?),
        "whole_song" => cfg.whole_song = value.parse().map_err(|_| bad("bool"))?,
        "loss" => cfg.loss = LossKind::parse(value).ok_or_else(|| bad("loss"))?,
        "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
        "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
        "max_epochs" => cfg.max_epochs = value.parse().map_err(|_| bad("max_epochs"))?,
        "patience" => cfg.patience = value.parse().map_err(|_| bad("patience"))?,
        "validate_every" => cfg.validate_every = value.parse().map_err(|_| bad("validate_every"))?,
        "pos_weight" => cfg.pos_weight = Some(value.parse().map_err(|_| bad("pos_weight"))?),
        "paths.manifest" => cfg.manifest_dir = Some(value.to_string()),
        "paths.features" => cfg.features_dir = Some(value.to_string()),
        "paths.out" => cfg.out_dir = Some(value.to_string()),
        _ => return Err(format!("unknown key '{}'", key)),
    }
    Ok(())
}
