//! Model assembly: the two front-ends, the shared back-end, and the full
//! tagging model with parameter accounting and checkpointing.

mod backend;
mod spectrogram;
mod waveform;

pub use backend::{Backend, BackendSpec};
pub use spectrogram::{SpectrogramFrontend, SpectrogramFrontendSpec, TemporalShape, TimbralShape};
pub use waveform::{WaveformFrontend, WaveformFrontendSpec};

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::checkpoint::Container;
use crate::rng::SeedRng;
use crate::scalar::Scalar;
use crate::tensor::{Mode, Parameter, Tensor, TensorError};

#[derive(Error, Debug)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Capacity multiplier from the sweep grid {1/4, 1/2, 1, 2, 4}; applied to
/// filter counts with floor semantics and a floor of one filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WidthMult {
    pub num: u32,
    pub den: u32,
}

impl Default for WidthMult {
    fn default() -> Self {
        WidthMult { num: 1, den: 1 }
    }
}

impl WidthMult {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(ModelError::Spec("width multiplier must be positive".into()));
        }
        Ok(WidthMult { num, den })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (num, den) = match text.split_once('/') {
            Some((n, d)) => (
                n.trim().parse::<u32>().map_err(|_| bad_mult(text))?,
                d.trim().parse::<u32>().map_err(|_| bad_mult(text))?,
            ),
            None => (text.parse::<u32>().map_err(|_| bad_mult(text))?, 1),
        };
        WidthMult::new(num, den)
    }

    pub fn apply(&self, count: usize) -> usize {
        ((count * self.num as usize) / self.den as usize).max(1)
    }

    pub fn is_identity(&self) -> bool {
        self.num == self.den
    }
}

fn bad_mult(text: &str) -> ModelError {
    ModelError::Spec(format!("cannot parse width multiplier '{}'", text))
}

impl std::fmt::Display for WidthMult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Output of a front-end: `[B, frames, channels]`, where the channel count is
/// the merged feature-map height the back-end convolves across.
#[derive(Debug, Clone)]
pub struct FeatureMap<T: Scalar>(pub Tensor<T>);

impl<T: Scalar> FeatureMap<T> {
    pub fn new(tensor: Tensor<T>) -> Result<Self> {
        if tensor.rank() != 3 {
            return Err(ModelError::Spec(format!(
                "feature map must be [B, T, C], got {:?}",
                tensor.shape()
            )));
        }
        Ok(FeatureMap(tensor))
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }
}

/// Centered uniform init scaled by 1/sqrt(fan-in).
pub(crate) fn init_uniform<T: Scalar>(rng: &mut SeedRng, numel: usize, fan_in: usize) -> Vec<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..numel).map(|_| rng.uniform(-bound, bound)).collect()
}

/// One row of the layer table printed by `describe` and `params`.
#[derive(Debug, Clone)]
pub struct LayerInfo {
    pub name: String,
    pub detail: String,
    pub output: String,
    pub params: u64,
}

/// Which front-end a model uses.
#[derive(Debug, Clone, PartialEq)]
pub enum FrontendSpec {
    Waveform(WaveformFrontendSpec),
    Spectrogram(SpectrogramFrontendSpec),
}

impl FrontendSpec {
    pub fn out_channels(&self) -> usize {
        match self {
            FrontendSpec::Waveform(s) => s.out_channels(),
            FrontendSpec::Spectrogram(s) => s.out_channels(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FrontendSpec::Waveform(_) => "waveform",
            FrontendSpec::Spectrogram(_) => "spectrogram",
        }
    }
}

pub enum Frontend<T: Scalar> {
    Waveform(WaveformFrontend<T>),
    Spectrogram(SpectrogramFrontend<T>),
}

/// A complete tagging model: front-end plus shared back-end.
pub struct TagModel<T: Scalar> {
    pub frontend: Frontend<T>,
    pub backend: Backend<T>,
    frontend_spec: FrontendSpec,
    backend_spec: BackendSpec,
}

impl<T: Scalar> TagModel<T> {
    /// Build with deterministic initialization from one seed. When
    /// `patch_len` is given, the front-end is checked against it so a pool
    /// chain that eats the whole input fails here, not mid-training.
    pub fn build(
        frontend: &FrontendSpec,
        backend: &BackendSpec,
        seed: u64,
        patch_len: Option<usize>,
    ) -> Result<Self> {
        let mut rng = SeedRng::new(seed);
        let fe = match frontend {
            FrontendSpec::Waveform(spec) => {
                spec.validate()?;
                if let Some(len) = patch_len {
                    spec.output_len(len)?;
                }
                Frontend::Waveform(WaveformFrontend::build(spec.clone(), &mut rng)?)
            }
            FrontendSpec::Spectrogram(spec) => {
                spec.validate()?;
                Frontend::Spectrogram(SpectrogramFrontend::build(spec.clone(), &mut rng)?)
            }
        };
        let be = Backend::build(backend.clone(), frontend.out_channels(), &mut rng)?;
        let model = TagModel {
            frontend: fe,
            backend: be,
            frontend_spec: frontend.clone(),
            backend_spec: backend.clone(),
        };
        let mut seen = HashSet::new();
        for p in model.parameters() {
            if !seen.insert(p.name.clone()) {
                return Err(ModelError::Spec(format!("duplicate parameter name '{}'", p.name)));
            }
        }
        Ok(model)
    }

    pub fn frontend_spec(&self) -> &FrontendSpec {
        &self.frontend_spec
    }

    pub fn backend_spec(&self) -> &BackendSpec {
        &self.backend_spec
    }

    pub fn n_outputs(&self) -> usize {
        self.backend_spec.n_outputs
    }

    /// Training-mode forward; updates batch-norm running statistics and draws
    /// dropout masks from `rng`. Input is `[B, samples]` for the waveform
    /// front-end or `[B, bins, frames]` for the spectrogram front-end.
    pub fn forward_train(&mut self, input: &Tensor<T>, rng: &mut SeedRng) -> Result<Tensor<T>> {
        let fmap = match &mut self.frontend {
            Frontend::Waveform(fe) => fe.forward(input, Mode::Train)?,
            Frontend::Spectrogram(fe) => fe.forward(input, Mode::Train)?,
        };
        self.backend.forward(&fmap, Mode::Train, rng)
    }

    /// Inference on a frozen model; reentrant, takes `&self`, records no graph.
    pub fn forward_frozen(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let fmap = match &self.frontend {
            Frontend::Waveform(fe) => fe.forward_frozen(input)?,
            Frontend::Spectrogram(fe) => fe.forward_frozen(input)?,
        };
        self.backend.forward_frozen(&fmap)
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = match &self.frontend {
            Frontend::Waveform(fe) => fe.parameters(),
            Frontend::Spectrogram(fe) => fe.parameters(),
        };
        out.extend(self.backend.parameters());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = match &mut self.frontend {
            Frontend::Waveform(fe) => fe.parameters_mut(),
            Frontend::Spectrogram(fe) => fe.parameters_mut(),
        };
        out.extend(self.backend.parameters_mut());
        out
    }

    pub fn zero_grads(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Non-trainable named buffers (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<(String, Vec<T>)> {
        let mut out = match &self.frontend {
            Frontend::Waveform(fe) => fe.buffers(),
            Frontend::Spectrogram(fe) => fe.buffers(),
        };
        out.extend(self.backend.buffers());
        out
    }

    pub fn restore_buffer(&mut self, name: &str, values: &[T]) -> Result<()> {
        let done = match &mut self.frontend {
            Frontend::Waveform(fe) => fe.restore_buffer(name, values)?,
            Frontend::Spectrogram(fe) => fe.restore_buffer(name, values)?,
        } || self.backend.restore_buffer(name, values)?;
        if done {
            Ok(())
        } else {
            Err(ModelError::Checkpoint(format!("unknown buffer '{}'", name)))
        }
    }

    /// Exact trainable-parameter count from the layer table's closed forms.
    /// (Tests cross-check it against enumerating every `Parameter`.)
    pub fn count_parameters(&self) -> u64 {
        self.layer_table(None).iter().map(|l| l.params).sum()
    }

    /// Per-layer description; pass an input length (samples or frames) to get
    /// concrete output shapes along the chain.
    pub fn layer_table(&self, input_len: Option<usize>) -> Vec<LayerInfo> {
        let mut rows = match (&self.frontend_spec, input_len) {
            (FrontendSpec::Waveform(s), len) => s.layer_table(len),
            (FrontendSpec::Spectrogram(s), len) => s.layer_table(len),
        };
        let fe_out_len = match (&self.frontend_spec, input_len) {
            (FrontendSpec::Waveform(s), Some(len)) => s.output_len(len).ok(),
            (FrontendSpec::Spectrogram(_), Some(len)) => Some(len),
            _ => None,
        };
        rows.extend(self.backend_spec.layer_table(self.frontend_spec.out_channels(), fe_out_len));
        rows
    }

    /// Human-readable layer table plus totals.
    pub fn describe(&self, input_len: Option<usize>) -> String {
        let rows = self.layer_table(input_len);
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:<30} {:<18} {:>12}", "layer", "detail", "output", "params");
        for r in &rows {
            let _ = writeln!(out, "{:<28} {:<30} {:<18} {:>12}", r.name, r.detail, r.output, r.params);
        }
        let total: u64 = rows.iter().map(|r| r.params).sum();
        let _ = writeln!(out, "{:<78} {:>12}", "total", total);
        let out_layer: u64 = rows.last().map(|r| r.params).unwrap_or(0);
        let _ = writeln!(
            out,
            "note: the sigmoid output is a second dense layer ({} params); folding it into \
             the hidden dense layer would drop the total by that amount",
            out_layer
        );
        out
    }

    /// Machine-readable (tab-separated) layer table.
    pub fn describe_tsv(&self, input_len: Option<usize>) -> String {
        let rows = self.layer_table(input_len);
        let mut out = String::from("layer\tdetail\toutput\tparams\n");
        for r in &rows {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.name, r.detail, r.output, r.params);
        }
        let total: u64 = rows.iter().map(|r| r.params).sum();
        let _ = writeln!(out, "total\t\t\t{}", total);
        out
    }

    /// Snapshot parameters and buffers into a checkpoint container.
    pub fn to_container(&self) -> Container<T> {
        let mut c = Container::new();
        c.push_meta("kind", "model");
        c.push_meta("frontend", self.frontend_spec.kind_name());
        c.push_meta("n_outputs", self.backend_spec.n_outputs.to_string());
        c.push_meta("precision", T::NAME);
        for p in self.parameters() {
            c.push_tensor(p.name.clone(), p.shape(), p.values().to_vec());
        }
        for (name, values) in self.buffers() {
            let len = values.len();
            c.push_tensor(name, &[len], values);
        }
        c
    }

    /// Restore parameters and buffers from a container produced by a model
    /// with the same specs.
    pub fn restore(&mut self, container: &Container<T>) -> Result<()> {
        let param_names: Vec<String> =
            self.parameters().iter().map(|p| p.name.clone()).collect();
        for name in &param_names {
            let entry = container
                .tensor(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor '{}'", name)))?;
            let values = entry.values.clone();
            let shape = entry.shape.clone();
            for p in self.parameters_mut() {
                if &p.name == name {
                    if p.shape() != shape.as_slice() {
                        return Err(ModelError::Checkpoint(format!(
                            "tensor '{}' has shape {:?}, model wants {:?}",
                            name,
                            shape,
                            p.shape()
                        )));
                    }
                    p.set_values(values.clone())?;
                }
            }
        }
        let buffer_names: Vec<String> = self.buffers().iter().map(|(n, _)| n.clone()).collect();
        for name in &buffer_names {
            let entry = container
                .tensor(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing buffer '{}'", name)))?;
            self.restore_buffer(name, &entry.values)?;
        }
        Ok(())
    }
}
