//! Shared back-end: three wide 1-D convolutions whose kernels span all
//! front-end channels (7 x M'), two residual connections around the
//! equal-width layers, a x2 temporal max pool, global mean+max pooling, and
//! two dense layers with 50% dropout in front of each. The global pooling
//! makes the output size independent of input length.

use super::{init_uniform, FeatureMap, LayerInfo, ModelError, Result};
use crate::rng::SeedRng;
use crate::scalar::Scalar;
use crate::tensor::{
    add, batch_norm, conv1d, dense, dropout, global_pool, max_pool1d, relu, sigmoid, Mode,
    Padding, Parameter, RunningStats, Tensor,
};

pub const BACKEND_KERNEL: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct BackendSpec {
    /// Filters in every CNN layer; the sweep grid is {64, 128, 256, 512}.
    pub cnn_filters: usize,
    /// Hidden dense units; the sweep grid is {200, 500}.
    pub dense_units: usize,
    pub n_outputs: usize,
    pub dropout: f64,
    /// Batch norm after the convolutions; off by default.
    pub batch_norm: bool,
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec {
            cnn_filters: 512,
            dense_units: 500,
            n_outputs: 50,
            dropout: 0.5,
            batch_norm: false,
        }
    }
}

impl BackendSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cnn_filters == 0 || self.dense_units == 0 || self.n_outputs == 0 {
            return Err(ModelError::Spec("back-end sizes must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Spec(format!("dropout {} not in [0,1)", self.dropout)));
        }
        Ok(())
    }

    pub fn layer_table(&self, in_channels: usize, in_frames: Option<usize>) -> Vec<LayerInfo> {
        let f = self.cnn_filters;
        let u = self.dense_units;
        let n = self.n_outputs;
        let bn = |c: usize| if self.batch_norm { 2 * c as u64 } else { 0 };
        let t1 = in_frames;
        let t2 = t1.map(|t| t / 2);
        let shape = |t: Option<usize>, c: usize| match t {
            Some(t) => format!("[{}, {}]", t, c),
            None => format!("[T, {}]", c),
        };
        vec![
            LayerInfo {
                name: "backend.conv1".into(),
                detail: format!("conv1d {}x{} -> {}, relu", BACKEND_KERNEL, in_channels, f),
                output: shape(t1, f),
                params: (BACKEND_KERNEL * in_channels * f + f) as u64 + bn(f),
            },
            LayerInfo {
                name: "backend.pool".into(),
                detail: "max_pool1d x2".into(),
                output: shape(t2, f),
                params: 0,
            },
            LayerInfo {
                name: "backend.conv2".into(),
                detail: format!("conv1d {}x{} -> {}, +residual, relu", BACKEND_KERNEL, f, f),
                output: shape(t2, f),
                params: (BACKEND_KERNEL * f * f + f) as u64 + bn(f),
            },
            LayerInfo {
                name: "backend.conv3".into(),
                detail: format!("conv1d {}x{} -> {}, +residual, relu", BACKEND_KERNEL, f, f),
                output: shape(t2, f),
                params: (BACKEND_KERNEL * f * f + f) as u64 + bn(f),
            },
            LayerInfo {
                name: "backend.global_pool".into(),
                detail: "temporal mean ++ max".into(),
                output: format!("[{}]", 2 * f),
                params: 0,
            },
            LayerInfo {
                name: "backend.dense1".into(),
                detail: format!("dropout {}, dense {} -> {}, relu", self.dropout, 2 * f, u),
                output: format!("[{}]", u),
                params: (2 * f * u + u) as u64,
            },
            LayerInfo {
                name: "backend.dense2".into(),
                detail: format!("dropout {}, dense {} -> {}, sigmoid", self.dropout, u, n),
                output: format!("[{}]", n),
                params: (u * n + n) as u64,
            },
        ]
    }
}

struct BnLayer<T: Scalar> {
    gamma: Parameter<T>,
    beta: Parameter<T>,
    running: RunningStats<T>,
}

pub struct Backend<T: Scalar> {
    spec: BackendSpec,
    in_channels: usize,
    conv1_w: Parameter<T>,
    conv1_b: Parameter<T>,
    conv2_w: Parameter<T>,
    conv2_b: Parameter<T>,
    conv3_w: Parameter<T>,
    conv3_b: Parameter<T>,
    bns: Option<[BnLayer<T>; 3]>,
    dense1_w: Parameter<T>,
    dense1_b: Parameter<T>,
    dense2_w: Parameter<T>,
    dense2_b: Parameter<T>,
}

impl<T: Scalar> Backend<T> {
    pub fn build(spec: BackendSpec, in_channels: usize, rng: &mut SeedRng) -> Result<Self> {
        spec.validate()?;
        if in_channels == 0 {
            return Err(ModelError::Spec("back-end needs at least one input channel".into()));
        }
        let k = BACKEND_KERNEL;
        let f = spec.cnn_filters;
        let u = spec.dense_units;
        let n = spec.n_outputs;
        let conv = |rng: &mut SeedRng, name: &str, c_in: usize| -> Result<(Parameter<T>, Parameter<T>)> {
            Ok((
                Parameter::new(
                    format!("backend.{}.weight", name),
                    init_uniform(rng, k * c_in * f, k * c_in),
                    &[k, c_in, f],
                )?,
                Parameter::new(format!("backend.{}.bias", name), vec![T::zero(); f], &[f])?,
            ))
        };
        let (conv1_w, conv1_b) = conv(rng, "conv1", in_channels)?;
        let (conv2_w, conv2_b) = conv(rng, "conv2", f)?;
        let (conv3_w, conv3_b) = conv(rng, "conv3", f)?;
        let bns = if spec.batch_norm {
            let mk = |i: usize| -> Result<BnLayer<T>> {
                Ok(BnLayer {
                    gamma: Parameter::new(format!("backend.bn{}.gamma", i), vec![T::one(); f], &[f])?,
                    beta: Parameter::new(format!("backend.bn{}.beta", i), vec![T::zero(); f], &[f])?,
                    running: RunningStats::new(f),
                })
            };
            Some([mk(1)?, mk(2)?, mk(3)?])
        } else {
            None
        };
        let dense1_w = Parameter::new(
            "backend.dense1.weight",
            init_uniform(rng, 2 * f * u, 2 * f),
            &[2 * f, u],
        )?;
        let dense1_b = Parameter::new("backend.dense1.bias", vec![T::zero(); u], &[u])?;
        let dense2_w =
            Parameter::new("backend.dense2.weight", init_uniform(rng, u * n, u), &[u, n])?;
        let dense2_b = Parameter::new("backend.dense2.bias", vec![T::zero(); n], &[n])?;
        Ok(Backend {
            spec,
            in_channels,
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            conv3_w,
            conv3_b,
            bns,
            dense1_w,
            dense1_b,
            dense2_w,
            dense2_b,
        })
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// Feature map `[B, T, M']` (T >= 2) to sigmoid tag activations
    /// `[B, n_outputs]`, for any T.
    pub fn forward(&mut self, fmap: &FeatureMap<T>, mode: Mode, rng: &mut SeedRng) -> Result<Tensor<T>> {
        if fmap.channels() != self.in_channels {
            return Err(ModelError::Spec(format!(
                "feature map has {} channels, back-end expects {}",
                fmap.channels(),
                self.in_channels
            )));
        }
        if fmap.frames() < 2 {
            return Err(ModelError::Spec(format!(
                "back-end needs at least 2 frames for its x2 pool, got {}",
                fmap.frames()
            )));
        }
        let rate = self.spec.dropout;

        let c1 = conv1d(
            fmap.tensor(),
            &self.conv1_w.active(mode),
            &self.conv1_b.active(mode),
            Padding::Same,
        )?;
        let c1 = self.bn(0, c1, mode)?;
        let h = max_pool1d(&relu(&c1)?, 2)?;

        let c2 = conv1d(&h, &self.conv2_w.active(mode), &self.conv2_b.active(mode), Padding::Same)?;
        let c2 = self.bn(1, c2, mode)?;
        let r1 = relu(&add(&c2, &h)?)?;

        let c3 = conv1d(&r1, &self.conv3_w.active(mode), &self.conv3_b.active(mode), Padding::Same)?;
        let c3 = self.bn(2, c3, mode)?;
        let r2 = relu(&add(&c3, &r1)?)?;

        let pooled = global_pool(&r2)?;
        let d1_in = dropout(&pooled, rate, mode, rng)?;
        let hidden = relu(&dense(&d1_in, &self.dense1_w.active(mode), &self.dense1_b.active(mode))?)?;
        let d2_in = dropout(&hidden, rate, mode, rng)?;
        let logits = dense(&d2_in, &self.dense2_w.active(mode), &self.dense2_b.active(mode))?;
        Ok(sigmoid(&logits)?)
    }

    /// Inference over frozen weights and running statistics; takes `&self`.
    pub fn forward_frozen(&self, fmap: &FeatureMap<T>) -> Result<Tensor<T>> {
        if fmap.channels() != self.in_channels {
            return Err(ModelError::Spec(format!(
                "feature map has {} channels, back-end expects {}",
                fmap.channels(),
                self.in_channels
            )));
        }
        if fmap.frames() < 2 {
            return Err(ModelError::Spec(format!(
                "back-end needs at least 2 frames for its x2 pool, got {}",
                fmap.frames()
            )));
        }
        let mode = Mode::Infer;
        let c1 = conv1d(
            fmap.tensor(),
            &self.conv1_w.active(mode),
            &self.conv1_b.active(mode),
            Padding::Same,
        )?;
        let c1 = self.bn_frozen(0, c1)?;
        let h = max_pool1d(&relu(&c1)?, 2)?;

        let c2 = conv1d(&h, &self.conv2_w.active(mode), &self.conv2_b.active(mode), Padding::Same)?;
        let c2 = self.bn_frozen(1, c2)?;
        let r1 = relu(&add(&c2, &h)?)?;

        let c3 = conv1d(&r1, &self.conv3_w.active(mode), &self.conv3_b.active(mode), Padding::Same)?;
        let c3 = self.bn_frozen(2, c3)?;
        let r2 = relu(&add(&c3, &r1)?)?;

        let pooled = global_pool(&r2)?;
        let hidden =
            relu(&dense(&pooled, &self.dense1_w.active(mode), &self.dense1_b.active(mode))?)?;
        let logits = dense(&hidden, &self.dense2_w.active(mode), &self.dense2_b.active(mode))?;
        Ok(sigmoid(&logits)?)
    }

    fn bn_frozen(&self, idx: usize, x: Tensor<T>) -> Result<Tensor<T>> {
        match &self.bns {
            None => Ok(x),
            Some(layers) => {
                let l = &layers[idx];
                let mut running = l.running.clone();
                Ok(batch_norm(
                    &x,
                    &l.gamma.active(Mode::Infer),
                    &l.beta.active(Mode::Infer),
                    &mut running,
                    Mode::Infer,
                    super::waveform::BN_EPS,
                    super::waveform::BN_MOMENTUM,
                )?)
            }
        }
    }

    fn bn(&mut self, idx: usize, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match &mut self.bns {
            None => Ok(x),
            Some(layers) => {
                let l = &mut layers[idx];
                let out = if mode == Mode::Infer {
                    let mut running = l.running.clone();
                    batch_norm(
                        &x,
                        &l.gamma.active(mode),
                        &l.beta.active(mode),
                        &mut running,
                        mode,
                        super::waveform::BN_EPS,
                        super::waveform::BN_MOMENTUM,
                    )?
                } else {
                    batch_norm(
                        &x,
                        &l.gamma.active(mode),
                        &l.beta.active(mode),
                        &mut l.running,
                        mode,
                        super::waveform::BN_EPS,
                        super::waveform::BN_MOMENTUM,
                    )?
                };
                Ok(out)
            }
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = vec![
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.conv3_w,
            &self.conv3_b,
        ];
        if let Some(bns) = &self.bns {
            for l in bns {
                out.push(&l.gamma);
                out.push(&l.beta);
            }
        }
        out.extend([&self.dense1_w, &self.dense1_b, &self.dense2_w, &self.dense2_b]);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
        ];
        if let Some(bns) = &mut self.bns {
            for l in bns {
                out.push(&mut l.gamma);
                out.push(&mut l.beta);
            }
        }
        out.extend([
            &mut self.dense1_w,
            &mut self.dense1_b,
            &mut self.dense2_w,
            &mut self.dense2_b,
        ]);
        out
    }

    pub fn buffers(&self) -> Vec<(String, Vec<T>)> {
        match &self.bns {
            None => vec![],
            Some(bns) => bns
                .iter()
                .enumerate()
                .flat_map(|(i, l)| {
                    [
                        (format!("backend.bn{}.running_mean", i + 1), l.running.mean.clone()),
                        (format!("backend.bn{}.running_var", i + 1), l.running.var.clone()),
                    ]
                })
                .collect(),
        }
    }

    pub fn restore_buffer(&mut self, name: &str, values: &[T]) -> Result<bool> {
        let Some(bns) = &mut self.bns else { return Ok(false) };
        for (i, l) in bns.iter_mut().enumerate() {
            let slot = if name == format!("backend.bn{}.running_mean", i + 1) {
                &mut l.running.mean
            } else if name == format!("backend.bn{}.running_var", i + 1) {
                &mut l.running.var
            } else {
                continue;
            };
            if slot.len() != values.len() {
                return Err(ModelError::Checkpoint(format!(
                    "buffer '{}' has {} values, expected {}",
                    name,
                    values.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(values);
            return Ok(true);
        }
        Ok(false)
    }
}
