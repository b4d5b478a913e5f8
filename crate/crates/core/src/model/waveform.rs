//! Sample-level waveform front-end: a deep stack of small (length-3)
//! convolutions, each followed by batch norm, ReLU and temporal max pooling.
//! Needs no domain knowledge about the signal; depth does the work.

use super::{init_uniform, FeatureMap, LayerInfo, ModelError, Result, WidthMult};
use crate::rng::SeedRng;
use crate::scalar::Scalar;
use crate::tensor::{
    batch_norm, conv1d, max_pool1d, relu, reshape, Mode, Padding, Parameter, RunningStats, Tensor,
};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformFrontendSpec {
    /// Filters per layer; the basic 7-layer setup is 64,64,64,128,128,128,256.
    pub layer_filters: Vec<usize>,
    pub kernel: usize,
    /// Per-layer max-pool sizes, same length as `layer_filters`.
    pub pools: Vec<usize>,
}

impl Default for WaveformFrontendSpec {
    fn default() -> Self {
        WaveformFrontendSpec::seven_layer()
    }
}

impl WaveformFrontendSpec {
    pub fn seven_layer() -> Self {
        WaveformFrontendSpec {
            layer_filters: vec![64, 64, 64, 128, 128, 128, 256],
            kernel: 3,
            pools: vec![3; 7],
        }
    }

    /// Higher-capacity variant used when much more data is available.
    pub fn nine_layer() -> Self {
        WaveformFrontendSpec {
            layer_filters: vec![64, 64, 64, 128, 128, 128, 128, 128, 256],
            kernel: 3,
            pools: vec![3; 9],
        }
    }

    pub fn with_width(&self, mult: WidthMult) -> Self {
        WaveformFrontendSpec {
            layer_filters: self.layer_filters.iter().map(|&c| mult.apply(c)).collect(),
            kernel: self.kernel,
            pools: self.pools.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_filters.is_empty() {
            return Err(ModelError::Spec("waveform front-end needs at least one layer".into()));
        }
        if self.pools.len() != self.layer_filters.len() {
            return Err(ModelError::Spec(format!(
                "{} pool sizes for {} layers",
                self.pools.len(),
                self.layer_filters.len()
            )));
        }
        if self.kernel == 0 || self.layer_filters.iter().any(|&c| c == 0) || self.pools.iter().any(|&p| p == 0)
        {
            return Err(ModelError::Spec("kernel, filters and pools must all be >= 1".into()));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layer_filters.len()
    }

    pub fn out_channels(&self) -> usize {
        *self.layer_filters.last().expect("validated non-empty")
    }

    /// Temporal length after the pool chain; depends only on the input length
    /// and pool sizes, never on filter counts.
    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        let mut t = input_len;
        for (i, &p) in self.pools.iter().enumerate() {
            t /= p;
            if t == 0 {
                return Err(ModelError::Spec(format!(
                    "input of {} samples is exhausted by pooling at layer {} (pool {})",
                    input_len,
                    i + 1,
                    p
                )));
            }
        }
        Ok(t)
    }

    pub fn layer_table(&self, input_len: Option<usize>) -> Vec<LayerInfo> {
        let mut rows = Vec::new();
        let mut c_in = 1usize;
        let mut t = input_len;
        for (i, (&f, &p)) in self.layer_filters.iter().zip(&self.pools).enumerate() {
            t = t.map(|v| v / p);
            let conv = (self.kernel * c_in * f + f) as u64;
            let bn = 2 * f as u64;
            rows.push(LayerInfo {
                name: format!("frontend.conv{}", i + 1),
                detail: format!("conv1d {}x{} -> {}, bn, relu, pool {}", self.kernel, c_in, f, p),
                output: match t {
                    Some(v) => format!("[{}, {}]", v, f),
                    None => format!("[T/{}^{}, {}]", self.pools[0], i + 1, f),
                },
                params: conv + bn,
            });
            c_in = f;
        }
        rows
    }
}

struct WaveLayer<T: Scalar> {
    weight: Parameter<T>,
    bias: Parameter<T>,
    gamma: Parameter<T>,
    beta: Parameter<T>,
    running: RunningStats<T>,
    pool: usize,
}

pub struct WaveformFrontend<T: Scalar> {
    spec: WaveformFrontendSpec,
    layers: Vec<WaveLayer<T>>,
}

impl<T: Scalar> WaveformFrontend<T> {
    pub fn build(spec: WaveformFrontendSpec, rng: &mut SeedRng) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.depth());
        let mut c_in = 1usize;
        for (i, (&f, &p)) in spec.layer_filters.iter().zip(&spec.pools).enumerate() {
            let k = spec.kernel;
            let weight = Parameter::new(
                format!("frontend.conv{}.weight", i + 1),
                init_uniform(rng, k * c_in * f, k * c_in),
                &[k, c_in, f],
            )?;
            let bias =
                Parameter::new(format!("frontend.conv{}.bias", i + 1), vec![T::zero(); f], &[f])?;
            let gamma =
                Parameter::new(format!("frontend.bn{}.gamma", i + 1), vec![T::one(); f], &[f])?;
            let beta =
                Parameter::new(format!("frontend.bn{}.beta", i + 1), vec![T::zero(); f], &[f])?;
            layers.push(WaveLayer {
                weight,
                bias,
                gamma,
                beta,
                running: RunningStats::new(f),
                pool: p,
            });
            c_in = f;
        }
        Ok(WaveformFrontend { spec, layers })
    }

    pub fn spec(&self) -> &WaveformFrontendSpec {
        &self.spec
    }

    /// `[B, samples]` (or `[samples]`) to `[B, frames, channels]`.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<FeatureMap<T>> {
        let x = as_btc(input)?;
        let mut h = x;
        for layer in self.layers.iter_mut() {
            let c = conv1d(&h, &layer.weight.active(mode), &layer.bias.active(mode), Padding::Same)?;
            let n = batch_norm(
                &c,
                &layer.gamma.active(mode),
                &layer.beta.active(mode),
                &mut layer.running,
                mode,
                BN_EPS,
                BN_MOMENTUM,
            )?;
            h = max_pool1d(&relu(&n)?, layer.pool)?;
        }
        FeatureMap::new(h)
    }

    /// Thread-safe inference over a frozen stack.
    pub fn forward_frozen(&self, input: &Tensor<T>) -> Result<FeatureMap<T>> {
        let x = as_btc(input)?;
        let mut h = x;
        for layer in self.layers.iter() {
            let c = conv1d(
                &h,
                &layer.weight.active(Mode::Infer),
                &layer.bias.active(Mode::Infer),
                Padding::Same,
            )?;
            let mut running = layer.running.clone();
            let n = batch_norm(
                &c,
                &layer.gamma.active(Mode::Infer),
                &layer.beta.active(Mode::Infer),
                &mut running,
                Mode::Infer,
                BN_EPS,
                BN_MOMENTUM,
            )?;
            h = max_pool1d(&relu(&n)?, layer.pool)?;
        }
        FeatureMap::new(h)
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias, &l.gamma, &l.beta])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias, &mut l.gamma, &mut l.beta])
            .collect()
    }

    pub fn buffers(&self) -> Vec<(String, Vec<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("frontend.bn{}.running_mean", i + 1), l.running.mean.clone()),
                    (format!("frontend.bn{}.running_var", i + 1), l.running.var.clone()),
                ]
            })
            .collect()
    }

    pub fn restore_buffer(&mut self, name: &str, values: &[T]) -> Result<bool> {
        for (i, l) in self.layers.iter_mut().enumerate() {
            let mean_name = format!("frontend.bn{}.running_mean", i + 1);
            let var_name = format!("frontend.bn{}.running_var", i + 1);
            let slot = if name == mean_name {
                &mut l.running.mean
            } else if name == var_name {
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

/// Accept `[samples]` or `[B, samples]` and append the single-channel axis.
fn as_btc<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let shaped = match *input.shape() {
        [t] => reshape(input, &[1, t, 1])?,
        [b, t] => reshape(input, &[b, t, 1])?,
        ref s => {
            return Err(ModelError::Spec(format!(
                "waveform input must be [samples] or [B, samples], got {:?}",
                s
            )))
        }
    };
    Ok(shaped)
}
