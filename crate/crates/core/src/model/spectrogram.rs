//! Domain-knowledge spectrogram front-end: a single CNN layer with many
//! filter shapes, split into a timbral branch (tall vertical filters made
//! pitch-invariant by a vertical max) and a temporal branch (long 1-D filters
//! over the frequency-mean energy envelope). Branch outputs share the frame
//! axis and merge by channel concatenation, timbral block first.

use super::{init_uniform, FeatureMap, LayerInfo, ModelError, Result, WidthMult};
use crate::rng::SeedRng;
use crate::scalar::Scalar;
use crate::tensor::{
    batch_norm, concat_last, conv1d, conv2d, max_axis, mean_axis, relu, reshape, Mode, Padding,
    Parameter, RunningStats, Tensor,
};

/// One timbral filter shape: `height x width`, `count` filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimbralShape {
    pub height: usize,
    pub width: usize,
    pub count: usize,
}

/// One temporal filter shape: `length`, `count` filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalShape {
    pub length: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramFrontendSpec {
    pub bins: usize,
    pub timbral: Vec<TimbralShape>,
    pub temporal: Vec<TemporalShape>,
    /// Batch norm after the branch convolutions; off by default.
    pub batch_norm: bool,
}

impl Default for SpectrogramFrontendSpec {
    fn default() -> Self {
        SpectrogramFrontendSpec {
            bins: 96,
            timbral: vec![
                TimbralShape { height: 86, width: 7, count: 16 },
                TimbralShape { height: 86, width: 3, count: 32 },
                TimbralShape { height: 86, width: 1, count: 64 },
                TimbralShape { height: 38, width: 7, count: 16 },
                TimbralShape { height: 38, width: 3, count: 32 },
                TimbralShape { height: 38, width: 1, count: 64 },
            ],
            temporal: vec![
                TemporalShape { length: 165, count: 16 },
                TemporalShape { length: 128, count: 32 },
                TemporalShape { length: 64, count: 64 },
                TemporalShape { length: 32, count: 128 },
            ],
            batch_norm: false,
        }
    }
}

impl SpectrogramFrontendSpec {
    pub fn with_width(&self, mult: WidthMult) -> Self {
        SpectrogramFrontendSpec {
            bins: self.bins,
            timbral: self
                .timbral
                .iter()
                .map(|s| TimbralShape { count: mult.apply(s.count), ..*s })
                .collect(),
            temporal: self
                .temporal
                .iter()
                .map(|s| TemporalShape { count: mult.apply(s.count), ..*s })
                .collect(),
            batch_norm: self.batch_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(ModelError::Spec("mel bin count must be positive".into()));
        }
        if self.timbral.is_empty() && self.temporal.is_empty() {
            return Err(ModelError::Spec("spectrogram front-end has no filters".into()));
        }
        for s in &self.timbral {
            if s.height == 0 || s.width == 0 || s.count == 0 {
                return Err(ModelError::Spec("timbral shape with a zero field".into()));
            }
            if s.height > self.bins {
                return Err(ModelError::Spec(format!(
                    "timbral filter height {} exceeds {} mel bins",
                    s.height, self.bins
                )));
            }
        }
        for s in &self.temporal {
            if s.length == 0 || s.count == 0 {
                return Err(ModelError::Spec("temporal shape with a zero field".into()));
            }
        }
        Ok(())
    }

    pub fn timbral_channels(&self) -> usize {
        self.timbral.iter().map(|s| s.count).sum()
    }

    pub fn temporal_channels(&self) -> usize {
        self.temporal.iter().map(|s| s.count).sum()
    }

    /// Merged channel count entering the back-end.
    pub fn out_channels(&self) -> usize {
        self.timbral_channels() + self.temporal_channels()
    }

    pub fn layer_table(&self, frames: Option<usize>) -> Vec<LayerInfo> {
        let t = |n: usize| match frames {
            Some(f) => format!("[{}, {}]", f, n),
            None => format!("[T, {}]", n),
        };
        let mut rows = Vec::new();
        for (i, s) in self.timbral.iter().enumerate() {
            let conv = (s.height * s.width * s.count + s.count) as u64;
            let bn = if self.batch_norm { 2 * s.count as u64 } else { 0 };
            rows.push(LayerInfo {
                name: format!("frontend.timbral{}", i + 1),
                detail: format!(
                    "conv2d {}x{} x{}, vertical positions {}, vmax",
                    s.height,
                    s.width,
                    s.count,
                    self.bins - s.height + 1
                ),
                output: t(s.count),
                params: conv + bn,
            });
        }
        for (i, s) in self.temporal.iter().enumerate() {
            let conv = (s.length * s.count + s.count) as u64;
            let bn = if self.batch_norm { 2 * s.count as u64 } else { 0 };
            rows.push(LayerInfo {
                name: format!("frontend.temporal{}", i + 1),
                detail: format!("conv1d {} x{} over freq-mean envelope", s.length, s.count),
                output: t(s.count),
                params: conv + bn,
            });
        }
        rows.push(LayerInfo {
            name: "frontend.merge".into(),
            detail: format!(
                "concat: timbral {} + temporal {}",
                self.timbral_channels(),
                self.temporal_channels()
            ),
            output: t(self.out_channels()),
            params: 0,
        });
        rows
    }
}

struct BranchLayer<T: Scalar> {
    weight: Parameter<T>,
    bias: Parameter<T>,
    bn: Option<(Parameter<T>, Parameter<T>, RunningStats<T>)>,
}

pub struct SpectrogramFrontend<T: Scalar> {
    spec: SpectrogramFrontendSpec,
    timbral: Vec<BranchLayer<T>>,
    temporal: Vec<BranchLayer<T>>,
}

impl<T: Scalar> SpectrogramFrontend<T> {
    pub fn build(spec: SpectrogramFrontendSpec, rng: &mut SeedRng) -> Result<Self> {
        spec.validate()?;
        let mut timbral = Vec::with_capacity(spec.timbral.len());
        for (i, s) in spec.timbral.iter().enumerate() {
            let fan_in = s.height * s.width;
            let weight = Parameter::new(
                format!("frontend.timbral{}.weight", i + 1),
                init_uniform(rng, fan_in * s.count, fan_in),
                &[s.height, s.width, 1, s.count],
            )?;
            let bias = Parameter::new(
                format!("frontend.timbral{}.bias", i + 1),
                vec![T::zero(); s.count],
                &[s.count],
            )?;
            let bn = bn_params(&spec, rng, "timbral", i, s.count)?;
            timbral.push(BranchLayer { weight, bias, bn });
        }
        let mut temporal = Vec::with_capacity(spec.temporal.len());
        for (i, s) in spec.temporal.iter().enumerate() {
            let weight = Parameter::new(
                format!("frontend.temporal{}.weight", i + 1),
                init_uniform(rng, s.length * s.count, s.length),
                &[s.length, 1, s.count],
            )?;
            let bias = Parameter::new(
                format!("frontend.temporal{}.bias", i + 1),
                vec![T::zero(); s.count],
                &[s.count],
            )?;
            let bn = bn_params(&spec, rng, "temporal", i, s.count)?;
            temporal.push(BranchLayer { weight, bias, bn });
        }
        Ok(SpectrogramFrontend { spec, timbral, temporal })
    }

    pub fn spec(&self) -> &SpectrogramFrontendSpec {
        &self.spec
    }

    /// `[B, bins, frames]` (or `[bins, frames]`) to `[B, frames, channels]`.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<FeatureMap<T>> {
        let x = self.check_input(input)?;
        let (b, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let image = reshape(&x, &[b, h, w, 1])?;
        let envelope = reshape(&mean_axis(&x, 1)?, &[b, w, 1])?;

        let mut outputs: Vec<Tensor<T>> = Vec::new();
        for layer in self.timbral.iter_mut() {
            let c = conv2d(
                &image,
                &layer.weight.active(mode),
                &layer.bias.active(mode),
                Padding::Valid,
                Padding::Same,
            )?;
            let c = apply_bn(c, &mut layer.bn, mode)?;
            // collapse the remaining vertical positions: pitch invariance
            outputs.push(max_axis(&relu(&c)?, 1)?);
        }
        for layer in self.temporal.iter_mut() {
            let c = conv1d(
                &envelope,
                &layer.weight.active(mode),
                &layer.bias.active(mode),
                Padding::Same,
            )?;
            let c = apply_bn(c, &mut layer.bn, mode)?;
            outputs.push(relu(&c)?);
        }
        let refs: Vec<&Tensor<T>> = outputs.iter().collect();
        FeatureMap::new(concat_last(&refs)?)
    }

    pub fn forward_frozen(&self, input: &Tensor<T>) -> Result<FeatureMap<T>> {
        let x = self.check_input(input)?;
        let (b, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let image = reshape(&x, &[b, h, w, 1])?;
        let envelope = reshape(&mean_axis(&x, 1)?, &[b, w, 1])?;

        let mut outputs: Vec<Tensor<T>> = Vec::new();
        for layer in self.timbral.iter() {
            let c = conv2d(
                &image,
                &layer.weight.active(Mode::Infer),
                &layer.bias.active(Mode::Infer),
                Padding::Valid,
                Padding::Same,
            )?;
            let c = apply_bn_frozen(c, &layer.bn)?;
            outputs.push(max_axis(&relu(&c)?, 1)?);
        }
        for layer in self.temporal.iter() {
            let c = conv1d(
                &envelope,
                &layer.weight.active(Mode::Infer),
                &layer.bias.active(Mode::Infer),
                Padding::Same,
            )?;
            let c = apply_bn_frozen(c, &layer.bn)?;
            outputs.push(relu(&c)?);
        }
        let refs: Vec<&Tensor<T>> = outputs.iter().collect();
        FeatureMap::new(concat_last(&refs)?)
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let x = match *input.shape() {
            [h, w] => reshape(input, &[1, h, w])?,
            [_, _, _] => input.clone(),
            ref s => {
                return Err(ModelError::Spec(format!(
                    "spectrogram input must be [bins, frames] or [B, bins, frames], got {:?}",
                    s
                )))
            }
        };
        if x.shape()[1] != self.spec.bins {
            return Err(ModelError::Spec(format!(
                "input has {} bins, front-end expects {}",
                x.shape()[1],
                self.spec.bins
            )));
        }
        Ok(x)
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        for l in self.timbral.iter().chain(&self.temporal) {
            out.push(&l.weight);
            out.push(&l.bias);
            if let Some((g, b, _)) = &l.bn {
                out.push(g);
                out.push(b);
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = Vec::new();
        for l in self.timbral.iter_mut().chain(self.temporal.iter_mut()) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some((g, b, _)) = &mut l.bn {
                out.push(g);
                out.push(b);
            }
        }
        out
    }

    pub fn buffers(&self) -> Vec<(String, Vec<T>)> {
        let mut out = Vec::new();
        for (prefix, layers) in [("timbral", &self.timbral), ("temporal", &self.temporal)] {
            for (i, l) in layers.iter().enumerate() {
                if let Some((_, _, rs)) = &l.bn {
                    out.push((format!("frontend.{}{}.running_mean", prefix, i + 1), rs.mean.clone()));
                    out.push((format!("frontend.{}{}.running_var", prefix, i + 1), rs.var.clone()));
                }
            }
        }
        out
    }

    pub fn restore_buffer(&mut self, name: &str, values: &[T]) -> Result<bool> {
        for (prefix, layers) in
            [("timbral", &mut self.timbral), ("temporal", &mut self.temporal)]
        {
            for (i, l) in layers.iter_mut().enumerate() {
                if let Some((_, _, rs)) = &mut l.bn {
                    let slot = if name == format!("frontend.{}{}.running_mean", prefix, i + 1) {
                        &mut rs.mean
                    } else if name == format!("frontend.{}{}.running_var", prefix, i + 1) {
                        &mut rs.var
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
            }
        }
        Ok(false)
    }
}

fn bn_params<T: Scalar>(
    spec: &SpectrogramFrontendSpec,
    _rng: &mut SeedRng,
    branch: &str,
    idx: usize,
    channels: usize,
) -> Result<Option<(Parameter<T>, Parameter<T>, RunningStats<T>)>> {
    if !spec.batch_norm {
        return Ok(None);
    }
    let gamma = Parameter::new(
        format!("frontend.{}{}.gamma", branch, idx + 1),
        vec![T::one(); channels],
        &[channels],
    )?;
    let beta = Parameter::new(
        format!("frontend.{}{}.beta", branch, idx + 1),
        vec![T::zero(); channels],
        &[channels],
    )?;
    Ok(Some((gamma, beta, RunningStats::new(channels))))
}

fn apply_bn<T: Scalar>(
    x: Tensor<T>,
    bn: &mut Option<(Parameter<T>, Parameter<T>, RunningStats<T>)>,
    mode: Mode,
) -> Result<Tensor<T>> {
    match bn {
        None => Ok(x),
        Some((gamma, beta, rs)) => Ok(batch_norm(
            &x,
            &gamma.active(mode),
            &beta.active(mode),
            rs,
            mode,
            super::waveform::BN_EPS,
            super::waveform::BN_MOMENTUM,
        )?),
    }
}

fn apply_bn_frozen<T: Scalar>(
    x: Tensor<T>,
    bn: &Option<(Parameter<T>, Parameter<T>, RunningStats<T>)>,
) -> Result<Tensor<T>> {
    match bn {
        None => Ok(x),
        Some((gamma, beta, rs)) => {
            let mut running = rs.clone();
            Ok(batch_norm(
                &x,
                &gamma.active(Mode::Infer),
                &beta.active(Mode::Infer),
                &mut running,
                Mode::Infer,
                super::waveform::BN_EPS,
                super::waveform::BN_MOMENTUM,
            )?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_has_published_channel_counts() {
        let spec = SpectrogramFrontendSpec::default();
        assert_eq!(spec.timbral_channels(), 224);
        assert_eq!(spec.temporal_channels(), 240);
        assert_eq!(spec.out_channels(), 464);
    }

    #[test]
    fn half_width_merges_to_232() {
        let spec = SpectrogramFrontendSpec::default().with_width(WidthMult::parse("1/2").unwrap());
        assert_eq!(spec.out_channels(), 232);
    }

    #[test]
    fn merged_channels_equal_sum_for_every_multiplier() {
        for m in ["1/4", "1/2", "1", "2", "4"] {
            let spec = SpectrogramFrontendSpec::default().with_width(WidthMult::parse(m).unwrap());
            let sum: usize = spec.timbral.iter().map(|s| s.count).sum::<usize>()
                + spec.temporal.iter().map(|s| s.count).sum::<usize>();
            assert_eq!(spec.out_channels(), sum);
        }
    }

    #[test]
    fn rejects_filter_taller_than_bins() {
        let mut spec = SpectrogramFrontendSpec::default();
        spec.timbral[0].height = 97;
        assert!(spec.validate().is_err());
    }

    fn tiny_spec() -> SpectrogramFrontendSpec {
        SpectrogramFrontendSpec {
            bins: 12,
            timbral: vec![
                TimbralShape { height: 8, width: 3, count: 2 },
                TimbralShape { height: 5, width: 1, count: 3 },
            ],
            temporal: vec![TemporalShape { length: 4, count: 2 }],
            batch_norm: false,
        }
    }

    #[test]
    fn forward_preserves_frames_and_merges_channels() {
        let mut rng = SeedRng::new(11);
        let mut fe = SpectrogramFrontend::<f64>::build(tiny_spec(), &mut rng).unwrap();
        let input = Tensor::from_vec(
            (0..12 * 20).map(|i| ((i * 37 % 101) as f64) / 101.0 - 0.5).collect(),
            &[1, 12, 20],
        )
        .unwrap();
        let fm = fe.forward(&input, Mode::Train).unwrap();
        assert_eq!((fm.frames(), fm.channels()), (20, 7));
        let frozen = fe.forward_frozen(&input).unwrap();
        assert_eq!((frozen.frames(), frozen.channels()), (20, 7));
        // train mode without BN is the same function as frozen
        for (a, b) in fm.tensor().values().iter().zip(frozen.tensor().values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn constant_spectrogram_has_constant_envelope() {
        let mut rng = SeedRng::new(11);
        let spec = SpectrogramFrontendSpec {
            bins: 12,
            timbral: vec![],
            temporal: vec![TemporalShape { length: 4, count: 1 }],
            batch_norm: false,
        };
        let mut fe = SpectrogramFrontend::<f64>::build(spec, &mut rng).unwrap();
        let input = Tensor::from_vec(vec![0.7; 12 * 16], &[1, 12, 16]).unwrap();
        let fm = fe.forward(&input, Mode::Train).unwrap();
        // constant envelope + same padding -> interior outputs all equal
        let vals = fm.tensor().values();
        for w in vals[2..14].windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_branch_is_invariant_to_bin_permutation() {
        // Mean over bins comes first; with integer-valued inputs the mean is
        // exact, so any bin permutation gives bit-identical output.
        let mut rng = SeedRng::new(3);
        let spec = SpectrogramFrontendSpec {
            bins: 6,
            timbral: vec![],
            temporal: vec![TemporalShape { length: 3, count: 2 }],
            batch_norm: false,
        };
        let mut fe = SpectrogramFrontend::<f64>::build(spec, &mut rng).unwrap();
        let base: Vec<f64> = (0..6 * 10).map(|i| ((i * 31 + 7) % 23) as f64).collect();
        let input = Tensor::from_vec(base.clone(), &[1, 6, 10]).unwrap();
        let out = fe.forward(&input, Mode::Train).unwrap();

        // rotate the bins
        let mut permuted = vec![0.0; base.len()];
        for b in 0..6 {
            let src = (b + 2) % 6;
            permuted[b * 10..(b + 1) * 10].copy_from_slice(&base[src * 10..(src + 1) * 10]);
        }
        let input_p = Tensor::from_vec(permuted, &[1, 6, 10]).unwrap();
        let out_p = fe.forward(&input_p, Mode::Train).unwrap();
        assert_eq!(out.tensor().values(), out_p.tensor().values());
    }

    #[test]
    fn vertical_max_gives_shift_invariance_for_contained_patterns() {
        // Single height-8, width-1 filter over 12 bins: 5 vertical positions.
        // The blob is the filter's own column, constant across frames, so the
        // aligned response Sum(w^2) strictly dominates every truncated
        // self-correlation (Cauchy-Schwarz) and the vertical max is exactly
        // shift-invariant for any shift the slide can reach (<= 12 - 8).
        let mut rng = SeedRng::new(21);
        let spec = SpectrogramFrontendSpec {
            bins: 12,
            timbral: vec![TimbralShape { height: 8, width: 1, count: 1 }],
            temporal: vec![],
            batch_norm: false,
        };
        let mut fe = SpectrogramFrontend::<f64>::build(spec, &mut rng).unwrap();
        let w = fe.timbral[0].weight.values().to_vec(); // [8, 1, 1, 1]
        let frames = 9usize;
        let mut outputs = Vec::new();
        for shift in 0..=4usize {
            let mut img = vec![0.0; 12 * frames];
            for (r, &wv) in w.iter().enumerate() {
                for f in 0..frames {
                    img[(r + shift) * frames + f] = wv;
                }
            }
            let input = Tensor::from_vec(img, &[1, 12, frames]).unwrap();
            let out = fe.forward(&input, Mode::Train).unwrap();
            outputs.push(out.tensor().values().to_vec());
        }
        let full_alignment: f64 = w.iter().map(|v| v * v).sum();
        assert!((outputs[0][0] - full_alignment).abs() < 1e-12);
        for o in &outputs[1..] {
            assert_eq!(o, &outputs[0]);
        }
    }
}
