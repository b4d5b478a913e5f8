//! Python bindings: the tensor core (with autodiff), the DSP pipeline, both
//! tagging models and the evaluation metrics, all at f64 precision.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mtag::config::{FrontendKind, RunConfig};
use mtag::dsp::{self, DspConfig};
use mtag::metrics;
use mtag::model::{FrontendSpec, TagModel, WidthMult};
use mtag::tensor::{self, Padding, Tensor as CoreTensor};
use mtag::train::build_model;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_padding(text: &str) -> PyResult<Padding> {
    match text {
        "valid" => Ok(Padding::Valid),
        "same" => Ok(Padding::Same),
        other => Err(value_err(format!("padding must be 'valid' or 'same', got '{}'", other))),
    }
}

/// Dense f64 tensor with reverse-mode autodiff.
#[pyclass(name = "Tensor")]
#[derive(Clone)]
struct PyTensor {
    inner: CoreTensor<f64>,
}

#[pymethods]
impl PyTensor {
    #[new]
    #[pyo3(signature = (values, shape, requires_grad = false))]
    fn new(values: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> PyResult<Self> {
        let inner = if requires_grad {
            CoreTensor::leaf_with_grad(values, &shape).map_err(value_err)?
        } else {
            CoreTensor::from_vec(values, &shape).map_err(value_err)?
        };
        Ok(PyTensor { inner })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn requires_grad(&self) -> bool {
        self.inner.requires_grad()
    }

    /// Accumulated gradient (None until backward has run).
    #[getter]
    fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad()
    }

    fn item(&self) -> PyResult<f64> {
        if self.inner.numel() != 1 {
            return Err(value_err("item() needs a one-element tensor"));
        }
        Ok(self.inner.item())
    }

    fn detach(&self) -> PyTensor {
        PyTensor { inner: self.inner.detach() }
    }

    fn zero_grad(&self) {
        self.inner.zero_grad()
    }

    fn relu(&self) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::relu(&self.inner).map_err(value_err)? })
    }

    fn sigmoid(&self) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::sigmoid(&self.inner).map_err(value_err)? })
    }

    fn sum(&self) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::sum_all(&self.inner).map_err(value_err)? })
    }

    fn mean(&self) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::mean_all(&self.inner).map_err(value_err)? })
    }

    fn add(&self, other: &PyTensor) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::add(&self.inner, &other.inner).map_err(value_err)? })
    }

    fn mul(&self, other: &PyTensor) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::mul(&self.inner, &other.inner).map_err(value_err)? })
    }

    #[pyo3(signature = (weight, bias, padding = "valid"))]
    fn conv1d(&self, weight: &PyTensor, bias: &PyTensor, padding: &str) -> PyResult<PyTensor> {
        let pad = parse_padding(padding)?;
        Ok(PyTensor {
            inner: tensor::conv1d(&self.inner, &weight.inner, &bias.inner, pad)
                .map_err(value_err)?,
        })
    }

    fn dense(&self, weight: &PyTensor, bias: &PyTensor) -> PyResult<PyTensor> {
        Ok(PyTensor {
            inner: tensor::dense(&self.inner, &weight.inner, &bias.inner).map_err(value_err)?,
        })
    }

    fn max_pool1d(&self, size: usize) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::max_pool1d(&self.inner, size).map_err(value_err)? })
    }

    fn global_pool(&self) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::global_pool(&self.inner).map_err(value_err)? })
    }

    fn mse_loss(&self, target: &PyTensor) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::loss_mse(&self.inner, &target.inner).map_err(value_err)? })
    }

    fn bce_loss(&self, target: &PyTensor) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: tensor::loss_bce(&self.inner, &target.inner).map_err(value_err)? })
    }

    /// Reverse-mode sweep from a scalar; gradients land on requires_grad leaves.
    fn backward(&self) -> PyResult<()> {
        self.inner.backward().map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?}, requires_grad={})", self.inner.shape(), self.inner.requires_grad())
    }
}

fn model_config(
    frontend: FrontendKind,
    width: &str,
    backend_filters: usize,
    dense_units: usize,
    patch_seconds: f64,
) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::default();
    cfg.frontend = frontend;
    let mult = WidthMult::parse(width).map_err(value_err)?;
    cfg.waveform_width = mult;
    cfg.spectrogram_width = mult;
    cfg.backend_filters = backend_filters;
    cfg.backend_dense_units = dense_units;
    cfg.patch_seconds = patch_seconds;
    Ok(cfg)
}

/// Sample-level model over raw 16 kHz waveforms.
#[pyclass(name = "WaveformModel")]
struct PyWaveformModel {
    model: TagModel<f64>,
    patch_len: usize,
}

#[pymethods]
impl PyWaveformModel {
    #[new]
    #[pyo3(signature = (n_outputs = 50, width = "1", backend_filters = 512, dense_units = 500, patch_seconds = 15.0, seed = 42))]
    fn new(
        n_outputs: usize,
        width: &str,
        backend_filters: usize,
        dense_units: usize,
        patch_seconds: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = model_config(
            FrontendKind::Waveform,
            width,
            backend_filters,
            dense_units,
            patch_seconds,
        )?;
        cfg.seed = seed;
        cfg.n_outputs = Some(n_outputs);
        let model = build_model::<f64>(&cfg, n_outputs).map_err(value_err)?;
        Ok(PyWaveformModel { model, patch_len: cfg.patch_len() })
    }

    /// Tag probabilities for one window of samples.
    fn predict(&self, samples: Vec<f64>) -> PyResult<Vec<f64>> {
        let n = samples.len();
        let input = CoreTensor::from_vec(samples, &[1, n]).map_err(value_err)?;
        let out = self.model.forward_frozen(&input).map_err(runtime_err)?;
        Ok(out.values().to_vec())
    }

    /// (frames, channels) of the front-end output for a window length.
    fn feature_shape(&self, n_samples: usize) -> PyResult<(usize, usize)> {
        match self.model.frontend_spec() {
            FrontendSpec::Waveform(spec) => {
                let frames = spec.output_len(n_samples).map_err(value_err)?;
                Ok((frames, spec.out_channels()))
            }
            _ => unreachable!("waveform model"),
        }
    }

    fn num_parameters(&self) -> u64 {
        self.model.count_parameters()
    }

    fn describe(&self) -> String {
        self.model.describe(Some(self.patch_len))
    }
}

/// Two-branch model over 96-bin log-mel spectrograms.
#[pyclass(name = "SpectrogramModel")]
struct PySpectrogramModel {
    model: TagModel<f64>,
    patch_len: usize,
}

#[pymethods]
impl PySpectrogramModel {
    #[new]
    #[pyo3(signature = (n_outputs = 50, width = "1", backend_filters = 512, dense_units = 500, patch_seconds = 15.0, seed = 42))]
    fn new(
        n_outputs: usize,
        width: &str,
        backend_filters: usize,
        dense_units: usize,
        patch_seconds: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = model_config(
            FrontendKind::Spectrogram,
            width,
            backend_filters,
            dense_units,
            patch_seconds,
        )?;
        cfg.seed = seed;
        cfg.n_outputs = Some(n_outputs);
        let model = build_model::<f64>(&cfg, n_outputs).map_err(value_err)?;
        Ok(PySpectrogramModel { model, patch_len: cfg.patch_len() })
    }

    /// Tag probabilities for one spectrogram given as `bins` rows of `frames`
    /// values (normalize upstream if you have training-split stats).
    fn predict(&self, spectrogram: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let bins = spectrogram.len();
        if bins == 0 {
            return Err(value_err("empty spectrogram"));
        }
        let frames = spectrogram[0].len();
        if spectrogram.iter().any(|row| row.len() != frames) {
            return Err(value_err("ragged spectrogram rows"));
        }
        let flat: Vec<f64> = spectrogram.into_iter().flatten().collect();
        let input = CoreTensor::from_vec(flat, &[1, bins, frames]).map_err(value_err)?;
        let out = self.model.forward_frozen(&input).map_err(runtime_err)?;
        Ok(out.values().to_vec())
    }

    /// Merged front-end channel count (the back-end's M').
    fn merged_channels(&self) -> usize {
        self.model.frontend_spec().out_channels()
    }

    fn num_parameters(&self) -> u64 {
        self.model.count_parameters()
    }

    fn describe(&self) -> String {
        self.model.describe(Some(self.patch_len))
    }
}

/// Log-mel spectrogram of mono audio; returns `n_mels` rows of frames.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, window = 512, hop = 256, n_mels = 96, f_min = 0.0, f_max = 8000.0))]
fn log_mel_spectrogram(
    samples: Vec<f64>,
    sample_rate: u32,
    window: usize,
    hop: usize,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = DspConfig { sample_rate, window, hop, n_mels, f_min, f_max, power: 1.0 };
    let spec = dsp::log_mel(&samples, &cfg).map_err(value_err)?;
    Ok((0..spec.bins)
        .map(|b| spec.values[b * spec.frames..][..spec.frames].to_vec())
        .collect())
}

/// Band-limited downsampling.
#[pyfunction]
fn resample(samples: Vec<f64>, src_rate: u32, dst_rate: u32) -> PyResult<Vec<f64>> {
    dsp::resample(&samples, src_rate, dst_rate).map_err(value_err)
}

/// ROC-AUC (rank method, half tie credit); None for single-class labels.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(value_err("scores and labels must have equal length"));
    }
    Ok(metrics::roc_auc(&scores, &labels))
}

/// Average precision (step-wise, ties grouped); None without positives.
#[pyfunction]
fn average_precision(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(value_err("scores and labels must have equal length"));
    }
    Ok(metrics::average_precision(&scores, &labels))
}

#[pyfunction]
fn rmse(pred: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    metrics::rmse(&pred, &target).map_err(value_err)
}

#[pymodule]
fn mtag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyWaveformModel>()?;
    m.add_class::<PySpectrogramModel>()?;
    m.add_function(wrap_pyfunction!(log_mel_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(resample, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    Ok(())
}
