//! Training loop and song-level prediction.
//!
//! Training draws one random patch per clip per epoch, batches them, and
//! steps Adam after every batch. Prediction slices a song into fixed windows
//! at a fixed hop and averages the per-patch sigmoid outputs. Everything is
//! driven by one seeded rng, so (seed, config, manifest) fixes every
//! checkpoint byte and every metric digit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::checkpoint::{write_atomic, CheckpointError, Container};
use crate::config::{FrontendKind, LossKind, RunConfig};
use crate::data::{DataError, DatasetManifest, Split};
use crate::dsp::cache::{feature_path, stats_path, FeatureFile, FeatureKind};
use crate::dsp::{patch_starts, DspError, NormalizationStats, LOG_EPS};
use crate::metrics::{evaluate, EvalOptions, EvalReport, MetricsError, TagKind};
use crate::model::{ModelError, TagModel};
use crate::rng::SeedRng;
use crate::scalar::Scalar;
use crate::tensor::{
    adam_step, loss_bce_weighted, loss_mse, AdamConfig, AdamState, Tensor, TensorError,
};

#[derive(Error, Debug)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("training aborted at epoch {epoch}, step {step}: {detail}")]
    Aborted { epoch: u64, step: u64, detail: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// In-memory feature cache for one run. Loads every clip's `.feat` file
/// once and keeps the normalization stats alongside.
pub struct FeatureStore<T: Scalar> {
    dir: PathBuf,
    kind: FeatureKind,
    clips: HashMap<String, FeatureFile<T>>,
    pub stats: Option<NormalizationStats<T>>,
}

impl<T: Scalar> FeatureStore<T> {
    /// Load features for every clip in the manifest. For log-mel stores the
    /// stats file must exist and match the DSP fingerprint.
    pub fn load(
        dir: &Path,
        manifest: &DatasetManifest,
        config: &RunConfig,
    ) -> Result<Self> {
        let kind = match config.frontend {
            FrontendKind::Waveform => FeatureKind::Waveform,
            FrontendKind::Spectrogram => FeatureKind::LogMel,
        };
        let expected_version = config.dsp.fingerprint();
        let stats = match kind {
            FeatureKind::Waveform => None,
            FeatureKind::LogMel => {
                let text = std::fs::read_to_string(stats_path(dir)).map_err(|e| TrainError::Io {
                    path: stats_path(dir).display().to_string(),
                    source: e,
                })?;
                let stats = NormalizationStats::from_text(&text)?;
                if stats.version != expected_version {
                    return Err(DspError::StatsVersionMismatch {
                        found: stats.version,
                        expected: expected_version,
                    }
                    .into());
                }
                Some(stats)
            }
        };
        let mut clips = HashMap::new();
        for clip in &manifest.clips {
            let path = feature_path(dir, &clip.clip_id);
            let file = FeatureFile::load(&path)?;
            if file.kind != kind {
                return Err(TrainError::Invalid(format!(
                    "feature cache for '{}' holds {:?}, run wants {:?}; re-run extract",
                    clip.clip_id, file.kind, kind
                )));
            }
            if kind == FeatureKind::LogMel && file.stats_version != expected_version {
                return Err(DspError::StatsVersionMismatch {
                    found: file.stats_version,
                    expected: expected_version,
                }
                .into());
            }
            clips.insert(clip.clip_id.clone(), file);
        }
        Ok(FeatureStore { dir: dir.to_path_buf(), kind, clips, stats })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn clip(&self, clip_id: &str) -> Result<&FeatureFile<T>> {
        self.clips.get(clip_id).ok_or_else(|| {
            TrainError::Invalid(format!("no cached features for clip '{}'", clip_id))
        })
    }

    /// Length of a clip in patching units (samples or frames).
    pub fn native_len(&self, clip_id: &str) -> Result<usize> {
        Ok(self.clip(clip_id)?.frames)
    }

    /// A fixed-length window starting at `start` (native units), padded with
    /// silence when it overruns, normalized for log-mel stores. Returns the
    /// flat values of shape `[patch]` (waveform) or `[bins, patch]` (log-mel).
    pub fn window(&self, clip_id: &str, start: usize, patch: usize) -> Result<Vec<T>> {
        let file = self.clip(clip_id)?;
        match self.kind {
            FeatureKind::Waveform => {
                let mut out = vec![T::zero(); patch];
                let len = file.frames;
                let take = patch.min(len.saturating_sub(start));
                out[..take].copy_from_slice(&file.values[start..start + take]);
                Ok(out)
            }
            FeatureKind::LogMel => {
                let stats = self.stats.as_ref().expect("log-mel store has stats");
                let (bins, frames) = (file.bins, file.frames);
                let silence = T::from_f64(LOG_EPS.ln());
                let mut out = vec![T::zero(); bins * patch];
                for b in 0..bins {
                    let (mu, sd) = (stats.mean[b], stats.std[b]);
                    let row = &file.values[b * frames..][..frames];
                    for j in 0..patch {
                        let v = if start + j < frames { row[start + j] } else { silence };
                        out[b * patch + j] = (v - mu) / sd;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Uniformly random window start for one training patch.
pub fn sample_patch_start(native_len: usize, patch: usize, rng: &mut SeedRng) -> usize {
    if native_len <= patch {
        0
    } else {
        rng.below(native_len - patch + 1)
    }
}

/// Optimizer/bookkeeping state around a model. Checkpoints round-trip
/// bit-exactly, including the rng position and the best-validation snapshot.
pub struct TrainState<T: Scalar> {
    pub model: TagModel<T>,
    pub adam: AdamState<T>,
    pub epoch: u64,
    pub step: u64,
    pub rng: SeedRng,
    pub best: Option<BestSnapshot<T>>,
}

#[derive(Debug, Clone)]
pub struct BestSnapshot<T: Scalar> {
    pub metric: f64,
    pub epoch: u64,
    pub model: Container<T>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: TagModel<T>, lr: f64, seed: u64) -> Self {
        let adam = AdamState::new(&model.parameters(), AdamConfig { lr, ..Default::default() });
        TrainState { model, adam, epoch: 0, step: 0, rng: SeedRng::new(seed ^ 0x7261696e), best: None }
    }

    pub fn to_container(&self) -> Container<T> {
        let mut c = self.model.to_container();
        for (i, p) in self.model.parameters().iter().enumerate() {
            let (m, v) = self.adam.moments(i);
            c.push_tensor(format!("adam.m/{}", p.name), p.shape(), m.to_vec());
            c.push_tensor(format!("adam.v/{}", p.name), p.shape(), v.to_vec());
        }
        c.push_meta("adam.step", self.adam.step.to_string());
        c.push_meta("epoch", self.epoch.to_string());
        c.push_meta("step", self.step.to_string());
        let s = self.rng.state();
        c.push_meta("rng", format!("{}:{}:{}:{}", s[0], s[1], s[2], s[3]));
        if let Some(best) = &self.best {
            c.push_meta("best.metric", format!("{}", best.metric));
            c.push_meta("best.epoch", best.epoch.to_string());
            for t in &best.model.tensors {
                c.push_tensor(format!("best/{}", t.name), &t.shape, t.values.clone());
            }
        }
        c
    }

    /// Rebuild from a checkpoint; the model passed in must have been built
    /// from the same specs (names and shapes are checked).
    pub fn restore(mut model: TagModel<T>, lr: f64, container: &Container<T>) -> Result<Self> {
        model.restore(container)?;
        let mut adam =
            AdamState::new(&model.parameters(), AdamConfig { lr, ..Default::default() });
        let names: Vec<String> = model.parameters().iter().map(|p| p.name.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            let m = container
                .tensor(&format!("adam.m/{}", name))
                .ok_or_else(|| TrainError::Invalid(format!("checkpoint missing adam.m/{}", name)))?;
            let v = container
                .tensor(&format!("adam.v/{}", name))
                .ok_or_else(|| TrainError::Invalid(format!("checkpoint missing adam.v/{}", name)))?;
            adam.restore_moments(i, m.values.clone(), v.values.clone())?;
        }
        let meta_u64 = |key: &str| -> Result<u64> {
            container
                .meta_value(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| TrainError::Invalid(format!("checkpoint missing meta '{}'", key)))
        };
        adam.step = meta_u64("adam.step")?;
        let epoch = meta_u64("epoch")?;
        let step = meta_u64("step")?;
        let rng_state = container
            .meta_value("rng")
            .ok_or_else(|| TrainError::Invalid("checkpoint missing rng state".into()))?;
        let words: Vec<u64> = rng_state.split(':').filter_map(|w| w.parse().ok()).collect();
        if words.len() != 4 {
            return Err(TrainError::Invalid("malformed rng state".into()));
        }
        let rng = SeedRng::from_state([words[0], words[1], words[2], words[3]]);
        let best = match container.meta_value("best.metric") {
            None => None,
            Some(metric) => {
                let metric: f64 = metric
                    .parse()
                    .map_err(|_| TrainError::Invalid("malformed best.metric".into()))?;
                let epoch = meta_u64("best.epoch")?;
                let mut best_model = Container::new();
                for t in &container.tensors {
                    if let Some(name) = t.name.strip_prefix("best/") {
                        best_model.push_tensor(name.to_string(), &t.shape, t.values.clone());
                    }
                }
                Some(BestSnapshot { metric, epoch, model: best_model })
            }
        };
        Ok(TrainState { model, adam, epoch, step, rng, best })
    }
}

fn batch_tensor<T: Scalar>(
    rows: &[Vec<T>],
    kind: FeatureKind,
    bins: usize,
    patch: usize,
) -> Result<Tensor<T>> {
    let b = rows.len();
    let mut flat = Vec::with_capacity(b * rows[0].len());
    for r in rows {
        flat.extend_from_slice(r);
    }
    let shape = match kind {
        FeatureKind::Waveform => vec![b, patch],
        FeatureKind::LogMel => vec![b, bins, patch],
    };
    Ok(Tensor::from_vec(flat, &shape)?)
}

/// One pass over the shuffled training clips: per batch, forward in train
/// mode, loss, backward, Adam. Returns the mean per-step loss. A non-finite
/// value anywhere aborts with epoch/step diagnostics.
pub fn train_epoch<T: Scalar>(
    state: &mut TrainState<T>,
    manifest: &DatasetManifest,
    store: &FeatureStore<T>,
    config: &RunConfig,
    mut on_step: impl FnMut(u64, u64, f64),
) -> Result<f64> {
    let train_clips = manifest.split_clips(Split::Train);
    if train_clips.is_empty() {
        return Err(TrainError::Invalid("train split is empty".into()));
    }
    let patch = config.patch_len();
    let n_tags = manifest.n_tags();
    let mut order: Vec<usize> = (0..train_clips.len()).collect();
    state.rng.shuffle(&mut order);

    let bins = config.dsp.n_mels;
    let mut losses = Vec::new();
    for chunk in order.chunks(config.batch_size) {
        let mut rows = Vec::with_capacity(chunk.len());
        let mut targets = Vec::with_capacity(chunk.len() * n_tags);
        for &ci in chunk {
            let clip = train_clips[ci];
            let len = store.native_len(&clip.clip_id)?;
            let start = sample_patch_start(len, patch, &mut state.rng);
            rows.push(store.window(&clip.clip_id, start, patch)?);
            targets.extend(clip.targets.iter().map(|&v| T::from_f64(v)));
        }
        let input = batch_tensor(&rows, store.kind(), bins, patch)?;
        let target = Tensor::from_vec(targets, &[chunk.len(), n_tags])?;

        let epoch = state.epoch;
        let step = state.step;
        let mut run = || -> Result<f64> {
            let pred = state.model.forward_train(&input, &mut state.rng)?;
            let loss = match config.loss {
                LossKind::Mse => loss_mse(&pred, &target)?,
                LossKind::Bce => loss_bce_weighted(&pred, &target, config.pos_weight.unwrap_or(1.0))?,
            };
            let value = loss.item().as_f64();
            loss.backward()?;
            let mut params = state.model.parameters_mut();
            adam_step(&mut params, &mut state.adam)?;
            Ok(value)
        };
        let value = run().map_err(|e| TrainError::Aborted {
            epoch,
            step,
            detail: e.to_string(),
        })?;
        state.model.zero_grads();
        state.step += 1;
        losses.push(value);
        on_step(state.step, state.epoch, value);
    }
    state.epoch += 1;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Per-patch sigmoid outputs plus their arithmetic mean.
#[derive(Debug, Clone)]
pub struct PredictOutcome<T: Scalar> {
    pub per_patch: Vec<Vec<T>>,
    pub mean: Vec<T>,
}

/// Moving-window prediction: fixed windows at a fixed hop (a short clip
/// becomes one padded window; `whole_song` collapses to one full-length
/// window), each forwarded in frozen mode, outputs averaged.
pub fn predict_song<T: Scalar>(
    model: &TagModel<T>,
    store: &FeatureStore<T>,
    clip_id: &str,
    config: &RunConfig,
) -> Result<PredictOutcome<T>> {
    let len = store.native_len(clip_id)?;
    let (patch, hop) = if config.whole_song {
        (len, len)
    } else {
        (config.patch_len(), config.hop_len())
    };
    let bins = config.dsp.n_mels;
    let mut per_patch = Vec::new();
    for start in patch_starts(len, patch, hop) {
        let row = store.window(clip_id, start, patch)?;
        let input = batch_tensor(&[row], store.kind(), bins, patch)?;
        let out = model.forward_frozen(&input)?;
        per_patch.push(out.values().to_vec());
    }
    let n_out = per_patch[0].len();
    let inv = T::from_f64(1.0 / per_patch.len() as f64);
    let mut mean = vec![T::zero(); n_out];
    for row in &per_patch {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m = *m * inv;
    }
    Ok(PredictOutcome { per_patch, mean })
}

/// Predict every clip of a split, in manifest order. Returns clip ids and the
/// row-major prediction matrix.
pub fn predict_split<T: Scalar>(
    model: &TagModel<T>,
    manifest: &DatasetManifest,
    split: Split,
    store: &FeatureStore<T>,
    config: &RunConfig,
) -> Result<(Vec<String>, Vec<f64>)> {
    let clips = manifest.split_clips(split);
    if clips.is_empty() {
        return Err(TrainError::Invalid(format!("{} split is empty", split)));
    }
    let mut ids = Vec::with_capacity(clips.len());
    let mut rows = Vec::with_capacity(clips.len() * manifest.n_tags());
    for clip in clips {
        let outcome = predict_song(model, store, &clip.clip_id, config)?;
        ids.push(clip.clip_id.clone());
        rows.extend(outcome.mean.iter().map(|v| v.as_f64()));
    }
    Ok((ids, rows))
}

/// Predict a split and score it.
pub fn run_validation<T: Scalar>(
    model: &TagModel<T>,
    manifest: &DatasetManifest,
    split: Split,
    store: &FeatureStore<T>,
    config: &RunConfig,
) -> Result<EvalReport> {
    let (_ids, preds) = predict_split(model, manifest, split, store, config)?;
    let (_, targets) = manifest.targets_for_split(split);
    Ok(evaluate(
        &preds,
        &targets,
        &manifest.tag_names(),
        &manifest.tag_kinds(),
        EvalOptions::default(),
    )?)
}

/// Early-stopping metric: validation macro ROC-AUC when any classification
/// tag is scored, otherwise negative macro RMSE.
pub fn stop_metric(report: &EvalReport) -> f64 {
    match report.macro_roc_auc {
        Some(auc) => auc,
        None => report.macro_rmse.map(|r| -r).unwrap_or(f64::NEG_INFINITY),
    }
}

pub struct FitSummary {
    pub epochs_run: u64,
    pub best_metric: f64,
    pub best_epoch: u64,
    pub stopped_early: bool,
}

/// Full training driver: epochs with periodic validation, early stopping on
/// the validation metric after `patience` non-improving validations, best and
/// last checkpoints plus an append-only text log under `out_dir`.
pub fn fit<T: Scalar>(
    state: &mut TrainState<T>,
    manifest: &DatasetManifest,
    store: &FeatureStore<T>,
    config: &RunConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&str),
) -> Result<FitSummary> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| TrainError::Io { path: out_dir.display().to_string(), source: e })?;
    use std::io::Write as _;
    let log_path = out_dir.join("train.log");
    let io_err =
        |e: std::io::Error| TrainError::Io { path: log_path.display().to_string(), source: e };
    // append-only log, flushed per epoch so progress is visible while running
    let mut log = std::io::BufWriter::new(
        std::fs::File::create(&log_path).map_err(io_err)?,
    );
    let mut bad_validations = 0u64;
    let mut stopped_early = false;

    while state.epoch < config.max_epochs {
        let mut step_lines = String::new();
        let mean_loss = train_epoch(state, manifest, store, config, |step, epoch, loss| {
            let _ = writeln!(step_lines, "step\t{}\tepoch\t{}\tloss\t{}", step, epoch, loss);
        })?;
        log.write_all(step_lines.as_bytes()).map_err(io_err)?;

        if state.epoch % config.validate_every == 0 || state.epoch == config.max_epochs {
            let report = run_validation(&state.model, manifest, Split::Valid, store, config)?;
            let metric = stop_metric(&report);
            let improved = state.best.as_ref().map_or(true, |b| metric > b.metric);
            if improved {
                state.best = Some(BestSnapshot {
                    metric,
                    epoch: state.epoch,
                    model: state.model.to_container(),
                });
                bad_validations = 0;
            } else {
                bad_validations += 1;
            }
            writeln!(
                log,
                "epoch\t{}\tmean_loss\t{}\tvalid_macro_roc_auc\t{}\tvalid_macro_pr_auc\t{}\tvalid_macro_rmse\t{}\tbest\t{}",
                state.epoch,
                mean_loss,
                report.macro_roc_auc.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                report.macro_pr_auc.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                report.macro_rmse.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                improved
            )
            .map_err(io_err)?;
            progress(&format!(
                "epoch {} loss {:.6} metric {:.4}{}",
                state.epoch,
                mean_loss,
                metric,
                if improved { " *" } else { "" }
            ));
            if bad_validations > config.patience {
                stopped_early = true;
                writeln!(log, "early_stop\tepoch\t{}", state.epoch).map_err(io_err)?;
                break;
            }
        } else {
            writeln!(log, "epoch\t{}\tmean_loss\t{}", state.epoch, mean_loss).map_err(io_err)?;
            progress(&format!("epoch {} loss {:.6}", state.epoch, mean_loss));
        }
        log.flush().map_err(io_err)?;
    }

    log.flush().map_err(io_err)?;
    state.to_container().save(&out_dir.join("checkpoint_last.ckpt"))?;
    let best = state
        .best
        .as_ref()
        .ok_or_else(|| TrainError::Invalid("no validation ran; nothing to checkpoint".into()))?;
    best.model.save(&out_dir.join("checkpoint_best.ckpt"))?;
    Ok(FitSummary {
        epochs_run: state.epoch,
        best_metric: best.metric,
        best_epoch: best.epoch,
        stopped_early,
    })
}

/// Rebuild a model from config + tag count, using the manifest to settle the
/// output size when the config leaves it open.
pub fn build_model<T: Scalar>(config: &RunConfig, n_outputs: usize) -> Result<TagModel<T>> {
    let fe = config.frontend_spec();
    let be = config.backend_spec(n_outputs);
    let patch = config.patch_len();
    Ok(TagModel::build(&fe, &be, config.seed, Some(patch))?)
}

/// Output size for model-only commands: explicit config value or manifest.
pub fn resolve_outputs(config: &RunConfig, manifest: Option<&DatasetManifest>) -> usize {
    config
        .n_outputs
        .or_else(|| manifest.map(|m| m.n_tags()))
        .unwrap_or(50)
}

/// The tag kinds a trained checkpoint was fitted against must line up with
/// the manifest at prediction time.
pub fn check_outputs(model: &TagModel<impl Scalar>, manifest: &DatasetManifest) -> Result<()> {
    if model.n_outputs() != manifest.n_tags() {
        return Err(TrainError::Invalid(format!(
            "model has {} outputs but manifest has {} tags",
            model.n_outputs(),
            manifest.n_tags()
        )));
    }
    Ok(())
}

/// Write a prediction table: a version header, a column header, then one row
/// per clip (`clip_id` + one probability per tag), full float precision.
pub fn write_predictions(
    path: &Path,
    ids: &[String],
    preds: &[f64],
    tag_names: &[String],
) -> Result<()> {
    let n_tags = tag_names.len();
    let mut out = String::from("# mtag-predictions v1\nclip_id");
    for name in tag_names {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for t in 0..n_tags {
            let _ = write!(out, "\t{}", preds[i * n_tags + t]);
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })
}

/// Read a prediction table back, returning clip ids and the row-major matrix.
pub fn read_predictions(path: &Path, n_tags: usize) -> Result<(Vec<String>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == "# mtag-predictions v1" => {}
        _ => return Err(TrainError::Invalid(format!("{}: not a prediction table", path.display()))),
    }
    let _header = lines.next();
    let mut ids = Vec::new();
    let mut preds = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != n_tags + 1 {
            return Err(TrainError::Invalid(format!(
                "{}:{}: expected {} columns, got {}",
                path.display(),
                i + 3,
                n_tags + 1,
                cols.len()
            )));
        }
        ids.push(cols[0].to_string());
        for c in &cols[1..] {
            let v: f64 = c.parse().map_err(|_| {
                TrainError::Invalid(format!("{}:{}: bad value '{}'", path.display(), i + 3, c))
            })?;
            preds.push(v);
        }
    }
    Ok((ids, preds))
}

/// Align a prediction table with a manifest split: same clip ids, manifest
/// order. Returns the targets matrix for evaluation.
pub fn align_targets(
    manifest: &DatasetManifest,
    split: Split,
    ids: &[String],
) -> Result<Vec<f64>> {
    let clips = manifest.split_clips(split);
    if clips.len() != ids.len() {
        return Err(MetricsError::Alignment(format!(
            "{} predictions for {} clips in the {} split",
            ids.len(),
            clips.len(),
            split
        ))
        .into());
    }
    let mut targets = Vec::with_capacity(ids.len() * manifest.n_tags());
    for (clip, id) in clips.iter().zip(ids) {
        if &clip.clip_id != id {
            return Err(MetricsError::Alignment(format!(
                "prediction row '{}' does not match manifest clip '{}'",
                id, clip.clip_id
            ))
            .into());
        }
        targets.extend(clip.targets.iter().copied());
    }
    Ok(targets)
}

/// Count classification tags to sanity-check a loss choice (bce on a purely
/// regression manifest is almost certainly a mistake).
pub fn classification_tags(manifest: &DatasetManifest) -> usize {
    manifest.tags.iter().filter(|t| t.kind == TagKind::Classification).count()
}
