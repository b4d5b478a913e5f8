//! Command-line front door: dataset synthesis, splitting, feature
//! extraction, training, prediction and evaluation, plus model inspection.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mtag::checkpoint::{write_atomic, Container};
use mtag::config::{Precision, RunConfig};
use mtag::data::{
    apply_split, generate_synthetic_dataset, split_dataset, DatasetManifest, Split,
    SplitFractions, SynthSpec,
};
use mtag::dsp::cache::{feature_path, stats_path, FeatureFile};
use mtag::dsp::wav::read_wav_mono;
use mtag::dsp::{log_mel, resample, LogMelSpectrogram, NormalizationStats};
use mtag::metrics::{evaluate, EvalOptions};
use mtag::scalar::Scalar;
use mtag::train::{
    align_targets, build_model, fit, predict_split, read_predictions, resolve_outputs,
    write_predictions, FeatureStore, TrainState,
};

#[derive(Parser)]
#[command(
    name = "mtag",
    version,
    about = "Music auto-tagging: waveform and spectrogram CNNs with a shared back-end"
)]
struct Cli {
    /// Run configuration file (key = value); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tone/noise dataset with exact labels.
    Synth {
        /// Output directory for audio/ plus the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Number of clips (minimum 10).
        #[arg(long, default_value_t = 100)]
        clips: usize,
        /// Number of tone (classification) tags; two regression tags are
        /// always added.
        #[arg(long, default_value_t = 8)]
        tags: usize,
        /// Number of artists (default: clips / 5, at least 2).
        #[arg(long)]
        artists: Option<usize>,
        /// Clip length in seconds.
        #[arg(long, default_value_t = 30.0)]
        seconds: f64,
    },

    /// Re-assign stratified, artist-filtered splits in a manifest.
    Split {
        /// Manifest directory (tags.tsv + clips.tsv).
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train: f64,
        #[arg(long, default_value_t = 0.1)]
        valid: f64,
        #[arg(long, default_value_t = 0.1)]
        test: f64,
    },

    /// Decode audio, resample, and write the feature cache for the
    /// configured front-end (plus normalization stats for spectrograms).
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature cache directory to write.
        #[arg(long)]
        features: PathBuf,
    },

    /// Train a model; writes checkpoints and an append-only log under --out.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Predict a split by moving-window averaging; writes a TSV table.
    Predict {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to predict: train, valid or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Output prediction table path.
        #[arg(long)]
        out: PathBuf,
        /// One whole-song window per clip instead of patch averaging.
        #[arg(long)]
        whole_song: bool,
    },

    /// Score a prediction table against manifest targets.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Add micro-averaged AUCs over pooled (song, tag) cells.
        #[arg(long)]
        micro: bool,
    },

    /// Print the per-layer parameter table and total.
    Params {
        /// Output count (default: config n_outputs, else 50).
        #[arg(long)]
        outputs: Option<usize>,
        /// Machine-readable tab-separated output.
        #[arg(long)]
        tsv: bool,
    },

    /// Dump every layer with concrete shapes for the configured patch length.
    Describe {
        #[arg(long)]
        outputs: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {:#}", err);
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match config.precision {
        Precision::F64 => dispatch::<f64>(cli.command, &config),
        Precision::F32 => dispatch::<f32>(cli.command, &config),
    }
}

fn parse_split(text: &str) -> Result<Split> {
    Split::parse(text).with_context(|| format!("unknown split '{}'", text))
}

fn dispatch<T: Scalar>(command: Command, config: &RunConfig) -> Result<()> {
    match command {
        Command::Synth { out, clips, tags, artists, seconds } => {
            let mut spec = SynthSpec::new(clips, tags, config.seed)?;
            if let Some(a) = artists {
                spec.n_artists = a;
            }
            spec.clip_seconds = seconds;
            spec.sample_rate = config.dsp.sample_rate;
            let manifest = generate_synthetic_dataset(&spec, &out)?;
            println!(
                "wrote {} clips, {} tags ({} classification + 2 regression) to {}",
                manifest.clips.len(),
                manifest.n_tags(),
                tags,
                out.display()
            );
            Ok(())
        }

        Command::Split { manifest: dir, train, valid, test } => {
            let mut manifest = DatasetManifest::load(&dir, false)?;
            let fractions = SplitFractions::new(train, valid, test)?;
            let assignment = split_dataset(&manifest, fractions, config.seed)?;
            apply_split(&mut manifest, &assignment)?;
            manifest.save(&dir)?;
            for split in Split::ALL {
                println!("{}\t{} clips", split, manifest.split_clips(split).len());
            }
            Ok(())
        }

        Command::Extract { manifest: dir, features } => extract::<T>(config, &dir, &features),

        Command::Train { manifest: dir, features, out } => {
            let manifest = DatasetManifest::load(&dir, false)?;
            let store = FeatureStore::<T>::load(&features, &manifest, config)?;
            let model = build_model::<T>(config, resolve_outputs(config, Some(&manifest)))?;
            mtag::train::check_outputs(&model, &manifest)?;
            println!(
                "training {} front-end, {} parameters, seed {}",
                config.frontend,
                model.count_parameters(),
                config.seed
            );
            let mut state = TrainState::new(model, config.lr, config.seed);
            let summary = fit(&mut state, &manifest, &store, config, &out, |line| {
                println!("{}", line);
            })?;
            println!(
                "done: {} epochs, best metric {:.6} at epoch {}{}",
                summary.epochs_run,
                summary.best_metric,
                summary.best_epoch,
                if summary.stopped_early { " (early stop)" } else { "" }
            );
            Ok(())
        }

        Command::Predict { manifest: dir, features, checkpoint, split, out, whole_song } => {
            let manifest = DatasetManifest::load(&dir, false)?;
            let store = FeatureStore::<T>::load(&features, &manifest, config)?;
            let mut run_config = config.clone();
            if whole_song {
                run_config.whole_song = true;
            }
            let mut model = build_model::<T>(&run_config, resolve_outputs(config, Some(&manifest)))?;
            mtag::train::check_outputs(&model, &manifest)?;
            let container = Container::<T>::load(&checkpoint)?;
            model.restore(&container)?;
            let split = parse_split(&split)?;
            let (ids, preds) = predict_split(&model, &manifest, split, &store, &run_config)?;
            write_predictions(&out, &ids, &preds, &manifest.tag_names())?;
            println!("wrote {} prediction rows to {}", ids.len(), out.display());
            Ok(())
        }

        Command::Evaluate { manifest: dir, predictions, split, json, micro } => {
            let manifest = DatasetManifest::load(&dir, false)?;
            let split = parse_split(&split)?;
            let (ids, preds) = read_predictions(&predictions, manifest.n_tags())?;
            let targets = align_targets(&manifest, split, &ids)?;
            let report = evaluate(
                &preds,
                &targets,
                &manifest.tag_names(),
                &manifest.tag_kinds(),
                EvalOptions { micro },
            )?;
            print!("{}", report.to_text());
            if let Some(path) = json {
                write_atomic(&path, report.to_json().as_bytes())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }

        Command::Params { outputs, tsv } => {
            let n = outputs.unwrap_or_else(|| resolve_outputs(config, None));
            let model = build_model::<T>(config, n)?;
            if tsv {
                print!("{}", model.describe_tsv(Some(config.patch_len())));
            } else {
                print!("{}", model.describe(Some(config.patch_len())));
                println!("total parameters: {}", model.count_parameters());
            }
            Ok(())
        }

        Command::Describe { outputs } => {
            let n = outputs.unwrap_or_else(|| resolve_outputs(config, None));
            let model = build_model::<T>(config, n)?;
            println!(
                "{} front-end, patch {}s -> {} native units",
                config.frontend,
                config.patch_seconds,
                config.patch_len()
            );
            print!("{}", model.describe(Some(config.patch_len())));
            Ok(())
        }
    }
}

/// Decode, resample and cache features for every clip; for spectrogram runs
/// also compute per-bin normalization stats over the training split.
fn extract<T: Scalar>(config: &RunConfig, manifest_dir: &Path, features: &Path) -> Result<()> {
    let manifest = DatasetManifest::load(manifest_dir, true)?;
    std::fs::create_dir_all(features)
        .with_context(|| format!("creating {}", features.display()))?;
    let fingerprint = config.dsp.fingerprint();
    let mut train_specs: Vec<LogMelSpectrogram<T>> = Vec::new();

    for clip in &manifest.clips {
        let path = manifest.audio_path(manifest_dir, clip);
        let (samples, rate) =
            read_wav_mono::<T>(&path).with_context(|| format!("decoding {}", path.display()))?;
        let samples = resample(&samples, rate, config.dsp.sample_rate)?;
        let file = match config.frontend {
            mtag::config::FrontendKind::Waveform => {
                FeatureFile::waveform(clip.clip_id.clone(), samples, config.dsp.sample_rate)
            }
            mtag::config::FrontendKind::Spectrogram => {
                let spec = log_mel(&samples, &config.dsp)?;
                if clip.split == Split::Train {
                    train_specs.push(spec.clone());
                }
                FeatureFile::log_mel(
                    clip.clip_id.clone(),
                    spec,
                    config.dsp.sample_rate,
                    fingerprint.clone(),
                )
            }
        };
        file.save(&feature_path(features, &clip.clip_id))?;
    }

    if config.frontend == mtag::config::FrontendKind::Spectrogram {
        if train_specs.is_empty() {
            bail!("no training clips; cannot compute normalization stats");
        }
        let stats = NormalizationStats::compute(train_specs.iter(), fingerprint)?;
        write_atomic(&stats_path(features), stats.to_text().as_bytes())
            .with_context(|| "writing normalization stats")?;
    }
    println!("cached features for {} clips in {}", manifest.clips.len(), features.display());
    Ok(())
}
