//! `permnet train`: split, balance, train, checkpoint.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use permnet_core::checkpoint;
use permnet_core::eval::history_csv;
use permnet_core::nn::{Algorithm, LayerSpec, ModelConfig, OptimizerConfig};
use permnet_core::pipeline::{balance_by_duplication, split_dataset};
use permnet_core::rng::derive_seed;
use permnet_core::train::{train, TrainError, TrainSchedule};
use serde_json::json;

use crate::config::{
    ExperimentConfig, InputSpec, ModelSettings, OptimizerSettings, ScheduleSettings,
    SplitSettings,
};
use crate::presets::{build_model, Preset};
use crate::{seed_streams, CliError, Ctx};

use super::{read_pdsv, write_file};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// PDSV dataset to train on.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Architecture preset: nn-1024, nn-4096, cnn, or gru.
    #[arg(long)]
    pub preset: Option<String>,
    /// Dense-stack width override, e.g. --hidden 128,256,128.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub val_per_class: Option<usize>,
    #[arg(long, conflicts_with = "test_per_class")]
    pub test_frac: Option<f64>,
    #[arg(long, conflicts_with = "val_per_class")]
    pub val_frac: Option<f64>,
    /// Train on the raw class balance instead of duplicating the minority.
    #[arg(long)]
    pub no_balance: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Optional wall-clock training budget in seconds.
    #[arg(long)]
    pub max_wall_seconds: Option<f64>,
}

pub fn run(ctx: &Ctx, args: &TrainArgs) -> Result<(), CliError> {
    let input = super::split::resolve_input_path(ctx, args.input.as_ref())?;
    let dataset = read_pdsv(&input)?;

    let model_settings = resolve_model_settings(ctx, args);
    let model = build_configured_model(
        &model_settings,
        dataset.feature_dim(),
        derive_seed(ctx.seed, seed_streams::MODEL),
    )?;

    let spec = super::split::resolve_split_spec(
        ctx,
        &dataset,
        args.test_per_class,
        args.val_per_class,
        args.test_frac,
        args.val_frac,
    )?;
    let split = split_dataset(&dataset, &spec).map_err(|e| CliError::Input(e.to_string()))?;

    let balance = if args.no_balance {
        false
    } else {
        ctx.config.balance.unwrap_or(true)
    };
    let train_set = if balance {
        balance_by_duplication(&split.train, derive_seed(ctx.seed, seed_streams::BALANCE))
            .map_err(|e| CliError::Input(e.to_string()))?
    } else {
        split.train.clone()
    };

    let optimizer = resolve_optimizer(ctx, args)?;
    let schedule = resolve_schedule(ctx, args);

    let (train_benign, train_malware) = train_set.class_counts();
    ctx.say(format!(
        "training on {} rows ({train_benign} benign, {train_malware} malware), validating on {}",
        train_set.len(),
        split.validation.len()
    ));

    let outcome = train::<f64>(&model, &train_set, &split.validation, &schedule, optimizer)
        .map_err(|e| match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        })?;

    if !ctx.quiet {
        for (i, epoch) in outcome.history.epochs.iter().enumerate() {
            println!(
                "epoch {:>3}: loss {:.6} train_acc {:.4} val_acc {:.4} ({:.2}s)",
                i + 1,
                epoch.train_loss,
                epoch.train_accuracy,
                epoch.validation_accuracy,
                epoch.epoch_wall_seconds
            );
        }
        if outcome.stopped_early {
            println!("stopped early after {} epochs", outcome.history.epochs.len());
        }
    }

    ctx.ensure_out_dir()?;
    let checkpoint_path = ctx.out_dir.join("model.pnnc");
    checkpoint::save(&model, &outcome.params, &checkpoint_path)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let history_path = ctx.out_dir.join("train_history.csv");
    write_file(&history_path, history_csv(&outcome.history).as_bytes())?;

    if spec.validation_per_class > 0 {
        write_file(
            &ctx.out_dir.join("val.pdsv"),
            split.validation.to_pdsv().as_bytes(),
        )?;
    }
    if spec.test_per_class > 0 {
        write_file(&ctx.out_dir.join("test.pdsv"), split.test.to_pdsv().as_bytes())?;
    }

    let manifest = run_manifest(ctx, &input, &spec, &model_settings, &optimizer, &schedule, balance);
    write_file(
        &ctx.out_dir.join("run_manifest.json"),
        serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes")
            .as_bytes(),
    )?;

    if let Some(best) = outcome.history.best_validation_accuracy() {
        ctx.say(format!("best validation accuracy {best:.4}"));
    }
    ctx.say(format!("wrote {}", checkpoint_path.display()));
    ctx.say(format!("wrote {}", history_path.display()));
    Ok(())
}

fn resolve_model_settings(ctx: &Ctx, args: &TrainArgs) -> ModelSettings {
    let mut settings = ctx.config.model.clone().unwrap_or_default();
    if let Some(preset) = &args.preset {
        settings.preset = Some(preset.clone());
        settings.layers = None;
    }
    if let Some(hidden) = &args.hidden {
        settings.hidden = Some(hidden.clone());
    }
    settings
}

/// Explicit layers win over a preset name.
pub fn build_configured_model(
    settings: &ModelSettings,
    input_dim: usize,
    seed: u64,
) -> Result<ModelConfig, CliError> {
    if let Some(layers) = &settings.layers {
        let specs: Vec<LayerSpec> = layers.iter().map(LayerSpec::from).collect();
        return ModelConfig::new(input_dim, specs, seed)
            .map_err(|e| CliError::Config(format!("layer stack invalid: {e}")));
    }
    let preset_name = settings
        .preset
        .as_deref()
        .ok_or_else(|| CliError::Config("no model: pass --preset or set model in --config".into()))?;
    let preset = Preset::from_str(preset_name)?;
    build_model(preset, input_dim, settings.hidden.as_deref(), seed)
}

fn resolve_optimizer(ctx: &Ctx, args: &TrainArgs) -> Result<OptimizerConfig, CliError> {
    let from_config = ctx.config.optimizer.clone().unwrap_or_default();
    let defaults = OptimizerConfig::default();
    let algorithm = match args
        .optimizer
        .as_deref()
        .or(from_config.algorithm.as_deref())
    {
        None | Some("adam") => Algorithm::Adam,
        Some("sgd") => Algorithm::Sgd,
        Some(other) => {
            return Err(CliError::Config(format!(
                "unknown optimizer {other:?} (expected adam or sgd)"
            )))
        }
    };
    Ok(OptimizerConfig {
        algorithm,
        learning_rate: args
            .learning_rate
            .or(from_config.learning_rate)
            .unwrap_or(defaults.learning_rate),
        adam_beta1: from_config.adam_beta1.unwrap_or(defaults.adam_beta1),
        adam_beta2: from_config.adam_beta2.unwrap_or(defaults.adam_beta2),
        adam_epsilon: from_config.adam_epsilon.unwrap_or(defaults.adam_epsilon),
    })
}

fn resolve_schedule(ctx: &Ctx, args: &TrainArgs) -> TrainSchedule {
    let from_config = ctx.config.schedule.unwrap_or_default();
    let defaults = TrainSchedule::default();
    let max_epochs = args
        .max_epochs
        .or(from_config.max_epochs)
        .unwrap_or(defaults.max_epochs);
    TrainSchedule {
        max_epochs,
        // Patience beyond the epoch budget can never fire; keep the
        // schedule self-consistent.
        patience_epochs: args
            .patience
            .or(from_config.patience_epochs)
            .unwrap_or(defaults.patience_epochs)
            .min(max_epochs),
        min_delta: args
            .min_delta
            .or(from_config.min_delta)
            .unwrap_or(defaults.min_delta),
        shuffle_seed: derive_seed(ctx.seed, seed_streams::SHUFFLE),
        batch_size: args
            .batch_size
            .or(from_config.batch_size)
            .unwrap_or(defaults.batch_size),
        max_wall_seconds: args.max_wall_seconds.or(from_config.max_wall_seconds),
    }
}

/// The manifest embeds a fully resolved config: passing the manifest back
/// via `--config` replays the run.
#[allow(clippy::too_many_arguments)]
fn run_manifest(
    ctx: &Ctx,
    input: &Path,
    spec: &permnet_core::pipeline::SplitSpec,
    model: &ModelSettings,
    optimizer: &OptimizerConfig,
    schedule: &TrainSchedule,
    balance: bool,
) -> serde_json::Value {
    let config = ExperimentConfig {
        seed: Some(ctx.seed),
        out_dir: Some(ctx.out_dir.clone()),
        input: Some(InputSpec::Pdsv {
            path: input.to_path_buf(),
        }),
        filter: ctx.config.filter,
        split: Some(SplitSettings {
            test_per_class: Some(spec.test_per_class),
            validation_per_class: Some(spec.validation_per_class),
            test_frac: None,
            validation_frac: None,
        }),
        model: Some(model.clone()),
        optimizer: Some(OptimizerSettings {
            algorithm: Some(
                match optimizer.algorithm {
                    Algorithm::Adam => "adam",
                    Algorithm::Sgd => "sgd",
                }
                .to_string(),
            ),
            learning_rate: Some(optimizer.learning_rate),
            adam_beta1: Some(optimizer.adam_beta1),
            adam_beta2: Some(optimizer.adam_beta2),
            adam_epsilon: Some(optimizer.adam_epsilon),
        }),
        schedule: Some(ScheduleSettings {
            max_epochs: Some(schedule.max_epochs),
            patience_epochs: Some(schedule.patience_epochs),
            min_delta: Some(schedule.min_delta),
            batch_size: Some(schedule.batch_size),
            max_wall_seconds: schedule.max_wall_seconds,
        }),
        balance: Some(balance),
        threshold: ctx.config.threshold,
    };
    json!({
        "tool": { "name": "permnet", "version": env!("CARGO_PKG_VERSION") },
        "config": config,
    })
}
