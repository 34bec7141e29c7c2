//! `permnet build-dataset`: metadata -> stats -> filter -> PDSV.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use permnet_core::manifest::{self, JsonlMode};
use permnet_core::pipeline::{
    collect_permission_stats, filter_permissions, vectorize_dataset, FilterConfig,
};

use crate::config::InputSpec;
use crate::{CliError, Ctx};

use super::write_file;

#[derive(Args, Debug)]
pub struct BuildDatasetArgs {
    /// JSONL metadata input (one app object per line).
    #[arg(long, conflicts_with = "csv")]
    pub jsonl: Option<PathBuf>,
    /// Wide 0/1 CSV input (permission columns plus a label column).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Label column name for CSV input.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Skip and count malformed JSONL lines instead of aborting.
    #[arg(long)]
    pub lenient: bool,
    /// Minimum benign+malware occurrences for a permission to be kept.
    #[arg(long)]
    pub min_total: Option<u64>,
    /// Keep permissions even when they occur in only one class.
    #[arg(long)]
    pub keep_single_class: bool,
}

pub fn run(ctx: &Ctx, args: &BuildDatasetArgs) -> Result<(), CliError> {
    let input = resolve_input(ctx, args)?;
    let records = match &input {
        InputSpec::Jsonl { path, lenient } => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let mode = if *lenient {
                JsonlMode::Lenient
            } else {
                JsonlMode::Strict
            };
            let parsed = manifest::parse_metadata_jsonl(&text, mode)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if !parsed.skipped_lines.is_empty() {
                ctx.say(format!(
                    "skipped {} malformed line(s): {:?}",
                    parsed.skipped_lines.len(),
                    parsed.skipped_lines
                ));
            }
            parsed.records
        }
        InputSpec::Csv { path, label_column } => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            manifest::parse_csv_dataset(&text, label_column)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        InputSpec::Pdsv { .. } => {
            return Err(CliError::Config(
                "build-dataset takes raw metadata (jsonl or csv), not a pdsv file".into(),
            ))
        }
    };

    let stats =
        collect_permission_stats(&records).map_err(|e| CliError::Input(e.to_string()))?;
    let filter = resolve_filter(ctx, args);
    let list =
        filter_permissions(&stats, &filter).map_err(|e| CliError::Input(e.to_string()))?;
    if list.is_empty() {
        return Err(CliError::EmptyFilter);
    }
    let dataset = vectorize_dataset(&records, &list).map_err(|e| CliError::Input(e.to_string()))?;

    ctx.ensure_out_dir()?;
    let pdsv_path = ctx.out_dir.join("dataset.pdsv");
    let stats_path = ctx.out_dir.join("permission_stats.csv");
    write_file(&pdsv_path, dataset.to_pdsv().as_bytes())?;
    let stats_csv = stats.to_csv().map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&stats_path, stats_csv.as_bytes())?;

    let (benign, malware) = dataset.class_counts();
    ctx.say(format!(
        "kept {} of {} permissions; {} rows ({} benign, {} malware)",
        list.len(),
        stats.len(),
        dataset.len(),
        benign,
        malware
    ));
    ctx.say(format!("wrote {}", pdsv_path.display()));
    ctx.say(format!("wrote {}", stats_path.display()));
    Ok(())
}

fn resolve_input(ctx: &Ctx, args: &BuildDatasetArgs) -> Result<InputSpec, CliError> {
    if let Some(path) = &args.jsonl {
        return Ok(InputSpec::Jsonl {
            path: path.clone(),
            lenient: args.lenient,
        });
    }
    if let Some(path) = &args.csv {
        return Ok(InputSpec::Csv {
            path: path.clone(),
            label_column: args
                .label_column
                .clone()
                .unwrap_or_else(|| manifest::DEFAULT_LABEL_COLUMN.to_string()),
        });
    }
    ctx.config
        .input
        .clone()
        .ok_or_else(|| CliError::Config("no input: pass --jsonl/--csv or set input in --config".into()))
}

fn resolve_filter(ctx: &Ctx, args: &BuildDatasetArgs) -> FilterConfig {
    let defaults = FilterConfig::default();
    let from_config = ctx.config.filter.unwrap_or_default();
    FilterConfig {
        min_total_occurrences: args
            .min_total
            .or(from_config.min_total_occurrences)
            .unwrap_or(defaults.min_total_occurrences),
        require_both_classes: if args.keep_single_class {
            false
        } else {
            from_config
                .require_both_classes
                .unwrap_or(defaults.require_both_classes)
        },
    }
}
