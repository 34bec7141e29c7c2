//! `permnet split`: partition a PDSV file into train/validation/test.

use std::path::PathBuf;

use clap::Args;
use permnet_core::dataset::Dataset;
use permnet_core::pipeline::{split_dataset, SplitSpec};
use permnet_core::rng::derive_seed;

use crate::{seed_streams, CliError, Ctx};

use super::{read_pdsv, write_file};

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// PDSV dataset to split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Test rows per class.
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Validation rows per class.
    #[arg(long)]
    pub val_per_class: Option<usize>,
    /// Test fraction of each class (alternative to --test-per-class).
    #[arg(long, conflicts_with = "test_per_class")]
    pub test_frac: Option<f64>,
    /// Validation fraction of each class.
    #[arg(long, conflicts_with = "val_per_class")]
    pub val_frac: Option<f64>,
}

/// Turns per-class counts or fractions into a concrete [`SplitSpec`].
pub fn resolve_split_spec(
    ctx: &Ctx,
    dataset: &Dataset,
    test_per_class: Option<usize>,
    val_per_class: Option<usize>,
    test_frac: Option<f64>,
    val_frac: Option<f64>,
) -> Result<SplitSpec, CliError> {
    let from_config = ctx.config.split.unwrap_or_default();
    let (benign, malware) = dataset.class_counts();
    let min_class = benign.min(malware);
    let from_frac = |frac: f64, what: &str| -> Result<usize, CliError> {
        if !(0.0..=1.0).contains(&frac) {
            return Err(CliError::Config(format!("{what} fraction {frac} outside [0,1]")));
        }
        Ok((frac * min_class as f64).floor() as usize)
    };
    let test = match (test_per_class, test_frac.or(from_config.test_frac)) {
        (Some(n), _) => n,
        (None, Some(f)) => from_frac(f, "test")?,
        (None, None) => from_config.test_per_class.unwrap_or(0),
    };
    let validation = match (val_per_class, val_frac.or(from_config.validation_frac)) {
        (Some(n), _) => n,
        (None, Some(f)) => from_frac(f, "validation")?,
        (None, None) => from_config.validation_per_class.unwrap_or(0),
    };
    Ok(SplitSpec {
        test_per_class: test,
        validation_per_class: validation,
        seed: derive_seed(ctx.seed, seed_streams::SPLIT),
    })
}

pub fn run(ctx: &Ctx, args: &SplitArgs) -> Result<(), CliError> {
    let input = resolve_input_path(ctx, args.input.as_ref())?;
    let dataset = read_pdsv(&input)?;
    let spec = resolve_split_spec(
        ctx,
        &dataset,
        args.test_per_class,
        args.val_per_class,
        args.test_frac,
        args.val_frac,
    )?;
    let split = split_dataset(&dataset, &spec).map_err(|e| CliError::Input(e.to_string()))?;

    ctx.ensure_out_dir()?;
    for (name, part) in [
        ("train.pdsv", &split.train),
        ("val.pdsv", &split.validation),
        ("test.pdsv", &split.test),
    ] {
        let path = ctx.out_dir.join(name);
        write_file(&path, part.to_pdsv().as_bytes())?;
        let (benign, malware) = part.class_counts();
        ctx.say(format!(
            "wrote {} ({} benign, {} malware)",
            path.display(),
            benign,
            malware
        ));
    }
    Ok(())
}

pub(crate) fn resolve_input_path(
    ctx: &Ctx,
    flag: Option<&PathBuf>,
) -> Result<PathBuf, CliError> {
    if let Some(path) = flag {
        return Ok(path.clone());
    }
    match &ctx.config.input {
        Some(crate::config::InputSpec::Pdsv { path }) => Ok(path.clone()),
        Some(_) => Err(CliError::Config(
            "this command needs a pdsv input (use --input or a pdsv input in --config)".into(),
        )),
        None => Err(CliError::Config("no input: pass --input <pdsv>".into())),
    }
}
