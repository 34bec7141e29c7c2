//! `permnet synth`: write a planted-rule corpus as JSONL.

use std::path::PathBuf;

use clap::Args;
use permnet_core::manifest::write_metadata_jsonl;
use permnet_core::rng::derive_seed;

use crate::synth::{generate, SynthSpec};
use crate::{seed_streams, CliError, Ctx};

use super::write_file;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output JSONL path (default <out-dir>/corpus.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of apps to generate.
    #[arg(long, default_value_t = 1000)]
    pub apps: usize,
    /// Size of the permission vocabulary.
    #[arg(long, default_value_t = 64)]
    pub permissions: usize,
    /// Number of planted "malicious" permissions; an app is malware when
    /// it requests at least two of them.
    #[arg(long, default_value_t = 4)]
    pub planted: usize,
    /// Probability of flipping each label.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

pub fn run(ctx: &Ctx, args: &SynthArgs) -> Result<(), CliError> {
    if args.planted > args.permissions {
        return Err(CliError::Config(format!(
            "--planted {} exceeds --permissions {}",
            args.planted, args.permissions
        )));
    }
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(CliError::Config(format!("--noise {} outside [0,1]", args.noise)));
    }
    let spec = SynthSpec {
        apps: args.apps,
        permissions: args.permissions,
        planted: args.planted,
        noise: args.noise,
        seed: derive_seed(ctx.seed, seed_streams::SYNTH),
    };
    let corpus = generate(&spec);

    let out = match &args.out {
        Some(path) => path.clone(),
        None => {
            ctx.ensure_out_dir()?;
            ctx.out_dir.join("corpus.jsonl")
        }
    };
    write_file(&out, write_metadata_jsonl(&corpus.records).as_bytes())?;

    let malware = corpus
        .records
        .iter()
        .filter(|r| r.label == permnet_core::manifest::Label::Malware)
        .count();
    ctx.say(format!(
        "wrote {} apps ({malware} malware) to {}",
        corpus.records.len(),
        out.display()
    ));
    ctx.say(format!("planted permissions: {}", corpus.planted_names.join(", ")));
    Ok(())
}
