//! `permnet gradcheck`: finite-difference verification per layer family.

use clap::Args;
use permnet_core::nn::gradcheck::jitter_biases;
use permnet_core::nn::{gradient_check, init_parameters, TensorBuffer};
use permnet_core::rng::{self, derive_seed};
use rand::Rng;

use crate::presets::{tiny_model, Preset};
use crate::{seed_streams, CliError, Ctx};

pub const PASS_THRESHOLD: f64 = 1e-4;

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Preset to check; omit to check all four.
    #[arg(long)]
    pub preset: Option<String>,
    /// Model scale; only "tiny" is supported (full-size finite differences
    /// would take hours).
    #[arg(long, default_value = "tiny")]
    pub scale: String,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
}

pub fn run(ctx: &Ctx, args: &GradcheckArgs) -> Result<(), CliError> {
    if args.scale != "tiny" {
        return Err(CliError::Config(format!(
            "unsupported scale {:?}; only \"tiny\" is available",
            args.scale
        )));
    }
    let presets: Vec<Preset> = match &args.preset {
        Some(name) => vec![name.parse()?],
        None => Preset::ALL.to_vec(),
    };

    let mut failures = Vec::new();
    for preset in presets {
        let (model, input_dim, batch_rows) = tiny_model(preset, derive_seed(ctx.seed, seed_streams::MODEL));
        let mut params = init_parameters::<f64>(&model).map_err(|e| CliError::Config(e.to_string()))?;
        jitter_biases(&mut params, 0.05, derive_seed(ctx.seed, seed_streams::GRADCHECK));

        // Continuous inputs keep pre-activations off ReLU kinks and pool
        // windows free of ties; a bit pattern would park entire windows
        // exactly on the kink.
        let mut rng = rng::seeded(derive_seed(ctx.seed, seed_streams::GRADCHECK ^ 0xF00D));
        let values: Vec<f64> = (0..batch_rows * input_dim)
            .map(|_| 0.05 + 0.95 * rng.random::<f64>())
            .collect();
        let batch = TensorBuffer::from_vec(&[batch_rows, input_dim], values);
        let labels: Vec<f64> = (0..batch_rows)
            .map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 })
            .collect();

        let report = gradient_check(
            &model,
            &params,
            &batch,
            &labels,
            args.epsilon,
            derive_seed(ctx.seed, seed_streams::GRADCHECK ^ 0xD1CE),
        )
        .map_err(|e| CliError::Numeric(e.to_string()))?;

        let verdict = if report.max_relative_error < PASS_THRESHOLD {
            "ok"
        } else {
            "FAIL"
        };
        ctx.say(format!(
            "{:<8} max relative error {:.3e} over {} coordinates [{verdict}]",
            preset.name(),
            report.max_relative_error,
            report.coordinates_checked
        ));
        if report.max_relative_error >= PASS_THRESHOLD {
            let (layer, slot, coord) = report.worst_coordinate;
            failures.push(format!(
                "{}: {:.3e} at layer {layer}, tensor {slot}, coordinate {coord} (analytic {:.6e}, numeric {:.6e})",
                preset.name(),
                report.max_relative_error,
                report.analytic,
                report.numeric
            ));
        }
    }

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradcheckFailed(failures.join("; ")))
    }
}
