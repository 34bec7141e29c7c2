//! `permnet evaluate`: checkpoint + PDSV -> report JSON + ROC CSV.

use std::path::PathBuf;

use clap::Args;
use permnet_core::checkpoint;
use permnet_core::eval::{evaluate, f1_from, model_scores, roc_csv, roc_curve, EvalError};
use serde_json::json;

use crate::{CliError, Ctx};

use super::{read_pdsv, write_file};

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// PNNC checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// PDSV dataset (typically a test split).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Decision threshold; scores at or above it predict malware.
    #[arg(long)]
    pub threshold: Option<f64>,
}

pub fn run(ctx: &Ctx, args: &EvaluateArgs) -> Result<(), CliError> {
    let (model, params) = checkpoint::load::<f64>(&args.checkpoint)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.checkpoint.display())))?;
    let input = super::split::resolve_input_path(ctx, args.input.as_ref())?;
    let dataset = read_pdsv(&input)?;
    if dataset.feature_dim() != model.input_dim {
        return Err(CliError::Input(format!(
            "dataset width {} does not match checkpoint input_dim {}",
            dataset.feature_dim(),
            model.input_dim
        )));
    }
    let threshold = args
        .threshold
        .or(ctx.config.threshold)
        .unwrap_or(0.5);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Config(format!("threshold {threshold} outside [0,1]")));
    }

    let report = evaluate(&params, &model, &dataset, threshold).map_err(|e| match e {
        EvalError::EmptyDataset => CliError::Input("dataset is empty".into()),
        other => CliError::Numeric(other.to_string()),
    })?;

    // The report is constructed from counts, so the F1 identity holds;
    // cross-check anyway before anything is written.
    if report.f1.defined {
        let expected = f1_from(report.recall.value, report.precision.value);
        if (report.f1.value - expected).abs() > 1e-12 {
            return Err(CliError::Numeric(format!(
                "f1 identity violated: {} vs {}",
                report.f1.value, expected
            )));
        }
    }

    let scores = model_scores(&model, &params, &dataset)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let labels: Vec<u8> = dataset.rows.iter().map(|r| r.label).collect();
    let roc = roc_curve(&scores, &labels);

    ctx.ensure_out_dir()?;
    let auc_value = match roc.auc {
        Some(auc) => json!(auc),
        None => json!("undefined"),
    };
    let report_json = json!({ "report": report, "auc": auc_value });
    let report_path = ctx.out_dir.join("eval_report.json");
    write_file(
        &report_path,
        serde_json::to_string_pretty(&report_json)
            .expect("report serializes")
            .as_bytes(),
    )?;
    let roc_path = ctx.out_dir.join("eval_roc.csv");
    write_file(&roc_path, roc_csv(&roc).as_bytes())?;

    ctx.say(format!(
        "threshold {:.3}: accuracy {:.4} recall {:.4} precision {:.4} f1 {:.4}",
        threshold, report.accuracy, report.recall.value, report.precision.value, report.f1.value
    ));
    ctx.say(match roc.auc {
        Some(auc) => format!("auc {auc:.4}"),
        None => "auc undefined (single-class dataset)".to_string(),
    });
    ctx.say(format!("wrote {}", report_path.display()));
    ctx.say(format!("wrote {}", roc_path.display()));
    Ok(())
}
