//! `permnet audit-duplicates`: report identical feature rows that carry
//! conflicting labels. These rows cap achievable precision; they are
//! counted, never dropped.

use std::path::PathBuf;

use clap::Args;
use permnet_core::dataset::audit_duplicate_conflicts;

use crate::{CliError, Ctx};

use super::read_pdsv;

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// PDSV dataset to audit.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: &AuditArgs) -> Result<(), CliError> {
    let input = super::split::resolve_input_path(ctx, args.input.as_ref())?;
    let dataset = read_pdsv(&input)?;
    let audit = audit_duplicate_conflicts(&dataset);
    // Always printed, --quiet or not: the count is the command's output.
    println!(
        "{} conflicting feature pattern(s) covering {} row(s) ({} benign, {} malware) of {}",
        audit.groups,
        audit.rows,
        audit.benign_rows,
        audit.malware_rows,
        dataset.len()
    );
    Ok(())
}
