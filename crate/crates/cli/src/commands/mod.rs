//! Command implementations.

pub mod audit;
pub mod build_dataset;
pub mod evaluate;
pub mod gradcheck;
pub mod split;
pub mod synth;
pub mod train;

use std::path::Path;

use permnet_core::dataset::Dataset;

use crate::CliError;

pub(crate) fn read_pdsv(path: &Path) -> Result<Dataset, CliError> {
    Dataset::read_pdsv(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}
