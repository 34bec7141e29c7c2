//! Synthetic labeled corpora from a planted rule.
//!
//! Each of `permissions` names is requested independently with
//! probability 1/2. `planted` of them are designated malicious: an app is
//! labeled malware exactly when it requests at least two of the planted
//! permissions, and the label is then flipped with probability `noise`.
//! The generator exists so end-to-end tests have a corpus with a known
//! learnable signal.

use permnet_core::manifest::{AppRecord, Label};
use permnet_core::rng;
use rand::seq::index::sample;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub apps: usize,
    pub permissions: usize,
    pub planted: usize,
    pub noise: f64,
    pub seed: u64,
}

pub struct SynthCorpus {
    pub records: Vec<AppRecord>,
    pub planted_names: Vec<String>,
}

const STREAM_PLANT: u64 = 0x91A7;
const STREAM_ROWS: u64 = 0x9805;

pub fn permission_name(index: usize) -> String {
    format!("synth.permission.P{index:04}")
}

pub fn generate(spec: &SynthSpec) -> SynthCorpus {
    assert!(spec.planted <= spec.permissions, "more planted than permissions");
    let names: Vec<String> = (0..spec.permissions).map(permission_name).collect();

    let mut plant_rng = rng::seeded(rng::derive_seed(spec.seed, STREAM_PLANT));
    let mut planted_idx = sample(&mut plant_rng, spec.permissions, spec.planted).into_vec();
    planted_idx.sort_unstable();

    let mut row_rng = rng::seeded(rng::derive_seed(spec.seed, STREAM_ROWS));
    let records = (0..spec.apps)
        .map(|i| {
            let present: Vec<usize> = (0..spec.permissions)
                .filter(|_| row_rng.random::<f64>() < 0.5)
                .collect();
            let planted_hits = planted_idx
                .iter()
                .filter(|idx| present.binary_search(idx).is_ok())
                .count();
            let mut malware = planted_hits >= 2;
            if spec.noise > 0.0 && row_rng.random::<f64>() < spec.noise {
                malware = !malware;
            }
            AppRecord::new(
                format!("app{i:06}"),
                if malware { Label::Malware } else { Label::Benign },
                present.iter().map(|&idx| names[idx].clone()),
            )
        })
        .collect();

    SynthCorpus {
        records,
        planted_names: planted_idx.iter().map(|&i| names[i].clone()).collect(),
    }
}
