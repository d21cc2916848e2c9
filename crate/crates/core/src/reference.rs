//! Reference loss and error numbers, bundled for annotating reports.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReference {
    pub features: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub walking_400: f64,
    pub walking_dog_400: f64,
    pub walking_together_400: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValues {
    pub feature_sweep: Vec<SweepReference>,
    /// Action → MPJPE at 80/160/320/400 ms.
    pub short_term: BTreeMap<String, [f64; 4]>,
    /// Action → MPJPE at 560/1000 ms.
    pub long_term: BTreeMap<String, [f64; 2]>,
}

pub const SHORT_TERM_HORIZONS_MS: [u32; 4] = [80, 160, 320, 400];
pub const LONG_TERM_HORIZONS_MS: [u32; 2] = [560, 1000];

pub fn reference_values() -> &'static ReferenceValues {
    static VALUES: OnceLock<ReferenceValues> = OnceLock::new();
    VALUES.get_or_init(|| {
        toml::from_str(include_str!("../data/reference.toml")).expect("bundled reference data parses")
    })
}

pub fn sweep_reference(features: usize) -> Option<&'static SweepReference> {
    reference_values().feature_sweep.iter().find(|r| r.features == features)
}
