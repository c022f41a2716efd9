//! Configs bundled with the binary.

use crate::config::ExperimentConfig;
use crate::RunError;

macro_rules! preset {
    ($name:literal) => {
        ($name, include_str!(concat!("../presets/", $name, ".json")))
    };
}

const PRESETS: [(&str, &str); 7] = [
    preset!("prop-resolv1-lowfreq"),
    preset!("th0-1d-gcc"),
    preset!("th0-gcc-poly"),
    preset!("th1-torus"),
    preset!("th1-torus-schrodinger"),
    preset!("th2-general-log"),
    preset!("appB-ellipse-optimality"),
];

/// `(name, description)` for every bundled preset.
pub fn presets() -> Vec<(&'static str, String)> {
    PRESETS
        .iter()
        .map(|(name, text)| {
            let description = load_text(text).map(|c| c.description).unwrap_or_default();
            (*name, description)
        })
        .collect()
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Option<Result<ExperimentConfig, RunError>> {
    source(name).map(load_text)
}

fn load_text(text: &str) -> Result<ExperimentConfig, RunError> {
    ExperimentConfig::from_json(text)
}
