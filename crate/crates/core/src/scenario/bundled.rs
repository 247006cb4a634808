//! Scenario files shipped with the library.

use super::ScenarioConfig;
use crate::error::{Result, SimError};

const SCENARIOS: &[(&str, &str)] = &[
    ("cantilever-1e5", include_str!("../../scenarios/cantilever-1e5.toml")),
    ("cantilever-1e6", include_str!("../../scenarios/cantilever-1e6.toml")),
    ("cantilever-1e7", include_str!("../../scenarios/cantilever-1e7.toml")),
    ("helix-1e7", include_str!("../../scenarios/helix-1e7.toml")),
    ("helix-1e9", include_str!("../../scenarios/helix-1e9.toml")),
    ("snake", include_str!("../../scenarios/snake.toml")),
    ("rect-fold-1e8", include_str!("../../scenarios/rect-fold-1e8.toml")),
    ("rect-fold-1e9", include_str!("../../scenarios/rect-fold-1e9.toml")),
    ("circle-fold-2e6", include_str!("../../scenarios/circle-fold-2e6.toml")),
    ("circle-fold-2e7", include_str!("../../scenarios/circle-fold-2e7.toml")),
    ("s-shape", include_str!("../../scenarios/s-shape.toml")),
    ("serpentine", include_str!("../../scenarios/serpentine.toml")),
    ("jellyfish", include_str!("../../scenarios/jellyfish.toml")),
];

#[derive(Clone, Debug, PartialEq)]
pub struct BundledScenario {
    pub name: &'static str,
    pub text: &'static str,
}

impl BundledScenario {
    pub fn config(&self) -> Result<ScenarioConfig> {
        ScenarioConfig::from_toml(self.text)
    }
}

pub fn bundled() -> Vec<BundledScenario> {
    SCENARIOS.iter().map(|&(name, text)| BundledScenario { name, text }).collect()
}

pub fn bundled_config(name: &str) -> Result<ScenarioConfig> {
    SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| {
            let known: Vec<&str> = SCENARIOS.iter().map(|(n, _)| *n).collect();
            SimError::Config(format!("unknown scenario '{name}' (known: {})", known.join(", ")))
        })
        .and_then(|(_, text)| ScenarioConfig::from_toml(text))
}
