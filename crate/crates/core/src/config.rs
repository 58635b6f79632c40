//! Run-configuration document: one JSON file reproduces a whole experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ModeRun, SimConfig};
use crate::world::{zigzag_corridor, Scenario, ScenarioSpec, ZigzagLayout};

/// Where the scenario of a run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    /// A scenario document, relative paths resolved against the config file.
    File(PathBuf),
    /// The generated zigzag corridor.
    Zigzag(ZigzagLayout),
}

impl Default for ScenarioSource {
    fn default() -> Self {
        ScenarioSource::Zigzag(ZigzagLayout::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    #[serde(flatten)]
    pub sim: SimConfig,
    pub runs: Vec<ModeRun>,
    pub seeds: Vec<u64>,
    pub repetitions: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSource::default(),
            sim: SimConfig::default(),
            runs: ModeRun::three_mode(),
            seeds: (1..=20).collect(),
            repetitions: 2,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        if let ScenarioSource::File(p) = &mut cfg.scenario {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.runs.is_empty() {
            return Err(Error::Config("no mode runs configured".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds configured".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec> {
        match &self.scenario {
            ScenarioSource::File(p) => ScenarioSpec::load(p),
            ScenarioSource::Zigzag(layout) => layout.to_spec(2.0 * self.sim.inflation_radius()),
        }
    }

    pub fn build_scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            ScenarioSource::File(p) => self.sim.build_scenario(&ScenarioSpec::load(p)?),
            ScenarioSource::Zigzag(layout) => zigzag_corridor(layout, self.sim.inflation_radius()),
        }
    }
}
