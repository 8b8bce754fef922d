//! Run configuration: one TOML file holding every tunable constant, with
//! command-line flags taking precedence.

use std::path::Path;

use anyhow::{Context, Result};
use paflabel::correction::CorrectionScope;
use paflabel::field::GridSpec;
use paflabel::labelgen::LabelGenConfig;
use paflabel::metrics::EvalConfig;
use paflabel::parser::ParserConfig;
use paflabel::synthetic::{CorruptionConfig, OracleConfig, SceneConfig};
use paflabel::SkeletonSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub skeleton: SkeletonName,
    pub seed: u64,
    pub workers: usize,
    pub labelgen: LabelGenSection,
    pub correction: CorrectionSection,
    pub parser: ParserConfig,
    pub eval: EvalConfig,
    pub synth: SynthSection,
    pub render: RenderSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            skeleton: SkeletonName::Body18,
            seed: 0,
            workers: 1,
            labelgen: LabelGenSection::default(),
            correction: CorrectionSection::default(),
            parser: ParserConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthSection::default(),
            render: RenderSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkeletonName {
    Body18,
    Coco17,
}

impl SkeletonName {
    pub fn spec(self) -> SkeletonSpec {
        match self {
            SkeletonName::Body18 => SkeletonSpec::body18(),
            SkeletonName::Coco17 => SkeletonSpec::coco17(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelGenSection {
    /// Image pixels per grid cell.
    pub stride: f64,
    /// Gaussian sigma in grid cells; 7 px worth when unset.
    pub sigma: Option<f64>,
    /// PAF half-width in grid cells.
    pub limb_width: f64,
}

impl Default for LabelGenSection {
    fn default() -> Self {
        Self {
            stride: 8.0,
            sigma: None,
            limb_width: 1.0,
        }
    }
}

impl LabelGenSection {
    pub fn for_image(&self, width: u32, height: u32) -> Result<LabelGenConfig> {
        let grid = GridSpec::for_image(width, height, self.stride)?;
        let sigma = self.sigma.unwrap_or(LabelGenConfig::for_grid(grid).sigma);
        Ok(LabelGenConfig::new(grid, sigma, self.limb_width)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionSection {
    pub scope: CorrectionScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub width: u32,
    pub height: u32,
    pub n_scenes: usize,
    pub min_persons: usize,
    pub max_persons: usize,
    pub scene: SceneConfig,
    pub corruption: CorruptionConfig,
    pub oracle: OracleConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 768,
            n_scenes: 10,
            min_persons: 1,
            max_persons: 4,
            scene: SceneConfig::default(),
            corruption: CorruptionConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    /// Output pixels per grid cell for map images.
    pub cell_px: u32,
    /// Canvas size for pose overlays when no annotations give one.
    pub width: u32,
    pub height: u32,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            cell_px: 4,
            width: 1024,
            height: 768,
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
