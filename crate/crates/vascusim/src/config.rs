//! Scenario configuration: one JSON file referencing a phantom spec and
//! carrying every stage's parameters plus a mandatory RNG seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::needle::NeedleConfig;
use crate::phantom::{build_phantom, Phantom};
use crate::planner::PlannerConfig;
use crate::recon::ReconConfig;
use crate::scanplan::{CropRegion, RasterParams};
use crate::tracker::TrackerConfig;

/// Surface-scan parameters (grid survey before the sweep).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanConfig {
    #[serde(default = "default_grid_pitch")]
    pub grid_pitch_mm: f64,
    /// Gaussian z noise on surveyed points.
    #[serde(default)]
    pub surface_noise_sigma_mm: f64,
}

fn default_grid_pitch() -> f64 {
    2.0
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { grid_pitch_mm: default_grid_pitch(), surface_noise_sigma_mm: 0.0 }
    }
}

/// Complete scenario: phantom reference, crop region with landmarks, and
/// per-stage parameters. The seed is mandatory — runs never seed from the
/// wall clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Phantom spec JSON, relative to this config file.
    pub phantom_spec: PathBuf,
    pub crop: CropRegion,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub raster: RasterParams,
    #[serde(default = "default_image_depth")]
    pub image_depth_mm: f64,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub recon: ReconConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub needle: NeedleConfig,
    /// Re-center the probe on each target before inserting.
    #[serde(default = "default_true")]
    pub centering: bool,
    pub seed: u64,
    /// Default artifact directory; `--out` overrides.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_image_depth() -> f64 {
    40.0
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    /// Loads and validates a scenario, resolving the phantom path relative
    /// to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if config.phantom_spec.is_relative() {
            if let Some(parent) = path.parent() {
                config.phantom_spec = parent.join(&config.phantom_spec);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phantom_spec.exists() {
            return Err(Error::Config(format!(
                "phantom spec not found: {}",
                self.phantom_spec.display()
            )));
        }
        self.crop.validate()?;
        self.needle.validate()?;
        for (name, v) in [
            ("scan.grid_pitch_mm", self.scan.grid_pitch_mm),
            ("raster.probe_width_mm", self.raster.probe_width_mm),
            ("raster.pose_step_mm", self.raster.pose_step_mm),
            ("image_depth_mm", self.image_depth_mm),
            ("tracker.gate_cost", self.tracker.gate_cost),
            ("recon.knot_spacing_mm", self.recon.knot_spacing_mm),
            ("planner.spacing_mm", self.planner.spacing_mm),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.recon.lambda < 0.0 || self.scan.surface_noise_sigma_mm < 0.0 {
            return Err(Error::Config("noise and smoothing parameters must be >= 0".into()));
        }
        Ok(())
    }

    /// Loads and validates the referenced phantom.
    pub fn load_phantom(&self) -> Result<Phantom> {
        let text = std::fs::read_to_string(&self.phantom_spec)
            .map_err(|e| Error::Config(format!("{}: {e}", self.phantom_spec.display())))?;
        let spec: Phantom = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", self.phantom_spec.display())))?;
        build_phantom(spec)
    }

    /// Distal→proximal landmark axis from the crop region.
    pub fn landmarks(&self) -> crate::recon::LandmarkAxis {
        crate::recon::LandmarkAxis { distal: self.crop.distal, proximal: self.crop.proximal }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn phantom_json() -> String {
        serde_json::to_string_pretty(&crate::phantom::tests::test_phantom(65.0)).unwrap()
    }

    fn scenario_json(seed: Option<u64>) -> String {
        let seed_field = seed.map(|s| format!(r#""seed": {s},"#)).unwrap_or_default();
        format!(
            r#"{{
  "phantom_spec": "phantom.json",
  "crop": {{
    "corners": [[20.0, 20.0], [100.0, 20.0], [100.0, 60.0], [20.0, 60.0]],
    "proximal": [110.0, 40.0],
    "distal": [10.0, 40.0]
  }},
  {seed_field}
  "raster": {{ "probe_width_mm": 38.0 }}
}}"#
        )
    }

    #[test]
    fn loads_minimal_scenario_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "phantom.json", &phantom_json());
        let path = write_file(dir.path(), "scenario.json", &scenario_json(Some(42)));
        let config = ScenarioConfig::load(&path).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.needle.pump_setpoint_mmhg, -50.0);
        assert_eq!(config.tracker.max_misses, 5);
        assert!(config.centering);
        let phantom = config.load_phantom().unwrap();
        assert_eq!(phantom.vessels.len(), 2);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "phantom.json", &phantom_json());
        let path = write_file(dir.path(), "scenario.json", &scenario_json(None));
        let err = ScenarioConfig::load(&path).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
    }

    #[test]
    fn missing_phantom_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "scenario.json", &scenario_json(Some(1)));
        let err = ScenarioConfig::load(&path).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "phantom.json", &phantom_json());
        let bad = scenario_json(Some(1)).replace("\"raster\"", "\"rastre\"");
        let path = write_file(dir.path(), "scenario.json", &bad);
        assert!(ScenarioConfig::load(&path).is_err());
    }
}
