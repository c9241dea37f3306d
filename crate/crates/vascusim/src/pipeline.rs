//! Stage orchestration. Each stage reads its inputs from the run directory
//! and writes one artifact; the full run is the stages chained in order, so
//! a stage rerun from prior artifacts is byte-identical to the full run by
//! construction.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::artifacts::{self, RunDir};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::needle::TrialConfig;

/// RNG stream ids per randomized stage. Seeds are shared across stages; the
/// stream separates their draw sequences so rerunning one stage cannot
/// perturb another.
pub const STREAM_SCAN: u64 = 1;
pub const STREAM_INSERT: u64 = 2;

fn stage_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scan,
    Track,
    Recon,
    Plan,
    Insert,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Scan, Stage::Track, Stage::Recon, Stage::Plan, Stage::Insert];

    pub fn parse(name: &str) -> Result<Stage> {
        match name {
            "scan" => Ok(Stage::Scan),
            "track" => Ok(Stage::Track),
            "recon" => Ok(Stage::Recon),
            "plan" => Ok(Stage::Plan),
            "insert" => Ok(Stage::Insert),
            other => Err(Error::Config(format!(
                "unknown stage '{other}' (expected scan|track|recon|plan|insert)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Scan => "scan",
            Stage::Track => "track",
            Stage::Recon => "recon",
            Stage::Plan => "plan",
            Stage::Insert => "insert",
        }
    }
}

/// Surface survey → crop → raster sweep → frames.json.
pub fn stage_scan(scenario: &ScenarioConfig, dir: &RunDir) -> Result<()> {
    let phantom = scenario.load_phantom()?;
    let mut rng = stage_rng(scenario.seed, STREAM_SCAN);
    let cloud = crate::phantom::scan_surface(
        &phantom,
        scenario.scan.grid_pitch_mm,
        scenario.scan.surface_noise_sigma_mm,
        &mut rng,
    );
    let cropped = crate::scanplan::crop_cloud(&cloud, &scenario.crop)?;
    let path = crate::scanplan::generate_raster_path(&cropped, &scenario.crop, &scenario.raster)?;
    let frames =
        crate::scanplan::execute_sweep(&phantom, &path, scenario.image_depth_mm, &mut rng)?;
    artifacts::write_frames(&dir.frames(), &frames)
}

/// frames.json → contour association → tracks.json.
pub fn stage_track(scenario: &ScenarioConfig, dir: &RunDir) -> Result<()> {
    let frames = artifacts::read_frames(&dir.frames())?;
    let tracks = crate::tracker::Tracker::process_sweep(&frames, scenario.tracker);
    artifacts::write_tracks(&dir.tracks(), &tracks)
}

/// frames.json + tracks.json → 3D vessel models → vessels.json.
pub fn stage_recon(scenario: &ScenarioConfig, dir: &RunDir) -> Result<()> {
    let frames = artifacts::read_frames(&dir.frames())?;
    let tracks = artifacts::read_tracks(&dir.tracks())?;
    let poses = crate::recon::index_poses(&frames);
    let models =
        crate::recon::reconstruct(&tracks, &poses, &scenario.landmarks(), &scenario.recon)?;
    artifacts::write_vessels(&dir.vessels(), &models)
}

/// vessels.json → ordered insertion plan → plan.json.
pub fn stage_plan(scenario: &ScenarioConfig, dir: &RunDir) -> Result<()> {
    let phantom = scenario.load_phantom()?;
    let models = artifacts::read_vessels(&dir.vessels())?;
    let plan = crate::planner::plan_insertions(
        &models,
        &scenario.landmarks(),
        &scenario.planner,
        |x, y| phantom.surface.height(x, y),
    )?;
    artifacts::write_plan(&dir.plan(), &plan)
}

/// plan.json + vessels.json → insertion trial → trial.json + traces/.
pub fn stage_insert(scenario: &ScenarioConfig, dir: &RunDir) -> Result<()> {
    let phantom = scenario.load_phantom()?;
    let models = artifacts::read_vessels(&dir.vessels())?;
    let plan = artifacts::read_plan(&dir.plan())?;
    let config = TrialConfig {
        needle: scenario.needle,
        planner: scenario.planner,
        image_width_mm: scenario.raster.probe_width_mm,
        image_depth_mm: scenario.image_depth_mm,
        centering: scenario.centering,
    };
    let mut rng = stage_rng(scenario.seed, STREAM_INSERT);
    let trial = crate::needle::run_trial(&phantom, &plan, &models, &config, &mut rng);
    artifacts::write_trial(&dir.trial(), &trial)?;
    artifacts::write_traces(&dir.traces(), &trial)
}

pub fn run_stage(stage: Stage, scenario: &ScenarioConfig, dir: &RunDir) -> Result<()> {
    match stage {
        Stage::Scan => stage_scan(scenario, dir),
        Stage::Track => stage_track(scenario, dir),
        Stage::Recon => stage_recon(scenario, dir),
        Stage::Plan => stage_plan(scenario, dir),
        Stage::Insert => stage_insert(scenario, dir),
    }
}

/// Runs every stage in order, then scores the run against ground truth.
/// Writes metrics.json plus wall-clock timings.csv and returns the report.
pub fn run_all(scenario: &ScenarioConfig, dir: &RunDir) -> Result<crate::metrics::MetricsReport> {
    std::fs::create_dir_all(&dir.root)?;
    let mut timings = Vec::new();
    for stage in Stage::ALL {
        let start = Instant::now();
        run_stage(stage, scenario, dir)?;
        timings.push((stage.name().to_string(), start.elapsed().as_secs_f64()));
    }
    let start = Instant::now();
    let report = compute_run_metrics(scenario, dir)?;
    timings.push(("metrics".to_string(), start.elapsed().as_secs_f64()));
    let mut report = report;
    report.stage_runtimes_s = timings.clone();
    artifacts::write_metrics(&dir.metrics(), &report)?;
    artifacts::write_timings(&dir.timings(), &timings)?;
    Ok(report)
}

/// Scores an existing run directory against the scenario's ground truth.
/// Errors list every missing artifact at once.
pub fn compute_run_metrics(
    scenario: &ScenarioConfig,
    dir: &RunDir,
) -> Result<crate::metrics::MetricsReport> {
    let required = [dir.vessels(), dir.trial()];
    let missing: Vec<String> = required
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Pipeline(format!("missing artifacts: {}", missing.join(", "))));
    }
    let phantom = scenario.load_phantom()?;
    let models = artifacts::read_vessels(&dir.vessels())?;
    let trial = artifacts::read_trial(&dir.trial())?;
    Ok(crate::metrics::compute_metrics(&phantom, &models, Some(&trial)))
}

/// Convenience: full run into a directory path.
pub fn run_to(scenario: &ScenarioConfig, out: &Path) -> Result<crate::metrics::MetricsReport> {
    run_all(scenario, &RunDir::new(out))
}
