//! Artifact serialization: every JSON artifact is pretty-printed with a
//! top-level `schema_version`; pressure traces are CSV for spreadsheet
//! inspection. Loaders report the offending path on any mismatch.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::needle::{AttemptRecord, TrialReport};
use crate::phantom::{UltrasoundFrame, VesselKind};
use crate::planner::InsertionPlan;
use crate::recon::VesselModel;
use crate::spline::CubicSpline;
use crate::tracker::Track;

pub const SCHEMA_VERSION: u32 = 1;

/// Standard artifact file names inside a run directory.
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn frames(&self) -> PathBuf {
        self.root.join("frames.json")
    }
    pub fn tracks(&self) -> PathBuf {
        self.root.join("tracks.json")
    }
    pub fn vessels(&self) -> PathBuf {
        self.root.join("vessels.json")
    }
    pub fn plan(&self) -> PathBuf {
        self.root.join("plan.json")
    }
    pub fn trial(&self) -> PathBuf {
        self.root.join("trial.json")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }
    pub fn traces(&self) -> PathBuf {
        self.root.join("traces")
    }
    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.csv")
    }
    pub fn reason(&self) -> PathBuf {
        self.root.join("reason.json")
    }
}

/// Writes pretty JSON with a trailing newline, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{}: schema_version {version} unsupported (expected {SCHEMA_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct FramesArtifact {
    schema_version: u32,
    frames: Vec<UltrasoundFrame>,
}

pub fn write_frames(path: &Path, frames: &[UltrasoundFrame]) -> Result<()> {
    write_json(path, &FramesArtifact { schema_version: SCHEMA_VERSION, frames: frames.to_vec() })
}

pub fn read_frames(path: &Path) -> Result<Vec<UltrasoundFrame>> {
    let artifact: FramesArtifact = read_json(path)?;
    check_version(path, artifact.schema_version)?;
    Ok(artifact.frames)
}

#[derive(Serialize, Deserialize)]
struct TracksArtifact {
    schema_version: u32,
    tracks: Vec<Track>,
}

pub fn write_tracks(path: &Path, tracks: &[Track]) -> Result<()> {
    write_json(path, &TracksArtifact { schema_version: SCHEMA_VERSION, tracks: tracks.to_vec() })
}

pub fn read_tracks(path: &Path) -> Result<Vec<Track>> {
    let artifact: TracksArtifact = read_json(path)?;
    check_version(path, artifact.schema_version)?;
    Ok(artifact.tracks)
}

/// One vessel model on disk. The fitted spline is authoritative when
/// present; hand-written files may instead give `samples` (a centerline
/// polyline) and a spline is fitted on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VesselArtifact {
    pub id: u32,
    pub radius_mm: f64,
    #[serde(default)]
    pub kind: Option<VesselKind>,
    #[serde(default)]
    pub track_ids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spline: Option<CubicSpline>,
    /// Centerline sampled every millimeter of arc (also the hand-written
    /// fallback input).
    pub samples: Vec<[f64; 3]>,
}

impl VesselArtifact {
    pub fn from_model(model: &VesselModel) -> Self {
        VesselArtifact {
            id: model.id,
            radius_mm: model.radius_mm,
            kind: model.kind,
            track_ids: model.track_ids.clone(),
            spline: Some(model.spline.clone()),
            samples: model
                .sample_centerline(1.0)
                .into_iter()
                .map(|p| [p.x, p.y, p.z])
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<VesselModel> {
        let spline = match self.spline {
            Some(s) => s,
            None => {
                // Fit from the polyline: stations are cumulative chord length.
                let points: Vec<Point3<f64>> =
                    self.samples.iter().map(|&[x, y, z]| Point3::new(x, y, z)).collect();
                if points.len() < 4 {
                    return Err(Error::Validation(format!(
                        "vessel {}: need a spline or >= 4 centerline samples",
                        self.id
                    )));
                }
                let mut stations = Vec::with_capacity(points.len());
                let mut acc = 0.0;
                stations.push(0.0);
                for w in points.windows(2) {
                    acc += (w[1] - w[0]).norm();
                    stations.push(acc);
                }
                // Knot spacing wide enough that the fit stays overdetermined
                // even for sparse hand-written polylines.
                let spacing = (acc / points.len().saturating_sub(4).max(2) as f64).max(5.0);
                crate::spline::fit_spline(&stations, &points, 0.0, spacing)?
            }
        };
        let arc_length_mm = spline.arc_length();
        let start = spline.eval(spline.domain().0);
        let end = spline.eval(spline.domain().1);
        let axis = (end - start).try_normalize(1e-9).unwrap_or_else(Vector3::x);
        Ok(VesselModel {
            id: self.id,
            spline,
            radius_mm: self.radius_mm,
            arc_length_mm,
            axis,
            track_ids: self.track_ids,
            kind: self.kind,
            centroids: Vec::new(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct VesselsArtifact {
    schema_version: u32,
    vessels: Vec<VesselArtifact>,
}

pub fn write_vessels(path: &Path, models: &[VesselModel]) -> Result<()> {
    let vessels = models.iter().map(VesselArtifact::from_model).collect();
    write_json(path, &VesselsArtifact { schema_version: SCHEMA_VERSION, vessels })
}

pub fn read_vessels(path: &Path) -> Result<Vec<VesselModel>> {
    let artifact: VesselsArtifact = read_json(path)?;
    check_version(path, artifact.schema_version)?;
    artifact.vessels.into_iter().map(VesselArtifact::into_model).collect()
}

#[derive(Serialize, Deserialize)]
struct PlanArtifact {
    schema_version: u32,
    plan: InsertionPlan,
}

pub fn write_plan(path: &Path, plan: &InsertionPlan) -> Result<()> {
    write_json(path, &PlanArtifact { schema_version: SCHEMA_VERSION, plan: plan.clone() })
}

pub fn read_plan(path: &Path) -> Result<InsertionPlan> {
    let artifact: PlanArtifact = read_json(path)?;
    check_version(path, artifact.schema_version)?;
    Ok(artifact.plan)
}

#[derive(Serialize, Deserialize)]
struct TrialArtifact {
    schema_version: u32,
    trial: TrialReport,
}

pub fn write_trial(path: &Path, trial: &TrialReport) -> Result<()> {
    write_json(path, &TrialArtifact { schema_version: SCHEMA_VERSION, trial: trial.clone() })
}

pub fn read_trial(path: &Path) -> Result<TrialReport> {
    let artifact: TrialArtifact = read_json(path)?;
    check_version(path, artifact.schema_version)?;
    Ok(artifact.trial)
}

#[derive(Serialize, Deserialize)]
struct MetricsArtifact {
    schema_version: u32,
    metrics: crate::metrics::MetricsReport,
}

pub fn write_metrics(path: &Path, metrics: &crate::metrics::MetricsReport) -> Result<()> {
    write_json(path, &MetricsArtifact { schema_version: SCHEMA_VERSION, metrics: metrics.clone() })
}

pub fn read_metrics(path: &Path) -> Result<crate::metrics::MetricsReport> {
    let artifact: MetricsArtifact = read_json(path)?;
    check_version(path, artifact.schema_version)?;
    Ok(artifact.metrics)
}

/// Pressure trace CSV: `time_s,pressure_mmhg,flashback,state`.
pub fn trace_csv(record: &AttemptRecord) -> String {
    let mut out = String::from("time_s,pressure_mmhg,flashback,state\n");
    for s in &record.samples {
        out.push_str(&format!(
            "{:.3},{:.6},{},{}\n",
            s.time_s,
            s.pressure_mmhg,
            u8::from(s.flashback),
            s.state.as_str()
        ));
    }
    out
}

/// Writes one CSV per attempt under `dir` (attempt_000.csv, …).
pub fn write_traces(dir: &Path, trial: &TrialReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, attempt) in trial.attempts.iter().enumerate() {
        std::fs::write(dir.join(format!("attempt_{i:03}.csv")), trace_csv(attempt))?;
    }
    Ok(())
}

/// Stage wall-clock runtimes; CSV by design so the JSON artifact set stays
/// byte-identical across reruns of the same seed.
pub fn write_timings(path: &Path, timings: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("stage,seconds\n");
    for (stage, seconds) in timings {
        out.push_str(&format!("{stage},{seconds:.6}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Machine-readable failure reason for non-zero exits.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReasonFile {
    pub schema_version: u32,
    pub exit_code: i32,
    pub reason: String,
}

pub fn write_reason(path: &Path, exit_code: i32, reason: &str) {
    let file = ReasonFile { schema_version: SCHEMA_VERSION, exit_code, reason: reason.into() };
    // Best effort: the reason file must never mask the original error.
    let _ = write_json(path, &file);
}
