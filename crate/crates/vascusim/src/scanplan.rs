//! Surface-cloud cropping and raster sweep planning with admittance-style
//! surface following.
//!
//! The sweep runs parallel passes along the proximal–distal landmark axis,
//! each pass overlapping its neighbor by one-third of the probe width
//! (pitch = 2/3 · width), serpentine travel. Pose heights and orientations
//! come from local plane fits of the (possibly noisy) cropped cloud, so the
//! planner only ever sees what the surface camera saw.

use nalgebra::{Point2, Point3, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{polygon, sweep_orientation};
use crate::phantom::{Phantom, PointCloud, ProbePose, UltrasoundFrame};

/// User-designated scan region: four corner "clicks" plus the two landmark
/// points that define the proximal→distal axis (hip side / knee side).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CropRegion {
    pub corners: [Point2<f64>; 4],
    pub proximal: Point2<f64>,
    pub distal: Point2<f64>,
}

impl CropRegion {
    pub fn validate(&self) -> Result<()> {
        if !polygon::is_simple(&self.corners) {
            return Err(Error::Validation("crop corners must form a simple quadrilateral".into()));
        }
        if polygon::area(&self.corners) <= 1e-9 {
            return Err(Error::Validation("crop quadrilateral has no area".into()));
        }
        if (self.proximal - self.distal).norm() < 1e-9 {
            return Err(Error::Validation("proximal and distal landmarks coincide".into()));
        }
        Ok(())
    }

    /// Unit axis pointing distal → proximal.
    pub fn axis(&self) -> Vector2<f64> {
        (self.proximal - self.distal).normalize()
    }
}

/// Raster sweep: ordered passes of ordered poses. Travel alternates
/// direction between consecutive passes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPath {
    pub passes: Vec<Vec<ProbePose>>,
    pub probe_width_mm: f64,
    pub pass_pitch_mm: f64,
}

impl ScanPath {
    pub fn poses(&self) -> impl Iterator<Item = &ProbePose> {
        self.passes.iter().flatten()
    }

    pub fn pose_count(&self) -> usize {
        self.passes.iter().map(Vec::len).sum()
    }
}

/// Raster generation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RasterParams {
    pub probe_width_mm: f64,
    /// Gap kept between probe face and estimated surface (0 = contact).
    #[serde(default)]
    pub standoff_mm: f64,
    /// Pose spacing along a pass.
    #[serde(default = "default_pose_step")]
    pub pose_step_mm: f64,
    /// Time between consecutive frames.
    #[serde(default = "default_frame_dt")]
    pub frame_dt_s: f64,
    /// Neighborhood radius for local surface plane fits.
    #[serde(default = "default_fit_radius")]
    pub surface_fit_radius_mm: f64,
    /// When true, passes run across the landmark axis instead of along it.
    #[serde(default)]
    pub cross_axis: bool,
}

fn default_pose_step() -> f64 {
    1.0
}

fn default_frame_dt() -> f64 {
    0.05
}

fn default_fit_radius() -> f64 {
    6.0
}

impl Default for RasterParams {
    fn default() -> Self {
        RasterParams {
            probe_width_mm: 38.0,
            standoff_mm: 0.0,
            pose_step_mm: default_pose_step(),
            frame_dt_s: default_frame_dt(),
            surface_fit_radius_mm: default_fit_radius(),
            cross_axis: false,
        }
    }
}

/// Keeps exactly the cloud points whose (x, y) lie inside the crop
/// quadrilateral, preserving order.
pub fn crop_cloud(cloud: &PointCloud, region: &CropRegion) -> Result<PointCloud> {
    region.validate()?;
    let mut out = PointCloud::default();
    for (p, n) in cloud.points.iter().zip(&cloud.normals) {
        if polygon::contains_point(&region.corners, Point2::new(p.x, p.y)) {
            out.points.push(*p);
            out.normals.push(*n);
        }
    }
    Ok(out)
}

/// Local surface estimate at (x, y): height and unit upward normal from a
/// least-squares plane over cloud neighbors, falling back to the nearest
/// point when the neighborhood is too sparse for a stable fit.
pub fn estimate_local_frame(cloud: &PointCloud, x: f64, y: f64, radius: f64) -> (f64, Vector3<f64>) {
    let r2 = radius * radius;
    let mut neighbors: Vec<&Point3<f64>> = Vec::new();
    for p in &cloud.points {
        let dx = p.x - x;
        let dy = p.y - y;
        if dx * dx + dy * dy <= r2 {
            neighbors.push(p);
        }
    }
    if neighbors.len() >= 6 {
        let nf = neighbors.len() as f64;
        let mut c = Vector3::zeros();
        for p in &neighbors {
            c += p.coords;
        }
        c /= nf;
        let mut cov = nalgebra::Matrix3::zeros();
        for p in &neighbors {
            let d = p.coords - c;
            cov += d * d.transpose();
        }
        let eig = nalgebra::SymmetricEigen::new(cov);
        // Smallest-eigenvalue eigenvector is the plane normal.
        let mut idx = 0;
        for k in 1..3 {
            if eig.eigenvalues[k] < eig.eigenvalues[idx] {
                idx = k;
            }
        }
        let mut n = eig.eigenvectors.column(idx).into_owned();
        if n.z < 0.0 {
            n = -n;
        }
        if n.z > 1e-6 {
            let z = c.z - (n.x * (x - c.x) + n.y * (y - c.y)) / n.z;
            return (z, n.normalize());
        }
    }
    // Sparse or degenerate: nearest point, vertical normal.
    let nearest = cloud
        .points
        .iter()
        .min_by(|a, b| {
            let da = (a.x - x).powi(2) + (a.y - y).powi(2);
            let db = (b.x - x).powi(2) + (b.y - y).powi(2);
            da.partial_cmp(&db).unwrap()
        })
        .expect("non-empty cloud");
    (nearest.z, Vector3::z())
}

/// Generates the serpentine raster path over a cropped cloud. Passes run
/// along the distal→proximal axis; pass pitch is exactly two-thirds of the
/// probe width so adjacent footprints overlap by one-third.
pub fn generate_raster_path(
    cropped: &PointCloud,
    region: &CropRegion,
    params: &RasterParams,
) -> Result<ScanPath> {
    if params.probe_width_mm <= 0.0 {
        return Err(Error::Validation("probe width must be > 0".into()));
    }
    if params.pose_step_mm <= 0.0 {
        return Err(Error::Validation("pose step must be > 0".into()));
    }
    if cropped.is_empty() {
        return Err(Error::Validation("cropped cloud is empty; nothing to scan".into()));
    }
    region.validate()?;

    let along = if params.cross_axis {
        let a = region.axis();
        Vector2::new(-a.y, a.x)
    } else {
        region.axis()
    };
    let lateral = Vector2::new(-along.y, along.x);
    let origin = region.distal;

    // Project the cropped points into (along, lateral) coordinates.
    let mut s_min = f64::INFINITY;
    let mut s_max = f64::NEG_INFINITY;
    let mut l_min = f64::INFINITY;
    let mut l_max = f64::NEG_INFINITY;
    for p in &cropped.points {
        let d = Point2::new(p.x, p.y) - origin;
        let s = d.dot(&along);
        let l = d.dot(&lateral);
        s_min = s_min.min(s);
        s_max = s_max.max(s);
        l_min = l_min.min(l);
        l_max = l_max.max(l);
    }

    let w = params.probe_width_mm;
    let pitch = w * (2.0 / 3.0);
    let extent = l_max - l_min;
    // Footprint centers: a single centered pass when one footprint suffices,
    // otherwise first center at l_min + w/2 and stepping by the pitch until
    // the union of footprints reaches l_max.
    let centers: Vec<f64> = if extent <= w {
        vec![0.5 * (l_min + l_max)]
    } else {
        let k = ((extent - w) / pitch).ceil() as usize + 1;
        (0..k).map(|i| l_min + 0.5 * w + i as f64 * pitch).collect()
    };

    let span = (s_max - s_min).max(params.pose_step_mm);
    let n_steps = (span / params.pose_step_mm).ceil() as usize;

    let mut passes = Vec::with_capacity(centers.len());
    let mut frame_id = 0u64;
    for (pass_idx, &lc) in centers.iter().enumerate() {
        let reverse = pass_idx % 2 == 1;
        let mut pass = Vec::with_capacity(n_steps + 1);
        let travel2 = if reverse { -along } else { along };
        let travel3 = Vector3::new(travel2.x, travel2.y, 0.0);
        for i in 0..=n_steps {
            let frac = i as f64 / n_steps as f64;
            let s = if reverse {
                s_max - span.min(s_max - s_min) * frac
            } else {
                s_min + span.min(s_max - s_min) * frac
            };
            let xy = origin + along * s + lateral * lc;
            let (z, normal) =
                estimate_local_frame(cropped, xy.x, xy.y, params.surface_fit_radius_mm);
            let orientation = sweep_orientation(travel3, normal).ok_or_else(|| {
                Error::DegenerateGeometry(format!(
                    "surface normal parallel to travel at ({:.1}, {:.1})",
                    xy.x, xy.y
                ))
            })?;
            pass.push(ProbePose {
                frame_id,
                timestamp_s: frame_id as f64 * params.frame_dt_s,
                position: Point3::new(xy.x, xy.y, z + params.standoff_mm),
                orientation,
            });
            frame_id += 1;
        }
        passes.push(pass);
    }

    Ok(ScanPath { passes, probe_width_mm: w, pass_pitch_mm: pitch })
}

/// Admittance controller state for surface following along the probe normal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmittanceState {
    /// Retraction offset along the outward surface normal, mm.
    pub offset_mm: f64,
    pub desired_force_n: f64,
    pub damping_n_s_per_mm: f64,
    pub measured_force_n: f64,
}

impl Default for AdmittanceState {
    fn default() -> Self {
        AdmittanceState {
            offset_mm: 0.0,
            desired_force_n: 4.0,
            damping_n_s_per_mm: 5.0,
            measured_force_n: 0.0,
        }
    }
}

/// One velocity-admittance integration step: excess contact force retracts
/// the probe, deficit advances it. Returns the updated offset.
pub fn admittance_step(state: &mut AdmittanceState, measured_force_n: f64, dt_s: f64) -> f64 {
    debug_assert!(dt_s > 0.0 && state.damping_n_s_per_mm > 0.0);
    state.measured_force_n = measured_force_n;
    state.offset_mm += dt_s * (measured_force_n - state.desired_force_n) / state.damping_n_s_per_mm;
    state.offset_mm
}

/// Executes a sweep: one synthesized frame per pose, in path order.
/// Fails if any pose falls outside the phantom's surface domain.
pub fn execute_sweep(
    phantom: &Phantom,
    path: &ScanPath,
    image_depth_mm: f64,
    rng: &mut impl Rng,
) -> Result<Vec<UltrasoundFrame>> {
    let domain = phantom.surface.domain();
    let noise = phantom.scenario.noise;
    let mut frames = Vec::with_capacity(path.pose_count());
    for (index, pose) in path.poses().enumerate() {
        if !domain.contains(pose.position.x, pose.position.y) {
            return Err(Error::PoseOutsideDomain {
                index,
                x: pose.position.x,
                y: pose.position.y,
            });
        }
        frames.push(crate::phantom::synthesize_frame(
            phantom,
            pose,
            path.probe_width_mm,
            image_depth_mm,
            &noise,
            rng,
        ));
    }
    debug_assert!(frames.windows(2).all(|w| w[0].frame_id < w[1].frame_id));
    Ok(frames)
}
