//! 3D vessel reconstruction from tracked contours.
//!
//! Each track's contours are lifted into world space through their probe
//! poses, parameterized by projected distance along a total-least-squares
//! line (oriented distal → proximal), and fitted with a penalized cubic
//! spline plus a single median radius. Overlapping models are then merged
//! recursively — refitting over the union of centroid sets — until no pair
//! qualifies.

use std::collections::BTreeMap;

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::{ProbePose, UltrasoundFrame, VesselKind};
use crate::spline::{fit_spline, CubicSpline};
use crate::tracker::Track;

/// A contour lifted to world space: position of its area centroid plus the
/// equivalent-circle radius of the contour.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Centroid3D {
    pub position: Point3<f64>,
    pub equivalent_radius_mm: f64,
    pub track_id: u64,
    pub frame_id: u64,
}

/// Reconstructed vessel: spline centerline over station ∈ [0, span], one
/// radius, and provenance. `axis` is the unit linear-fit direction oriented
/// distal → proximal; station 0 sits at the distal end.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VesselModel {
    pub id: u32,
    pub spline: CubicSpline,
    pub radius_mm: f64,
    pub arc_length_mm: f64,
    pub axis: Vector3<f64>,
    pub track_ids: Vec<u64>,
    pub kind: Option<VesselKind>,
    /// Source centroids (stations ascending); retained so merges can refit.
    pub centroids: Vec<Centroid3D>,
}

impl VesselModel {
    /// Centerline samples every `step` mm of parameter (endpoints included).
    pub fn sample_centerline(&self, step: f64) -> Vec<Point3<f64>> {
        let (lo, hi) = self.spline.domain();
        let n = (((hi - lo) / step).ceil() as usize).max(1);
        (0..=n).map(|k| self.spline.eval(lo + (hi - lo) * k as f64 / n as f64)).collect()
    }
}

/// Reconstruction parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReconConfig {
    /// Curvature-penalty weight.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Interior knot spacing along the station axis, mm.
    #[serde(default = "default_knot_spacing")]
    pub knot_spacing_mm: f64,
    /// Tracks spanning less station range than this are dropped as noise.
    #[serde(default = "default_min_span")]
    pub min_span_mm: f64,
    /// Minimum observations per track.
    #[serde(default = "default_min_obs")]
    pub min_observations: usize,
    /// Distance governing both merge criteria (endpoint gap and mean
    /// inter-centerline distance).
    #[serde(default = "default_merge_dist")]
    pub merge_dist_mm: f64,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_knot_spacing() -> f64 {
    5.0
}

fn default_min_span() -> f64 {
    10.0
}

fn default_min_obs() -> usize {
    4
}

fn default_merge_dist() -> f64 {
    3.0
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            lambda: default_lambda(),
            knot_spacing_mm: default_knot_spacing(),
            min_span_mm: default_min_span(),
            min_observations: default_min_obs(),
            merge_dist_mm: default_merge_dist(),
        }
    }
}

/// Landmark axis context used to orient every reconstructed vessel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LandmarkAxis {
    pub distal: Point2<f64>,
    pub proximal: Point2<f64>,
}

impl LandmarkAxis {
    /// Unit distal → proximal direction, embedded in the world x-y plane.
    pub fn direction(&self) -> Vector3<f64> {
        let d = self.proximal - self.distal;
        Vector3::new(d.x, d.y, 0.0).normalize()
    }
}

/// Pose/imaging context a lift needs for one frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FramePose {
    pub pose: ProbePose,
    pub image_width_mm: f64,
}

/// Frame-id → pose index for a sweep.
pub fn index_poses(frames: &[UltrasoundFrame]) -> BTreeMap<u64, FramePose> {
    frames
        .iter()
        .map(|f| (f.frame_id, FramePose { pose: f.pose, image_width_mm: f.image_width_mm }))
        .collect()
}

/// Lifts every observation of a track into world space through its pose.
/// Image (u, v) maps to `pose.position + R·(u − width/2, 0, v)`. Sections
/// clipped by the lateral image border are discarded: a partial view biases
/// both the centroid and the equivalent radius toward the interior.
pub fn lift_track(track: &Track, poses: &BTreeMap<u64, FramePose>) -> Result<Vec<Centroid3D>> {
    let mut centroids = Vec::with_capacity(track.observations.len());
    for (frame_id, contour) in &track.observations {
        let fp = poses
            .get(frame_id)
            .ok_or(Error::MissingPose { frame_id: *frame_id })?;
        let touches_border = contour
            .points
            .iter()
            .any(|p| p.x <= 1e-9 || p.x >= fp.image_width_mm - 1e-9);
        if touches_border {
            continue;
        }
        let position = fp.pose.frame().image_to_world(contour.centroid(), fp.image_width_mm);
        centroids.push(Centroid3D {
            position,
            equivalent_radius_mm: contour.equivalent_radius(),
            track_id: track.track_id,
            frame_id: *frame_id,
        });
    }
    Ok(centroids)
}

/// Total-least-squares line through the centroid positions: mean point plus
/// the dominant principal axis of the scatter matrix, oriented so the
/// direction points from the distal landmark side toward the proximal one.
pub fn linear_fit(
    centroids: &[Centroid3D],
    landmarks: &LandmarkAxis,
) -> Result<(Point3<f64>, Vector3<f64>)> {
    if centroids.len() < 2 {
        return Err(Error::DegenerateGeometry("linear fit needs >= 2 centroids".into()));
    }
    let n = centroids.len() as f64;
    let mut mean = Vector3::zeros();
    for c in centroids {
        mean += c.position.coords;
    }
    mean /= n;
    let mut scatter = nalgebra::Matrix3::zeros();
    for c in centroids {
        let d = c.position.coords - mean;
        scatter += d * d.transpose();
    }
    if scatter.norm() < 1e-12 {
        return Err(Error::DegenerateGeometry("all centroids coincide".into()));
    }
    let eig = nalgebra::SymmetricEigen::new(scatter);
    let mut idx = 0;
    for k in 1..3 {
        if eig.eigenvalues[k] > eig.eigenvalues[idx] {
            idx = k;
        }
    }
    let mut dir = eig.eigenvectors.column(idx).into_owned().normalize();
    let toward_proximal = landmarks.direction();
    let dot = dir.dot(&toward_proximal);
    if dot < 0.0 {
        dir = -dir;
    } else if dot == 0.0 {
        // Perpendicular to the landmark axis: canonicalize deterministically.
        if dir.z < 0.0 || (dir.z == 0.0 && (dir.x < 0.0 || (dir.x == 0.0 && dir.y < 0.0))) {
            dir = -dir;
        }
    }
    Ok((Point3::from(mean), dir))
}

/// Projects each centroid onto the line: station = (p − point)·direction.
/// Returns (original index, station) sorted ascending by station, ties by
/// original index.
pub fn parameterize(
    centroids: &[Centroid3D],
    line_point: Point3<f64>,
    line_dir: Vector3<f64>,
) -> Vec<(usize, f64)> {
    let mut stations: Vec<(usize, f64)> = centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, (c.position - line_point).dot(&line_dir)))
        .collect();
    stations.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    stations
}

/// Median of the per-contour equivalent radii (mean of the two middle values
/// for even counts).
pub fn estimate_radius(centroids: &[Centroid3D]) -> f64 {
    assert!(!centroids.is_empty(), "radius needs >= 1 centroid");
    let mut radii: Vec<f64> = centroids.iter().map(|c| c.equivalent_radius_mm).collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = radii.len();
    if n % 2 == 1 {
        radii[n / 2]
    } else {
        0.5 * (radii[n / 2 - 1] + radii[n / 2])
    }
}

/// Builds one vessel model from a centroid set (the track-level path and the
/// merge refit both land here). Stations are shifted so the distal end is 0.
fn build_model(
    id: u32,
    mut centroids: Vec<Centroid3D>,
    kind: Option<VesselKind>,
    track_ids: Vec<u64>,
    landmarks: &LandmarkAxis,
    config: &ReconConfig,
) -> Result<VesselModel> {
    if centroids.len() < config.min_observations {
        return Err(Error::InsufficientExtent { span_mm: 0.0, min_mm: config.min_span_mm });
    }
    let (point, dir) = linear_fit(&centroids, landmarks)?;
    let stations = parameterize(&centroids, point, dir);
    let span = stations.last().unwrap().1 - stations.first().unwrap().1;
    if span < config.min_span_mm {
        return Err(Error::InsufficientExtent { span_mm: span, min_mm: config.min_span_mm });
    }
    let s0 = stations.first().unwrap().1;
    // Reorder centroids by ascending station; fit over 0-based stations.
    let ordered: Vec<Centroid3D> = stations.iter().map(|&(i, _)| centroids[i]).collect();
    let shifted: Vec<f64> = stations.iter().map(|&(_, s)| s - s0).collect();
    let points: Vec<Point3<f64>> = ordered.iter().map(|c| c.position).collect();
    let spline = fit_spline(&shifted, &points, config.lambda, config.knot_spacing_mm)?;
    let radius_mm = estimate_radius(&ordered);
    let arc_length_mm = spline.arc_length();
    centroids = ordered;
    Ok(VesselModel {
        id,
        spline,
        radius_mm,
        arc_length_mm,
        axis: dir,
        track_ids,
        kind,
        centroids,
    })
}

/// Merge decision for one candidate pair: project both centroid sets onto a
/// common line fitted to their union; merge when the station intervals
/// overlap (or their gap is within `merge_dist`) AND the centerlines stay
/// within `merge_dist` of each other over the shared/nearest region.
fn should_merge(
    a: &VesselModel,
    b: &VesselModel,
    landmarks: &LandmarkAxis,
    merge_dist: f64,
) -> bool {
    let mut union: Vec<Centroid3D> = a.centroids.clone();
    union.extend_from_slice(&b.centroids);
    let Ok((point, dir)) = linear_fit(&union, landmarks) else {
        return false;
    };
    let interval = |m: &VesselModel| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &m.centroids {
            let s = (c.position - point).dot(&dir);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    };
    let (a_lo, a_hi) = interval(a);
    let (b_lo, b_hi) = interval(b);
    let overlap_lo = a_lo.max(b_lo);
    let overlap_hi = a_hi.min(b_hi);
    let gap = overlap_lo - overlap_hi; // negative when intervals overlap

    let samples_b = b.sample_centerline(1.0);
    let nearest_to_b = |p: Point3<f64>| -> f64 {
        samples_b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)
    };

    if gap <= 0.0 {
        // Overlapping intervals: mean distance from A's centerline samples
        // inside the shared interval to B's centerline.
        let samples_a = a.sample_centerline(1.0);
        let mut sum = 0.0;
        let mut count = 0usize;
        for p in &samples_a {
            let s = (p - point).dot(&dir);
            if s >= overlap_lo - 1e-9 && s <= overlap_hi + 1e-9 {
                sum += nearest_to_b(*p);
                count += 1;
            }
        }
        if count == 0 {
            return false;
        }
        (sum / count as f64) < merge_dist
    } else if gap <= merge_dist {
        // End-to-end continuation: nearest endpoints must be close.
        let (a_lo_p, a_hi_p) = {
            let (lo, hi) = a.spline.domain();
            (a.spline.eval(lo), a.spline.eval(hi))
        };
        let min_end = nearest_to_b(a_lo_p).min(nearest_to_b(a_hi_p));
        min_end < merge_dist
    } else {
        false
    }
}

/// Recursively merges overlapping models until no pair qualifies. Each merge
/// refits a single spline over the union of both centroid sets and
/// recomputes the radius. Model count strictly decreases per round, so the
/// loop terminates; the result is a fixed point of the procedure.
pub fn merge_models(
    models: Vec<VesselModel>,
    landmarks: &LandmarkAxis,
    config: &ReconConfig,
) -> Vec<VesselModel> {
    let mut models = models;
    'merge: loop {
        for i in 0..models.len() {
            for j in (i + 1)..models.len() {
                if !should_merge(&models[i], &models[j], landmarks, config.merge_dist_mm) {
                    continue;
                }
                let b = models.remove(j);
                let a = models.remove(i);
                let mut centroids = a.centroids;
                centroids.extend(b.centroids);
                let mut track_ids = a.track_ids;
                track_ids.extend(b.track_ids);
                track_ids.sort_unstable();
                track_ids.dedup();
                let kind = match (a.kind, b.kind) {
                    (Some(k), _) => Some(k),
                    (None, k) => k,
                };
                match build_model(a.id, centroids, kind, track_ids, landmarks, config) {
                    Ok(merged) => models.insert(i, merged),
                    Err(_) => {
                        // Refit cannot fail for unions of valid models, but
                        // never lose vessels if it somehow does.
                        unreachable!("merged centroid set spans at least its parents")
                    }
                }
                continue 'merge;
            }
        }
        break;
    }
    // Renumber deterministically by distal-end station along the landmarks.
    models.sort_by(|a, b| {
        let pa = a.spline.eval(a.spline.domain().0);
        let pb = b.spline.eval(b.spline.domain().0);
        let la = Vector3::new(pa.x, pa.y, pa.z).dot(&landmarks.direction());
        let lb = Vector3::new(pb.x, pb.y, pb.z).dot(&landmarks.direction());
        la.partial_cmp(&lb)
            .unwrap()
            .then_with(|| a.track_ids.cmp(&b.track_ids))
    });
    for (i, m) in models.iter_mut().enumerate() {
        m.id = i as u32;
    }
    models
}

/// Full reconstruction: lift each usable track, fit a model per track, then
/// merge. Tracks too short or too sparse are silently dropped as noise.
pub fn reconstruct(
    tracks: &[Track],
    poses: &BTreeMap<u64, FramePose>,
    landmarks: &LandmarkAxis,
    config: &ReconConfig,
) -> Result<Vec<VesselModel>> {
    let mut models = Vec::new();
    for track in tracks {
        if track.observations.len() < config.min_observations {
            continue;
        }
        let centroids = lift_track(track, poses)?;
        match build_model(
            models.len() as u32,
            centroids,
            track.majority_kind(),
            vec![track.track_id],
            landmarks,
            config,
        ) {
            Ok(model) => models.push(model),
            Err(Error::InsufficientExtent { .. }) | Err(Error::DegenerateGeometry(_)) => {
                continue; // noise fragment: drop
            }
            Err(e) => return Err(e),
        }
    }
    Ok(merge_models(models, landmarks, config))
}
