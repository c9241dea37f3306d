//! Insertion-point planning and in-image centering.
//!
//! Candidate points are sampled every 10 mm of arc length from the distal end
//! of each vessel model, filtered by workspace reachability and minimum
//! vessel radius, and ordered by projection onto the distal→proximal axis
//! (most distal first by default, preserving upstream sites for later
//! attempts).

use nalgebra::{Point2, Point3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::{Phantom, ProbePose, UltrasoundFrame};
use crate::recon::{LandmarkAxis, VesselModel};

/// One candidate needle target on a vessel centerline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InsertionPoint {
    pub vessel_id: u32,
    /// Arc length from the distal end of the model, mm.
    pub station_mm: f64,
    pub position: Point3<f64>,
    /// Unit centerline tangent at the point.
    pub tangent: Vector3<f64>,
    /// Skin-to-point depth along -z, mm.
    pub expected_depth_mm: f64,
    /// Radius of the owning vessel model, mm.
    pub vessel_radius_mm: f64,
}

/// Reachable region: a sphere around the robot base intersected with the
/// half-space above `min_z` (no targets through the table).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Workspace {
    pub center: Point3<f64>,
    pub radius_mm: f64,
    #[serde(default)]
    pub min_z_mm: f64,
}

impl Workspace {
    pub fn contains(&self, p: Point3<f64>) -> bool {
        (p - self.center).norm() <= self.radius_mm && p.z >= self.min_z_mm
    }
}

impl Default for Workspace {
    fn default() -> Self {
        // UR3e-class reach from a base beside the phantom.
        Workspace { center: Point3::new(60.0, 40.0, 100.0), radius_mm: 500.0, min_z_mm: 0.0 }
    }
}

/// Why candidate points were removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub radius: usize,
    pub reachability: usize,
}

/// Final ordered plan plus the filter tally.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InsertionPlan {
    /// Attempt order.
    pub points: Vec<InsertionPoint>,
    pub filtered: FilterCounts,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlannerConfig {
    #[serde(default = "default_spacing")]
    pub spacing_mm: f64,
    /// Vessels thinner than this are not worth attempting.
    #[serde(default = "default_min_radius")]
    pub min_radius_mm: f64,
    #[serde(default)]
    pub workspace: Workspace,
    /// Flips the attempt order to proximal-first.
    #[serde(default)]
    pub proximal_first: bool,
    #[serde(default = "default_gain")]
    pub centering_gain: f64,
    #[serde(default = "default_center_tol")]
    pub centering_tol_mm: f64,
    #[serde(default = "default_center_iters")]
    pub centering_max_iters: usize,
}

fn default_spacing() -> f64 {
    10.0
}

fn default_min_radius() -> f64 {
    2.0
}

fn default_gain() -> f64 {
    1.0
}

fn default_center_tol() -> f64 {
    1.0
}

fn default_center_iters() -> usize {
    20
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            spacing_mm: default_spacing(),
            min_radius_mm: default_min_radius(),
            workspace: Workspace::default(),
            proximal_first: false,
            centering_gain: default_gain(),
            centering_tol_mm: default_center_tol(),
            centering_max_iters: default_center_iters(),
        }
    }
}

/// Samples candidate points at arc-length stations 0, spacing, 2·spacing, …
/// from the distal end. `skin_height` supplies the surface z above a point
/// for the expected-depth field.
pub fn sample_points(
    vessel: &VesselModel,
    spacing_mm: f64,
    skin_height: impl Fn(f64, f64) -> f64,
) -> Vec<InsertionPoint> {
    debug_assert!(spacing_mm > 0.0);
    let table = vessel.spline.arc_table(0.05);
    let total = table.total();
    let mut points = Vec::new();
    let mut station = 0.0;
    while station <= total + 1e-9 {
        let t = table.param_at_arc(station.min(total));
        let position = vessel.spline.eval(t);
        points.push(InsertionPoint {
            vessel_id: vessel.id,
            station_mm: station.min(total),
            position,
            tangent: vessel.spline.tangent(t),
            expected_depth_mm: skin_height(position.x, position.y) - position.z,
            vessel_radius_mm: vessel.radius_mm,
        });
        station += spacing_mm;
    }
    points
}

/// Drops points outside the workspace or on vessels thinner than
/// `min_radius`. Order is preserved; removals are tallied by reason.
pub fn filter_points(
    points: &[InsertionPoint],
    workspace: &Workspace,
    min_radius_mm: f64,
) -> (Vec<InsertionPoint>, FilterCounts) {
    let mut counts = FilterCounts::default();
    let kept = points
        .iter()
        .filter(|p| {
            if p.vessel_radius_mm < min_radius_mm {
                counts.radius += 1;
                return false;
            }
            if !workspace.contains(p.position) {
                counts.reachability += 1;
                return false;
            }
            true
        })
        .copied()
        .collect();
    (kept, counts)
}

/// Orders candidates by ascending projection onto the distal→proximal axis
/// (most distal attempted first), or descending with `proximal_first`. The
/// (projection, vessel_id, station) key is a strict total order, so the plan
/// is independent of candidate arrival order.
pub fn order_points(
    mut points: Vec<InsertionPoint>,
    landmarks: &LandmarkAxis,
    proximal_first: bool,
    filtered: FilterCounts,
) -> InsertionPlan {
    let axis = landmarks.direction();
    let key = |p: &InsertionPoint| Vector3::new(p.position.x, p.position.y, 0.0).dot(&axis);
    points.sort_by(|a, b| {
        let ka = key(a);
        let kb = key(b);
        let ord = ka
            .partial_cmp(&kb)
            .unwrap()
            .then(a.vessel_id.cmp(&b.vessel_id))
            .then(a.station_mm.partial_cmp(&b.station_mm).unwrap());
        if proximal_first {
            ord.reverse()
        } else {
            ord
        }
    });
    InsertionPlan { points, filtered }
}

/// Full planning pass over reconstructed models.
pub fn plan_insertions(
    models: &[VesselModel],
    landmarks: &LandmarkAxis,
    config: &PlannerConfig,
    skin_height: impl Fn(f64, f64) -> f64,
) -> Result<InsertionPlan> {
    if models.is_empty() {
        return Err(Error::EmptyPlan { reason: "no_vessels".into() });
    }
    let mut candidates = Vec::new();
    for m in models {
        candidates.extend(sample_points(m, config.spacing_mm, &skin_height));
    }
    let (kept, filtered) = filter_points(&candidates, &config.workspace, config.min_radius_mm);
    if kept.is_empty() {
        let reason = if filtered.radius >= filtered.reachability { "radius" } else { "reachability" };
        return Err(Error::EmptyPlan { reason: reason.into() });
    }
    Ok(order_points(kept, landmarks, config.proximal_first, filtered))
}

/// Index of the frame contour matching the target vessel: maximum IoU
/// against the model's predicted section (a circle of model radius at the
/// model point nearest to the image plane). Errors with
/// [`Error::TargetLost`] when no contour overlaps the prediction.
pub fn match_target(frame: &UltrasoundFrame, target: &VesselModel) -> Result<usize> {
    let pose = frame.pose.frame();
    let samples = target.sample_centerline(1.0);
    let nearest = samples
        .iter()
        .min_by(|a, b| {
            let (_, ea) = pose.world_to_image(**a, frame.image_width_mm);
            let (_, eb) = pose.world_to_image(**b, frame.image_width_mm);
            ea.abs().partial_cmp(&eb.abs()).unwrap()
        })
        .ok_or(Error::TargetLost)?;
    let (center_uv, _) = pose.world_to_image(*nearest, frame.image_width_mm);
    let predicted: Vec<Point2<f64>> = (0..32)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 32.0;
            Point2::new(
                center_uv.x + target.radius_mm * t.cos(),
                center_uv.y + target.radius_mm * t.sin(),
            )
        })
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for (i, c) in frame.contours.iter().enumerate() {
        let iou = crate::geom::polygon::iou(&predicted, &c.points);
        if iou > 0.0 && best.is_none_or(|(b, _)| iou > b) {
            best = Some((iou, i));
        }
    }
    best.map(|(_, idx)| idx).ok_or(Error::TargetLost)
}

/// Lateral centering error of the target vessel in one frame: matched
/// contour centroid lateral coordinate minus the image center.
pub fn centering_offset(frame: &UltrasoundFrame, target: &VesselModel) -> Result<f64> {
    let idx = match_target(frame, target)?;
    Ok(frame.contours[idx].centroid().x - 0.5 * frame.image_width_mm)
}

/// Result of the centering loop: the refined pose and the frame that ended
/// the loop (used downstream to aim the needle at the observed centroid).
#[derive(Debug, Clone)]
pub struct Centered {
    pub pose: ProbePose,
    pub final_frame: UltrasoundFrame,
    pub iterations: usize,
}

/// Iteratively re-images and translates the probe along its lateral axis
/// until the target vessel is centered (|offset| ≤ tol) or the iteration
/// budget is exhausted. Probe translation is `gain × offset` toward the
/// contour (the image lateral coordinate decreases as the probe moves along
/// its +x axis).
pub fn center_probe(
    phantom: &Phantom,
    start: ProbePose,
    target: &VesselModel,
    image_width_mm: f64,
    image_depth_mm: f64,
    config: &PlannerConfig,
    rng: &mut impl Rng,
) -> Result<Centered> {
    let mut pose = start;
    let noise = phantom.scenario.noise;
    for iteration in 1..=config.centering_max_iters {
        let frame = crate::phantom::synthesize_frame(
            phantom,
            &pose,
            image_width_mm,
            image_depth_mm,
            &noise,
            rng,
        );
        let offset = centering_offset(&frame, target)?;
        if offset.abs() <= config.centering_tol_mm {
            return Ok(Centered { pose, final_frame: frame, iterations: iteration });
        }
        let lateral = pose.frame().lateral_axis();
        pose.position += lateral * (config.centering_gain * offset);
    }
    Err(Error::TargetLost)
}

/// Probe pose looking straight down at a world point from the skin, with the
/// elevation axis along the vessel tangent (the sweep convention).
pub fn probe_over(
    point: Point3<f64>,
    tangent: Vector3<f64>,
    skin_z: f64,
    frame_id: u64,
) -> ProbePose {
    let travel = Vector3::new(tangent.x, tangent.y, 0.0)
        .try_normalize(1e-9)
        .unwrap_or_else(Vector3::x);
    let orientation = crate::geom::sweep_orientation(travel, Vector3::z())
        .unwrap_or_else(UnitQuaternion::identity);
    ProbePose {
        frame_id,
        timestamp_s: 0.0,
        position: Point3::new(point.x, point.y, skin_z),
        orientation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::ReconConfig;
    use crate::spline::fit_spline;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn landmarks() -> LandmarkAxis {
        LandmarkAxis { distal: Point2::new(10.0, 40.0), proximal: Point2::new(110.0, 40.0) }
    }

    fn straight_model(id: u32, x0: f64, length: f64, y: f64, radius: f64) -> VesselModel {
        let stations: Vec<f64> = (0..=length as usize).map(|i| i as f64).collect();
        let points: Vec<Point3<f64>> =
            stations.iter().map(|&s| Point3::new(x0 + s, y, 15.0)).collect();
        let spline = fit_spline(&stations, &points, 0.0, 5.0).unwrap();
        let arc = spline.arc_length();
        VesselModel {
            id,
            spline,
            radius_mm: radius,
            arc_length_mm: arc,
            axis: Vector3::x(),
            track_ids: vec![id as u64],
            kind: Some(crate::phantom::VesselKind::Artery),
            centroids: Vec::new(),
        }
    }

    #[test]
    fn fifty_five_mm_vessel_gets_six_points() {
        let m = straight_model(0, 20.0, 55.0, 40.0, 3.0);
        let pts = sample_points(&m, 10.0, |_, _| 30.0);
        assert_eq!(pts.len(), 6);
        for (i, p) in pts.iter().enumerate() {
            assert_relative_eq!(p.station_mm, 10.0 * i as f64, epsilon = 1e-6);
            assert_relative_eq!(p.expected_depth_mm, 15.0, epsilon = 1e-6);
            assert_relative_eq!(p.tangent.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn short_vessel_gets_single_point() {
        // 5 mm of centerline → only station 0.
        let stations: Vec<f64> = (0..=5).map(|i| i as f64).collect();
        let points: Vec<Point3<f64>> =
            stations.iter().map(|&s| Point3::new(20.0 + s, 40.0, 15.0)).collect();
        let spline = fit_spline(&stations, &points, 0.0, 5.0).unwrap();
        let arc = spline.arc_length();
        let m = VesselModel {
            id: 0,
            spline,
            radius_mm: 3.0,
            arc_length_mm: arc,
            axis: Vector3::x(),
            track_ids: vec![0],
            kind: None,
            centroids: Vec::new(),
        };
        let pts = sample_points(&m, 10.0, |_, _| 30.0);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].station_mm, 0.0);
    }

    #[test]
    fn semicircle_spacing_in_arc_not_chord() {
        // Radius-30 semicircle: consecutive samples 10 ± 0.1 mm apart in arc,
        // chords strictly shorter.
        let n = 181;
        let stations: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let pts3: Vec<Point3<f64>> = (0..n)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / (n - 1) as f64;
                Point3::new(60.0 + 30.0 * t.cos(), 40.0 + 30.0 * t.sin(), 15.0)
            })
            .collect();
        let spline = fit_spline(&stations, &pts3, 0.0, 5.0).unwrap();
        let arc = spline.arc_length();
        let m = VesselModel {
            id: 0,
            spline,
            radius_mm: 3.0,
            arc_length_mm: arc,
            axis: Vector3::x(),
            track_ids: vec![0],
            kind: None,
            centroids: Vec::new(),
        };
        let pts = sample_points(&m, 10.0, |_, _| 30.0);
        assert!(pts.len() >= 9);
        let table = m.spline.arc_table(0.05);
        for w in pts.windows(2) {
            let chord = (w[1].position - w[0].position).norm();
            assert!(chord < 10.0, "chord {chord}");
            // Arc distance between consecutive stations.
            let arc_gap = w[1].station_mm - w[0].station_mm;
            if w[1].station_mm < table.total() - 1e-6 {
                assert!((arc_gap - 10.0).abs() <= 0.1, "arc gap {arc_gap}");
            }
        }
        // Verify stations measure true arc length along the curve.
        for p in &pts {
            let t = table.param_at_arc(p.station_mm);
            let mut measured = 0.0;
            let steps = 2000;
            let mut prev = m.spline.eval(0.0);
            for k in 1..=steps {
                let s = t * k as f64 / steps as f64;
                let q = m.spline.eval(s);
                measured += (q - prev).norm();
                prev = q;
            }
            assert!((measured - p.station_mm).abs() <= 0.1, "station {}", p.station_mm);
        }
    }

    #[test]
    fn thin_vessel_filtered_by_radius() {
        let m = straight_model(0, 20.0, 55.0, 40.0, 1.5);
        let pts = sample_points(&m, 10.0, |_, _| 30.0);
        let (kept, counts) = filter_points(&pts, &Workspace::default(), 2.0);
        assert!(kept.is_empty());
        assert_eq!(counts.radius, 6);
        assert_eq!(counts.reachability, 0);
    }

    #[test]
    fn out_of_workspace_point_removed() {
        let m = straight_model(0, 20.0, 55.0, 40.0, 3.0);
        let pts = sample_points(&m, 10.0, |_, _| 30.0);
        let tight = Workspace { center: Point3::new(20.0, 40.0, 15.0), radius_mm: 25.0, min_z_mm: 0.0 };
        let (kept, counts) = filter_points(&pts, &tight, 2.0);
        assert_eq!(kept.len() + counts.reachability, 6);
        assert!(counts.reachability > 0);
        for p in &kept {
            assert!(tight.contains(p.position));
        }
    }

    #[test]
    fn all_constraints_satisfied_keeps_everything() {
        let m = straight_model(0, 20.0, 55.0, 40.0, 3.0);
        let pts = sample_points(&m, 10.0, |_, _| 30.0);
        let (kept, counts) = filter_points(&pts, &Workspace::default(), 2.0);
        assert_eq!(kept.len(), 6);
        assert_eq!(counts, FilterCounts::default());
    }

    #[test]
    fn order_is_distal_first_and_reversible() {
        let m = straight_model(0, 20.0, 55.0, 40.0, 3.0);
        let pts = sample_points(&m, 10.0, |_, _| 30.0);
        let plan = order_points(pts.clone(), &landmarks(), false, FilterCounts::default());
        let xs: Vec<f64> = plan.points.iter().map(|p| p.position.x).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "distal (low x) first: {xs:?}");
        let rev = order_points(pts, &landmarks(), true, FilterCounts::default());
        let xs_rev: Vec<f64> = rev.points.iter().map(|p| p.position.x).collect();
        assert!(xs_rev.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn interleaved_vessels_tie_break_by_id() {
        let a = straight_model(0, 20.0, 40.0, 35.0, 3.0);
        let b = straight_model(1, 20.0, 40.0, 45.0, 3.0);
        let mut pts = sample_points(&b, 10.0, |_, _| 30.0);
        pts.extend(sample_points(&a, 10.0, |_, _| 30.0));
        let plan = order_points(pts, &landmarks(), false, FilterCounts::default());
        // Same x stations on both vessels → pairs ordered (vessel 0, vessel 1).
        for pair in plan.points.chunks(2) {
            assert_relative_eq!(pair[0].position.x, pair[1].position.x, epsilon = 1e-9);
            assert!(pair[0].vessel_id < pair[1].vessel_id);
        }
    }

    #[test]
    fn plan_invariant_to_candidate_permutation() {
        let a = straight_model(0, 20.0, 40.0, 35.0, 3.0);
        let b = straight_model(1, 25.0, 40.0, 45.0, 3.0);
        let mut pts = sample_points(&a, 10.0, |_, _| 30.0);
        pts.extend(sample_points(&b, 10.0, |_, _| 30.0));
        let plan1 = order_points(pts.clone(), &landmarks(), false, FilterCounts::default());
        pts.reverse();
        let plan2 = order_points(pts, &landmarks(), false, FilterCounts::default());
        let key = |p: &InsertionPoint| (p.vessel_id, p.station_mm.round() as i64);
        let k1: Vec<_> = plan1.points.iter().map(key).collect();
        let k2: Vec<_> = plan2.points.iter().map(key).collect();
        assert_eq!(k1, k2);
    }

    #[test]
    fn empty_plan_reports_radius_reason() {
        let m = straight_model(0, 20.0, 55.0, 40.0, 1.0);
        let err = plan_insertions(
            &[m],
            &landmarks(),
            &PlannerConfig::default(),
            |_, _| 30.0,
        )
        .unwrap_err();
        match err {
            Error::EmptyPlan { reason } => assert_eq!(reason, "radius"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn centering_offset_examples() {
        let phantom = crate::phantom::tests::test_phantom(65.0);
        // Reconstruct a model for the artery (y = 35, depth 15, r = 3).
        let m = straight_model(0, 20.0, 80.0, 35.0, 3.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        // Probe directly over the artery: centered → offset 0.
        let pose = probe_over(Point3::new(60.0, 35.0, 15.0), Vector3::x(), 30.0, 0);
        let frame = crate::phantom::synthesize_frame(
            &phantom,
            &pose,
            38.0,
            40.0,
            &crate::phantom::ContourNoise::none(),
            &mut rng,
        );
        let offset = centering_offset(&frame, &m).unwrap();
        assert!(offset.abs() < 1e-9, "offset {offset}");
        // Probe 6 mm to the left (so the vessel appears at u = 25): offset +6.
        let pose = probe_over(Point3::new(60.0, 29.0, 15.0), Vector3::x(), 30.0, 0);
        let frame = crate::phantom::synthesize_frame(
            &phantom,
            &pose,
            38.0,
            40.0,
            &crate::phantom::ContourNoise::none(),
            &mut rng,
        );
        let offset = centering_offset(&frame, &m).unwrap();
        assert_relative_eq!(offset.abs(), 6.0, epsilon = 1e-6);
    }

    #[test]
    fn centering_loop_converges_noiseless() {
        let phantom = crate::phantom::tests::test_phantom(65.0);
        let m = straight_model(0, 20.0, 80.0, 35.0, 3.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        // 5 mm lateral error; gain 1 → one imaging round to converge, plus
        // the confirming frame.
        let start = probe_over(Point3::new(60.0, 30.0, 15.0), Vector3::x(), 30.0, 0);
        let config = PlannerConfig::default();
        let done =
            center_probe(&phantom, start, &m, 38.0, 40.0, &config, &mut rng).unwrap();
        assert!(done.iterations <= 2);
        assert_relative_eq!(done.pose.position.y, 35.0, epsilon = 1e-6);

        // Gain 0.5 halves the offset per iteration.
        let config = PlannerConfig { centering_gain: 0.5, ..PlannerConfig::default() };
        let start = probe_over(Point3::new(60.0, 27.0, 15.0), Vector3::x(), 30.0, 0);
        let done =
            center_probe(&phantom, start, &m, 38.0, 40.0, &config, &mut rng).unwrap();
        // |offset| halves from 8: 8, 4, 2, 1 → ≤ 1 after 3 corrections.
        assert_eq!(done.iterations, 4);
    }

    #[test]
    fn centering_contraction_gain_in_unit_interval() {
        let phantom = crate::phantom::tests::test_phantom(65.0);
        let m = straight_model(0, 20.0, 80.0, 35.0, 3.0);
        for &gain in &[0.25, 0.5, 0.75, 1.0] {
            let mut rng = ChaCha12Rng::seed_from_u64(0);
            let mut pose = probe_over(Point3::new(60.0, 28.0, 15.0), Vector3::x(), 30.0, 0);
            let mut last = f64::INFINITY;
            for _ in 0..10 {
                let frame = crate::phantom::synthesize_frame(
                    &phantom,
                    &pose,
                    38.0,
                    40.0,
                    &crate::phantom::ContourNoise::none(),
                    &mut rng,
                );
                let offset = centering_offset(&frame, &m).unwrap();
                assert!(
                    offset.abs() <= last + 1e-9,
                    "gain {gain}: offset grew {last} → {}",
                    offset.abs()
                );
                last = offset.abs();
                let lateral = pose.frame().lateral_axis();
                pose.position += lateral * (gain * offset);
            }
            assert!(last < 1.0, "gain {gain} never contracted below 1 mm");
        }
    }

    #[test]
    fn centering_errors_when_target_invisible() {
        // MAP 10 suppresses the vein: centering on a vein model must report
        // target loss.
        let phantom = crate::phantom::tests::test_phantom(10.0);
        let m = straight_model(0, 20.0, 80.0, 45.0, 3.2); // vein position
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let start = probe_over(Point3::new(60.0, 45.0, 15.0), Vector3::x(), 30.0, 0);
        let err = center_probe(
            &phantom,
            start,
            &m,
            38.0,
            40.0,
            &PlannerConfig::default(),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::TargetLost));
    }

    #[test]
    fn reconstructed_models_plan_end_to_end() {
        // Sanity: a reconstruction-produced model plans without errors.
        let phantom = crate::phantom::tests::test_phantom(65.0);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let cloud = crate::phantom::scan_surface(&phantom, 2.0, 0.0, &mut rng);
        let region = crate::scanplan::CropRegion {
            corners: [
                Point2::new(20.0, 20.0),
                Point2::new(100.0, 20.0),
                Point2::new(100.0, 60.0),
                Point2::new(20.0, 60.0),
            ],
            proximal: Point2::new(110.0, 40.0),
            distal: Point2::new(10.0, 40.0),
        };
        let cropped = crate::scanplan::crop_cloud(&cloud, &region).unwrap();
        let params = crate::scanplan::RasterParams::default();
        let path = crate::scanplan::generate_raster_path(&cropped, &region, &params).unwrap();
        let frames = crate::scanplan::execute_sweep(&phantom, &path, 40.0, &mut rng).unwrap();
        let tracks =
            crate::tracker::Tracker::process_sweep(&frames, crate::tracker::TrackerConfig::default());
        let poses = crate::recon::index_poses(&frames);
        let models = crate::recon::reconstruct(
            &tracks,
            &poses,
            &landmarks(),
            &ReconConfig::default(),
        )
        .unwrap();
        assert_eq!(models.len(), 2, "artery and vein");
        let plan = plan_insertions(
            &models,
            &landmarks(),
            &PlannerConfig::default(),
            |x, y| phantom.surface.height(x, y),
        )
        .unwrap();
        assert!(plan.points.len() >= 10);
        // Spacing law on each vessel.
        for id in [0u32, 1u32] {
            let stations: Vec<f64> = plan
                .points
                .iter()
                .filter(|p| p.vessel_id == id)
                .map(|p| p.station_mm)
                .collect();
            let mut sorted = stations.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in sorted.windows(2) {
                assert!((w[1] - w[0] - 10.0).abs() <= 0.1, "spacing {}", w[1] - w[0]);
            }
        }
    }
}
