//! Procedural vascular phantoms and synthetic sensing.
//!
//! A phantom is a set of ground-truth vessels (polyline centerlines with a
//! nominal radius) under a height-field surface, plus a shock scenario that
//! sets mean arterial pressure. Sensing is synthesized geometrically: surface
//! point clouds from the height field, and per-pose "ultrasound" contours from
//! plane–cylinder intersections, with vein collapse, dropout, centroid jitter,
//! and false positives layered on top.

use nalgebra::{Point2, Point3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::heightfield::Surface;
use crate::geom::polygon;

/// Vessel class. Carried as ground truth on phantom vessels and passed
/// through on synthesized contours (the pipeline treats classification as
/// given; it never infers it from geometry).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VesselKind {
    Artery,
    Vein,
}

/// Ground-truth vessel: an ordered polyline centerline (world mm, ordered
/// distal → proximal) with one nominal radius and an internal pressure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthVessel {
    pub id: u32,
    pub kind: VesselKind,
    pub centerline: Vec<Point3<f64>>,
    pub nominal_radius_mm: f64,
    pub internal_pressure_mmhg: f64,
}

impl GroundTruthVessel {
    /// Total polyline length in mm.
    pub fn length(&self) -> f64 {
        self.centerline.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Point at arc length `s` along the polyline (clamped to the ends).
    pub fn point_at(&self, s: f64) -> Point3<f64> {
        let mut remaining = s.max(0.0);
        for w in self.centerline.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if remaining <= len {
                return w[0] + seg * (remaining / len.max(1e-12));
            }
            remaining -= len;
        }
        *self.centerline.last().expect("validated: >= 2 points")
    }
}

/// Per-frame contour corruption model for synthesized detections.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ContourNoise {
    /// Std-dev of the centroid translation applied to each kept contour, mm.
    pub centroid_jitter_mm: f64,
    /// Per-contour probability of dropping a true detection.
    pub dropout: f64,
    /// Expected number of false-positive contours per frame (Poisson rate).
    pub false_positive_rate: f64,
    /// Contours whose minor semi-axis falls below this are suppressed,
    /// standing in for segmentation failure on collapsed vessels.
    #[serde(default = "default_min_detectable_minor")]
    pub min_detectable_minor_mm: f64,
}

fn default_min_detectable_minor() -> f64 {
    1.5
}

impl ContourNoise {
    pub fn none() -> Self {
        ContourNoise {
            centroid_jitter_mm: 0.0,
            dropout: 0.0,
            false_positive_rate: 0.0,
            min_detectable_minor_mm: default_min_detectable_minor(),
        }
    }
}

/// Hemodynamic scenario: mean arterial pressure plus the vein-collapse law
/// parameters and the sensing noise model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShockScenario {
    pub map_mmhg: f64,
    /// MAP below which veins begin to flatten.
    #[serde(default = "default_collapse_onset")]
    pub collapse_onset_mmhg: f64,
    /// Floor of the collapse factor (veins never vanish entirely).
    #[serde(default = "default_collapse_floor")]
    pub collapse_floor: f64,
    pub noise: ContourNoise,
    pub rng_seed: u64,
}

fn default_collapse_onset() -> f64 {
    40.0
}

fn default_collapse_floor() -> f64 {
    0.25
}

/// Complete phantom: vessels, surface, scenario. Built from a JSON spec via
/// [`build_phantom`]; all invariants hold after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phantom {
    pub vessels: Vec<GroundTruthVessel>,
    pub surface: Surface,
    pub scenario: ShockScenario,
}

/// Probe pose within a sweep: world position/orientation of the probe face
/// center plus sequencing metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePose {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub position: Point3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl ProbePose {
    pub fn frame(&self) -> crate::geom::ProbePose {
        crate::geom::ProbePose { position: self.position, orientation: self.orientation }
    }
}

/// One synthesized ultrasound frame: the pose it was taken from, the imaging
/// window, and the extracted contours (possibly empty).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UltrasoundFrame {
    pub frame_id: u64,
    pub pose: ProbePose,
    pub image_width_mm: f64,
    pub image_depth_mm: f64,
    pub contours: Vec<Contour2D>,
}

/// A closed contour in image coordinates (lateral mm, depth mm). `kind` is
/// the ground-truth class for true detections and `None` for false positives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Contour2D {
    pub points: Vec<Point2<f64>>,
    pub kind: Option<VesselKind>,
}

impl Contour2D {
    pub fn area(&self) -> f64 {
        polygon::area(&self.points)
    }

    pub fn centroid(&self) -> Point2<f64> {
        polygon::centroid(&self.points)
    }

    /// Radius of the circle with the same area.
    pub fn equivalent_radius(&self) -> f64 {
        (self.area() / std::f64::consts::PI).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::Validation("contour needs >= 3 points".into()));
        }
        if !polygon::is_simple(&self.points) {
            return Err(Error::Validation("contour polygon self-intersects".into()));
        }
        if self.area() <= 0.0 {
            return Err(Error::Validation("contour area must be positive".into()));
        }
        Ok(())
    }
}

/// Surface point cloud with per-point normals.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV dump: x,y,z,nx,ny,nz with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,nx,ny,nz\n");
        for (p, n) in self.points.iter().zip(&self.normals) {
            out.push_str(&format!("{},{},{},{},{},{}\n", p.x, p.y, p.z, n.x, n.y, n.z));
        }
        out
    }
}

/// Validates a deserialized phantom spec and returns the phantom.
/// Identical spec content always yields an identical phantom.
pub fn build_phantom(spec: Phantom) -> Result<Phantom> {
    spec.surface.validate()?;
    if spec.vessels.is_empty() {
        return Err(Error::Validation("phantom needs at least one vessel".into()));
    }
    if spec.scenario.map_mmhg < 0.0 {
        return Err(Error::Validation("MAP must be >= 0".into()));
    }
    if !(0.0..=1.0).contains(&spec.scenario.noise.dropout) {
        return Err(Error::Validation("dropout must be in [0, 1]".into()));
    }
    if spec.scenario.noise.false_positive_rate < 0.0 {
        return Err(Error::Validation("false-positive rate must be >= 0".into()));
    }
    if spec.scenario.collapse_onset_mmhg <= 0.0 {
        return Err(Error::Validation("collapse onset must be > 0".into()));
    }
    if !(0.0..=1.0).contains(&spec.scenario.collapse_floor)
        || spec.scenario.collapse_floor == 0.0
    {
        return Err(Error::Validation("collapse floor must be in (0, 1]".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for v in &spec.vessels {
        if !seen.insert(v.id) {
            return Err(Error::Validation(format!("duplicate vessel id {}", v.id)));
        }
        if v.centerline.len() < 2 {
            return Err(Error::Validation(format!(
                "vessel {} needs >= 2 centerline points",
                v.id
            )));
        }
        if v.nominal_radius_mm <= 0.0 {
            return Err(Error::Validation(format!("vessel {} radius must be > 0", v.id)));
        }
        if v.internal_pressure_mmhg < 0.0 {
            return Err(Error::Validation(format!(
                "vessel {} internal pressure must be >= 0",
                v.id
            )));
        }
        // Depth check: sample every mm so curved surfaces can't hide a breach
        // between control points.
        let length = v.length();
        let steps = (length.ceil() as usize).max(1);
        for k in 0..=steps {
            let s = length * k as f64 / steps as f64;
            let p = v.point_at(s);
            let depth = spec.surface.height(p.x, p.y) - p.z;
            if depth <= 0.0 {
                return Err(Error::Validation(format!(
                    "vessel {} reaches the surface at station {s:.1} mm (depth {depth:.2} mm)",
                    v.id
                )));
            }
        }
    }
    Ok(spec)
}

/// Loads and validates a phantom spec from a JSON file.
pub fn load_phantom(path: &std::path::Path) -> Result<Phantom> {
    let text = std::fs::read_to_string(path)?;
    let spec: Phantom = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    build_phantom(spec)
}

/// Minor-axis scale factor for a vessel section under the scenario's MAP.
/// Arteries never collapse; veins shrink linearly once MAP drops below the
/// onset, floored so the lumen never vanishes.
pub fn collapse_factor(kind: VesselKind, _internal_pressure_mmhg: f64, scenario: &ShockScenario) -> f64 {
    match kind {
        VesselKind::Artery => 1.0,
        VesselKind::Vein => {
            if scenario.map_mmhg >= scenario.collapse_onset_mmhg {
                1.0
            } else {
                let t = scenario.map_mmhg / scenario.collapse_onset_mmhg;
                scenario.collapse_floor + (1.0 - scenario.collapse_floor) * t
            }
        }
    }
}

/// Number of vertices in synthesized elliptical contours.
pub const CONTOUR_SIDES: usize = 32;

/// Area of the inscribed regular 32-gon relative to its ellipse; synthesized
/// contour areas are exact up to this factor.
pub fn contour_polygon_area_factor() -> f64 {
    let x = 2.0 * std::f64::consts::PI / CONTOUR_SIDES as f64;
    x.sin() / x
}

/// Elliptical cross-section of one vessel in one image plane, before noise.
struct Section {
    kind: VesselKind,
    center_uv: Point2<f64>,
    /// Image-plane unit direction of the major axis and its length (mm).
    major_uv: (Point2<f64>, f64),
    minor_len: f64,
}

/// Intersects the image plane with every vessel tube and returns the ideal
/// (noise-free) sections in image coordinates, vessels in id order.
fn plane_sections(
    phantom: &Phantom,
    pose: &ProbePose,
    width: f64,
) -> Vec<Section> {
    let frame = pose.frame();
    let normal = frame.elevation_axis(); // image plane normal
    let mut sections = Vec::new();
    let mut vessels: Vec<&GroundTruthVessel> = phantom.vessels.iter().collect();
    vessels.sort_by_key(|v| v.id);
    for vessel in vessels {
        let c = collapse_factor(vessel.kind, vessel.internal_pressure_mmhg, &phantom.scenario);
        for w in vessel.centerline.windows(2) {
            let (p0, p1) = (w[0], w[1]);
            let d0 = (p0 - pose.position).dot(&normal);
            let d1 = (p1 - pose.position).dot(&normal);
            // Strictly crossing segments only; touching endpoints would
            // double-count at shared polyline vertices.
            if d0 == 0.0 && d1 == 0.0 {
                continue; // segment lies in the plane: tangential, unbounded
            }
            let crosses = (d0 <= 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 <= 0.0);
            if !crosses {
                continue;
            }
            let t = d0 / (d0 - d1);
            let center = p0 + (p1 - p0) * t;
            let axis = (p1 - p0).normalize();
            let cos_theta = axis.dot(&normal).abs();
            if cos_theta < 1e-6 {
                continue; // near-tangential cut: no bounded ellipse
            }
            let major_len = vessel.nominal_radius_mm / cos_theta;
            let in_plane = axis - normal * axis.dot(&normal);
            let (major_dir, minor_dir) = if let Some(m) = in_plane.try_normalize(1e-9) {
                (m, normal.cross(&m))
            } else {
                // Perpendicular section: circle; align minor with image depth
                // so collapse flattens the vessel along the pressure axis.
                (frame.lateral_axis(), frame.depth_axis())
            };
            let minor_len = c * vessel.nominal_radius_mm;
            let (center_uv, _) = frame.world_to_image(center, width);
            let (major_tip, _) = frame.world_to_image(center + major_dir * major_len, width);
            let (minor_tip, _) = frame.world_to_image(center + minor_dir * minor_len, width);
            let major_vec = major_tip - center_uv;
            let minor_vec = minor_tip - center_uv;
            // In-plane vectors survive the projection with length intact.
            let major_unit = Point2::from(major_vec / major_vec.norm().max(1e-12));
            let _ = minor_vec;
            sections.push(Section {
                kind: vessel.kind,
                center_uv,
                major_uv: (major_unit, major_len),
                minor_len,
            });
        }
    }
    sections
}

fn ellipse_polygon(
    center: Point2<f64>,
    major_dir: Point2<f64>,
    major_len: f64,
    minor_len: f64,
) -> Vec<Point2<f64>> {
    let minor_dir = Point2::new(-major_dir.y, major_dir.x);
    (0..CONTOUR_SIDES)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / CONTOUR_SIDES as f64;
            Point2::new(
                center.x + major_len * phi.cos() * major_dir.x + minor_len * phi.sin() * minor_dir.x,
                center.y + major_len * phi.cos() * major_dir.y + minor_len * phi.sin() * minor_dir.y,
            )
        })
        .collect()
}

/// Minimum clipped-contour area kept, mm². Slivers below this are treated as
/// invisible to the segmenter.
const MIN_CONTOUR_AREA: f64 = 0.5;

/// Synthesizes the ultrasound frame seen from `pose`. One contour per vessel
/// section inside the image window (subject to collapse suppression, dropout,
/// and jitter), plus Poisson false positives. Deterministic given `rng`.
///
/// Per-frame draw order (fixed for reproducibility): for each vessel section
/// in vessel-id order — dropout uniform, then jitter x and y if kept; then
/// the false-positive count and, per false positive, center/semi-axes/angle.
pub fn synthesize_frame(
    phantom: &Phantom,
    pose: &ProbePose,
    image_width_mm: f64,
    image_depth_mm: f64,
    noise: &ContourNoise,
    rng: &mut impl Rng,
) -> UltrasoundFrame {
    debug_assert!(image_width_mm > 0.0 && image_depth_mm > 0.0);
    let window = [
        Point2::new(0.0, 0.0),
        Point2::new(image_width_mm, 0.0),
        Point2::new(image_width_mm, image_depth_mm),
        Point2::new(0.0, image_depth_mm),
    ];
    let jitter = Normal::new(0.0, noise.centroid_jitter_mm.max(0.0)).ok();
    let mut contours = Vec::new();

    for section in plane_sections(phantom, pose, image_width_mm) {
        if section.minor_len < noise.min_detectable_minor_mm {
            continue; // collapsed below the segmenter's sensitivity
        }
        let dropped = rng.random::<f64>() < noise.dropout;
        if dropped {
            continue;
        }
        let (mut dx, mut dy) = (0.0, 0.0);
        if noise.centroid_jitter_mm > 0.0 {
            if let Some(n) = &jitter {
                dx = n.sample(rng);
                dy = n.sample(rng);
            }
        }
        let (dir, major_len) = section.major_uv;
        let center = Point2::new(section.center_uv.x + dx, section.center_uv.y + dy);
        let poly = ellipse_polygon(center, dir, major_len, section.minor_len);
        let clipped = polygon::clip_convex(&poly, &window);
        if clipped.len() >= 3 && polygon::area(&clipped) >= MIN_CONTOUR_AREA {
            contours.push(Contour2D { points: clipped, kind: Some(section.kind) });
        }
    }

    if noise.false_positive_rate > 0.0 {
        let count = Poisson::new(noise.false_positive_rate)
            .map(|p| p.sample(rng) as usize)
            .unwrap_or(0);
        for _ in 0..count {
            let cx = rng.random::<f64>() * image_width_mm;
            let cy = rng.random::<f64>() * image_depth_mm;
            let a = 0.5 + 0.5 * rng.random::<f64>();
            let b = 0.5 + 0.5 * rng.random::<f64>();
            let ang = std::f64::consts::PI * rng.random::<f64>();
            let dir = Point2::new(ang.cos(), ang.sin());
            let poly = ellipse_polygon(Point2::new(cx, cy), dir, a.max(b), a.min(b));
            let clipped = polygon::clip_convex(&poly, &window);
            if clipped.len() >= 3 && polygon::area(&clipped) >= MIN_CONTOUR_AREA {
                contours.push(Contour2D { points: clipped, kind: None });
            }
        }
    }

    UltrasoundFrame {
        frame_id: pose.frame_id,
        pose: *pose,
        image_width_mm,
        image_depth_mm,
        contours,
    }
}

/// Samples the phantom surface on a uniform grid with Gaussian depth noise.
/// Normals come from the analytic surface gradient (noise-free).
pub fn scan_surface(
    phantom: &Phantom,
    sample_pitch_mm: f64,
    depth_noise_sigma_mm: f64,
    rng: &mut impl Rng,
) -> PointCloud {
    debug_assert!(sample_pitch_mm > 0.0);
    let d = phantom.surface.domain();
    let nx = ((d.x_max - d.x_min) / sample_pitch_mm).floor() as usize + 1;
    let ny = ((d.y_max - d.y_min) / sample_pitch_mm).floor() as usize + 1;
    let noise = Normal::new(0.0, depth_noise_sigma_mm.max(0.0)).ok();
    let mut cloud = PointCloud::default();
    for iy in 0..ny {
        for ix in 0..nx {
            let x = d.x_min + ix as f64 * sample_pitch_mm;
            let y = d.y_min + iy as f64 * sample_pitch_mm;
            let mut z = phantom.surface.height(x, y);
            if depth_noise_sigma_mm > 0.0 {
                if let Some(n) = &noise {
                    z += n.sample(rng);
                }
            }
            cloud.points.push(Point3::new(x, y, z));
            cloud.normals.push(phantom.surface.normal(x, y));
        }
    }
    cloud
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geom::heightfield::Domain;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    pub(crate) fn flat_surface() -> Surface {
        Surface::Plane {
            domain: Domain { x_min: 0.0, x_max: 120.0, y_min: 0.0, y_max: 80.0 },
            z0: 30.0,
            sx: 0.0,
            sy: 0.0,
        }
    }

    fn straight_vessel(id: u32, kind: VesselKind, y: f64, z: f64, r: f64, p: f64) -> GroundTruthVessel {
        GroundTruthVessel {
            id,
            kind,
            centerline: vec![Point3::new(5.0, y, z), Point3::new(115.0, y, z)],
            nominal_radius_mm: r,
            internal_pressure_mmhg: p,
        }
    }

    pub(crate) fn test_phantom(map: f64) -> Phantom {
        build_phantom(Phantom {
            vessels: vec![
                straight_vessel(0, VesselKind::Artery, 35.0, 15.0, 3.0, 8.0),
                straight_vessel(1, VesselKind::Vein, 45.0, 15.0, 3.2, 5.0),
            ],
            surface: flat_surface(),
            scenario: ShockScenario {
                map_mmhg: map,
                collapse_onset_mmhg: 40.0,
                collapse_floor: 0.25,
                noise: ContourNoise::none(),
                rng_seed: 1,
            },
        })
        .unwrap()
    }

    /// Pose looking straight down at (x, y) with elevation along world x
    /// (perpendicular section of vessels running along x).
    fn down_pose(x: f64, y: f64) -> ProbePose {
        let q = crate::geom::sweep_orientation(Vector3::x(), Vector3::z()).unwrap();
        ProbePose {
            frame_id: 0,
            timestamp_s: 0.0,
            position: Point3::new(x, y, 30.0),
            orientation: q,
        }
    }

    #[test]
    fn collapse_law_values() {
        let mut sc = test_phantom(65.0).scenario;
        assert_eq!(collapse_factor(VesselKind::Artery, 8.0, &sc), 1.0);
        assert_eq!(collapse_factor(VesselKind::Vein, 5.0, &sc), 1.0);
        sc.map_mmhg = 40.0;
        assert_eq!(collapse_factor(VesselKind::Vein, 5.0, &sc), 1.0);
        sc.map_mmhg = 10.0;
        assert_relative_eq!(collapse_factor(VesselKind::Vein, 5.0, &sc), 0.4375);
        sc.map_mmhg = 0.0;
        assert_relative_eq!(collapse_factor(VesselKind::Vein, 5.0, &sc), 0.25);
    }

    #[test]
    fn collapse_monotone_in_map() {
        let mut sc = test_phantom(65.0).scenario;
        let mut last = 0.0;
        for map in 0..80 {
            sc.map_mmhg = map as f64;
            let c = collapse_factor(VesselKind::Vein, 5.0, &sc);
            assert!(c >= last, "collapse not monotone at MAP {map}");
            assert!((0.25..=1.0).contains(&c));
            last = c;
        }
    }

    #[test]
    fn perpendicular_section_is_circle() {
        let phantom = test_phantom(65.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        // Artery at y = 35, z = 15; probe above at (60, 35), surface z = 30.
        let frame = synthesize_frame(&phantom, &down_pose(60.0, 35.0), 38.0, 40.0, &ContourNoise::none(), &mut rng);
        // Window covers y in [35-19, 35+19] so the vein at y = 45 is visible too.
        assert_eq!(frame.contours.len(), 2);
        let artery = frame.contours.iter().find(|c| c.kind == Some(VesselKind::Artery)).unwrap();
        let expected_area = std::f64::consts::PI * 9.0 * contour_polygon_area_factor();
        assert_relative_eq!(artery.area(), expected_area, max_relative = 1e-9);
        // Centroid: artery is on the probe centerline (u = 19), 15 mm deep.
        let c = artery.centroid();
        assert_relative_eq!(c.x, 19.0, epsilon = 1e-9);
        assert_relative_eq!(c.y, 15.0, epsilon = 1e-9);
    }

    #[test]
    fn oblique_section_inflates_major_axis() {
        // Tilt the travel axis 60° away from the vessel axis in the x-y
        // plane: the plane normal makes 60° with the vessel, cosθ = 0.5.
        let phantom = test_phantom(65.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let travel = Vector3::new(60f64.to_radians().cos(), 60f64.to_radians().sin(), 0.0);
        let q = crate::geom::sweep_orientation(travel, Vector3::z()).unwrap();
        let pose = ProbePose {
            frame_id: 0,
            timestamp_s: 0.0,
            position: Point3::new(60.0, 35.0, 30.0),
            orientation: q,
        };
        let frame = synthesize_frame(&phantom, &pose, 60.0, 40.0, &ContourNoise::none(), &mut rng);
        let artery = frame.contours.iter().find(|c| c.kind == Some(VesselKind::Artery)).unwrap();
        // Semi-axes 3 and 3/cos60° = 6 → area π·18, modulo the 32-gon factor.
        let expected = std::f64::consts::PI * 18.0 * contour_polygon_area_factor();
        assert_relative_eq!(artery.area(), expected, max_relative = 1e-9);
    }

    #[test]
    fn shock_scales_vein_minor_axis() {
        let phantom = test_phantom(10.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut noise = ContourNoise::none();
        noise.min_detectable_minor_mm = 0.0; // observe the raw geometry
        let frame = synthesize_frame(&phantom, &down_pose(60.0, 45.0), 38.0, 40.0, &noise, &mut rng);
        let vein = frame.contours.iter().find(|c| c.kind == Some(VesselKind::Vein)).unwrap();
        let expected = std::f64::consts::PI * 3.2 * (3.2 * 0.4375) * contour_polygon_area_factor();
        assert_relative_eq!(vein.area(), expected, max_relative = 1e-9);
    }

    #[test]
    fn shock_suppresses_vein_detection() {
        // Vein minor semi-axis at MAP 10: 3.2 · 0.4375 = 1.4 < 1.5 threshold.
        let phantom = test_phantom(10.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let frame = synthesize_frame(&phantom, &down_pose(60.0, 45.0), 38.0, 40.0, &ContourNoise::none(), &mut rng);
        assert!(frame.contours.iter().all(|c| c.kind != Some(VesselKind::Vein)));
        assert!(frame.contours.iter().any(|c| c.kind == Some(VesselKind::Artery)));
    }

    #[test]
    fn contours_stay_inside_window() {
        let phantom = test_phantom(65.0);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let noise = ContourNoise {
            centroid_jitter_mm: 2.0,
            dropout: 0.1,
            false_positive_rate: 1.0,
            min_detectable_minor_mm: 1.5,
        };
        for k in 0..50 {
            let pose = down_pose(30.0 + k as f64, 30.0 + (k % 20) as f64);
            let frame = synthesize_frame(&phantom, &pose, 38.0, 40.0, &noise, &mut rng);
            for c in &frame.contours {
                c.validate().unwrap();
                for p in &c.points {
                    assert!(p.x >= -1e-9 && p.x <= 38.0 + 1e-9);
                    assert!(p.y >= -1e-9 && p.y <= 40.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn dropout_one_empties_frames() {
        let phantom = test_phantom(65.0);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let noise = ContourNoise { dropout: 1.0, ..ContourNoise::none() };
        let frame = synthesize_frame(&phantom, &down_pose(60.0, 40.0), 38.0, 40.0, &noise, &mut rng);
        assert!(frame.contours.is_empty());
    }

    #[test]
    fn synthesis_deterministic_per_seed() {
        let phantom = test_phantom(65.0);
        let noise = ContourNoise {
            centroid_jitter_mm: 0.5,
            dropout: 0.2,
            false_positive_rate: 0.5,
            min_detectable_minor_mm: 1.5,
        };
        let run = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..20)
                .map(|k| {
                    let pose = down_pose(40.0 + k as f64, 40.0);
                    synthesize_frame(&phantom, &pose, 38.0, 40.0, &noise, &mut rng)
                })
                .collect::<Vec<_>>()
        };
        let a = serde_json::to_string(&run(11)).unwrap();
        let b = serde_json::to_string(&run(11)).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&run(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn build_rejects_surface_breach() {
        let mut phantom = test_phantom(65.0);
        phantom.vessels[0].centerline[1].z = 31.0; // above the z = 30 surface
        let err = build_phantom(phantom).unwrap_err();
        assert!(err.to_string().contains("vessel 0"));
    }

    #[test]
    fn build_rejects_zero_radius() {
        let mut phantom = test_phantom(65.0);
        phantom.vessels[1].nominal_radius_mm = 0.0;
        assert!(build_phantom(phantom).is_err());
    }

    #[test]
    fn surface_scan_flat_noise_free() {
        let phantom = test_phantom(65.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let cloud = scan_surface(&phantom, 2.0, 0.0, &mut rng);
        assert!(!cloud.is_empty());
        for (p, n) in cloud.points.iter().zip(&cloud.normals) {
            assert_relative_eq!(p.z, 30.0);
            assert_relative_eq!(*n, Vector3::z());
        }
    }

    #[test]
    fn surface_scan_noise_rms() {
        let phantom = test_phantom(65.0);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let cloud = scan_surface(&phantom, 0.5, 0.3, &mut rng);
        assert!(cloud.len() > 10_000);
        let rms = (cloud.points.iter().map(|p| (p.z - 30.0).powi(2)).sum::<f64>()
            / cloud.len() as f64)
            .sqrt();
        assert!((rms - 0.3).abs() / 0.3 < 0.2, "rms {rms}");
    }
}
