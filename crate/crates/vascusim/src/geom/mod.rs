//! Shared geometry: polygons, surface height fields, and the probe frame.
//!
//! Probe frame convention: x is the image lateral axis, y the elevation axis
//! (out of the image plane, along travel), z the image depth axis. Image
//! coordinates (u, v) are in mm with u in [0, width] across the footprint and
//! v >= 0 increasing away from the face.

pub mod heightfield;
pub mod polygon;

use nalgebra::{Point2, Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Pose of the probe face center, with image axes given by `orientation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePose {
    pub position: Point3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl ProbePose {
    /// Maps image coordinates (u, v) into world space. u = width/2 lands on
    /// the pose position; v extends along the probe z (depth) axis.
    pub fn image_to_world(&self, uv: Point2<f64>, width: f64) -> Point3<f64> {
        let local = Vector3::new(uv.x - 0.5 * width, 0.0, uv.y);
        self.position + self.orientation * local
    }

    /// Inverse of [`image_to_world`](Self::image_to_world); also returns the
    /// out-of-plane (elevation) offset as the second component.
    pub fn world_to_image(&self, p: Point3<f64>, width: f64) -> (Point2<f64>, f64) {
        let local = self.orientation.inverse() * (p - self.position);
        (Point2::new(local.x + 0.5 * width, local.z), local.y)
    }

    /// Probe depth axis (image z) in world coordinates.
    pub fn depth_axis(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }

    /// Probe lateral axis (image x) in world coordinates.
    pub fn lateral_axis(&self) -> Vector3<f64> {
        self.orientation * Vector3::x()
    }

    /// Probe elevation axis (image y, travel direction) in world coordinates.
    pub fn elevation_axis(&self) -> Vector3<f64> {
        self.orientation * Vector3::y()
    }
}

/// Builds the probe orientation for a sweep: depth axis along `-normal`
/// (into the surface), elevation axis along `travel` projected onto the
/// surface tangent plane, lateral axis completing the right-handed frame.
pub fn sweep_orientation(
    travel: Vector3<f64>,
    surface_normal: Vector3<f64>,
) -> Option<UnitQuaternion<f64>> {
    let n = surface_normal.try_normalize(1e-12)?;
    let t = travel - n * travel.dot(&n);
    let y_axis = t.try_normalize(1e-9)?;
    let z_axis = -n;
    let x_axis = y_axis.cross(&z_axis);
    UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_basis_unchecked(&[
        x_axis, y_axis, z_axis,
    ]))
    .into()
}
