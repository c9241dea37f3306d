//! Phantom surface models: analytic plane and bilinear grid height fields.
//!
//! Heights are z(x, y) over a rectangular x/y domain; the surface normal is
//! derived from the gradient and always has a positive z component (the probe
//! approaches from above).

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular domain in the phantom's x/y plane, in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x_min, self.x_max), y.clamp(self.y_min, self.y_max))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::Validation(format!(
                "degenerate domain x [{}, {}] y [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        Ok(())
    }
}

/// Surface height model over a rectangular domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    /// z = z0 + sx * x + sy * y
    Plane {
        domain: Domain,
        z0: f64,
        #[serde(default)]
        sx: f64,
        #[serde(default)]
        sy: f64,
    },
    /// Row-major height samples on a uniform grid, bilinearly interpolated.
    /// `heights[iy][ix]` is the height at (x_min + ix*dx, y_min + iy*dy).
    Grid { domain: Domain, nx: usize, ny: usize, heights: Vec<Vec<f64>> },
}

impl Surface {
    pub fn domain(&self) -> Domain {
        match self {
            Surface::Plane { domain, .. } | Surface::Grid { domain, .. } => *domain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain().validate()?;
        if let Surface::Grid { nx, ny, heights, .. } = self {
            if *nx < 2 || *ny < 2 {
                return Err(Error::Validation(format!(
                    "grid surface needs at least 2x2 samples, got {nx}x{ny}"
                )));
            }
            if heights.len() != *ny || heights.iter().any(|row| row.len() != *nx) {
                return Err(Error::Validation(format!(
                    "grid surface heights must be {ny} rows of {nx} samples"
                )));
            }
            if heights.iter().flatten().any(|h| !h.is_finite()) {
                return Err(Error::Validation("grid surface heights must be finite".into()));
            }
        }
        Ok(())
    }

    /// Surface height at (x, y); queries are clamped to the domain.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self {
            Surface::Plane { domain, z0, sx, sy } => {
                let (x, y) = domain.clamp(x, y);
                z0 + sx * x + sy * y
            }
            Surface::Grid { domain, nx, ny, heights } => {
                let (x, y) = domain.clamp(x, y);
                let dx = (domain.x_max - domain.x_min) / (*nx as f64 - 1.0);
                let dy = (domain.y_max - domain.y_min) / (*ny as f64 - 1.0);
                let fx = ((x - domain.x_min) / dx).clamp(0.0, *nx as f64 - 1.0);
                let fy = ((y - domain.y_min) / dy).clamp(0.0, *ny as f64 - 1.0);
                let ix = (fx.floor() as usize).min(nx - 2);
                let iy = (fy.floor() as usize).min(ny - 2);
                let tx = fx - ix as f64;
                let ty = fy - iy as f64;
                let h00 = heights[iy][ix];
                let h10 = heights[iy][ix + 1];
                let h01 = heights[iy + 1][ix];
                let h11 = heights[iy + 1][ix + 1];
                h00 * (1.0 - tx) * (1.0 - ty)
                    + h10 * tx * (1.0 - ty)
                    + h01 * (1.0 - tx) * ty
                    + h11 * tx * ty
            }
        }
    }

    /// (dz/dx, dz/dy) at (x, y). Grid gradients use central differences.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Surface::Plane { sx, sy, .. } => (*sx, *sy),
            Surface::Grid { domain, nx, ny, .. } => {
                let hx = 0.5 * (domain.x_max - domain.x_min) / (*nx as f64 - 1.0);
                let hy = 0.5 * (domain.y_max - domain.y_min) / (*ny as f64 - 1.0);
                let gx = (self.height(x + hx, y) - self.height(x - hx, y))
                    / ((x + hx).min(domain.x_max) - (x - hx).max(domain.x_min));
                let gy = (self.height(x, y + hy) - self.height(x, y - hy))
                    / ((y + hy).min(domain.y_max) - (y - hy).max(domain.y_min));
                (gx, gy)
            }
        }
    }

    /// Unit outward (upward) surface normal at (x, y).
    pub fn normal(&self, x: f64, y: f64) -> Vector3<f64> {
        let (gx, gy) = self.gradient(x, y);
        Vector3::new(-gx, -gy, 1.0).normalize()
    }

    /// Point on the surface above (x, y).
    pub fn point_at(&self, p: Point2<f64>) -> nalgebra::Point3<f64> {
        nalgebra::Point3::new(p.x, p.y, self.height(p.x, p.y))
    }
}
