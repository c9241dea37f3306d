//! Desk-scale simulator for robotic ultrasound-guided vascular access.
//!
//! The crate models the full loop on procedural phantoms: surface scan and
//! crop, raster ultrasound sweep under admittance control, per-frame contour
//! association, 3D vessel reconstruction from tracked contours, insertion-point
//! planning along the vessel, and a needle insertion trial with pressure-based
//! puncture detection. Hemorrhagic shock is modeled as hypotension that
//! collapses veins and degrades their detectability.

pub mod artifacts;
pub mod assignment;
pub mod config;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod needle;
pub mod phantom;
pub mod pipeline;
pub mod planner;
pub mod recon;
pub mod scanplan;
pub mod spline;
pub mod tracker;

pub use error::{Error, Result};
