//! Needle insertion mechanics: depth-gated pump control, pressure-signal
//! synthesis, wall tenting, puncture detection from pressure rise and
//! flashback, axial dithering, and plan fallback.
//!
//! An attempt advances the needle along a straight line from a skin entry
//! point toward the target at a configurable angle. The vessel wall tents
//! ahead of the tip and yields only after the tip travels a
//! pressure-dependent extra distance past first contact — low internal
//! pressure means more tenting. A peristaltic pump holds negative pressure
//! once the tip is inside the skin; lumen entry shows up as a pressure rise
//! toward the vessel's internal pressure plus a delayed flashback flag.

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::phantom::{collapse_factor, GroundTruthVessel, Phantom, VesselKind};
use crate::planner::{
    center_probe, match_target, probe_over, InsertionPlan, InsertionPoint, PlannerConfig,
};
use crate::recon::VesselModel;

/// Needle travel into the lumen after the wall yields, mm.
const CAPTURE_ADVANCE_MM: f64 = 1.0;
/// Pause on the skin before the pump gate opens, s.
const SKIN_DWELL_S: f64 = 0.05;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NeedleConfig {
    /// Mechanism separation between the probe face and the needle carriage.
    /// The needle cannot enter closer to the target than this, so steep
    /// requested angles are flattened until the entry fits.
    #[serde(default = "default_distance")]
    pub probe_to_needle_distance_mm: f64,
    /// Insertion angle from the skin plane, degrees.
    #[serde(default = "default_angle")]
    pub insertion_angle_deg: f64,
    /// Axial oscillation amplitude per dither cycle, mm.
    #[serde(default = "default_dither_amp")]
    pub dither_amplitude_mm: f64,
    #[serde(default = "default_dither_cycles")]
    pub max_dither_cycles: usize,
    /// Pump setpoint, mmHg (negative: aspiration).
    #[serde(default = "default_setpoint")]
    pub pump_setpoint_mmhg: f64,
    #[serde(default = "default_window")]
    pub detection_window_samples: usize,
    /// Mean windowed rise above the setpoint that signals a puncture, mmHg.
    #[serde(default = "default_threshold")]
    pub detection_threshold_mmhg: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    /// First-order time constant of the lumen pressure response, s.
    #[serde(default = "default_tau")]
    pub pressure_tau_s: f64,
    /// Sensor noise applied to every sample, mmHg.
    #[serde(default = "default_sigma")]
    pub pressure_noise_sigma_mmhg: f64,
    #[serde(default = "default_speed")]
    pub advance_speed_mm_s: f64,
    /// Needle travel budget past the planned target depth, mm.
    #[serde(default = "default_margin")]
    pub overshoot_margin_mm: f64,
    /// Start clearance above the skin along the needle line, mm.
    #[serde(default = "default_approach")]
    pub approach_clearance_mm: f64,
    /// Minimum open lumen height for the needle to capture the vessel, mm.
    #[serde(default = "default_capture")]
    pub capture_threshold_mm: f64,
    /// Tenting at the reference pressure, mm.
    #[serde(default = "default_tent_d0")]
    pub tenting_d0_mm: f64,
    /// Tenting growth gain as pressure falls below the reference.
    #[serde(default = "default_tent_gain")]
    pub tenting_gain: f64,
    /// Normotensive reference pressure, mmHg.
    #[serde(default = "default_tent_ref")]
    pub tenting_ref_mmhg: f64,
    /// Detection windows to wait in the lumen before giving up.
    #[serde(default = "default_max_windows")]
    pub max_detection_windows: usize,
}

fn default_distance() -> f64 {
    10.0
}
fn default_angle() -> f64 {
    30.0
}
fn default_dither_amp() -> f64 {
    1.0
}
fn default_dither_cycles() -> usize {
    3
}
fn default_setpoint() -> f64 {
    -50.0
}
fn default_window() -> usize {
    50
}
fn default_threshold() -> f64 {
    20.0
}
fn default_rate() -> f64 {
    100.0
}
fn default_tau() -> f64 {
    0.2
}
fn default_sigma() -> f64 {
    3.0
}
fn default_speed() -> f64 {
    2.0
}
fn default_margin() -> f64 {
    10.0
}
fn default_approach() -> f64 {
    2.0
}
fn default_capture() -> f64 {
    2.0
}
fn default_tent_d0() -> f64 {
    1.0
}
fn default_tent_gain() -> f64 {
    1.0
}
fn default_tent_ref() -> f64 {
    65.0
}
fn default_max_windows() -> usize {
    3
}

impl Default for NeedleConfig {
    fn default() -> Self {
        NeedleConfig {
            probe_to_needle_distance_mm: default_distance(),
            insertion_angle_deg: default_angle(),
            dither_amplitude_mm: default_dither_amp(),
            max_dither_cycles: default_dither_cycles(),
            pump_setpoint_mmhg: default_setpoint(),
            detection_window_samples: default_window(),
            detection_threshold_mmhg: default_threshold(),
            sample_rate_hz: default_rate(),
            pressure_tau_s: default_tau(),
            pressure_noise_sigma_mmhg: default_sigma(),
            advance_speed_mm_s: default_speed(),
            overshoot_margin_mm: default_margin(),
            approach_clearance_mm: default_approach(),
            capture_threshold_mm: default_capture(),
            tenting_d0_mm: default_tent_d0(),
            tenting_gain: default_tent_gain(),
            tenting_ref_mmhg: default_tent_ref(),
            max_detection_windows: default_max_windows(),
        }
    }
}

impl NeedleConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.probe_to_needle_distance_mm > 0.0) {
            return Err(crate::Error::Validation("probe-to-needle distance must be > 0".into()));
        }
        if !(self.insertion_angle_deg > 0.0 && self.insertion_angle_deg < 90.0) {
            return Err(crate::Error::Validation("insertion angle must be in (0°, 90°)".into()));
        }
        if !(self.pump_setpoint_mmhg < 0.0) {
            return Err(crate::Error::Validation("pump setpoint must be negative".into()));
        }
        if self.detection_window_samples < 2 {
            return Err(crate::Error::Validation("detection window too short".into()));
        }
        for (name, v) in [
            ("detection threshold", self.detection_threshold_mmhg),
            ("sample rate", self.sample_rate_hz),
            ("pressure tau", self.pressure_tau_s),
            ("advance speed", self.advance_speed_mm_s),
            ("capture threshold", self.capture_threshold_mm),
        ] {
            if !(v > 0.0) {
                return Err(crate::Error::Validation(format!("{name} must be > 0")));
            }
        }
        if self.dither_amplitude_mm < 0.0 || self.pressure_noise_sigma_mmhg < 0.0 {
            return Err(crate::Error::Validation("amplitudes must be non-negative".into()));
        }
        Ok(())
    }

    /// One detection window in seconds.
    pub fn window_s(&self) -> f64 {
        self.detection_window_samples as f64 / self.sample_rate_hz
    }
}

/// Peristaltic pump command for a given tip depth below the skin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "setpoint_mmhg")]
pub enum PumpState {
    Off,
    On(f64),
}

/// Pump gate: off at or above the skin (line sits at the saline-drip
/// baseline ≈ 0 mmHg), on with the negative setpoint once inside.
pub fn pump_state(needle_depth_mm: f64, config: &NeedleConfig) -> PumpState {
    if needle_depth_mm > 0.0 {
        PumpState::On(config.pump_setpoint_mmhg)
    } else {
        PumpState::Off
    }
}

/// Insertion state machine phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptState {
    Approach,
    SkinContact,
    InTissue,
    Dithering,
    Punctured,
    GuidewirePlaced,
    Failed,
}

impl AttemptState {
    /// Pump runs only while actively inserting or confirmed in the lumen.
    pub fn pump_enabled(self) -> bool {
        matches!(
            self,
            AttemptState::InTissue
                | AttemptState::Dithering
                | AttemptState::Punctured
                | AttemptState::GuidewirePlaced
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttemptState::Approach => "approach",
            AttemptState::SkinContact => "skin_contact",
            AttemptState::InTissue => "in_tissue",
            AttemptState::Dithering => "dithering",
            AttemptState::Punctured => "punctured",
            AttemptState::GuidewirePlaced => "guidewire_placed",
            AttemptState::Failed => "failed",
        }
    }
}

/// Legal state-machine edges (used by tests and downstream validators).
pub fn transition_allowed(from: AttemptState, to: AttemptState) -> bool {
    use AttemptState::*;
    matches!(
        (from, to),
        (Approach, SkinContact)
            | (SkinContact, InTissue)
            | (InTissue, Dithering)
            | (Dithering, InTissue)
            | (InTissue, Punctured)
            | (Punctured, GuidewirePlaced)
            | (Approach, Failed)
            | (SkinContact, Failed)
            | (InTissue, Failed)
            | (Dithering, Failed)
    )
}

/// One pressure-line sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PressureSample {
    pub time_s: f64,
    /// Tip depth below the skin (negative above), mm.
    pub depth_mm: f64,
    pub pressure_mmhg: f64,
    pub flashback: bool,
    pub state: AttemptState,
}

/// One leg of tip motion: linear depth ramp over a duration, tagged with the
/// machine state and whether the tip is inside the lumen.
#[derive(Debug, Clone, Copy)]
pub struct TraceSegment {
    pub state: AttemptState,
    pub depth_from_mm: f64,
    pub depth_to_mm: f64,
    pub duration_s: f64,
    pub in_lumen: bool,
}

/// Synthesizes the pressure line for a motion timeline. Tissue phase sits at
/// the pump setpoint, lumen phase relaxes first-order (time constant τ)
/// toward the vessel's internal pressure, and flashback flips true one
/// detection window after lumen entry. Every sample gets N(0, σ²) sensor
/// noise; σ = 0 draws nothing, so traces are exact.
pub fn pressure_trace(
    segments: &[TraceSegment],
    vessel_pressure_mmhg: f64,
    sigma_mmhg: f64,
    config: &NeedleConfig,
    rng: &mut impl Rng,
) -> Vec<PressureSample> {
    let dt = 1.0 / config.sample_rate_hz;
    let decay = (-dt / config.pressure_tau_s).exp();
    let noise = (sigma_mmhg > 0.0).then(|| Normal::new(0.0, sigma_mmhg).expect("sigma >= 0"));
    let mut samples = Vec::new();
    let mut t = 0.0;
    let mut mean = 0.0;
    let mut lumen_entry: Option<f64> = None;
    for seg in segments {
        let n = (seg.duration_s * config.sample_rate_hz).round() as usize;
        for k in 0..n {
            let frac = (k as f64 + 0.5) / n as f64;
            let depth = seg.depth_from_mm + (seg.depth_to_mm - seg.depth_from_mm) * frac;
            let pump_on = seg.state.pump_enabled() && depth > 0.0;
            if !pump_on {
                mean = 0.0;
            } else if seg.in_lumen {
                mean = vessel_pressure_mmhg + (mean - vessel_pressure_mmhg) * decay;
                lumen_entry.get_or_insert(t);
            } else {
                mean = config.pump_setpoint_mmhg;
            }
            let flashback = lumen_entry.is_some_and(|te| t >= te + config.window_s());
            let pressure = mean + noise.map_or(0.0, |d| d.sample(rng));
            samples.push(PressureSample { time_s: t, depth_mm: depth, pressure_mmhg: pressure, flashback, state: seg.state });
            t += dt;
        }
    }
    samples
}

/// Puncture test over one full detection window: flashback anywhere in the
/// window, or the windowed mean pressure risen above the setpoint by more
/// than the threshold.
pub fn detect_puncture(window: &[PressureSample], config: &NeedleConfig) -> bool {
    debug_assert_eq!(window.len(), config.detection_window_samples);
    if window.iter().any(|s| s.flashback) {
        return true;
    }
    let mean = window.iter().map(|s| s.pressure_mmhg).sum::<f64>() / window.len() as f64;
    mean - config.pump_setpoint_mmhg > config.detection_threshold_mmhg
}

/// Extra tip travel past first wall contact before the wall yields, mm.
/// Monotone non-increasing in internal pressure: hypotensive vessels tent
/// more.
pub fn tenting_depth(vessel_radius_mm: f64, internal_pressure_mmhg: f64, config: &NeedleConfig) -> f64 {
    debug_assert!(vessel_radius_mm > 0.0);
    let deficit = (config.tenting_ref_mmhg - internal_pressure_mmhg).max(0.0);
    config.tenting_d0_mm * (1.0 + config.tenting_gain * deficit / config.tenting_ref_mmhg)
}

/// Machine-readable attempt failure reasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// Needle line never intersects the vessel tube.
    NoIntersection,
    /// Open lumen shorter than the capture threshold.
    VesselCollapsed,
    /// Wall deflection not overcome within the dither budget.
    TentingNotOvercome,
    /// Yield point lies beyond the travel budget.
    OutOfReach,
    /// Target vessel could not be re-acquired in the image.
    TargetLost,
    /// Lumen entered but no window confirmed the puncture.
    NotDetected,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::NoIntersection => "no intersection",
            FailureReason::VesselCollapsed => "vessel collapsed",
            FailureReason::TentingNotOvercome => "tenting not overcome",
            FailureReason::OutOfReach => "out of reach",
            FailureReason::TargetLost => "target lost",
            FailureReason::NotDetected => "not detected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "reason")]
pub enum AttemptOutcome {
    GuidewirePlaced,
    Failed(FailureReason),
}

/// Full record of one insertion attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub point: InsertionPoint,
    pub outcome: AttemptOutcome,
    pub dither_cycles: usize,
    /// Physical truth, independent of what detection concluded.
    pub lumen_entered: bool,
    /// State transitions as (time_s, entered state).
    pub transitions: Vec<(f64, AttemptState)>,
    /// Pressure line; exported separately as CSV, not in the JSON report.
    #[serde(skip)]
    pub samples: Vec<PressureSample>,
}

impl AttemptRecord {
    fn aborted(point: InsertionPoint, reason: FailureReason) -> Self {
        AttemptRecord {
            point,
            outcome: AttemptOutcome::Failed(reason),
            dither_cycles: 0,
            lumen_entered: false,
            transitions: vec![(0.0, AttemptState::Failed)],
            samples: Vec::new(),
        }
    }

    pub fn succeeded(&self) -> bool {
        matches!(self.outcome, AttemptOutcome::GuidewirePlaced)
    }
}

/// Nearest ground-truth vessel to a world point: (vessel, closest centerline
/// point, unit local direction).
fn nearest_vessel(phantom: &Phantom, p: Point3<f64>) -> Option<(&GroundTruthVessel, Point3<f64>, Vector3<f64>)> {
    let mut best: Option<(f64, &GroundTruthVessel, Point3<f64>, Vector3<f64>)> = None;
    for v in &phantom.vessels {
        for w in v.centerline.windows(2) {
            let seg = w[1] - w[0];
            let len2 = seg.norm_squared();
            if len2 < 1e-18 {
                continue;
            }
            let t = ((p - w[0]).dot(&seg) / len2).clamp(0.0, 1.0);
            let q = w[0] + seg * t;
            let d = (p - q).norm();
            if best.as_ref().is_none_or(|(bd, ..)| d < *bd) {
                best = Some((d, v, q, seg.normalize()));
            }
        }
    }
    best.map(|(_, v, q, dir)| (v, q, dir))
}

/// Builds motion segments while logging state transitions.
struct MotionPlan {
    segments: Vec<TraceSegment>,
    transitions: Vec<(f64, AttemptState)>,
    t: f64,
    sin_alpha: f64,
    speed: f64,
}

impl MotionPlan {
    fn new(sin_alpha: f64, speed: f64) -> Self {
        MotionPlan { segments: Vec::new(), transitions: Vec::new(), t: 0.0, sin_alpha, speed }
    }

    fn log_state(&mut self, state: AttemptState) {
        if self.transitions.last().map(|&(_, s)| s) != Some(state) {
            self.transitions.push((self.t, state));
        }
    }

    /// Move the tip between travel positions (mm along the needle line,
    /// 0 = skin entry).
    fn advance(&mut self, state: AttemptState, from_mm: f64, to_mm: f64, in_lumen: bool) {
        let duration = (to_mm - from_mm).abs() / self.speed;
        if duration <= 0.0 {
            return;
        }
        self.log_state(state);
        self.segments.push(TraceSegment {
            state,
            depth_from_mm: from_mm * self.sin_alpha,
            depth_to_mm: to_mm * self.sin_alpha,
            duration_s: duration,
            in_lumen,
        });
        self.t += duration;
    }

    /// Hold the tip still.
    fn dwell(&mut self, state: AttemptState, at_mm: f64, duration_s: f64, in_lumen: bool) {
        if duration_s <= 0.0 {
            return;
        }
        self.log_state(state);
        self.segments.push(TraceSegment {
            state,
            depth_from_mm: at_mm * self.sin_alpha,
            depth_to_mm: at_mm * self.sin_alpha,
            duration_s,
            in_lumen,
        });
        self.t += duration_s;
    }
}

/// Executes one insertion attempt against ground truth. The needle line runs
/// from a skin entry point down to `point.position` at the configured angle
/// (flattened if the probe-to-needle separation forces a longer run-up). The
/// attempt dithers axially on a miss and reports a machine-readable failure
/// reason when no puncture is confirmed. Deterministic per seed.
pub fn attempt_insertion(
    phantom: &Phantom,
    point: &InsertionPoint,
    config: &NeedleConfig,
    rng: &mut impl Rng,
) -> AttemptRecord {
    let aim = point.position;
    let z_skin = phantom.surface.height(aim.x, aim.y);
    let depth_t = z_skin - aim.z;
    if depth_t <= 0.0 {
        return AttemptRecord::aborted(*point, FailureReason::NoIntersection);
    }

    // Entry geometry: flatten the angle if the carriage cannot sit close
    // enough for the requested one.
    let alpha_req = point_angle(config);
    let alpha_fit = (depth_t / config.probe_to_needle_distance_mm).atan();
    let alpha = alpha_req.min(alpha_fit);
    let (sin_a, cos_a) = (alpha.sin(), alpha.cos());
    let u_h = Vector3::new(point.tangent.x, point.tangent.y, 0.0)
        .try_normalize(1e-9)
        .unwrap_or_else(Vector3::x);
    let dir = u_h * cos_a - Vector3::z() * sin_a;
    let travel_to_aim = depth_t / sin_a;
    let entry = aim - dir * travel_to_aim;
    let max_travel = travel_to_aim + config.overshoot_margin_mm;

    // Where the needle line actually crosses the nearest vessel.
    #[derive(Clone, Copy)]
    enum Verdict {
        Puncture { cycle: usize, travel_mm: f64, exit_mm: f64 },
        Fail(FailureReason),
    }
    let mut vessel_pressure = 0.0;
    let verdict = match nearest_vessel(phantom, aim) {
        None => Verdict::Fail(FailureReason::NoIntersection),
        Some((vessel, x_v, v_dir)) => {
            vessel_pressure = vessel.internal_pressure_mmhg;
            let c = collapse_factor(vessel.kind, vessel.internal_pressure_mmhg, &phantom.scenario);
            let r = vessel.nominal_radius_mm;
            let t_center = (entry.z - x_v.z) / sin_a;
            let w_hat = Vector3::z()
                .cross(&v_dir)
                .try_normalize(1e-9)
                .unwrap_or_else(Vector3::y);
            let delta = ((entry + dir * t_center) - x_v).dot(&w_hat).abs();
            if 2.0 * c * r < config.capture_threshold_mm {
                Verdict::Fail(FailureReason::VesselCollapsed)
            } else if t_center <= 0.0 || delta >= r {
                Verdict::Fail(FailureReason::NoIntersection)
            } else {
                // Vertical lumen extent at this lateral offset; the section
                // is an ellipse with horizontal semi-axis r, vertical c·r.
                let half = c * r * (1.0 - (delta / r).powi(2)).sqrt();
                let t_wall = (entry.z - (x_v.z + half)) / sin_a;
                let t_exit = t_wall + 2.0 * half / sin_a;
                let tent = tenting_depth(r, vessel.internal_pressure_mmhg, config);
                let mut found = None;
                for cycle in 0..=config.max_dither_cycles {
                    let tent_c = (tent - cycle as f64 * config.dither_amplitude_mm).max(0.0);
                    let t_p = t_wall + tent_c;
                    if t_p < t_exit && t_p <= max_travel {
                        found = Some(Verdict::Puncture { cycle, travel_mm: t_p, exit_mm: t_exit });
                        break;
                    }
                }
                found.unwrap_or_else(|| {
                    let tent_min =
                        (tent - config.max_dither_cycles as f64 * config.dither_amplitude_mm).max(0.0);
                    if t_wall + tent_min >= t_exit {
                        Verdict::Fail(FailureReason::TentingNotOvercome)
                    } else {
                        Verdict::Fail(FailureReason::OutOfReach)
                    }
                })
            }
        }
    };

    // Motion timeline.
    let mut plan = MotionPlan::new(sin_a, config.advance_speed_mm_s);
    plan.advance(AttemptState::Approach, -config.approach_clearance_mm, 0.0, false);
    plan.dwell(AttemptState::SkinContact, 0.0, SKIN_DWELL_S, false);
    let hold_s = (config.max_detection_windows as f64 + 1.0) * config.window_s();
    let (dither_cycles, lumen_entered) = match verdict {
        Verdict::Puncture { cycle, travel_mm, exit_mm } => {
            let mut pos = 0.0;
            for n in 1..=cycle {
                // Passes that stopped against the tented wall.
                let stop = (travel_mm + (cycle - n + 1) as f64 * config.dither_amplitude_mm)
                    .min(max_travel);
                plan.advance(AttemptState::InTissue, pos, stop, false);
                plan.advance(AttemptState::Dithering, stop, stop - config.dither_amplitude_mm, false);
                pos = stop - config.dither_amplitude_mm;
            }
            plan.advance(AttemptState::InTissue, pos, travel_mm, false);
            let settle = (travel_mm + CAPTURE_ADVANCE_MM).min((exit_mm + travel_mm) / 2.0);
            plan.advance(AttemptState::InTissue, travel_mm, settle, true);
            plan.dwell(AttemptState::InTissue, settle, hold_s, true);
            // Withdrawal is only reached if no window confirms the puncture.
            plan.advance(AttemptState::Failed, settle, -config.approach_clearance_mm, false);
            (cycle, true)
        }
        Verdict::Fail(reason) => {
            let mut pos = 0.0;
            let cycles = match reason {
                FailureReason::NoIntersection
                | FailureReason::VesselCollapsed
                | FailureReason::TentingNotOvercome
                | FailureReason::OutOfReach => config.max_dither_cycles,
                _ => 0,
            };
            plan.advance(AttemptState::InTissue, pos, max_travel, false);
            pos = max_travel;
            for _ in 0..cycles {
                plan.advance(AttemptState::Dithering, pos, pos - config.dither_amplitude_mm, false);
                plan.advance(AttemptState::InTissue, pos - config.dither_amplitude_mm, pos, false);
            }
            plan.advance(AttemptState::Failed, pos, -config.approach_clearance_mm, false);
            (cycles, false)
        }
    };

    let mut samples = pressure_trace(
        &plan.segments,
        vessel_pressure,
        config.pressure_noise_sigma_mmhg,
        config,
        rng,
    );
    let mut transitions = plan.transitions;

    // Detection scan: non-overlapping windows over the pump-enabled stream.
    let stream: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.state.pump_enabled())
        .map(|(i, _)| i)
        .collect();
    let w = config.detection_window_samples;
    let detected_at = stream
        .chunks_exact(w)
        .find(|chunk| {
            let window: Vec<PressureSample> = chunk.iter().map(|&i| samples[i]).collect();
            detect_puncture(&window, config)
        })
        .map(|chunk| chunk[w - 1]);

    let outcome = match detected_at {
        Some(idx) => {
            // Confirmed: cut the timeline at the detecting window and close
            // out the machine.
            let t_det = samples[idx].time_s;
            let dt = 1.0 / config.sample_rate_hz;
            samples.truncate(idx + 1);
            transitions.retain(|&(t, _)| t <= t_det);
            let mut tail = *samples.last().expect("detection implies samples");
            tail.state = AttemptState::Punctured;
            tail.time_s = t_det + dt;
            samples.push(tail);
            tail.state = AttemptState::GuidewirePlaced;
            tail.time_s = t_det + 2.0 * dt;
            samples.push(tail);
            transitions.push((t_det + dt, AttemptState::Punctured));
            transitions.push((t_det + 2.0 * dt, AttemptState::GuidewirePlaced));
            AttemptOutcome::GuidewirePlaced
        }
        None => {
            let reason = match verdict {
                Verdict::Puncture { .. } => FailureReason::NotDetected,
                Verdict::Fail(r) => r,
            };
            AttemptOutcome::Failed(reason)
        }
    };

    AttemptRecord { point: *point, outcome, dither_cycles, lumen_entered, transitions, samples }
}

fn point_angle(config: &NeedleConfig) -> f64 {
    config.insertion_angle_deg.to_radians()
}

/// Per-vessel rollup within a trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VesselOutcome {
    pub vessel_id: u32,
    pub kind: Option<VesselKind>,
    pub attempts: usize,
    pub success: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialReport {
    pub attempts: Vec<AttemptRecord>,
    pub per_vessel: Vec<VesselOutcome>,
    pub total_attempts: usize,
    pub total_successes: usize,
    /// Set when the trial could not run (e.g. an empty plan).
    pub reason: Option<String>,
}

/// Trial-level knobs combining the needle with the centering loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialConfig {
    #[serde(default)]
    pub needle: NeedleConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default = "default_image_width")]
    pub image_width_mm: f64,
    #[serde(default = "default_image_depth")]
    pub image_depth_mm: f64,
    /// Re-image and center on each target before inserting.
    #[serde(default = "default_true")]
    pub centering: bool,
}

fn default_image_width() -> f64 {
    38.0
}
fn default_image_depth() -> f64 {
    40.0
}
fn default_true() -> bool {
    true
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            needle: NeedleConfig::default(),
            planner: PlannerConfig::default(),
            image_width_mm: default_image_width(),
            image_depth_mm: default_image_depth(),
            centering: true,
        }
    }
}

/// Runs the plan in order, skipping vessels that already succeeded. With
/// centering enabled and a model available, each attempt first re-images the
/// target and aims at the observed section centroid; losing the target fails
/// that attempt and falls through to the next point.
pub fn run_trial(
    phantom: &Phantom,
    plan: &InsertionPlan,
    models: &[VesselModel],
    config: &TrialConfig,
    rng: &mut impl Rng,
) -> TrialReport {
    let mut report = TrialReport {
        attempts: Vec::new(),
        per_vessel: Vec::new(),
        total_attempts: 0,
        total_successes: 0,
        reason: None,
    };
    if plan.points.is_empty() {
        report.reason = Some("empty_plan".into());
        return report;
    }
    let model_by_id: BTreeMap<u32, &VesselModel> = models.iter().map(|m| (m.id, m)).collect();
    let mut rollup: BTreeMap<u32, VesselOutcome> = BTreeMap::new();
    for point in &plan.points {
        let entry = rollup.entry(point.vessel_id).or_insert_with(|| VesselOutcome {
            vessel_id: point.vessel_id,
            kind: model_by_id.get(&point.vessel_id).and_then(|m| m.kind),
            attempts: 0,
            success: false,
        });
        if entry.success {
            continue;
        }
        entry.attempts += 1;

        let mut aim = *point;
        let mut lost = false;
        if config.centering {
            if let Some(model) = model_by_id.get(&point.vessel_id) {
                let z_skin = phantom.surface.height(point.position.x, point.position.y);
                let start = probe_over(point.position, point.tangent, z_skin, 0);
                match center_probe(
                    phantom,
                    start,
                    model,
                    config.image_width_mm,
                    config.image_depth_mm,
                    &config.planner,
                    rng,
                ) {
                    Ok(centered) => {
                        if let Ok(idx) = match_target(&centered.final_frame, model) {
                            let uv = centered.final_frame.contours[idx].centroid();
                            aim.position =
                                centered.pose.frame().image_to_world(uv, config.image_width_mm);
                        }
                    }
                    Err(_) => lost = true,
                }
            }
        }

        let record = if lost {
            AttemptRecord::aborted(*point, FailureReason::TargetLost)
        } else {
            attempt_insertion(phantom, &aim, &config.needle, rng)
        };
        if record.succeeded() {
            rollup.get_mut(&point.vessel_id).expect("entry exists").success = true;
            report.total_successes += 1;
        }
        report.attempts.push(record);
        report.total_attempts += 1;
    }
    report.per_vessel = rollup.into_values().collect();
    report
}
