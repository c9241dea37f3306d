//! Frame-to-frame contour association and track lifecycle.
//!
//! Each active track is represented by its latest contour; frame contours are
//! matched against those by minimum total `1 − IoU` cost (Kuhn–Munkres),
//! with pairs above the gate forbidden. Matched tracks append and reset their
//! miss count, unmatched tracks age out after `max_misses` consecutive
//! misses, and unmatched contours found new tracks.

use serde::{Deserialize, Serialize};

use crate::assignment::solve_assignment;
use crate::phantom::{Contour2D, UltrasoundFrame, VesselKind};

/// Cost placed on gated (forbidden) pairs. Large enough that the solver only
/// selects such a pair when a row/column has no admissible partner at all, in
/// which case the pair is discarded afterwards.
const FORBIDDEN: f64 = 1e6;

/// Among minimum-cost matchings, returns the lexicographically smallest by
/// (row, col): walk cells in index order and fix a pair whenever doing so
/// still achieves the optimal total. Matrices here are small (tracks ×
/// contours), so the extra solves are cheap.
fn lexicographic_min_matching(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    let target = solve_assignment(cost).total_cost;
    let tol = 1e-9;
    let mut free_rows: Vec<usize> = (0..rows).collect();
    let mut free_cols: Vec<usize> = (0..cols).collect();
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut fixed_cost = 0.0;
    let n_pairs = rows.min(cols);
    'outer: while fixed.len() < n_pairs {
        for (ri, &i) in free_rows.iter().enumerate() {
            for (ci, &j) in free_cols.iter().enumerate() {
                let sub: Vec<Vec<f64>> = free_rows
                    .iter()
                    .enumerate()
                    .filter(|(r, _)| *r != ri)
                    .map(|(_, &fr)| {
                        free_cols
                            .iter()
                            .enumerate()
                            .filter(|(c, _)| *c != ci)
                            .map(|(_, &fc)| cost[fr][fc])
                            .collect()
                    })
                    .collect();
                let rest = solve_assignment(&sub).total_cost;
                if (fixed_cost + cost[i][j] + rest - target).abs() <= tol {
                    fixed.push((i, j));
                    fixed_cost += cost[i][j];
                    free_rows.remove(ri);
                    free_cols.remove(ci);
                    continue 'outer;
                }
            }
        }
        unreachable!("some admissible pair always preserves the optimum");
    }
    fixed.sort_unstable();
    fixed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Active,
    Finished,
}

/// One tracked vessel hypothesis across a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    /// (frame_id, contour) pairs, frame_ids strictly increasing.
    pub observations: Vec<(u64, Contour2D)>,
    pub miss_count: u32,
    pub state: TrackState,
}

impl Track {
    pub fn latest(&self) -> &Contour2D {
        &self.observations.last().expect("tracks are born with one observation").1
    }

    /// Majority ground-truth class over the observations, if any carried one.
    pub fn majority_kind(&self) -> Option<VesselKind> {
        let mut artery = 0usize;
        let mut vein = 0usize;
        for (_, c) in &self.observations {
            match c.kind {
                Some(VesselKind::Artery) => artery += 1,
                Some(VesselKind::Vein) => vein += 1,
                None => {}
            }
        }
        if artery == 0 && vein == 0 {
            None
        } else if artery >= vein {
            Some(VesselKind::Artery)
        } else {
            Some(VesselKind::Vein)
        }
    }
}

/// Result of associating one frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assignment {
    /// (track_id, contour index) matches at cost ≤ gate, sorted by track_id.
    pub pairs: Vec<(u64, usize)>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_contours: Vec<usize>,
    /// Sum of true (unbiased) costs over the matched pairs.
    pub total_cost: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Maximum admissible association cost (1 − IoU); pairs above are
    /// forbidden. 0.8 requires IoU ≥ 0.2.
    #[serde(default = "default_gate")]
    pub gate_cost: f64,
    /// Consecutive misses tolerated before a track finishes.
    #[serde(default = "default_max_misses")]
    pub max_misses: u32,
}

fn default_gate() -> f64 {
    0.8
}

fn default_max_misses() -> u32 {
    5
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig { gate_cost: default_gate(), max_misses: default_max_misses() }
    }
}

/// Association cost between two contours: 1 − IoU of their polygons.
pub fn overlap_cost(a: &Contour2D, b: &Contour2D) -> f64 {
    1.0 - crate::geom::polygon::iou(&a.points, &b.points)
}

/// Multi-contour tracker over one sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tracker {
    pub config: TrackerConfig,
    pub tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Tracker { config, tracks: Vec::new(), next_id: 0 }
    }

    pub fn active_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.state == TrackState::Active)
    }

    /// Associates one frame's contours with the active tracks and applies the
    /// lifecycle rules. Returns what was matched.
    pub fn associate_frame(&mut self, frame: &UltrasoundFrame) -> Assignment {
        debug_assert!(self.config.gate_cost > 0.0 && self.config.gate_cost <= 1.0);
        let active: Vec<usize> = self
            .tracks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.state == TrackState::Active)
            .map(|(i, _)| i)
            .collect();
        let n_contours = frame.contours.len();

        let cost: Vec<Vec<f64>> = active
            .iter()
            .map(|&ti| {
                let latest = self.tracks[ti].latest();
                (0..n_contours)
                    .map(|col| {
                        let c = overlap_cost(latest, &frame.contours[col]);
                        if c > self.config.gate_cost {
                            FORBIDDEN
                        } else {
                            c
                        }
                    })
                    .collect()
            })
            .collect();

        let matching = lexicographic_min_matching(&cost);
        let mut matched_tracks = vec![false; active.len()];
        let mut matched_contours = vec![false; n_contours];
        let mut pairs = Vec::new();
        let mut total_cost = 0.0;
        for &(row, col) in &matching {
            if cost[row][col] >= FORBIDDEN {
                continue; // forced pairing of leftovers, not a real match
            }
            let ti = active[row];
            matched_tracks[row] = true;
            matched_contours[col] = true;
            total_cost += overlap_cost(self.tracks[ti].latest(), &frame.contours[col]);
            pairs.push((self.tracks[ti].track_id, col));
        }
        pairs.sort_unstable();

        // Lifecycle: append to matched, age unmatched, spawn from leftovers.
        let mut unmatched_tracks = Vec::new();
        for (row, &ti) in active.iter().enumerate() {
            let track = &mut self.tracks[ti];
            if matched_tracks[row] {
                let col = pairs
                    .iter()
                    .find(|(id, _)| *id == track.track_id)
                    .expect("matched track present in pairs")
                    .1;
                track.observations.push((frame.frame_id, frame.contours[col].clone()));
                track.miss_count = 0;
            } else {
                track.miss_count += 1;
                if track.miss_count > self.config.max_misses {
                    track.state = TrackState::Finished;
                }
                unmatched_tracks.push(track.track_id);
            }
        }
        let mut unmatched_contours = Vec::new();
        for (col, contour) in frame.contours.iter().enumerate() {
            if !matched_contours[col] {
                self.tracks.push(Track {
                    track_id: self.next_id,
                    observations: vec![(frame.frame_id, contour.clone())],
                    miss_count: 0,
                    state: TrackState::Active,
                });
                self.next_id += 1;
                unmatched_contours.push(col);
            }
        }
        unmatched_tracks.sort_unstable();

        Assignment { pairs, unmatched_tracks, unmatched_contours, total_cost }
    }

    /// Runs the tracker over a whole sweep and returns the tracks, sorted by
    /// id (all of them, finished or still active at sweep end).
    pub fn process_sweep(frames: &[UltrasoundFrame], config: TrackerConfig) -> Vec<Track> {
        let mut tracker = Tracker::new(config);
        for frame in frames {
            tracker.associate_frame(frame);
        }
        tracker.tracks.sort_by_key(|t| t.track_id);
        tracker.tracks
    }
}
