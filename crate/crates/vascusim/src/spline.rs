//! Penalized least-squares cubic B-spline curves in 3D.
//!
//! Curves are parameterized by station `s` over a clamped knot vector. The
//! fit minimizes Σ‖C(sᵢ) − pᵢ‖² + λ·∫‖C″(s)‖² ds; the roughness penalty is
//! assembled exactly (B″ is piecewise linear, so per-interval Simpson is
//! exact), which keeps straight lines in the penalty's null space at any λ.
//! Singular systems (λ = 0 with knots at samples is under-determined) fall
//! back to the minimum-norm least-squares solution via SVD.

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEGREE: usize = 3;

/// Cubic B-spline curve: clamped knots and one 3D control point per basis
/// function. Evaluation clamps the parameter to the knot domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubicSpline {
    pub knots: Vec<f64>,
    pub control: Vec<Vector3<f64>>,
}

/// Knot span index containing `s` (NURBS-book `FindSpan`).
fn find_span(knots: &[f64], n_basis: usize, s: f64) -> usize {
    let (lo, hi) = (knots[DEGREE], knots[n_basis]);
    if s >= hi {
        return n_basis - 1;
    }
    if s <= lo {
        return DEGREE;
    }
    let mut low = DEGREE;
    let mut high = n_basis;
    let mut mid = (low + high) / 2;
    while s < knots[mid] || s >= knots[mid + 1] {
        if s < knots[mid] {
            high = mid;
        } else {
            low = mid;
        }
        mid = (low + high) / 2;
    }
    mid
}

/// Non-zero basis functions at `s` for `span` (NURBS-book `BasisFuns`).
fn basis_funs(knots: &[f64], span: usize, s: f64) -> [f64; DEGREE + 1] {
    let mut n = [0.0; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = s - knots[span + 1 - j];
        right[j] = knots[span + j] - s;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Non-zero basis functions and derivatives up to order `n_ders` at `s`
/// (NURBS-book `DersBasisFuns`). Row k holds the k-th derivatives.
fn ders_basis_funs(
    knots: &[f64],
    span: usize,
    s: f64,
    n_ders: usize,
) -> Vec<[f64; DEGREE + 1]> {
    let mut ndu = [[0.0; DEGREE + 1]; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    ndu[0][0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = s - knots[span + 1 - j];
        right[j] = knots[span + j] - s;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![[0.0; DEGREE + 1]; n_ders + 1];
    for j in 0..=DEGREE {
        ders[0][j] = ndu[j][DEGREE];
    }
    let mut a = [[0.0; DEGREE + 1]; 2];
    for r in 0..=DEGREE {
        let mut s1 = 0;
        let mut s2 = 1;
        a[0][0] = 1.0;
        for k in 1..=n_ders.min(DEGREE) {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = DEGREE - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { DEGREE - r };
            for j in j1..=j2 {
                a[s2][j] =
                    (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = DEGREE as f64;
    for k in 1..=n_ders.min(DEGREE) {
        for j in 0..=DEGREE {
            ders[k][j] *= factor;
        }
        factor *= (DEGREE - k) as f64;
    }
    ders
}

impl CubicSpline {
    pub fn n_basis(&self) -> usize {
        self.control.len()
    }

    /// Parameter domain [start, end].
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[DEGREE], self.knots[self.n_basis()])
    }

    pub fn eval(&self, s: f64) -> Point3<f64> {
        let (lo, hi) = self.domain();
        let s = s.clamp(lo, hi);
        let span = find_span(&self.knots, self.n_basis(), s);
        let n = basis_funs(&self.knots, span, s);
        let mut p = Vector3::zeros();
        for (j, w) in n.iter().enumerate() {
            p += self.control[span - DEGREE + j] * *w;
        }
        Point3::from(p)
    }

    /// First derivative dC/ds.
    pub fn deriv(&self, s: f64) -> Vector3<f64> {
        let (lo, hi) = self.domain();
        let s = s.clamp(lo, hi);
        let span = find_span(&self.knots, self.n_basis(), s);
        let ders = ders_basis_funs(&self.knots, span, s, 1);
        let mut d = Vector3::zeros();
        for j in 0..=DEGREE {
            d += self.control[span - DEGREE + j] * ders[1][j];
        }
        d
    }

    /// Unit tangent; falls back to +x for degenerate derivatives.
    pub fn tangent(&self, s: f64) -> Vector3<f64> {
        self.deriv(s).try_normalize(1e-12).unwrap_or_else(Vector3::x)
    }

    /// Cumulative arc-length table at `step` mm of parameter, for numeric
    /// length queries and arc → parameter inversion.
    pub fn arc_table(&self, step: f64) -> ArcTable {
        let (lo, hi) = self.domain();
        let n = (((hi - lo) / step).ceil() as usize).max(1);
        let mut params = Vec::with_capacity(n + 1);
        let mut arcs = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        let mut prev = self.eval(lo);
        params.push(lo);
        arcs.push(0.0);
        for i in 1..=n {
            let s = lo + (hi - lo) * i as f64 / n as f64;
            let p = self.eval(s);
            acc += (p - prev).norm();
            prev = p;
            params.push(s);
            arcs.push(acc);
        }
        ArcTable { params, arcs }
    }

    /// Numeric arc length of the whole curve (0.05 mm parameter steps, well
    /// inside 0.1 mm accuracy for desk-scale curvature).
    pub fn arc_length(&self) -> f64 {
        self.arc_table(0.05).total()
    }
}

/// Monotone arc-length table: parameter ↔ cumulative arc length.
#[derive(Debug, Clone)]
pub struct ArcTable {
    params: Vec<f64>,
    arcs: Vec<f64>,
}

impl ArcTable {
    pub fn total(&self) -> f64 {
        *self.arcs.last().unwrap()
    }

    /// Parameter at a given arc length (clamped; linear interpolation).
    pub fn param_at_arc(&self, arc: f64) -> f64 {
        let arc = arc.clamp(0.0, self.total());
        let idx = self.arcs.partition_point(|&a| a < arc);
        if idx == 0 {
            return self.params[0];
        }
        let (a0, a1) = (self.arcs[idx - 1], self.arcs[idx]);
        let (p0, p1) = (self.params[idx - 1], self.params[idx]);
        if a1 - a0 < 1e-15 {
            return p0;
        }
        p0 + (p1 - p0) * (arc - a0) / (a1 - a0)
    }
}

/// Clamped knot vector on [lo, hi] with the given interior knots.
fn clamped_knots(lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut knots = Vec::with_capacity(interior.len() + 2 * (DEGREE + 1));
    knots.extend(std::iter::repeat_n(lo, DEGREE + 1));
    knots.extend_from_slice(interior);
    knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
    knots
}

/// Interior knots spaced every `spacing` mm across (lo, hi), exclusive.
fn uniform_interior(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let span = hi - lo;
    let n = (span / spacing).floor() as usize;
    (1..=n)
        .map(|k| lo + k as f64 * spacing)
        .filter(|&u| u < hi - 1e-9)
        .collect()
}

/// Fits a penalized least-squares cubic spline through (station, point)
/// samples with interior knots every `knot_spacing` mm. Stations need not be
/// sorted; duplicates are averaged by least squares.
pub fn fit_spline(
    stations: &[f64],
    points: &[Point3<f64>],
    lambda: f64,
    knot_spacing: f64,
) -> Result<CubicSpline> {
    let lo = stations.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = stations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let interior = uniform_interior(lo, hi, knot_spacing);
    fit_spline_with_knots(stations, points, lambda, &interior)
}

/// As [`fit_spline`] but with explicit interior knots (strictly inside the
/// station range, ascending).
pub fn fit_spline_with_knots(
    stations: &[f64],
    points: &[Point3<f64>],
    lambda: f64,
    interior: &[f64],
) -> Result<CubicSpline> {
    if stations.len() != points.len() {
        return Err(Error::Validation("stations and points must pair up".into()));
    }
    if stations.len() < DEGREE + 1 {
        return Err(Error::Validation(format!(
            "spline fit needs >= {} samples, got {}",
            DEGREE + 1,
            stations.len()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::Validation("smoothing lambda must be >= 0".into()));
    }
    let lo = stations.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = stations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo < 1e-9 {
        return Err(Error::DegenerateGeometry("station range is empty".into()));
    }
    debug_assert!(interior.windows(2).all(|w| w[0] <= w[1]));
    let knots = clamped_knots(lo, hi, interior);
    let n_basis = interior.len() + DEGREE + 1;

    // Design matrix.
    let mut b = DMatrix::zeros(stations.len(), n_basis);
    for (row, &s) in stations.iter().enumerate() {
        let span = find_span(&knots, n_basis, s);
        let n = basis_funs(&knots, span, s);
        for (j, w) in n.iter().enumerate() {
            b[(row, span - DEGREE + j)] = *w;
        }
    }

    // Exact curvature penalty Ω_ij = ∫ B_i″ B_j″ ds: B″ is linear on each
    // knot interval, so 3-point Simpson per interval integrates the product
    // exactly.
    let mut omega = DMatrix::zeros(n_basis, n_basis);
    for span in DEGREE..n_basis {
        let (a, c) = (knots[span], knots[span + 1]);
        if c - a < 1e-12 {
            continue;
        }
        let m = 0.5 * (a + c);
        let h = c - a;
        let d_a = ders_basis_funs(&knots, span, a, 2);
        let d_m = ders_basis_funs(&knots, span, m, 2);
        let d_c = ders_basis_funs(&knots, span, c, 2);
        for i in 0..=DEGREE {
            for j in 0..=DEGREE {
                let val = h / 6.0
                    * (d_a[2][i] * d_a[2][j] + 4.0 * d_m[2][i] * d_m[2][j] + d_c[2][i] * d_c[2][j]);
                omega[(span - DEGREE + i, span - DEGREE + j)] += val;
            }
        }
    }

    let normal = b.transpose() * &b + omega * lambda;
    let rhs_cols: Vec<DVector<f64>> = (0..3)
        .map(|axis| {
            let target = DVector::from_iterator(points.len(), points.iter().map(|p| p[axis]));
            b.transpose() * target
        })
        .collect();

    // Cholesky when the normal matrix is positive definite; otherwise the
    // minimum-norm least-squares solution (λ = 0 with knots at samples is a
    // legitimately singular system).
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        if let Some(chol) = normal.clone().cholesky() {
            chol.solve(rhs)
        } else {
            let svd = normal.clone().svd(true, true);
            svd.solve(rhs, 1e-10).expect("SVD solve with U/V computed")
        }
    };
    let sols: Vec<DVector<f64>> = rhs_cols.iter().map(solve).collect();
    let control: Vec<Vector3<f64>> = (0..n_basis)
        .map(|i| Vector3::new(sols[0][i], sols[1][i], sols[2][i]))
        .collect();

    Ok(CubicSpline { knots, control })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_points(n: usize) -> (Vec<f64>, Vec<Point3<f64>>) {
        let stations: Vec<f64> = (0..n).map(|i| i as f64 * 2.5).collect();
        let points = stations
            .iter()
            .map(|&s| Point3::new(1.0 + 0.5 * s, 2.0 - 0.25 * s, 3.0 + 0.1 * s))
            .collect();
        (stations, points)
    }

    #[test]
    fn collinear_points_fit_exactly_at_any_lambda() {
        let (stations, points) = line_points(20);
        for &lambda in &[0.0, 1.0, 1e4] {
            let sp = fit_spline(&stations, &points, lambda, 5.0).unwrap();
            for k in 0..200 {
                let s = 47.5 * k as f64 / 199.0;
                let expect = Point3::new(1.0 + 0.5 * s, 2.0 - 0.25 * s, 3.0 + 0.1 * s);
                let got = sp.eval(s);
                assert!(
                    (got - expect).norm() < 1e-6,
                    "λ={lambda} s={s}: {got:?} vs {expect:?}"
                );
            }
        }
    }

    #[test]
    fn quadratic_interpolation_with_knots_at_samples() {
        // Quadratic arc sampled at the knots, λ = 0: the system is consistent
        // (a cubic spline can reproduce a quadratic), so least-squares
        // residuals at the samples must vanish.
        let stations: Vec<f64> = (0..=12).map(|i| i as f64 * 4.0).collect();
        let quad = |s: f64| Point3::new(s, 0.02 * s * s, 5.0 + 0.01 * s * s);
        let points: Vec<Point3<f64>> = stations.iter().map(|&s| quad(s)).collect();
        let interior: Vec<f64> = stations[1..stations.len() - 1].to_vec();
        let sp = fit_spline_with_knots(&stations, &points, 0.0, &interior).unwrap();
        for (&s, p) in stations.iter().zip(&points) {
            assert!((sp.eval(s) - p).norm() < 1e-6, "residual at s={s}");
        }
    }

    #[test]
    fn minimum_norm_solution_matches_design_matrix_pseudoinverse() {
        // Independent oracle: solve B·C = P directly via SVD of the design
        // matrix. pinv(BᵀB)·Bᵀ = pinv(B), so the control points must agree.
        let stations: Vec<f64> = (0..=10).map(|i| i as f64 * 3.0).collect();
        let quad = |s: f64| Point3::new(s, 0.03 * s * s, 1.0);
        let points: Vec<Point3<f64>> = stations.iter().map(|&s| quad(s)).collect();
        let interior: Vec<f64> = stations[1..stations.len() - 1].to_vec();
        let sp = fit_spline_with_knots(&stations, &points, 0.0, &interior).unwrap();

        let knots = clamped_knots(0.0, 30.0, &interior);
        let n_basis = interior.len() + DEGREE + 1;
        let mut b = DMatrix::zeros(stations.len(), n_basis);
        for (row, &s) in stations.iter().enumerate() {
            let span = find_span(&knots, n_basis, s);
            let n = basis_funs(&knots, span, s);
            for (j, w) in n.iter().enumerate() {
                b[(row, span - DEGREE + j)] = *w;
            }
        }
        let svd = b.svd(true, true);
        for axis in 0..3 {
            let target = DVector::from_iterator(points.len(), points.iter().map(|p| p[axis]));
            let oracle = svd.solve(&target, 1e-10).unwrap();
            for i in 0..n_basis {
                assert!(
                    (sp.control[i][axis] - oracle[i]).abs() < 1e-6,
                    "axis {axis} control {i}: {} vs {}",
                    sp.control[i][axis],
                    oracle[i]
                );
            }
        }
    }

    #[test]
    fn duplicate_stations_average_in_least_squares() {
        // Two samples at the same station, symmetric about a line: the fit
        // passes midway (least squares averages them).
        let mut stations: Vec<f64> = (0..=10).map(|i| i as f64 * 3.0).collect();
        let mut points: Vec<Point3<f64>> =
            stations.iter().map(|&s| Point3::new(s, 0.0, 0.0)).collect();
        stations.push(15.0);
        points.push(Point3::new(15.0, 1.0, 0.0));
        // The dataset already contains (15, 0); adding (15, +1) pulls the
        // curve up by roughly half the offset at that station.
        let sp = fit_spline(&stations, &points, 0.0, 7.5).unwrap();
        let y = sp.eval(15.0).y;
        assert!(y > 0.2 && y < 0.8, "expected pulled-up fit, got y = {y}");
    }

    #[test]
    fn smoothing_straightens_noisy_line() {
        // Alternating ±0.5 mm zig-zag around a straight line: heavy smoothing
        // must flatten it far below the raw deviation.
        let stations: Vec<f64> = (0..40).map(|i| i as f64 * 1.0).collect();
        let points: Vec<Point3<f64>> = stations
            .iter()
            .enumerate()
            .map(|(i, &s)| Point3::new(s, if i % 2 == 0 { 0.5 } else { -0.5 }, 0.0))
            .collect();
        let rough = fit_spline(&stations, &points, 0.0, 1.0).unwrap();
        let smooth = fit_spline(&stations, &points, 1e4, 1.0).unwrap();
        let max_dev = |sp: &CubicSpline| {
            (0..400)
                .map(|k| sp.eval(39.0 * k as f64 / 399.0).y.abs())
                .fold(0.0f64, f64::max)
        };
        assert!(max_dev(&smooth) < 0.1, "smooth fit deviation {}", max_dev(&smooth));
        assert!(max_dev(&rough) > 0.3, "rough fit should chase the zig-zag");
    }

    #[test]
    fn arc_length_of_line_equals_span() {
        let (stations, points) = line_points(10);
        let sp = fit_spline(&stations, &points, 0.0, 5.0).unwrap();
        // Line direction (0.5, -0.25, 0.1) per unit station; station span 22.5.
        let expected = 22.5 * Vector3::new(0.5, -0.25, 0.1).norm();
        assert_relative_eq!(sp.arc_length(), expected, epsilon = 1e-3);
    }

    #[test]
    fn semicircle_arc_length_within_tolerance() {
        // Dense samples of a radius-30 semicircle; spline arc length must hit
        // π·30 within 0.1 mm.
        let n = 181;
        let stations: Vec<f64> = (0..n).map(|i| i as f64).collect(); // degrees
        let points: Vec<Point3<f64>> = (0..n)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / (n - 1) as f64;
                Point3::new(30.0 * t.cos(), 30.0 * t.sin(), 0.0)
            })
            .collect();
        let sp = fit_spline(&stations, &points, 0.0, 5.0).unwrap();
        let expected = std::f64::consts::PI * 30.0;
        assert!(
            (sp.arc_length() - expected).abs() < 0.1,
            "arc {} vs {expected}",
            sp.arc_length()
        );
    }

    #[test]
    fn arc_table_inverts_to_parameter() {
        let (stations, points) = line_points(10);
        let sp = fit_spline(&stations, &points, 0.0, 5.0).unwrap();
        let table = sp.arc_table(0.05);
        for k in 0..=10 {
            let s = 22.5 * k as f64 / 10.0;
            let arc_at_s = (sp.eval(s) - sp.eval(0.0)).norm(); // line: chord = arc
            assert_relative_eq!(table.param_at_arc(arc_at_s), s, epsilon = 1e-3);
        }
    }

    #[test]
    fn rejects_too_few_samples() {
        let stations = vec![0.0, 1.0, 2.0];
        let points = vec![Point3::origin(); 3];
        assert!(fit_spline(&stations, &points, 0.0, 5.0).is_err());
    }

    #[test]
    fn eval_clamps_outside_domain() {
        let (stations, points) = line_points(10);
        let sp = fit_spline(&stations, &points, 0.0, 5.0).unwrap();
        assert_relative_eq!(sp.eval(-5.0), sp.eval(0.0));
        assert_relative_eq!(sp.eval(1e6), sp.eval(22.5));
    }
}
