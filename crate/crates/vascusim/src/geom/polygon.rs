//! Planar polygon primitives: area, centroid, clipping, IoU.
//!
//! Contours produced by the simulator are convex by construction (ellipse
//! approximations, optionally clipped to the image window), so intersection
//! uses Sutherland–Hodgman clipping against a convex clip polygon.

use nalgebra::Point2;

/// Signed area via the shoelace formula. Positive for counter-clockwise winding.
pub fn signed_area(points: &[Point2<f64>]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        let p = &points[i];
        let q = &points[(i + 1) % n];
        sum += p.x * q.y - q.x * p.y;
    }
    0.5 * sum
}

pub fn area(points: &[Point2<f64>]) -> f64 {
    signed_area(points).abs()
}

/// Area-weighted polygon centroid. Falls back to the vertex mean for
/// (near-)degenerate polygons.
pub fn centroid(points: &[Point2<f64>]) -> Point2<f64> {
    let n = points.len();
    let a = signed_area(points);
    if n < 3 || a.abs() < 1e-12 {
        let mut cx = 0.0;
        let mut cy = 0.0;
        for p in points {
            cx += p.x;
            cy += p.y;
        }
        let nf = n.max(1) as f64;
        return Point2::new(cx / nf, cy / nf);
    }
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = &points[i];
        let q = &points[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    Point2::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Returns the polygon with counter-clockwise winding, reversing if needed.
pub fn ccw(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    if signed_area(points) < 0.0 {
        points.iter().rev().copied().collect()
    } else {
        points.to_vec()
    }
}

/// Checks that no two non-adjacent edges intersect.
pub fn is_simple(points: &[Point2<f64>]) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (points[i], points[(i + 1) % n]);
        for j in (i + 1)..n {
            // Skip adjacent edges (shared vertex).
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (b1, b2) = (points[j], points[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

fn orient(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(a1: Point2<f64>, a2: Point2<f64>, b1: Point2<f64>, b2: Point2<f64>) -> bool {
    let d1 = orient(b1, b2, a1);
    let d2 = orient(b1, b2, a2);
    let d3 = orient(a1, a2, b1);
    let d4 = orient(a1, a2, b2);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Point-in-polygon via the winding number. Boundary points count as inside.
pub fn contains_point(points: &[Point2<f64>], p: Point2<f64>) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    let mut winding = 0i32;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            winding -= 1;
        }
        // On-edge check: collinear and within the segment's bounding box.
        if orient(a, b, p).abs() < 1e-12
            && p.x >= a.x.min(b.x) - 1e-12
            && p.x <= a.x.max(b.x) + 1e-12
            && p.y >= a.y.min(b.y) - 1e-12
            && p.y <= a.y.max(b.y) + 1e-12
        {
            return true;
        }
    }
    winding != 0
}

/// Clips `subject` against a convex, counter-clockwise `clip` polygon
/// (Sutherland–Hodgman). Returns the clipped polygon, possibly empty.
pub fn clip_convex(subject: &[Point2<f64>], clip: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut output: Vec<Point2<f64>> = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let c1 = clip[i];
        let c2 = clip[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let s = input[j];
            let e = input[(j + 1) % n];
            let s_in = orient(c1, c2, s) >= 0.0;
            let e_in = orient(c1, c2, e) >= 0.0;
            match (s_in, e_in) {
                (true, true) => output.push(e),
                (true, false) => output.push(line_intersection(c1, c2, s, e)),
                (false, true) => {
                    output.push(line_intersection(c1, c2, s, e));
                    output.push(e);
                }
                (false, false) => {}
            }
        }
    }
    output
}

fn line_intersection(
    c1: Point2<f64>,
    c2: Point2<f64>,
    s: Point2<f64>,
    e: Point2<f64>,
) -> Point2<f64> {
    let dc = c1 - c2;
    let dp = s - e;
    let n1 = c1.x * c2.y - c1.y * c2.x;
    let n2 = s.x * e.y - s.y * e.x;
    let denom = dc.x * dp.y - dc.y * dp.x;
    Point2::new((n1 * dp.x - n2 * dc.x) / denom, (n1 * dp.y - n2 * dc.y) / denom)
}

/// Intersection area of two convex polygons (winding normalized internally).
pub fn intersection_area(a: &[Point2<f64>], b: &[Point2<f64>]) -> f64 {
    let a = ccw(a);
    let b = ccw(b);
    area(&clip_convex(&a, &b))
}

/// Intersection-over-union of two convex polygons, clamped to [0, 1].
pub fn iou(a: &[Point2<f64>], b: &[Point2<f64>]) -> f64 {
    let inter = intersection_area(a, b);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, side: f64) -> Vec<Point2<f64>> {
        vec![
            Point2::new(x0, y0),
            Point2::new(x0 + side, y0),
            Point2::new(x0 + side, y0 + side),
            Point2::new(x0, y0 + side),
        ]
    }

    #[test]
    fn shoelace_square() {
        assert!((area(&square(0.0, 0.0, 10.0)) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn centroid_of_square() {
        let c = centroid(&square(2.0, 3.0, 4.0));
        assert!((c.x - 4.0).abs() < 1e-12);
        assert!((c.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn identical_squares_iou_one() {
        let s = square(0.0, 0.0, 10.0);
        assert!((iou(&s, &s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_iou_zero() {
        let a = square(0.0, 0.0, 5.0);
        let b = square(100.0, 100.0, 5.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn offset_squares_iou_third() {
        // 10x10 squares offset 5 in x: intersection 50, union 150.
        let a = square(0.0, 0.0, 10.0);
        let b = square(5.0, 0.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn clip_handles_winding() {
        let a = square(0.0, 0.0, 10.0);
        let b: Vec<_> = square(5.0, 0.0, 10.0).into_iter().rev().collect();
        assert!((intersection_area(&a, &b) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn simple_polygon_check() {
        assert!(is_simple(&square(0.0, 0.0, 1.0)));
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(!is_simple(&bowtie));
    }

    #[test]
    fn winding_contains() {
        let s = square(0.0, 0.0, 10.0);
        assert!(contains_point(&s, Point2::new(5.0, 5.0)));
        assert!(!contains_point(&s, Point2::new(15.0, 5.0)));
        assert!(contains_point(&s, Point2::new(0.0, 5.0))); // boundary
    }
}
