use super::{axis_aligned_bbox, segment_distance, GeometryError, Point2, Polygon, Tetragon};

/// Douglas–Peucker simplification of an open polyline.
///
/// Keeps the first and last point and every point whose distance to the
/// current chord exceeds `epsilon`. Distances are measured to the chord
/// segment, so each dropped point lies within `epsilon` of the segment that
/// replaced it.
pub fn douglas_peucker(polyline: &[Point2], epsilon: f64) -> Vec<Point2> {
    if polyline.len() <= 2 {
        return polyline.to_vec();
    }
    let keep = dp_mask(polyline, epsilon);
    polyline
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(*p))
        .collect()
}

fn dp_mask(points: &[Point2], epsilon: f64) -> Vec<bool> {
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((first, last)) = stack.pop() {
        if last <= first + 1 {
            continue;
        }
        let (a, b) = (points[first], points[last]);
        let (idx, dmax) = (first + 1..last)
            .map(|i| (i, segment_distance(points[i], a, b)))
            .fold((first, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if dmax > epsilon {
            keep[idx] = true;
            stack.push((first, idx));
            stack.push((idx, last));
        }
    }
    keep
}

/// Douglas–Peucker on a closed ring.
///
/// The ring is split at a pair of far-apart vertices (the vertex farthest from
/// vertex 0, and then the vertex farthest from that one); both chains are
/// simplified independently and the two split vertices are always kept.
pub fn simplify_closed(ring: &[Point2], epsilon: f64) -> Vec<Point2> {
    let n = ring.len();
    if n <= 3 {
        return ring.to_vec();
    }
    let farthest_from = |from: Point2| {
        (0..n)
            .map(|i| (i, ring[i].distance(from)))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0
    };
    let a = farthest_from(ring[0]);
    let b = farthest_from(ring[a]);
    if a == b {
        return vec![ring[a]];
    }
    let chain = |from: usize, to: usize| -> Vec<Point2> {
        let len = (to + n - from) % n;
        (0..=len).map(|k| ring[(from + k) % n]).collect()
    };
    let mut out = douglas_peucker(&chain(a, b), epsilon);
    let back = douglas_peucker(&chain(b, a), epsilon);
    out.extend_from_slice(&back[1..back.len() - 1]);
    out
}

const EPSILON_SEARCH_STEPS: usize = 40;
/// Absolute floor on how far a corner must stand off the chord joining its
/// neighbours; rasterized triangles leave staircase notches of about a pixel.
const MIN_CORNER_PROMINENCE_PX: f64 = 2.0;
/// Same floor, relative to the bounding-box diagonal.
const MIN_CORNER_PROMINENCE_FRAC: f64 = 0.02;

/// Reduces a polygon to four corners by searching for the smallest
/// Douglas–Peucker tolerance in `[0.5, bbox diagonal]` that leaves at most
/// four vertices.
///
/// Fails with [`GeometryError::NotQuadrilateral`] if that tolerance leaves
/// fewer than four, or if one of the four is only a quantization notch on an
/// otherwise triangular outline.
pub fn simplify_to_tetragon(poly: &Polygon) -> Result<Tetragon, GeometryError> {
    let ring = poly.vertices();
    let (lo_pt, hi_pt) = axis_aligned_bbox(ring)?;
    let diagonal = lo_pt.distance(hi_pt).max(0.5);
    let count = |eps: f64| simplify_closed(ring, eps).len();

    let mut lo = 0.5;
    let mut hi = diagonal;
    let eps = if count(lo) <= 4 {
        lo
    } else {
        for _ in 0..EPSILON_SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            if count(mid) <= 4 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let corners = simplify_closed(ring, eps);
    if corners.len() != 4 {
        return Err(GeometryError::NotQuadrilateral(corners.len()));
    }
    let min_prominence = MIN_CORNER_PROMINENCE_PX.max(MIN_CORNER_PROMINENCE_FRAC * diagonal);
    let notch = (0..4).any(|i| {
        segment_distance(corners[i], corners[(i + 3) % 4], corners[(i + 1) % 4]) < min_prominence
    });
    if notch {
        return Err(GeometryError::NotQuadrilateral(3));
    }
    Tetragon::from_corners([corners[0], corners[1], corners[2], corners[3]])
}
