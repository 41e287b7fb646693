use super::raster::{ring_rows, scanline_crossings, span_columns};
use super::{simplify_to_tetragon, trace_boundary, BinaryRaster, GeometryError, Point2, Polygon};
use serde::{Deserialize, Serialize};

/// A simple quadrilateral with corners in canonical order: top-left,
/// top-right, bottom-right, bottom-left.
///
/// Corners run clockwise on screen. Of the two pairs of opposite edges, the
/// one closer to horizontal holds the top and bottom edges; the top edge is
/// the higher of the two and its left end is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tetragon {
    corners: [Point2; 4],
}

impl Tetragon {
    /// Canonicalizes four corners given in any order.
    pub fn from_corners(corners: [Point2; 4]) -> Result<Self, GeometryError> {
        if let Some(p) = corners.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite { x: p.x, y: p.y });
        }
        let canonical = canonical_order(corners);
        if !is_simple_quad(&canonical) {
            return Err(GeometryError::DegenerateQuad("self-intersecting or zero area"));
        }
        Ok(Self { corners: canonical })
    }

    pub fn corners(&self) -> [Point2; 4] {
        self.corners
    }

    pub fn top_left(&self) -> Point2 {
        self.corners[0]
    }

    pub fn top_right(&self) -> Point2 {
        self.corners[1]
    }

    pub fn bottom_right(&self) -> Point2 {
        self.corners[2]
    }

    pub fn bottom_left(&self) -> Point2 {
        self.corners[3]
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(self.corners.to_vec()).expect("tetragon is a valid polygon")
    }

    pub fn area(&self) -> f64 {
        super::signed_area(&self.corners).abs()
    }

    /// Smallest interior angle in degrees.
    pub fn min_corner_angle(&self) -> f64 {
        (0..4)
            .map(|i| {
                let p = self.corners[i];
                let u = self.corners[(i + 3) % 4].sub(p);
                let v = self.corners[(i + 1) % 4].sub(p);
                let cos = u.dot(v) / (u.dot(u).sqrt() * v.dot(v).sqrt());
                cos.clamp(-1.0, 1.0).acos().to_degrees()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest corner displacement against another tetragon, corner by corner.
    pub fn max_corner_distance(&self, other: &Tetragon) -> f64 {
        self.corners
            .iter()
            .zip(other.corners.iter())
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max)
    }
}

fn canonical_order(mut c: [Point2; 4]) -> [Point2; 4] {
    // Cyclic order around the centroid; with y pointing down, increasing
    // angle runs clockwise on screen.
    let cx = c.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = c.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let angle = |p: &Point2| (p.y - cy).atan2(p.x - cx);
    c.sort_by(|a, b| angle(a).total_cmp(&angle(b)).then(a.y.total_cmp(&b.y)).then(a.x.total_cmp(&b.x)));

    // The opposite-edge pair closer to horizontal holds the top and bottom
    // edges; perspective can tilt a wide side so far that its two highest
    // corners are not both on top.
    let slope = |i: usize| {
        let (a, b) = (c[i], c[(i + 1) % 4]);
        (b.y - a.y).abs() / a.distance(b).max(f64::MIN_POSITIVE)
    };
    let first = if slope(0) + slope(2) <= slope(1) + slope(3) { 0 } else { 1 };
    let mean_y = |i: usize| c[i].y + c[(i + 1) % 4].y;
    let top = if mean_y(first) <= mean_y(first + 2) { first } else { first + 2 };
    let (a, b) = (top, (top + 1) % 4);
    let start = if (c[a].x, c[a].y) <= (c[b].x, c[b].y) { a } else { b };
    let step = if start == a { 1 } else { 3 };
    [0, 1, 2, 3].map(|k| c[(start + k * step) % 4])
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn segments_touch(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point2, q: Point2, r: Point2, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

fn is_simple_quad(c: &[Point2; 4]) -> bool {
    super::signed_area(c) != 0.0
        && !segments_touch(c[0], c[1], c[2], c[3])
        && !segments_touch(c[1], c[2], c[3], c[0])
}

/// Row-wise prefix sums of a mask, so the pixel count of any horizontal span
/// is a constant-time lookup.
#[derive(Debug, Clone)]
struct MaskIndex {
    width: usize,
    height: usize,
    prefix: Vec<u32>,
    total: u64,
}

impl MaskIndex {
    fn new(mask: &BinaryRaster) -> Self {
        let (width, height) = mask.dims();
        let mut prefix = Vec::with_capacity((width + 1) * height);
        let mut total = 0u64;
        for y in 0..height {
            let mut acc = 0u32;
            prefix.push(0);
            for &c in mask.row(y) {
                acc += c as u32;
                prefix.push(acc);
            }
            total += acc as u64;
        }
        Self {
            width,
            height,
            prefix,
            total,
        }
    }

    /// `|mask XOR rasterize(ring)|` without materializing the ring's raster.
    fn objective(&self, ring: &[Point2]) -> u64 {
        let (r0, r1) = ring_rows(ring, self.height);
        let mut xs = Vec::with_capacity(4);
        let (mut shape, mut overlap) = (0u64, 0u64);
        for y in r0..r1 {
            scanline_crossings(ring, y as f64 + 0.5, &mut xs);
            let row = &self.prefix[y * (self.width + 1)..(y + 1) * (self.width + 1)];
            for pair in xs.chunks_exact(2) {
                let (s, e) = span_columns(pair[0], pair[1], self.width);
                shape += (e - s) as u64;
                overlap += (row[e] - row[s]) as u64;
            }
        }
        self.total + shape - 2 * overlap
    }
}

/// Number of pixels where the mask and the rasterized tetragon disagree.
pub fn tetragon_objective(mask: &BinaryRaster, t: &Tetragon) -> u64 {
    MaskIndex::new(mask).objective(&t.corners)
}

/// Outcome of a tetragon fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub tetragon: Tetragon,
    pub objective: u64,
    pub seed: Tetragon,
    pub seed_objective: u64,
    pub sweeps: usize,
}

/// Coordinate-wise pattern search over the eight corner coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetragonFitter {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_sweeps: usize,
}

impl Default for TetragonFitter {
    fn default() -> Self {
        Self {
            initial_step: 8.0,
            min_step: 0.5,
            max_sweeps: 200,
        }
    }
}

impl TetragonFitter {
    /// Seeds from the Douglas–Peucker reduction of the largest component's
    /// boundary, then refines.
    pub fn fit(&self, mask: &BinaryRaster) -> Result<FitReport, GeometryError> {
        let comps = mask.components();
        let label = comps.largest().ok_or(GeometryError::EmptyMask)?;
        let boundary = trace_boundary(&comps.mask(label)).ok_or(GeometryError::EmptyMask)?;
        let seed = simplify_to_tetragon(&boundary)?;
        let first = self.refine(mask, seed);
        // The pattern search can stall a pixel or more off near acute
        // corners. Restart it from the intersection of edge lines fitted to
        // the mask boundary and keep whichever result scores better.
        let polished = edge_line_fit(mask, &first.tetragon).map(|t| self.refine(mask, t));
        Ok(match polished {
            Some(p) if p.objective < first.objective => FitReport {
                seed: first.seed,
                seed_objective: first.seed_objective,
                sweeps: first.sweeps + p.sweeps,
                ..p
            },
            _ => first,
        })
    }

    /// Refines a given starting tetragon. The result never scores worse than
    /// the seed.
    pub fn refine(&self, mask: &BinaryRaster, seed: Tetragon) -> FitReport {
        let index = MaskIndex::new(mask);
        let seed_objective = index.objective(&seed.corners);
        let mut corners = seed.corners;
        let mut best = seed_objective;
        let mut steps = [self.initial_step; 8];
        let mut sweeps = 0;

        while sweeps < self.max_sweeps && best > 0 {
            sweeps += 1;
            let mut changed = false;
            for k in 0..8 {
                let mut moved = false;
                for sign in [1.0, -1.0] {
                    let mut trial = corners;
                    let p = &mut trial[k / 2];
                    if k % 2 == 0 {
                        p.x += sign * steps[k];
                    } else {
                        p.y += sign * steps[k];
                    }
                    if !is_simple_quad(&trial) {
                        continue;
                    }
                    let score = index.objective(&trial);
                    if score < best {
                        best = score;
                        corners = trial;
                        moved = true;
                        break;
                    }
                }
                if moved {
                    changed = true;
                } else if steps[k] > self.min_step {
                    steps[k] = (steps[k] * 0.5).max(self.min_step);
                    changed = true;
                }
            }
            if !changed {
                // Axis moves are exhausted. A corner on a slanted edge may
                // still improve diagonally; if so, resume the axis search.
                match diagonal_move(&index, corners, best, self.min_step) {
                    Some((c, score)) => {
                        corners = c;
                        best = score;
                        steps = [2.0 * self.min_step; 8];
                    }
                    None => break,
                }
            }
        }

        // Keep the seed if canonicalization of the refined corners fails.
        let tetragon = Tetragon::from_corners(corners)
            .ok()
            .filter(|t| index.objective(&t.corners) == best)
            .unwrap_or(seed);
        let objective = index.objective(&tetragon.corners);
        FitReport {
            tetragon,
            objective,
            seed,
            seed_objective,
            sweeps,
        }
    }
}

/// First strictly improving diagonal move of a single corner, trying step
/// sizes from 4 px down to `min_step`.
fn diagonal_move(
    index: &MaskIndex,
    corners: [Point2; 4],
    best: u64,
    min_step: f64,
) -> Option<([Point2; 4], u64)> {
    let mut step = 4.0_f64.max(min_step);
    loop {
        for i in 0..4 {
            for (dx, dy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut trial = corners;
                trial[i].x += dx * step;
                trial[i].y += dy * step;
                if !is_simple_quad(&trial) {
                    continue;
                }
                let score = index.objective(&trial);
                if score < best {
                    return Some((trial, score));
                }
            }
        }
        if step <= min_step {
            return None;
        }
        step = (step * 0.5).max(min_step);
    }
}

/// Total least squares line through `pts` as (centroid, unit direction).
fn fit_line(pts: &[Point2]) -> (Point2, Point2) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    (Point2::new(cx, cy), Point2::new(theta.cos(), theta.sin()))
}

fn intersect((p, d): (Point2, Point2), (q, e): (Point2, Point2)) -> Option<Point2> {
    let den = d.cross(e);
    if den.abs() < 1e-9 {
        return None;
    }
    let t = q.sub(p).cross(e) / den;
    Some(Point2::new(p.x + t * d.x, p.y + t * d.y))
}

/// Refits each edge of `t` as a line through the nearby pixel cracks of
/// the mask (midpoints between 4-adjacent pixels that differ) and returns
/// the quadrilateral of the line intersections.
fn edge_line_fit(mask: &BinaryRaster, t: &Tetragon) -> Option<Tetragon> {
    const BAND: f64 = 3.0;
    const CORNER_MARGIN: f64 = 4.0;
    let c = t.corners;
    let (w, h) = mask.dims();
    let x0 = c.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x1 = c.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y0 = c.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y1 = c.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let clamp = |v: f64, hi: usize| (v.max(0.0) as usize).min(hi);
    let (xa, xb) = (clamp(x0 - BAND - 1.0, w), clamp(x1 + BAND + 1.0, w));
    let (ya, yb) = (clamp(y0 - BAND - 1.0, h), clamp(y1 + BAND + 1.0, h));

    let mut per_edge: [Vec<Point2>; 4] = Default::default();
    let mut add = |p: Point2| {
        for (i, pts) in per_edge.iter_mut().enumerate() {
            let (a, b) = (c[i], c[(i + 1) % 4]);
            if a.distance(p) < CORNER_MARGIN || b.distance(p) < CORNER_MARGIN {
                continue;
            }
            if super::segment_distance(p, a, b) <= BAND {
                pts.push(p);
            }
        }
    };
    for y in ya..yb {
        for x in xa..xb {
            let v = mask.get_signed(x as i64, y as i64);
            if mask.get_signed(x as i64 + 1, y as i64) != v {
                add(Point2::new(x as f64 + 1.0, y as f64 + 0.5));
            }
            if mask.get_signed(x as i64, y as i64 + 1) != v {
                add(Point2::new(x as f64 + 0.5, y as f64 + 1.0));
            }
        }
    }
    if per_edge.iter().any(|pts| pts.len() < 4) {
        return None;
    }
    let lines = per_edge.map(|pts| fit_line(&pts));
    let mut out = [Point2::new(0.0, 0.0); 4];
    for i in 0..4 {
        out[i] = intersect(lines[(i + 3) % 4], lines[i])?;
    }
    Tetragon::from_corners(out).ok()
}

/// Fits a tetragon to a binary mask with the default search schedule.
pub fn fit_tetragon(mask: &BinaryRaster) -> Result<Tetragon, GeometryError> {
    Ok(TetragonFitter::default().fit(mask)?.tetragon)
}

#[cfg(test)]
mod tests {
    use super::super::rasterize;
    use super::*;

    fn pt(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn quad(c: [(f64, f64); 4]) -> Tetragon {
        Tetragon::from_corners(c.map(|(x, y)| pt(x, y))).unwrap()
    }

    #[test]
    fn canonical_order_is_permutation_invariant() {
        let c = [pt(10., 12.), pt(50., 8.), pt(55., 40.), pt(8., 44.)];
        let expected = Tetragon::from_corners(c).unwrap();
        assert_eq!(expected.top_left(), pt(10., 12.));
        assert_eq!(expected.bottom_right(), pt(55., 40.));
        let mut perm = c;
        for _ in 0..4 {
            perm.rotate_left(1);
            assert_eq!(Tetragon::from_corners(perm).unwrap(), expected);
            perm.swap(0, 2);
            assert_eq!(Tetragon::from_corners(perm).unwrap(), expected);
        }
        let again = Tetragon::from_corners(expected.corners()).unwrap();
        assert_eq!(again, expected);
    }

    #[test]
    fn steep_wide_side_keeps_its_top_edge() {
        // The two highest corners are both on the left edge here.
        let t = quad([(300., 190.), (0., 100.), (300., 150.), (0., 140.)]);
        assert_eq!(
            t.corners(),
            [pt(0., 100.), pt(300., 150.), pt(300., 190.), pt(0., 140.)]
        );
        let tall = quad([(0., 0.), (20., 30.), (20., 330.), (0., 300.)]);
        assert_eq!(tall.top_right(), pt(20., 30.));
        assert_eq!(tall.bottom_left(), pt(0., 300.));
    }

    #[test]
    fn collapsed_quad_is_rejected() {
        let r = Tetragon::from_corners([pt(0., 0.), pt(1., 1.), pt(2., 2.), pt(3., 3.)]);
        assert!(matches!(r, Err(GeometryError::DegenerateQuad(_))));
    }

    #[test]
    fn objective_zero_on_own_raster() {
        let t = quad([(3.2, 4.1), (30.7, 6.0), (28.3, 25.5), (5.0, 22.2)]);
        let mask = rasterize(&t.to_polygon(), 40, 30).unwrap();
        assert_eq!(tetragon_objective(&mask, &t), 0);
    }

    #[test]
    fn objective_counts_shifted_strips() {
        let sq = quad([(5., 5.), (15., 5.), (15., 15.), (5., 15.)]);
        let mask = rasterize(&sq.to_polygon(), 30, 30).unwrap();
        let shifted = quad([(7., 5.), (17., 5.), (17., 15.), (7., 15.)]);
        assert_eq!(tetragon_objective(&mask, &shifted), 40);
    }

    #[test]
    fn objective_matches_full_rasterization() {
        let truth = quad([(4., 6.), (33.5, 3.), (36., 27.), (2.5, 24.)]);
        let mask = rasterize(&truth.to_polygon(), 40, 32).unwrap();
        let probe = quad([(7., 4.), (31., 6.), (38., 30.), (1., 26.)]);
        let full = rasterize(&probe.to_polygon(), 40, 32).unwrap();
        assert_eq!(
            tetragon_objective(&mask, &probe),
            mask.symmetric_difference_count(&full).unwrap() as u64
        );
    }

    #[test]
    fn fit_recovers_axis_aligned_rectangle() {
        let t = quad([(10., 8.), (50., 8.), (50., 30.), (10., 30.)]);
        let mask = rasterize(&t.to_polygon(), 64, 40).unwrap();
        let report = TetragonFitter::default().fit(&mask).unwrap();
        assert_eq!(report.objective, 0);
        assert_eq!(report.tetragon, t);
    }

    #[test]
    fn fit_reaches_zero_on_integer_quad() {
        let t = quad([(12., 10.), (70., 4.), (76., 52.), (8., 47.)]);
        let mask = rasterize(&t.to_polygon(), 90, 60).unwrap();
        let report = TetragonFitter::default().fit(&mask).unwrap();
        assert!(report.objective <= report.seed_objective);
        assert_eq!(report.objective, 0);
        assert!(report.tetragon.max_corner_distance(&t) <= 2.0);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mask = BinaryRaster::new(10, 10).unwrap();
        assert_eq!(fit_tetragon(&mask), Err(GeometryError::EmptyMask));
    }

    #[test]
    fn triangle_mask_is_not_quadrilateral() {
        let tri = Polygon::new(vec![pt(2., 2.), pt(60., 2.), pt(2., 60.)]).unwrap();
        let mask = rasterize(&tri, 64, 64).unwrap();
        assert!(matches!(
            fit_tetragon(&mask),
            Err(GeometryError::NotQuadrilateral(_))
        ));
    }
}
