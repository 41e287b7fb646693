use super::{GeometryError, Point2, Tetragon};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

const MIN_CORNER_ANGLE_DEG: f64 = 5.0;
const SINGULAR_EPS: f64 = 1e-12;

/// Extent of a rectified side, in the rectified frame's abstract units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectSize {
    pub s_h: f64,
    pub s_v: f64,
}

impl RectSize {
    pub fn new(s_h: f64, s_v: f64) -> Option<Self> {
        (s_h > 0.0 && s_v > 0.0 && s_h.is_finite() && s_v.is_finite()).then_some(Self { s_h, s_v })
    }

    /// Mean of the top and bottom edge lengths by mean of the left and right
    /// edge lengths, which keeps the side's aspect ratio.
    pub fn from_tetragon(t: &Tetragon) -> Self {
        let [tl, tr, br, bl] = t.corners();
        Self {
            s_h: 0.5 * (tl.distance(tr) + bl.distance(br)),
            s_v: 0.5 * (tl.distance(bl) + tr.distance(br)),
        }
    }
}

/// A planar projective transform acting on homogeneous column vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
}

impl Homography {
    /// Wraps a matrix, normalizing the bottom-right entry to 1 when nonzero.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let m = if m[(2, 2)] != 0.0 { m / m[(2, 2)] } else { m };
        if !m.iter().all(|v| v.is_finite()) || m.determinant().abs() <= SINGULAR_EPS {
            return Err(GeometryError::DegenerateQuad("singular homography"));
        }
        Ok(Self { matrix: m })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            matrix: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .matrix
            .try_inverse()
            .ok_or(GeometryError::DegenerateQuad("singular homography"))?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeometryError> {
        Self::from_matrix(self.matrix * other.matrix)
    }

    pub fn apply(&self, p: Point2) -> Result<Point2, GeometryError> {
        apply_homography(self, p)
    }
}

/// Projective transform of one point, with perspective divide.
pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2, GeometryError> {
    let m = &h.matrix;
    let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
    if w.abs() < SINGULAR_EPS {
        return Err(GeometryError::AtInfinity);
    }
    Ok(Point2::new(
        (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w,
        (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w,
    ))
}

/// Closed-form map from the unit square `(0,0),(1,0),(1,1),(0,1)` onto the
/// quad `q` (same corner order).
fn square_to_quad(q: [Point2; 4]) -> Matrix3<f64> {
    let [p0, p1, p2, p3] = q;
    let (dx1, dy1) = (p1.x - p2.x, p1.y - p2.y);
    let (dx2, dy2) = (p3.x - p2.x, p3.y - p2.y);
    let (dx3, dy3) = (p0.x - p1.x + p2.x - p3.x, p0.y - p1.y + p2.y - p3.y);
    let (g, h) = if dx3 == 0.0 && dy3 == 0.0 {
        (0.0, 0.0)
    } else {
        let den = dx1 * dy2 - dx2 * dy1;
        ((dx3 * dy2 - dx2 * dy3) / den, (dx1 * dy3 - dx3 * dy1) / den)
    };
    Matrix3::new(
        p1.x - p0.x + g * p1.x,
        p3.x - p0.x + h * p3.x,
        p0.x,
        p1.y - p0.y + g * p1.y,
        p3.y - p0.y + h * p3.y,
        p0.y,
        g,
        h,
        1.0,
    )
}

/// Homography taking the canonical corners of `src` to `(0,0)`, `(s_h,0)`,
/// `(s_h,s_v)` and `(0,s_v)`.
pub fn homography_from_corners(src: &Tetragon, dst: RectSize) -> Result<Homography, GeometryError> {
    let c = src.corners();
    for i in 0..4 {
        let (a, b, d) = (c[i], c[(i + 1) % 4], c[(i + 2) % 4]);
        if b.sub(a).cross(d.sub(a)) == 0.0 {
            return Err(GeometryError::DegenerateQuad("collinear corners"));
        }
    }
    if src.min_corner_angle() < MIN_CORNER_ANGLE_DEG {
        return Err(GeometryError::DegenerateQuad("corner angle below 5 degrees"));
    }
    // Work relative to the centroid to keep the solve well conditioned.
    let cx = c.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = c.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let centered = c.map(|p| Point2::new(p.x - cx, p.y - cy));
    let to_square = square_to_quad(centered)
        .try_inverse()
        .ok_or(GeometryError::DegenerateQuad("singular corner configuration"))?;
    let scale = Matrix3::new(dst.s_h, 0.0, 0.0, 0.0, dst.s_v, 0.0, 0.0, 0.0, 1.0);
    let shift = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
    Homography::from_matrix(scale * to_square * shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn targets(r: RectSize) -> [Point2; 4] {
        [pt(0., 0.), pt(r.s_h, 0.), pt(r.s_h, r.s_v), pt(0., r.s_v)]
    }

    #[test]
    fn axis_aligned_rectangle_gives_identity() {
        let r = RectSize::new(40.0, 25.0).unwrap();
        let t = Tetragon::from_corners(targets(r)).unwrap();
        let h = homography_from_corners(&t, r).unwrap();
        let diff = (h.matrix() - Matrix3::identity()).abs().max();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn corners_map_exactly() {
        let t = Tetragon::from_corners([
            pt(612.3, 201.7),
            pt(1013.9, 260.2),
            pt(998.1, 733.4),
            pt(640.8, 690.0),
        ])
        .unwrap();
        let r = RectSize::from_tetragon(&t);
        let h = homography_from_corners(&t, r).unwrap();
        for (c, target) in t.corners().iter().zip(targets(r)) {
            assert!(h.apply(*c).unwrap().distance(target) < 1e-9);
        }
    }

    #[test]
    fn square_to_trapezoid_round_trip() {
        let trap = Tetragon::from_corners([pt(0., 0.), pt(1., 0.), pt(0.8, 1.), pt(0.2, 1.)]).unwrap();
        let h = homography_from_corners(&trap, RectSize::new(1.0, 1.0).unwrap()).unwrap();
        let inv = h.inverse().unwrap();
        for p in [pt(0.3, 0.4), pt(0.5, 0.9), pt(0.1, 0.05)] {
            let back = inv.apply(h.apply(p).unwrap()).unwrap();
            assert!(back.distance(p) < 1e-9);
        }
    }

    #[test]
    fn translation_and_identity() {
        let p = pt(3.5, -7.25);
        assert_eq!(apply_homography(&Homography::identity(), p).unwrap(), p);
        assert_eq!(
            apply_homography(&Homography::translation(2.0, 3.0), p).unwrap(),
            pt(5.5, -4.25)
        );
    }

    #[test]
    fn line_at_infinity_is_reported() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0);
        let h = Homography::from_matrix(m).unwrap();
        assert_eq!(h.apply(pt(-1.0, 4.0)), Err(GeometryError::AtInfinity));
    }

    #[test]
    fn sliver_quads_are_rejected() {
        let t = Tetragon::from_corners([pt(0., 5.), pt(100., 1.), pt(100., 9.), pt(60., 7.)]).unwrap();
        assert!(t.min_corner_angle() < 5.0);
        assert!(matches!(
            homography_from_corners(&t, RectSize::new(1.0, 1.0).unwrap()),
            Err(GeometryError::DegenerateQuad(_))
        ));
    }
}
