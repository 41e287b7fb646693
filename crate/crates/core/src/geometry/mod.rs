//! Planar geometry kernel.
//!
//! Everything here works in pixel coordinates with the origin at the top-left
//! corner of the image and `y` pointing down. Pixel `(i, j)` covers the unit
//! square `[i, i+1) x [j, j+1)`; membership tests use its center
//! `(i + 0.5, j + 0.5)`.

mod homography;
mod raster;
mod simplify;
mod tetragon;

pub use homography::{apply_homography, homography_from_corners, Homography, RectSize};
pub use raster::{
    iou, rasterize, rasterize_ring, trace_boundary, BinaryRaster, Components, Rasterized,
};
pub use simplify::{douglas_peucker, simplify_closed, simplify_to_tetragon};
pub use tetragon::{fit_tetragon, tetragon_objective, FitReport, Tetragon, TetragonFitter};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Errors raised by the geometry kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has identical consecutive vertices at index {0}")]
    RepeatedVertex(usize),
    #[error("polygon has zero signed area")]
    ZeroArea,
    #[error("raster dimensions must be at least 1x1, got {width}x{height}")]
    EmptyRaster { width: usize, height: usize },
    #[error("raster dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("shape cannot be reduced to exactly four corners ({0} vertices remain)")]
    NotQuadrilateral(usize),
    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(&'static str),
    #[error("point maps to infinity under the homography")]
    AtInfinity,
    #[error("mask is empty")]
    EmptyMask,
    #[error("point sequence is empty")]
    EmptyPoints,
}

/// A point in pixel space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub(crate) fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    pub(crate) fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub(crate) fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(Point2::new(a.x + t * ab.x, a.y + t * ab.y))
}

/// Shoelace signed area; positive for counter-clockwise rings in a y-up frame,
/// which is clockwise on screen.
pub fn signed_area(ring: &[Point2]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, p) in ring.iter().enumerate() {
        let q = ring[(i + 1) % ring.len()];
        acc += p.cross(q);
    }
    acc * 0.5
}

/// Componentwise bounding box of a nonempty point set.
pub fn axis_aligned_bbox(points: &[Point2]) -> Result<(Point2, Point2), GeometryError> {
    let first = *points.first().ok_or(GeometryError::EmptyPoints)?;
    Ok(points.iter().skip(1).fold((first, first), |(lo, hi), p| {
        (
            Point2::new(lo.x.min(p.x), lo.y.min(p.y)),
            Point2::new(hi.x.max(p.x), hi.y.max(p.y)),
        )
    }))
}

/// A closed polygon with at least three vertices and nonzero area.
///
/// Self-intersections are permitted; region membership follows the even-odd
/// rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite { x: p.x, y: p.y });
        }
        for i in 0..vertices.len() {
            if vertices[i] == vertices[(i + 1) % vertices.len()] {
                return Err(GeometryError::RepeatedVertex(i));
            }
        }
        if signed_area(&vertices) == 0.0 {
            return Err(GeometryError::ZeroArea);
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle with corners `min` and `max`.
    pub fn rectangle(min: Point2, max: Point2) -> Result<Self, GeometryError> {
        Self::new(vec![
            min,
            Point2::new(max.x, min.y),
            max,
            Point2::new(min.x, max.y),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        axis_aligned_bbox(&self.vertices).expect("polygon has vertices")
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Applies `f` to every vertex, revalidating the result.
    pub fn map(&self, f: impl FnMut(Point2) -> Point2) -> Result<Polygon, GeometryError> {
        Polygon::new(self.vertices.iter().copied().map(f).collect())
    }
}

impl TryFrom<Vec<Point2>> for Polygon {
    type Error = GeometryError;

    fn try_from(v: Vec<Point2>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_validation() {
        let p = |x, y| Point2::new(x, y);
        assert_eq!(
            Polygon::new(vec![p(0., 0.), p(1., 0.)]),
            Err(GeometryError::TooFewVertices(2))
        );
        assert_eq!(
            Polygon::new(vec![p(0., 0.), p(1., 0.), p(1., 0.), p(0., 1.)]),
            Err(GeometryError::RepeatedVertex(1))
        );
        assert_eq!(
            Polygon::new(vec![p(0., 0.), p(1., 1.), p(2., 2.)]),
            Err(GeometryError::ZeroArea)
        );
        assert!(matches!(
            Polygon::new(vec![p(0., 0.), p(f64::NAN, 0.), p(0., 1.)]),
            Err(GeometryError::NonFinite { .. })
        ));
        let sq = Polygon::rectangle(p(0., 0.), p(2., 3.)).unwrap();
        assert_eq!(sq.area(), 6.0);
        assert_eq!(sq.perimeter(), 10.0);
    }

    #[test]
    fn bbox_cases() {
        let q = Point2::new(3.0, -2.0);
        assert_eq!(axis_aligned_bbox(&[q]).unwrap(), (q, q));
        let sq = [
            Point2::new(0., 0.),
            Point2::new(4., 0.),
            Point2::new(4., 4.),
            Point2::new(0., 4.),
        ];
        assert_eq!(
            axis_aligned_bbox(&sq).unwrap(),
            (Point2::new(0., 0.), Point2::new(4., 4.))
        );
        assert_eq!(axis_aligned_bbox(&[]), Err(GeometryError::EmptyPoints));
    }

    #[test]
    fn segment_distance_clamps_to_endpoints() {
        let a = Point2::new(0., 0.);
        let b = Point2::new(2., 0.);
        assert_eq!(segment_distance(Point2::new(1., 0.5), a, b), 0.5);
        assert_eq!(segment_distance(Point2::new(3., 0.), a, b), 1.0);
        assert_eq!(segment_distance(Point2::new(1., 1.), a, a), 2f64.sqrt());
    }
}
