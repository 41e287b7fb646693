use super::{GeometryError, Point2, Polygon};
use std::collections::VecDeque;

/// Occupancy grid, row-major, `width` columns by `height` rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyRaster { width, height });
        }
        Ok(Self {
            width,
            height,
            cells: vec![false; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    /// Like [`get`](Self::get) but treats everything outside the grid as unset.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.cells[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[bool] {
        &self.cells[y * self.width..(y + 1) * self.width]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    fn check_dims(&self, other: &BinaryRaster) -> Result<(), GeometryError> {
        if self.dims() != other.dims() {
            return Err(GeometryError::DimensionMismatch(self.dims(), other.dims()));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BinaryRaster) -> Result<usize, GeometryError> {
        self.check_dims(other)?;
        Ok(self
            .cells
            .iter()
            .zip(&other.cells)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    pub fn union_count(&self, other: &BinaryRaster) -> Result<usize, GeometryError> {
        self.check_dims(other)?;
        Ok(self
            .cells
            .iter()
            .zip(&other.cells)
            .filter(|(&a, &b)| a || b)
            .count())
    }

    pub fn intersect(&self, other: &BinaryRaster) -> Result<BinaryRaster, GeometryError> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &BinaryRaster) -> Result<BinaryRaster, GeometryError> {
        self.zip_with(other, |a, b| a || b)
    }

    /// Cells set in exactly one of the two rasters.
    pub fn symmetric_difference_count(&self, other: &BinaryRaster) -> Result<usize, GeometryError> {
        self.check_dims(other)?;
        Ok(self
            .cells
            .iter()
            .zip(&other.cells)
            .filter(|(&a, &b)| a != b)
            .count())
    }

    fn zip_with(
        &self,
        other: &BinaryRaster,
        f: impl Fn(bool, bool) -> bool,
    ) -> Result<BinaryRaster, GeometryError> {
        self.check_dims(other)?;
        Ok(BinaryRaster {
            width: self.width,
            height: self.height,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Mean of the set pixel centers, `None` when empty.
    pub fn centroid(&self) -> Option<Point2> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for (x, &c) in self.row(y).iter().enumerate() {
                if c {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| Point2::new(sx / n as f64, sy / n as f64))
    }

    /// 4-connected component labelling.
    pub fn components(&self) -> Components {
        let mut labels = vec![0u32; self.cells.len()];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.cells.len() {
            if !self.cells[start] || labels[start] != 0 {
                continue;
            }
            let label = sizes.len() as u32 + 1;
            labels[start] = label;
            queue.push_back(start);
            let mut size = 0;
            while let Some(idx) = queue.pop_front() {
                size += 1;
                let (x, y) = (idx % self.width, idx / self.width);
                let mut visit = |n: usize| {
                    if self.cells[n] && labels[n] == 0 {
                        labels[n] = label;
                        queue.push_back(n);
                    }
                };
                if x > 0 {
                    visit(idx - 1);
                }
                if x + 1 < self.width {
                    visit(idx + 1);
                }
                if y > 0 {
                    visit(idx - self.width);
                }
                if y + 1 < self.height {
                    visit(idx + self.width);
                }
            }
            sizes.push(size);
        }
        Components {
            width: self.width,
            height: self.height,
            labels,
            sizes,
        }
    }
}

/// Result of [`BinaryRaster::components`]. Labels start at 1; 0 is background.
#[derive(Debug, Clone)]
pub struct Components {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    sizes: Vec<usize>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn size(&self, label: u32) -> usize {
        self.sizes[label as usize - 1]
    }

    /// Label of the largest component; the lowest label wins ties.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (i, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, i as u32 + 1));
            }
        }
        best.map(|(_, l)| l)
    }

    pub fn mask(&self, label: u32) -> BinaryRaster {
        BinaryRaster {
            width: self.width,
            height: self.height,
            cells: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

/// Output of [`rasterize_ring`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rasterized {
    pub raster: BinaryRaster,
    /// Set when the ring had fewer than three vertices or zero area; the
    /// raster is then empty.
    pub degenerate: bool,
}

/// Pixel-center, even-odd rasterization of a validated polygon.
pub fn rasterize(poly: &Polygon, width: usize, height: usize) -> Result<BinaryRaster, GeometryError> {
    let mut raster = BinaryRaster::new(width, height)?;
    fill_ring(&mut raster, poly.vertices());
    Ok(raster)
}

/// Rasterizes an arbitrary vertex ring, flagging degenerate input instead of
/// failing.
pub fn rasterize_ring(
    ring: &[Point2],
    width: usize,
    height: usize,
) -> Result<Rasterized, GeometryError> {
    let mut raster = BinaryRaster::new(width, height)?;
    let degenerate = ring.len() < 3 || super::signed_area(ring) == 0.0;
    if !degenerate {
        fill_ring(&mut raster, ring);
    }
    Ok(Rasterized { raster, degenerate })
}

/// Sorted crossings of the ring's edges with the horizontal line `y`, using
/// the same half-open rule as [`Polygon::contains`].
pub(crate) fn scanline_crossings(ring: &[Point2], y: f64, out: &mut Vec<f64>) {
    out.clear();
    let n = ring.len();
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if (a.y > y) != (b.y > y) {
            out.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
        }
    }
    out.sort_by(f64::total_cmp);
}

/// Column range `[start, end)` of pixels whose centers satisfy
/// `x0 <= i + 0.5 < x1`, clipped to `[0, width)`.
pub(crate) fn span_columns(x0: f64, x1: f64, width: usize) -> (usize, usize) {
    let first = |x: f64| -> usize {
        let w = width as i64;
        let mut i = ((x - 0.5).ceil() as i64).clamp(0, w);
        while i > 0 && (i - 1) as f64 + 0.5 >= x {
            i -= 1;
        }
        while i < w && (i as f64 + 0.5) < x {
            i += 1;
        }
        i as usize
    };
    let (s, e) = (first(x0), first(x1));
    (s, e.max(s))
}

/// Row range touched by a ring, clipped to `[0, height)`.
pub(crate) fn ring_rows(ring: &[Point2], height: usize) -> (usize, usize) {
    let (lo, hi) = ring.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.y), hi.max(p.y))
    });
    let h = height as f64;
    let start = (lo - 0.5).floor().clamp(0.0, h) as usize;
    let end = (hi + 0.5).ceil().clamp(0.0, h) as usize;
    (start, end)
}

fn fill_ring(raster: &mut BinaryRaster, ring: &[Point2]) {
    let (r0, r1) = ring_rows(ring, raster.height);
    let mut xs = Vec::with_capacity(8);
    for y in r0..r1 {
        scanline_crossings(ring, y as f64 + 0.5, &mut xs);
        for pair in xs.chunks_exact(2) {
            let (s, e) = span_columns(pair[0], pair[1], raster.width);
            let base = y * raster.width;
            raster.cells[base + s..base + e].fill(true);
        }
    }
}

/// Intersection over union; 0 when both rasters are empty.
pub fn iou(a: &BinaryRaster, b: &BinaryRaster) -> Result<f64, GeometryError> {
    a.check_dims(b)?;
    let (mut inter, mut uni) = (0usize, 0usize);
    for (&x, &y) in a.cells.iter().zip(&b.cells) {
        inter += (x && y) as usize;
        uni += (x || y) as usize;
    }
    Ok(if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    })
}

/// Traces the outer pixel-edge boundary of the 4-connected component that
/// contains the first set pixel in row-major order.
///
/// Vertices sit on the pixel-corner lattice and only direction changes are
/// emitted, so rasterizing the result reproduces the component exactly when
/// it has no holes. Returns `None` for an empty raster.
pub fn trace_boundary(raster: &BinaryRaster) -> Option<Polygon> {
    let start_idx = raster.cells.iter().position(|&c| c)?;
    let start = (
        (start_idx % raster.width) as i64,
        (start_idx / raster.width) as i64,
    );
    // Walk with the region on the right-hand side (screen coordinates).
    let step = |(x, y): (i64, i64), (dx, dy): (i64, i64)| -> (i64, i64) {
        let (rx, ry) = (-dy, dx);
        let ahead_right = raster.get_signed(x + (dx + rx - 1) / 2, y + (dy + ry - 1) / 2);
        let ahead_left = raster.get_signed(x + (dx - rx - 1) / 2, y + (dy - ry - 1) / 2);
        match (ahead_left, ahead_right) {
            (_, false) => (rx, ry),
            (false, true) => (dx, dy),
            (true, true) => (-rx, -ry),
        }
    };
    let east = (1, 0);
    let mut pos = start;
    let mut dir = east;
    let mut vertices = vec![Point2::new(start.0 as f64, start.1 as f64)];
    loop {
        pos = (pos.0 + dir.0, pos.1 + dir.1);
        let next = step(pos, dir);
        if pos == start && next == east {
            break;
        }
        if next != dir {
            vertices.push(Point2::new(pos.0 as f64, pos.1 as f64));
        }
        dir = next;
    }
    Polygon::new(vertices).ok()
}
