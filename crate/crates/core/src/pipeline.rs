//! Information consolidation: package-to-side assignment, mask refinement,
//! rectification and package counting.
//!
//! All masks of one transport unit are rasterized into a shared working
//! [`RasterFrame`] that covers the unit's bounding box. At the default scale
//! one frame pixel is one image pixel.

use crate::detections::{
    assemble_unit, filter_transport_units, AssemblyError, CategoryLabel, FilterConfig,
    ImageDetections, TransportUnitHypothesis,
};
use crate::geometry::{
    axis_aligned_bbox, homography_from_corners, rasterize_ring, trace_boundary, BinaryRaster,
    GeometryError, Homography, Point2, Polygon, RectSize, Tetragon, TetragonFitter,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Consolidation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Offset added to the horizontal count before flooring.
    pub delta1: f64,
    /// Offset added to the vertical count before flooring.
    pub delta2: f64,
    pub filter: FilterConfig,
    /// Maximum working-raster extent in pixels; `None` keeps native resolution.
    pub raster_scale: Option<u32>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            delta1: 0.05,
            delta2: 0.15,
            filter: FilterConfig::default(),
            raster_scale: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, d) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(0.0..0.5).contains(&d) {
                return Err(format!("{name} must lie in [0, 0.5), got {d}"));
            }
        }
        if let Some(s) = self.raster_scale {
            if s < 16 {
                return Err(format!("raster_scale must be at least 16 px, got {s}"));
            }
        }
        self.filter.validate()
    }
}

/// Why recognition of one transport unit was abandoned.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("side {0} has no assigned packages")]
    EmptySide(usize),
    #[error("side {0} is empty after refinement")]
    EmptySideMask(usize),
    #[error("side centroids are less than one pixel apart horizontally")]
    AmbiguousSides,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("count inputs must be positive and finite (extent {extent}, size {size}, delta {delta})")]
    InvalidCountInput { extent: f64, size: f64, delta: f64 },
    #[error("{axis} package count rounds to zero")]
    ZeroCount { axis: &'static str },
    #[error("vertical counts differ between sides: left {left}, right {right}")]
    VerticalCountMismatch { left: u32, right: u32 },
}

impl PipelineError {
    /// Stable identifier written to result documents.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Assembly(AssemblyError::PalletCount(_)) => "PalletCountError",
            PipelineError::Assembly(AssemblyError::SideCount(_)) => "SideCountError",
            PipelineError::Assembly(AssemblyError::MixedPackageCategories) => {
                "MixedPackageCategories"
            }
            PipelineError::EmptySide(_) => "EmptySide",
            PipelineError::EmptySideMask(_) => "EmptySideMask",
            PipelineError::AmbiguousSides => "AmbiguousSides",
            PipelineError::Geometry(GeometryError::NotQuadrilateral(_)) => "NotQuadrilateral",
            PipelineError::Geometry(GeometryError::DegenerateQuad(_)) => "DegenerateQuad",
            PipelineError::Geometry(GeometryError::AtInfinity) => "AtInfinity",
            PipelineError::Geometry(_) => "GeometryError",
            PipelineError::InvalidCountInput { .. } => "InvalidCountInput",
            PipelineError::ZeroCount { .. } => "ZeroCount",
            PipelineError::VerticalCountMismatch { .. } => "VerticalCountMismatch",
        }
    }
}

/// Maps image coordinates into a working raster: `raster = (image - origin) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterFrame {
    pub origin: Point2,
    pub scale: f64,
    pub width: usize,
    pub height: usize,
}

const FRAME_MARGIN_PX: f64 = 2.0;

impl RasterFrame {
    /// A frame around `[lo, hi]` with room for the 5% mask slack, at native
    /// resolution unless `max_extent` forces downsampling.
    pub fn covering(lo: Point2, hi: Point2, max_extent: Option<u32>) -> Self {
        let pad_x = 0.025 * (hi.x - lo.x) + FRAME_MARGIN_PX;
        let pad_y = 0.025 * (hi.y - lo.y) + FRAME_MARGIN_PX;
        let origin = Point2::new((lo.x - pad_x).floor(), (lo.y - pad_y).floor());
        let (ext_x, ext_y) = (hi.x + pad_x - origin.x, hi.y + pad_y - origin.y);
        let scale = match max_extent {
            Some(m) if ext_x.max(ext_y) > m as f64 => m as f64 / ext_x.max(ext_y),
            _ => 1.0,
        };
        Self {
            origin,
            scale,
            width: ((ext_x * scale).ceil() as usize).max(1),
            height: ((ext_y * scale).ceil() as usize).max(1),
        }
    }

    pub fn to_raster(&self, p: Point2) -> Point2 {
        Point2::new((p.x - self.origin.x) * self.scale, (p.y - self.origin.y) * self.scale)
    }

    pub fn to_image(&self, p: Point2) -> Point2 {
        Point2::new(p.x / self.scale + self.origin.x, p.y / self.scale + self.origin.y)
    }

    pub fn rasterize(&self, poly: &Polygon) -> BinaryRaster {
        let ring: Vec<Point2> = poly.vertices().iter().map(|&p| self.to_raster(p)).collect();
        rasterize_ring(&ring, self.width, self.height)
            .expect("frame has positive size")
            .raster
    }

    fn patch(&self, poly: &Polygon) -> Patch {
        let ring: Vec<Point2> = poly.vertices().iter().map(|&p| self.to_raster(p)).collect();
        Patch::rasterize(&ring, self.width, self.height)
    }

    fn polygon_to_image(&self, poly: &Polygon) -> Option<Polygon> {
        poly.map(|p| self.to_image(p)).ok()
    }
}

/// A small raster window located at `(x0, y0)` inside a frame.
#[derive(Debug, Clone)]
struct Patch {
    x0: usize,
    y0: usize,
    raster: Option<BinaryRaster>,
}

impl Patch {
    fn rasterize(ring: &[Point2], width: usize, height: usize) -> Patch {
        let Ok((lo, hi)) = axis_aligned_bbox(ring) else {
            return Patch { x0: 0, y0: 0, raster: None };
        };
        let x0 = lo.x.floor().clamp(0.0, width as f64) as usize;
        let y0 = lo.y.floor().clamp(0.0, height as f64) as usize;
        let x1 = hi.x.ceil().clamp(0.0, width as f64) as usize;
        let y1 = hi.y.ceil().clamp(0.0, height as f64) as usize;
        if x1 <= x0 || y1 <= y0 {
            return Patch { x0, y0, raster: None };
        }
        let local: Vec<Point2> = ring
            .iter()
            .map(|p| Point2::new(p.x - x0 as f64, p.y - y0 as f64))
            .collect();
        let raster = rasterize_ring(&local, x1 - x0, y1 - y0)
            .expect("window has positive size")
            .raster;
        Patch { x0, y0, raster: Some(raster) }
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.raster.iter().flat_map(move |r| {
            (0..r.height()).flat_map(move |y| {
                r.row(y)
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c)
                    .map(move |(x, _)| (x + self.x0, y + self.y0))
            })
        })
    }

    fn count(&self) -> usize {
        self.raster.as_ref().map_or(0, BinaryRaster::count)
    }

    fn overlap(&self, full: &BinaryRaster) -> usize {
        self.cells().filter(|&(x, y)| full.get(x, y)).count()
    }

    fn cut(&self, full: &BinaryRaster) -> Patch {
        let mut out = self.clone();
        if let Some(r) = out.raster.as_mut() {
            for y in 0..r.height() {
                for x in 0..r.width() {
                    if r.get(x, y) && !full.get(x + self.x0, y + self.y0) {
                        r.set(x, y, false);
                    }
                }
            }
        }
        out
    }

    fn paint_into(&self, full: &mut BinaryRaster) {
        for (x, y) in self.cells() {
            full.set(x, y, true);
        }
    }

    /// Outer boundary of the largest component, in frame coordinates.
    fn boundary(&self) -> Option<Polygon> {
        let r = self.raster.as_ref()?;
        let comps = r.components();
        let outline = trace_boundary(&comps.mask(comps.largest()?))?;
        outline
            .map(|p| Point2::new(p.x + self.x0 as f64, p.y + self.y0 as f64))
            .ok()
    }
}

/// Rasterized masks of one hypothesis in a shared frame.
#[derive(Debug, Clone)]
pub struct UnitRasters {
    pub frame: RasterFrame,
    pub unit: BinaryRaster,
    pub sides: [BinaryRaster; 2],
    packages: Vec<Patch>,
}

impl UnitRasters {
    pub fn build(hyp: &TransportUnitHypothesis, cfg: &PipelineConfig) -> Self {
        let b = &hyp.unit.bbox;
        let frame = RasterFrame::covering(
            Point2::new(b.x_min, b.y_min),
            Point2::new(b.x_max, b.y_max),
            cfg.raster_scale,
        );
        Self {
            frame,
            unit: frame.rasterize(&hyp.unit.mask),
            sides: [frame.rasterize(&hyp.sides[0].mask), frame.rasterize(&hyp.sides[1].mask)],
            packages: hyp.packages.iter().map(|p| frame.patch(&p.mask)).collect(),
        }
    }

    /// Pixel overlap of package `k` with side `s`.
    pub fn package_side_overlap(&self, k: usize, s: usize) -> usize {
        self.packages[k].overlap(&self.sides[s])
    }
}

/// Package indices (into the hypothesis) per side, plus the ones touching
/// neither side.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub per_side: [Vec<usize>; 2],
    pub dropped: Vec<usize>,
}

/// Side index whose raw mask centroid lies further left; side 0 if unknown.
fn leftmost_side(rasters: &UnitRasters) -> usize {
    match (rasters.sides[0].centroid(), rasters.sides[1].centroid()) {
        (Some(a), Some(b)) if b.x < a.x => 1,
        _ => 0,
    }
}

/// Assigns each package to the side with the larger pixel overlap. Equal
/// overlaps go to the side further left.
pub fn assign_packages(rasters: &UnitRasters) -> Result<Assignment, PipelineError> {
    let tie_side = leftmost_side(rasters);
    let mut out = Assignment::default();
    for k in 0..rasters.packages.len() {
        let a = rasters.package_side_overlap(k, 0);
        let b = rasters.package_side_overlap(k, 1);
        match (a, b) {
            (0, 0) => out.dropped.push(k),
            _ if a > b => out.per_side[0].push(k),
            _ if b > a => out.per_side[1].push(k),
            _ => out.per_side[tie_side].push(k),
        }
    }
    if let Some(s) = (0..2).find(|&s| out.per_side[s].is_empty()) {
        return Err(PipelineError::EmptySide(s));
    }
    Ok(out)
}

/// One side after refinement.
#[derive(Debug, Clone)]
pub struct RefinedSide {
    /// Index of the side within the hypothesis.
    pub index: usize,
    pub raster: BinaryRaster,
    /// Package outlines in image coordinates. Packages the unit mask cut are
    /// re-traced from their raster; untouched ones keep their polygon.
    pub packages: Vec<Polygon>,
    pub package_ids: Vec<String>,
}

/// Refined masks of a unit.
#[derive(Debug, Clone)]
pub struct RefinedUnit {
    pub frame: RasterFrame,
    pub sides: [RefinedSide; 2],
}

/// Cuts side and package masks to the unit mask, then grows each side by the
/// union of its (cut) packages.
pub fn refine_masks(
    hyp: &TransportUnitHypothesis,
    rasters: &UnitRasters,
    assignment: &Assignment,
) -> Result<RefinedUnit, PipelineError> {
    let frame = rasters.frame;
    let refine_side = |s: usize| -> Result<RefinedSide, PipelineError> {
        let mut raster = rasters.sides[s]
            .intersect(&rasters.unit)
            .expect("rasters share the frame");
        let mut packages = Vec::new();
        let mut package_ids = Vec::new();
        for &k in &assignment.per_side[s] {
            let patch = &rasters.packages[k];
            let cut = patch.cut(&rasters.unit);
            let kept = cut.count();
            if kept == 0 {
                continue;
            }
            cut.paint_into(&mut raster);
            let outline = if kept == patch.count() {
                Some(hyp.packages[k].mask.clone())
            } else {
                cut.boundary().and_then(|p| frame.polygon_to_image(&p))
            };
            if let Some(poly) = outline {
                packages.push(poly);
                package_ids.push(hyp.packages[k].id.clone());
            }
        }
        if raster.is_empty() {
            return Err(PipelineError::EmptySideMask(s));
        }
        if packages.is_empty() {
            return Err(PipelineError::EmptySide(s));
        }
        Ok(RefinedSide {
            index: s,
            raster,
            packages,
            package_ids,
        })
    };
    Ok(RefinedUnit {
        frame,
        sides: [refine_side(0)?, refine_side(1)?],
    })
}

/// Which visible face a side is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideRole {
    Left,
    Right,
}

impl fmt::Display for SideRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SideRole::Left => "left",
            SideRole::Right => "right",
        })
    }
}

/// Orders two side masks by centroid `x`, returning `(left, right)` indices.
pub fn identify_left_right(
    sides: [&BinaryRaster; 2],
    frame: &RasterFrame,
) -> Result<(usize, usize), PipelineError> {
    let c0 = sides[0].centroid().ok_or(PipelineError::EmptySideMask(0))?;
    let c1 = sides[1].centroid().ok_or(PipelineError::EmptySideMask(1))?;
    let dx = (c1.x - c0.x) / frame.scale;
    if dx.abs() < 1.0 {
        return Err(PipelineError::AmbiguousSides);
    }
    Ok(if dx > 0.0 { (0, 1) } else { (1, 0) })
}

/// `floor(extent / size + 0.5 + delta)`.
pub fn count_axis(extent: f64, ps_avg: f64, delta: f64) -> Result<u32, PipelineError> {
    let valid = extent.is_finite()
        && ps_avg.is_finite()
        && extent > 0.0
        && ps_avg > 0.0
        && (0.0..0.5).contains(&delta);
    if !valid {
        return Err(PipelineError::InvalidCountInput {
            extent,
            size: ps_avg,
            delta,
        });
    }
    Ok((extent / ps_avg + 0.5 + delta).floor() as u32)
}

/// Rectification and counting result for one side.
#[derive(Debug, Clone, PartialEq)]
pub struct SideAnalysis {
    pub side_role: SideRole,
    /// Fitted side outline, image coordinates.
    pub tetragon: Tetragon,
    pub rect: RectSize,
    /// Image → rectified side frame.
    pub homography: Homography,
    /// Rectified bounding-box `(width, height)` of each package.
    pub package_boxes: Vec<(f64, f64)>,
    pub ps_h_avg: f64,
    pub ps_v_avg: f64,
    pub n_h: u32,
    pub n_v: u32,
}

fn analyze_side_raster(
    role: SideRole,
    raster: &BinaryRaster,
    frame: &RasterFrame,
    packages: &[Polygon],
    cfg: &PipelineConfig,
) -> Result<SideAnalysis, PipelineError> {
    if packages.is_empty() {
        return Err(PipelineError::EmptySide(match role {
            SideRole::Left => 0,
            SideRole::Right => 1,
        }));
    }
    let fit = TetragonFitter::default().fit(raster)?;
    let tetragon = Tetragon::from_corners(fit.tetragon.corners().map(|p| frame.to_image(p)))?;
    let rect = RectSize::from_tetragon(&tetragon);
    let homography = homography_from_corners(&tetragon, rect)?;

    let mut package_boxes = Vec::with_capacity(packages.len());
    for poly in packages {
        let mapped = poly
            .vertices()
            .iter()
            .map(|&p| homography.apply(p))
            .collect::<Result<Vec<_>, _>>()?;
        let (lo, hi) = axis_aligned_bbox(&mapped)?;
        package_boxes.push((hi.x - lo.x, hi.y - lo.y));
    }
    let n = package_boxes.len() as f64;
    let ps_h_avg = package_boxes.iter().map(|b| b.0).sum::<f64>() / n;
    let ps_v_avg = package_boxes.iter().map(|b| b.1).sum::<f64>() / n;
    let n_h = count_axis(rect.s_h, ps_h_avg, cfg.delta1)?;
    let n_v = count_axis(rect.s_v, ps_v_avg, cfg.delta2)?;
    if n_h == 0 {
        return Err(PipelineError::ZeroCount { axis: "horizontal" });
    }
    if n_v == 0 {
        return Err(PipelineError::ZeroCount { axis: "vertical" });
    }
    log::debug!(
        "{role} side: rect {:.1}x{:.1}, mean package {:.2}x{:.2}, counts {n_h}x{n_v}",
        rect.s_h,
        rect.s_v,
        ps_h_avg,
        ps_v_avg
    );
    Ok(SideAnalysis {
        side_role: role,
        tetragon,
        rect,
        homography,
        package_boxes,
        ps_h_avg,
        ps_v_avg,
        n_h,
        n_v,
    })
}

/// Fits, rectifies and counts one side given its mask and its packages, all
/// in image coordinates.
pub fn analyze_side(
    role: SideRole,
    side_mask: &Polygon,
    packages: &[Polygon],
    cfg: &PipelineConfig,
) -> Result<SideAnalysis, PipelineError> {
    let (lo, hi) = side_mask.bbox();
    let frame = RasterFrame::covering(lo, hi, cfg.raster_scale);
    let raster = frame.rasterize(side_mask);
    analyze_side_raster(role, &raster, &frame, packages, cfg)
}

/// The recognized packaging structure of one transport unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackagingStructure {
    pub n_h_left: u32,
    pub n_h_right: u32,
    pub n_v: u32,
    pub total: u64,
    pub package_category: CategoryLabel,
    pub pallet_category: CategoryLabel,
    pub unit_mask: Polygon,
}

/// Full recognition output for one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecognition {
    pub structure: PackagingStructure,
    pub left: SideAnalysis,
    pub right: SideAnalysis,
    /// Ids of packages that touched neither side.
    pub dropped_packages: Vec<String>,
}

/// Assign, refine, order sides, analyze both and combine the counts.
pub fn recognize_unit(
    hyp: &TransportUnitHypothesis,
    cfg: &PipelineConfig,
) -> Result<UnitRecognition, PipelineError> {
    let rasters = UnitRasters::build(hyp, cfg);
    let assignment = assign_packages(&rasters)?;
    let refined = refine_masks(hyp, &rasters, &assignment)?;
    let (li, ri) = identify_left_right(
        [&refined.sides[0].raster, &refined.sides[1].raster],
        &refined.frame,
    )?;
    let analyze = |role, side: &RefinedSide| {
        analyze_side_raster(role, &side.raster, &refined.frame, &side.packages, cfg)
    };
    let left = analyze(SideRole::Left, &refined.sides[li])?;
    let right = analyze(SideRole::Right, &refined.sides[ri])?;
    if left.n_v != right.n_v {
        return Err(PipelineError::VerticalCountMismatch {
            left: left.n_v,
            right: right.n_v,
        });
    }
    let package_category = hyp
        .package_category()
        .ok_or(PipelineError::EmptySide(li))?;
    let structure = PackagingStructure {
        n_h_left: left.n_h,
        n_h_right: right.n_h,
        n_v: left.n_v,
        total: left.n_h as u64 * right.n_h as u64 * left.n_v as u64,
        package_category,
        pallet_category: hyp.pallet.category,
        unit_mask: hyp.unit.mask.clone(),
    };
    Ok(UnitRecognition {
        structure,
        left,
        right,
        dropped_packages: assignment
            .dropped
            .iter()
            .map(|&k| hyp.packages[k].id.clone())
            .collect(),
    })
}

/// Outcome for one filtered transport unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitOutcome {
    pub unit_id: String,
    pub unit_mask: Polygon,
    pub result: Result<UnitRecognition, PipelineError>,
}

/// Per-unit outcomes for one image, in filtered-unit order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecognition {
    pub image_id: String,
    pub units: Vec<UnitOutcome>,
}

/// Runs the whole pipeline on one image. Units are processed independently
/// (and in parallel); a failing unit never affects the others.
pub fn recognize_image(dets: &ImageDetections, cfg: &PipelineConfig) -> ImageRecognition {
    let units = filter_transport_units(dets, &cfg.filter);
    let outcomes = units
        .par_iter()
        .map(|unit| {
            let result = assemble_unit(unit, dets, &cfg.filter)
                .map_err(PipelineError::from)
                .and_then(|hyp| recognize_unit(&hyp, cfg));
            if let Err(e) = &result {
                log::info!("{}: unit {} not recognized: {e}", dets.image.id, unit.id);
            }
            UnitOutcome {
                unit_id: unit.id.clone(),
                unit_mask: unit.mask.clone(),
                result,
            }
        })
        .collect();
    ImageRecognition {
        image_id: dets.image.id.clone(),
        units: outcomes,
    }
}

/// `ok` or `error`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Ok,
    Error,
}

/// One entry of a result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitResult {
    pub status: UnitStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_h_left: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_h_right: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_v: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package_category: Option<CategoryLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pallet_category: Option<CategoryLabel>,
    /// Id of the transport-unit detection this entry describes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_id: Option<String>,
    /// The unit's mask, needed to match results against ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Polygon>,
}

/// Per-image result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub image_id: String,
    pub units: Vec<UnitResult>,
}

impl ResultDocument {
    pub fn from_recognition(rec: &ImageRecognition) -> Self {
        let units = rec
            .units
            .iter()
            .map(|u| match &u.result {
                Ok(r) => {
                    let s = &r.structure;
                    UnitResult {
                        status: UnitStatus::Ok,
                        error_kind: None,
                        n_h_left: Some(s.n_h_left),
                        n_h_right: Some(s.n_h_right),
                        n_v: Some(s.n_v),
                        total: Some(s.total),
                        package_category: Some(s.package_category),
                        pallet_category: Some(s.pallet_category),
                        unit_id: Some(u.unit_id.clone()),
                        polygon: Some(u.unit_mask.clone()),
                    }
                }
                Err(e) => UnitResult {
                    status: UnitStatus::Error,
                    error_kind: Some(e.kind().to_string()),
                    n_h_left: None,
                    n_h_right: None,
                    n_v: None,
                    total: None,
                    package_category: None,
                    pallet_category: None,
                    unit_id: Some(u.unit_id.clone()),
                    polygon: Some(u.unit_mask.clone()),
                },
            })
            .collect();
        Self {
            image_id: rec.image_id.clone(),
            units,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result document serializes")
    }

    pub fn parse(document: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(document)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detections::{BBox, DetectionRecord};

    fn pt(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::rectangle(pt(x0, y0), pt(x1, y1)).unwrap()
    }

    fn record(id: &str, category: CategoryLabel, mask: Polygon) -> DetectionRecord {
        DetectionRecord {
            id: id.into(),
            category,
            confidence: 1.0,
            bbox: BBox::of_polygon(&mask),
            mask,
        }
    }

    /// Fronto-parallel unit: left side `[100, 300] x [100, 250]` holding a
    /// `cols_l x rows` grid, right side `[300, 450] x [100, 250]` with
    /// `cols_r x rows`.
    fn flat_unit(cols_l: usize, cols_r: usize, rows: usize) -> TransportUnitHypothesis {
        let mut packages = Vec::new();
        let (top, bottom) = (100.0, 250.0);
        let ph = (bottom - top) / rows as f64;
        for (x0, x1, cols, tag) in [(100.0, 300.0, cols_l, "l"), (300.0, 450.0, cols_r, "r")] {
            let pw = (x1 - x0) / cols as f64;
            for c in 0..cols {
                for r in 0..rows {
                    packages.push(record(
                        &format!("{tag}{c}{r}"),
                        CategoryLabel::PkgKlt,
                        rect(
                            x0 + c as f64 * pw,
                            top + r as f64 * ph,
                            x0 + (c + 1) as f64 * pw,
                            top + (r + 1) as f64 * ph,
                        ),
                    ));
                }
            }
        }
        TransportUnitHypothesis {
            unit: record("u", CategoryLabel::TransportUnit, rect(100., 100., 450., 270.)),
            pallet: record("p", CategoryLabel::PalletWood, rect(100., 250., 450., 270.)),
            sides: [
                record("s_right", CategoryLabel::TuSide, rect(300., 100., 450., 250.)),
                record("s_left", CategoryLabel::TuSide, rect(100., 100., 300., 250.)),
            ],
            packages,
        }
    }

    #[test]
    fn count_axis_examples() {
        assert_eq!(count_axis(1.0, 1.0 / 3.0, 0.05).unwrap(), 3);
        assert_eq!(count_axis(1.0, 0.27, 0.05).unwrap(), 4);
        assert_eq!(count_axis(1.0, 0.30, 0.15).unwrap(), 3);
        assert_eq!(count_axis(1.0, 0.29, 0.15).unwrap(), 4);
        assert!(count_axis(0.0, 0.3, 0.05).is_err());
        assert!(count_axis(1.0, -0.3, 0.05).is_err());
        assert!(count_axis(1.0, 0.3, 0.5).is_err());
    }

    #[test]
    fn count_band_matches_floor_algebra() {
        // floor(1/p + 0.5 + d) = k exactly when 1/(k + 0.5 - d) < p <= 1/(k - 0.5 - d).
        for delta in [0.0, 0.05, 0.15, 0.45] {
            for k in 1..=10u32 {
                let lo = 1.0 / (k as f64 + 0.5 - delta);
                let hi = 1.0 / (k as f64 - 0.5 - delta);
                let n = 10_000;
                for i in 0..=n {
                    let p = 0.5 * lo + (1.5 * hi - 0.5 * lo) * i as f64 / n as f64;
                    if (p - lo).abs() < 1e-12 || (p - hi).abs() < 1e-12 {
                        continue;
                    }
                    let inside = p > lo && p <= hi;
                    assert_eq!(count_axis(1.0, p, delta).unwrap() == k, inside, "k={k} d={delta} p={p}");
                }
            }
        }
    }

    #[test]
    fn assignment_prefers_larger_overlap() {
        let mut hyp = flat_unit(2, 2, 1);
        // 120 px² on the left side, 80 px² on the right.
        hyp.packages = vec![
            record("straddle", CategoryLabel::PkgKlt, rect(288., 150., 308., 160.)),
            record("l", CategoryLabel::PkgKlt, rect(110., 110., 150., 150.)),
            record("r", CategoryLabel::PkgKlt, rect(310., 110., 350., 150.)),
            record("away", CategoryLabel::PkgKlt, rect(100., 252., 120., 268.)),
        ];
        let rasters = UnitRasters::build(&hyp, &PipelineConfig::default());
        assert_eq!(rasters.package_side_overlap(0, 1), 120);
        assert_eq!(rasters.package_side_overlap(0, 0), 80);
        let a = assign_packages(&rasters).unwrap();
        // sides[1] is the left one in this fixture.
        assert_eq!(a.per_side[1], vec![0, 1]);
        assert_eq!(a.per_side[0], vec![2]);
        assert_eq!(a.dropped, vec![3]);
    }

    #[test]
    fn ties_go_left() {
        let mut hyp = flat_unit(2, 2, 1);
        hyp.packages = vec![
            record("tie", CategoryLabel::PkgKlt, rect(290., 150., 310., 160.)),
            record("r", CategoryLabel::PkgKlt, rect(310., 110., 350., 150.)),
        ];
        let rasters = UnitRasters::build(&hyp, &PipelineConfig::default());
        let a = assign_packages(&rasters).unwrap();
        assert_eq!(a.per_side[1], vec![0]);
    }

    #[test]
    fn empty_side_is_reported() {
        let mut hyp = flat_unit(2, 2, 1);
        hyp.packages.retain(|p| p.id.starts_with('l'));
        let rasters = UnitRasters::build(&hyp, &PipelineConfig::default());
        assert_eq!(assign_packages(&rasters), Err(PipelineError::EmptySide(0)));
    }

    #[test]
    fn refinement_restores_missing_corner_and_cuts_outside() {
        let mut hyp = flat_unit(2, 1, 2);
        // Left side mask missing its top-left corner; one package pokes out of
        // the unit mask to the left.
        hyp.sides[1] = record(
            "s_left",
            CategoryLabel::TuSide,
            Polygon::new(vec![pt(140., 100.), pt(300., 100.), pt(300., 250.), pt(100., 250.), pt(100., 140.)])
                .unwrap(),
        );
        hyp.packages[0] = record("l00", CategoryLabel::PkgKlt, rect(95., 100., 200., 175.));
        let cfg = PipelineConfig::default();
        let rasters = UnitRasters::build(&hyp, &cfg);
        let a = assign_packages(&rasters).unwrap();
        let refined = refine_masks(&hyp, &rasters, &a).unwrap();
        let left = &refined.sides[1];
        let cut_side = rasters.sides[1].intersect(&rasters.unit).unwrap();
        assert!(left.raster.count() >= cut_side.count());
        let corner = refined.frame.to_raster(pt(101., 101.));
        assert!(left.raster.get(corner.x as usize, corner.y as usize));
        // Untouched packages keep their exact polygons; the cut one is traced
        // and no longer extends past x = 100.
        assert!(left.packages.contains(&hyp.packages[1].mask));
        let cut = &left.packages[left.package_ids.iter().position(|i| i == "l00").unwrap()];
        assert!(cut.bbox().0.x >= 100.0);
    }

    #[test]
    fn left_right_by_centroid() {
        let frame = RasterFrame::covering(pt(0., 0.), pt(400., 100.), None);
        let a = frame.rasterize(&rect(90., 10., 110., 50.));
        let b = frame.rasterize(&rect(290., 10., 310., 50.));
        assert_eq!(identify_left_right([&a, &b], &frame).unwrap(), (0, 1));
        assert_eq!(identify_left_right([&b, &a], &frame).unwrap(), (1, 0));
        let c = frame.rasterize(&rect(90.2, 60., 110.2, 90.));
        assert_eq!(
            identify_left_right([&a, &c], &frame),
            Err(PipelineError::AmbiguousSides)
        );
    }

    #[test]
    fn fronto_parallel_grid_counts() {
        let side = rect(0., 0., 400., 300.);
        let mut packages = Vec::new();
        for c in 0..4 {
            for r in 0..3 {
                let (x, y) = (c as f64 * 100.0, r as f64 * 100.0);
                packages.push(rect(x, y, x + 100.0, y + 100.0));
            }
        }
        let a = analyze_side(SideRole::Left, &side, &packages, &PipelineConfig::default()).unwrap();
        assert_eq!((a.n_h, a.n_v), (4, 3));
        assert!((a.rect.s_h - 400.0).abs() < 1.0);
        assert!(analyze_side(SideRole::Left, &side, &[], &PipelineConfig::default()).is_err());
    }

    #[test]
    fn flat_unit_is_recognized() {
        let rec = recognize_unit(&flat_unit(3, 4, 2), &PipelineConfig::default()).unwrap();
        let s = &rec.structure;
        assert_eq!((s.n_h_left, s.n_h_right, s.n_v, s.total), (3, 4, 2, 24));
        assert_eq!(s.package_category, CategoryLabel::PkgKlt);
        assert_eq!(s.pallet_category, CategoryLabel::PalletWood);

        let single = recognize_unit(&flat_unit(1, 1, 1), &PipelineConfig::default()).unwrap();
        assert_eq!(single.structure.total, 1);
    }

    #[test]
    fn vertical_mismatch_aborts() {
        let mut hyp = flat_unit(2, 2, 2);
        // Replace the right side's packages with a three-row grid.
        hyp.packages.retain(|p| p.id.starts_with('l'));
        for c in 0..2 {
            for r in 0..3 {
                let (x, y) = (300.0 + c as f64 * 75.0, 100.0 + r as f64 * 50.0);
                hyp.packages.push(record(
                    &format!("r{c}{r}"),
                    CategoryLabel::PkgKlt,
                    rect(x, y, x + 75.0, y + 50.0),
                ));
            }
        }
        assert_eq!(
            recognize_unit(&hyp, &PipelineConfig::default()),
            Err(PipelineError::VerticalCountMismatch { left: 2, right: 3 })
        );
    }

    #[test]
    fn downsampled_frame_gives_same_counts() {
        let cfg = PipelineConfig {
            raster_scale: Some(256),
            ..PipelineConfig::default()
        };
        let rec = recognize_unit(&flat_unit(3, 2, 2), &cfg).unwrap();
        assert_eq!(
            (rec.structure.n_h_left, rec.structure.n_h_right, rec.structure.n_v),
            (3, 2, 2)
        );
    }

    #[test]
    fn result_document_round_trips() {
        let dets = ImageDetections {
            image: crate::detections::ImageInfo {
                id: "img".into(),
                width: 600,
                height: 400,
            },
            records: {
                let h = flat_unit(2, 1, 1);
                let mut v = vec![h.unit, h.pallet];
                v.extend(h.sides);
                v.extend(h.packages);
                v
            },
        };
        let rec = recognize_image(&dets, &PipelineConfig::default());
        let doc = ResultDocument::from_recognition(&rec);
        assert_eq!(doc.units.len(), 1);
        assert_eq!(doc.units[0].total, Some(2));
        assert_eq!(ResultDocument::parse(doc.to_json().as_bytes()).unwrap(), doc);
    }
}
