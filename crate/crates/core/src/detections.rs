//! Detection and annotation documents, plus the sanity filters that turn raw
//! instance-segmentation output into per-unit hypotheses.

use crate::geometry::{GeometryError, Point2, Polygon};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Closed set of instance categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryLabel {
    TransportUnit,
    TuSide,
    PkgKlt,
    PkgTray,
    PalletWood,
    PalletPlastic,
}

impl CategoryLabel {
    pub const ALL: [CategoryLabel; 6] = [
        CategoryLabel::TransportUnit,
        CategoryLabel::TuSide,
        CategoryLabel::PkgKlt,
        CategoryLabel::PkgTray,
        CategoryLabel::PalletWood,
        CategoryLabel::PalletPlastic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryLabel::TransportUnit => "transport_unit",
            CategoryLabel::TuSide => "tu_side",
            CategoryLabel::PkgKlt => "pkg_klt",
            CategoryLabel::PkgTray => "pkg_tray",
            CategoryLabel::PalletWood => "pallet_wood",
            CategoryLabel::PalletPlastic => "pallet_plastic",
        }
    }

    pub fn is_package(self) -> bool {
        matches!(self, CategoryLabel::PkgKlt | CategoryLabel::PkgTray)
    }

    pub fn is_pallet(self) -> bool {
        matches!(self, CategoryLabel::PalletWood | CategoryLabel::PalletPlastic)
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CategoryLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CategoryLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// Axis-aligned box `(x_min, y_min, x_max, y_max)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn of_polygon(poly: &Polygon) -> Self {
        let (lo, hi) = poly.bbox();
        Self::new(lo.x, lo.y, hi.x, hi.y)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(0.0) * h.max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Fraction of this box's area that lies inside `container`.
    pub fn fraction_inside(&self, container: &BBox) -> f64 {
        let a = self.area();
        if a <= 0.0 {
            0.0
        } else {
            self.intersection_area(container) / a
        }
    }

    /// The box scaled by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> BBox {
        let (cx, cy) = (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        );
        let (hw, hh) = (0.5 * factor * self.width(), 0.5 * factor * self.height());
        BBox::new(cx - hw, cy - hh, cx + hw, cy + hh)
    }

    pub fn contains_box(&self, inner: &BBox) -> bool {
        inner.x_min >= self.x_min
            && inner.y_min >= self.y_min
            && inner.x_max <= self.x_max
            && inner.y_max <= self.y_max
    }
}

impl From<[f64; 4]> for BBox {
    fn from([a, b, c, d]: [f64; 4]) -> Self {
        BBox::new(a, b, c, d)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Slack allowed between a mask's extent and its declared box.
pub const MASK_BBOX_SLACK: f64 = 1.05;

/// One segmented instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub category: CategoryLabel,
    pub confidence: f64,
    pub bbox: BBox,
    #[serde(rename = "polygon")]
    pub mask: Polygon,
}

/// Image envelope shared by detection, annotation and result documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageInfo {
    pub id: String,
    pub width: u32,
    pub height: u32,
}

/// All detections for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub image: ImageInfo,
    #[serde(rename = "detections")]
    pub records: Vec<DetectionRecord>,
}

/// A document failed to parse or validate.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    /// Index of the offending record (detection or annotated unit).
    pub index: Option<usize>,
    pub field: Option<&'static str>,
    pub message: String,
}

impl ParseError {
    fn document(message: impl Into<String>) -> Self {
        Self {
            index: None,
            field: None,
            message: message.into(),
        }
    }

    fn record(index: usize, field: &'static str, message: impl Into<String>) -> Self {
        Self {
            index: Some(index),
            field: Some(field),
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.index, self.field) {
            (Some(i), Some(field)) => write!(f, "record {i}, field `{field}`: {}", self.message),
            (Some(i), None) => write!(f, "record {i}: {}", self.message),
            (None, Some(field)) => write!(f, "field `{field}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    image: ImageInfo,
    detections: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    id: String,
    category: String,
    confidence: f64,
    bbox: [f64; 4],
    polygon: Vec<[f64; 2]>,
}

fn validate_image(image: &ImageInfo) -> Result<(), ParseError> {
    if image.width == 0 || image.height == 0 {
        return Err(ParseError {
            index: None,
            field: Some("image"),
            message: format!("image must be at least 1x1, got {}x{}", image.width, image.height),
        });
    }
    Ok(())
}

fn parse_polygon(index: usize, field: &'static str, raw: &[[f64; 2]]) -> Result<Polygon, ParseError> {
    Polygon::new(raw.iter().map(|&p| Point2::from(p)).collect())
        .map_err(|e: GeometryError| ParseError::record(index, field, e.to_string()))
}

fn validate_record(index: usize, image: &ImageInfo, raw: RawDetection) -> Result<DetectionRecord, ParseError> {
    let category = raw
        .category
        .parse::<CategoryLabel>()
        .map_err(|m| ParseError::record(index, "category", m))?;
    if !(0.0..=1.0).contains(&raw.confidence) {
        return Err(ParseError::record(
            index,
            "confidence",
            format!("confidence {} outside [0, 1]", raw.confidence),
        ));
    }
    let bbox = BBox::from(raw.bbox);
    if !bbox.is_valid() {
        return Err(ParseError::record(index, "bbox", format!("invalid box {:?}", raw.bbox)));
    }
    let frame = BBox::new(0.0, 0.0, image.width as f64, image.height as f64);
    if !frame.contains_box(&bbox) {
        return Err(ParseError::record(
            index,
            "bbox",
            format!("box {:?} outside the {}x{} image", raw.bbox, image.width, image.height),
        ));
    }
    let mask = parse_polygon(index, "polygon", &raw.polygon)?;
    if !bbox.scaled(MASK_BBOX_SLACK).contains_box(&BBox::of_polygon(&mask)) {
        return Err(ParseError::record(index, "polygon", "mask extends beyond its bounding box"));
    }
    Ok(DetectionRecord {
        id: raw.id,
        category,
        confidence: raw.confidence,
        bbox,
        mask,
    })
}

/// Parses and validates a detection document.
pub fn parse_image_detections(document: &[u8]) -> Result<ImageDetections, ParseError> {
    let raw: RawDocument =
        serde_json::from_slice(document).map_err(|e| ParseError::document(e.to_string()))?;
    validate_image(&raw.image)?;
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(raw.detections.len());
    for (index, value) in raw.detections.into_iter().enumerate() {
        let det: RawDetection = serde_json::from_value(value).map_err(|e| ParseError {
            index: Some(index),
            field: None,
            message: e.to_string(),
        })?;
        if !seen.insert(det.id.clone()) {
            return Err(ParseError::record(index, "id", format!("duplicate id {:?}", det.id)));
        }
        records.push(validate_record(index, &raw.image, det)?);
    }
    Ok(ImageDetections {
        image: raw.image,
        records,
    })
}

impl ImageDetections {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("detections serialize")
    }
}

/// True package counts of an annotated unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCounts {
    pub h_left: u32,
    pub h_right: u32,
    pub v: u32,
}

impl UnitCounts {
    pub fn total(&self) -> u64 {
        self.h_left as u64 * self.h_right as u64 * self.v as u64
    }
}

/// Ground truth for one transport unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedUnit {
    pub polygon: Polygon,
    pub pallet_category: CategoryLabel,
    pub package_category: CategoryLabel,
    pub counts: UnitCounts,
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub image: ImageInfo,
    pub units: Vec<AnnotatedUnit>,
}

impl Annotation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation serializes")
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnnotation {
    image: ImageInfo,
    units: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUnit {
    polygon: Vec<[f64; 2]>,
    pallet_category: String,
    package_category: String,
    counts: UnitCounts,
}

/// Parses and validates an annotation document.
pub fn parse_annotations(document: &[u8]) -> Result<Annotation, ParseError> {
    let raw: RawAnnotation =
        serde_json::from_slice(document).map_err(|e| ParseError::document(e.to_string()))?;
    validate_image(&raw.image)?;
    let mut units = Vec::with_capacity(raw.units.len());
    for (index, value) in raw.units.into_iter().enumerate() {
        let unit: RawUnit = serde_json::from_value(value).map_err(|e| ParseError {
            index: Some(index),
            field: None,
            message: e.to_string(),
        })?;
        let pallet_category = unit
            .pallet_category
            .parse::<CategoryLabel>()
            .ok()
            .filter(|c| c.is_pallet())
            .ok_or_else(|| {
                ParseError::record(
                    index,
                    "pallet_category",
                    format!("{:?} is not a pallet category", unit.pallet_category),
                )
            })?;
        let package_category = unit
            .package_category
            .parse::<CategoryLabel>()
            .ok()
            .filter(|c| c.is_package())
            .ok_or_else(|| {
                ParseError::record(
                    index,
                    "package_category",
                    format!("{:?} is not a package category", unit.package_category),
                )
            })?;
        let c = unit.counts;
        if c.h_left == 0 || c.h_right == 0 || c.v == 0 {
            return Err(ParseError::record(index, "counts", "counts must be at least 1"));
        }
        units.push(AnnotatedUnit {
            polygon: parse_polygon(index, "polygon", &unit.polygon)?,
            pallet_category,
            package_category,
            counts: c,
        });
    }
    Ok(Annotation {
        image: raw.image,
        units,
    })
}

/// Thresholds for the inter- and intra-unit sanity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_confidence_tu: f64,
    pub min_confidence_intra: f64,
    /// Minimum unit box extent as a fraction of the image extent, checked
    /// separately for width and height.
    pub min_size_frac: f64,
    pub suppression_iou: f64,
    /// Minimum fraction of a member's box that must lie in the unit's box.
    pub containment_frac: f64,
    /// Minimum side mask area as a fraction of the unit box area.
    pub min_side_area_frac: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_confidence_tu: 0.5,
            min_confidence_intra: 0.5,
            min_size_frac: 0.05,
            suppression_iou: 0.8,
            containment_frac: 0.6,
            min_side_area_frac: 0.02,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(format!("{name} must lie in (0, 1], got {v}"))
            }
        };
        let conf = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0, 1], got {v}"))
            }
        };
        conf("min_confidence_tu", self.min_confidence_tu)?;
        conf("min_confidence_intra", self.min_confidence_intra)?;
        unit("min_size_frac", self.min_size_frac)?;
        unit("suppression_iou", self.suppression_iou)?;
        unit("containment_frac", self.containment_frac)?;
        unit("min_side_area_frac", self.min_side_area_frac)
    }
}

fn by_confidence(a: &DetectionRecord, b: &DetectionRecord) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.id.cmp(&b.id))
}

/// Inter-unit filtering: confidence and minimum-size gates, then greedy
/// suppression of boxes overlapping a higher-confidence unit.
///
/// The result is ordered by descending confidence with ties broken by id.
pub fn filter_transport_units(dets: &ImageDetections, cfg: &FilterConfig) -> Vec<DetectionRecord> {
    let min_w = cfg.min_size_frac * dets.image.width as f64;
    let min_h = cfg.min_size_frac * dets.image.height as f64;
    let mut candidates: Vec<&DetectionRecord> = dets
        .records
        .iter()
        .filter(|r| r.category == CategoryLabel::TransportUnit)
        .filter(|r| r.confidence >= cfg.min_confidence_tu)
        .filter(|r| r.bbox.width() >= min_w && r.bbox.height() >= min_h)
        .collect();
    candidates.sort_by(|a, b| by_confidence(a, b));

    let mut kept: Vec<DetectionRecord> = Vec::new();
    for cand in candidates {
        if kept.iter().all(|k| k.bbox.iou(&cand.bbox) <= cfg.suppression_iou) {
            kept.push(cand.clone());
        }
    }
    kept
}

/// A transport unit with exactly one pallet and two sides.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportUnitHypothesis {
    pub unit: DetectionRecord,
    pub pallet: DetectionRecord,
    pub sides: [DetectionRecord; 2],
    pub packages: Vec<DetectionRecord>,
}

impl TransportUnitHypothesis {
    /// Package category, or `None` when no packages survived.
    pub fn package_category(&self) -> Option<CategoryLabel> {
        self.packages.first().map(|p| p.category)
    }
}

/// Intra-unit consistency failures; each aborts only the affected unit.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssemblyError {
    #[error("expected exactly one pallet, found {0}")]
    PalletCount(usize),
    #[error("expected exactly two sides, found {0}")]
    SideCount(usize),
    #[error("packages of more than one category")]
    MixedPackageCategories,
}

/// True when a member's box lies sufficiently inside the unit's box.
pub fn is_contained(member: &BBox, unit: &BBox, cfg: &FilterConfig) -> bool {
    member.fraction_inside(unit) >= cfg.containment_frac
}

/// Collects the intra-unit detections belonging to `unit` and checks the
/// one-pallet / two-sides / single-package-category contract.
pub fn assemble_unit(
    unit: &DetectionRecord,
    dets: &ImageDetections,
    cfg: &FilterConfig,
) -> Result<TransportUnitHypothesis, AssemblyError> {
    let min_side_area = cfg.min_side_area_frac * unit.bbox.area();
    let members = dets.records.iter().filter(|r| {
        r.category != CategoryLabel::TransportUnit
            && r.confidence >= cfg.min_confidence_intra
            && is_contained(&r.bbox, &unit.bbox, cfg)
    });

    let mut pallets = Vec::new();
    let mut sides = Vec::new();
    let mut packages = Vec::new();
    for r in members {
        match r.category {
            c if c.is_pallet() => pallets.push(r.clone()),
            CategoryLabel::TuSide if r.mask.area() >= min_side_area => sides.push(r.clone()),
            c if c.is_package() => packages.push(r.clone()),
            _ => {}
        }
    }
    if pallets.len() != 1 {
        return Err(AssemblyError::PalletCount(pallets.len()));
    }
    if sides.len() != 2 {
        return Err(AssemblyError::SideCount(sides.len()));
    }
    if let Some(first) = packages.first() {
        if packages.iter().any(|p| p.category != first.category) {
            return Err(AssemblyError::MixedPackageCategories);
        }
    }
    let side_b = sides.pop().expect("two sides");
    let side_a = sides.pop().expect("two sides");
    Ok(TransportUnitHypothesis {
        unit: unit.clone(),
        pallet: pallets.pop().expect("one pallet"),
        sides: [side_a, side_b],
        packages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_record(id: &str, category: CategoryLabel, conf: f64, b: [f64; 4]) -> DetectionRecord {
        let bbox = BBox::from(b);
        DetectionRecord {
            id: id.into(),
            category,
            confidence: conf,
            bbox,
            mask: Polygon::rectangle(Point2::new(b[0], b[1]), Point2::new(b[2], b[3])).unwrap(),
        }
    }

    fn image(records: Vec<DetectionRecord>) -> ImageDetections {
        ImageDetections {
            image: ImageInfo {
                id: "img".into(),
                width: 600,
                height: 400,
            },
            records,
        }
    }

    const MINIMAL: &str = r#"{
        "image": {"id": "a", "width": 100, "height": 80},
        "detections": [
            {"id": "u", "category": "transport_unit", "confidence": 0.9,
             "bbox": [10, 10, 60, 70], "polygon": [[10,10],[60,10],[60,70],[10,70]]}
        ]
    }"#;

    #[test]
    fn minimal_document_parses() {
        let d = parse_image_detections(MINIMAL.as_bytes()).unwrap();
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.records[0].category, CategoryLabel::TransportUnit);
        assert_eq!(parse_image_detections(d.to_json().as_bytes()).unwrap(), d);
    }

    #[test]
    fn bad_confidence_names_the_field() {
        let doc = MINIMAL.replace("0.9", "1.3");
        let err = parse_image_detections(doc.as_bytes()).unwrap_err();
        assert_eq!(err.index, Some(0));
        assert_eq!(err.field, Some("confidence"));
        assert!(err.to_string().contains("confidence"));
    }

    #[test]
    fn record_errors_carry_their_index() {
        let doc = MINIMAL.replace("transport_unit", "forklift");
        let err = parse_image_detections(doc.as_bytes()).unwrap_err();
        assert_eq!((err.index, err.field), (Some(0), Some("category")));

        let doc = MINIMAL.replace("[10, 10, 60, 70]", "[10, 10, 160, 70]");
        let err = parse_image_detections(doc.as_bytes()).unwrap_err();
        assert_eq!(err.field, Some("bbox"));

        let doc = MINIMAL.replace("[60,70],[10,70]", "[90,70],[10,70]");
        let err = parse_image_detections(doc.as_bytes()).unwrap_err();
        assert_eq!(err.field, Some("polygon"));

        let doc = MINIMAL.replace("\"confidence\": 0.9", "\"confidence\": \"high\"");
        assert_eq!(parse_image_detections(doc.as_bytes()).unwrap_err().index, Some(0));

        assert_eq!(parse_image_detections(b"{not json").unwrap_err().index, None);
    }

    #[test]
    fn annotation_counts() {
        let doc = r#"{"image": {"id": "a", "width": 100, "height": 80},
            "units": [{"polygon": [[0,0],[10,0],[10,10]], "pallet_category": "pallet_wood",
                       "package_category": "pkg_klt", "counts": {"h_left": 3, "h_right": 4, "v": 2}}]}"#;
        let a = parse_annotations(doc.as_bytes()).unwrap();
        assert_eq!(a.units[0].counts.total(), 24);
        assert_eq!(parse_annotations(a.to_json().as_bytes()).unwrap(), a);

        let missing = doc.replace(r#", "counts": {"h_left": 3, "h_right": 4, "v": 2}"#, "");
        let err = parse_annotations(missing.as_bytes()).unwrap_err();
        assert_eq!(err.index, Some(0));
        assert!(err.message.contains("counts"));

        let wrong = doc.replace("\"pkg_klt\"", "\"pallet_wood\"");
        assert_eq!(
            parse_annotations(wrong.as_bytes()).unwrap_err().field,
            Some("package_category")
        );
    }

    #[test]
    fn duplicate_units_are_suppressed() {
        let tu = CategoryLabel::TransportUnit;
        let dets = image(vec![
            rect_record("b", tu, 0.8, [100., 50., 300., 350.]),
            rect_record("a", tu, 0.9, [100., 50., 300., 350.]),
        ]);
        let kept = filter_transport_units(&dets, &FilterConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "a");
    }

    #[test]
    fn narrow_units_are_dropped() {
        let tu = CategoryLabel::TransportUnit;
        let dets = image(vec![rect_record("thin", tu, 0.9, [100., 50., 110., 350.])]);
        assert!(filter_transport_units(&dets, &FilterConfig::default()).is_empty());
        let low = image(vec![rect_record("low", tu, 0.4, [100., 50., 300., 350.])]);
        assert!(filter_transport_units(&low, &FilterConfig::default()).is_empty());
    }

    fn unit_scene(extra: Vec<DetectionRecord>) -> (DetectionRecord, ImageDetections) {
        let unit = rect_record("u", CategoryLabel::TransportUnit, 0.95, [100., 40., 400., 380.]);
        let mut records = vec![
            unit.clone(),
            rect_record("pal", CategoryLabel::PalletWood, 0.9, [100., 330., 400., 380.]),
            rect_record("sl", CategoryLabel::TuSide, 0.9, [100., 40., 250., 330.]),
            rect_record("sr", CategoryLabel::TuSide, 0.9, [250., 40., 400., 330.]),
            rect_record("p0", CategoryLabel::PkgKlt, 0.9, [100., 40., 250., 180.]),
        ];
        records.extend(extra);
        (unit, image(records))
    }

    #[test]
    fn assembles_a_clean_unit() {
        let (unit, dets) = unit_scene(vec![]);
        let hyp = assemble_unit(&unit, &dets, &FilterConfig::default()).unwrap();
        assert_eq!(hyp.pallet.id, "pal");
        assert_eq!(hyp.packages.len(), 1);
        assert_eq!(hyp.package_category(), Some(CategoryLabel::PkgKlt));
    }

    #[test]
    fn half_outside_package_is_excluded() {
        // 50% of this box lies left of the unit box.
        let (unit, dets) = unit_scene(vec![rect_record(
            "out",
            CategoryLabel::PkgKlt,
            0.9,
            [40., 100., 160., 200.],
        )]);
        let hyp = assemble_unit(&unit, &dets, &FilterConfig::default()).unwrap();
        assert!(hyp.packages.iter().all(|p| p.id != "out"));
    }

    #[test]
    fn count_errors() {
        let (unit, mut dets) = unit_scene(vec![]);
        dets.records.retain(|r| r.category != CategoryLabel::TuSide);
        assert_eq!(
            assemble_unit(&unit, &dets, &FilterConfig::default()),
            Err(AssemblyError::SideCount(0))
        );

        let (unit, dets) = unit_scene(vec![rect_record(
            "pal2",
            CategoryLabel::PalletPlastic,
            0.7,
            [120., 340., 380., 380.],
        )]);
        assert_eq!(
            assemble_unit(&unit, &dets, &FilterConfig::default()),
            Err(AssemblyError::PalletCount(2))
        );

        let (unit, dets) = unit_scene(vec![rect_record(
            "tray",
            CategoryLabel::PkgTray,
            0.9,
            [250., 40., 400., 180.],
        )]);
        assert_eq!(
            assemble_unit(&unit, &dets, &FilterConfig::default()),
            Err(AssemblyError::MixedPackageCategories)
        );
    }

    #[test]
    fn tiny_sides_do_not_count() {
        let (unit, dets) = unit_scene(vec![rect_record(
            "speck",
            CategoryLabel::TuSide,
            0.9,
            [200., 200., 210., 210.],
        )]);
        assert!(assemble_unit(&unit, &dets, &FilterConfig::default()).is_ok());
    }
}
