//! Synthetic transport-unit scenes with known packaging structure.
//!
//! Scenes are built in a right-handed world frame with `z` up and projected
//! through an ideal pinhole camera. The output is a perfect detection
//! document plus annotations, optionally degraded by [`perturb`].

use crate::detections::{
    AnnotatedUnit, Annotation, BBox, CategoryLabel, DetectionRecord, ImageDetections, ImageInfo,
    UnitCounts,
};
use crate::geometry::{Point2, Polygon};
use nalgebra::{Vector2, Vector3};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

const DIM_SLACK: f64 = 1e-9;
const MIN_DEPTH_M: f64 = 0.05;
const MIN_YAW_DEG: f64 = 5.0;
const MAX_YAW_DEG: f64 = 85.0;

fn default_pallet_dims() -> [f64; 3] {
    [1.2, 0.8, 0.144]
}

/// One transport unit: a pallet carrying a full `n_h_left × n_h_right × n_v`
/// grid of identical packages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSpec {
    pub n_h_left: u32,
    pub n_h_right: u32,
    pub n_v: u32,
    /// Package `(w, h, d)` in meters. `w` runs along the left face, `d` along
    /// the right face.
    pub package_dims: [f64; 3],
    pub package_category: CategoryLabel,
    pub pallet_category: CategoryLabel,
    /// Pallet `(length, width, height)`; the length runs along the left face.
    #[serde(default = "default_pallet_dims")]
    pub pallet_dims: [f64; 3],
    /// Fraction of the top package row hidden by a lid.
    #[serde(default)]
    pub lid_occlusion_frac: f64,
    /// Pallet center on the ground plane.
    pub position: [f64; 2],
    /// Angle in radians between the line of sight (unit to camera) and the
    /// left face's normal. The right face sits at `yaw - 90°`.
    pub yaw: f64,
}

/// Pinhole camera with no roll; the principal point is the image center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub focal_px: f64,
    pub image_size: [u32; 2],
}

/// `(mean, spread)` of uniformly resampled confidences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceModel {
    pub mean: f64,
    pub spread: f64,
}

/// Mask-level degradation applied by [`perturb`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub vertex_jitter_px: f64,
    pub dropout_prob: f64,
    /// Expected number of spurious package detections per image.
    pub spurious_rate: f64,
    /// `None` keeps the input confidences.
    pub confidence_model: Option<ConfidenceModel>,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            vertex_jitter_px: 0.0,
            dropout_prob: 0.0,
            spurious_rate: 0.0,
            confidence_model: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidNoise(m.to_string()));
        if !(self.vertex_jitter_px.is_finite() && self.vertex_jitter_px >= 0.0) {
            return bad("vertex_jitter_px must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return bad("dropout_prob must lie in [0, 1]");
        }
        if !(self.spurious_rate.is_finite() && self.spurious_rate >= 0.0) {
            return bad("spurious_rate must be finite and >= 0");
        }
        if let Some(c) = self.confidence_model {
            if !(0.0..=1.0).contains(&c.mean) || !(c.spread.is_finite() && c.spread >= 0.0) {
                return bad("confidence_model needs mean in [0, 1] and spread >= 0");
            }
        }
        Ok(())
    }
}

/// Scene description file: explicit units with their camera, or a random
/// layout (the sampler places its own camera) when `units` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub units: Vec<UnitSpec>,
    #[serde(default)]
    pub camera: Option<CameraSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sampler: Option<SceneSampler>,
}

impl SceneSpec {
    /// Scene `index` of a corpus drawn from this spec. Each index gets its
    /// own sub-seed, so scenes are independent of how many are generated.
    /// The image id is `scene_<index>`.
    pub fn generate(&self, index: u64, seed: u64) -> Result<Scene, SynthError> {
        self.noise.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let scene_seed = rng.next_u64();
        let image_id = format!("scene_{index}");
        let mut scene = if self.units.is_empty() {
            let sampler = self.sampler.clone().unwrap_or_default();
            let mut sampler_rng = ChaCha8Rng::seed_from_u64(scene_seed);
            let (units, camera) = sampler.sample(&mut sampler_rng)?;
            render_scene(&image_id, &units, &camera, scene_seed)?
        } else {
            let camera = self.camera.as_ref().ok_or_else(|| {
                SynthError::InvalidCamera("a camera is required with explicit units".into())
            })?;
            render_scene(&image_id, &self.units, camera, scene_seed)?
        };
        let noise = NoiseSpec {
            seed: self.noise.seed ^ scene_seed,
            ..self.noise.clone()
        };
        scene.detections = perturb(&scene.detections, &noise);
        Ok(scene)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("unit {unit}: {reason}")]
    InvalidUnit { unit: usize, reason: String },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("unit {unit} leaves the view frustum")]
    Frustum { unit: usize },
    #[error("unit {unit}: a side faces away from the camera")]
    HiddenFace { unit: usize },
    #[error("units {a} and {b} overlap on the ground plane")]
    GroundOverlap { a: usize, b: usize },
    #[error("units {a} and {b} overlap in the image")]
    ImageOverlap { a: usize, b: usize },
    #[error("no valid scene after {0} attempts")]
    SamplingExhausted(usize),
}

struct Camera {
    center: Vector3<f64>,
    fwd: Vector3<f64>,
    right: Vector3<f64>,
    down: Vector3<f64>,
    focal: f64,
    width: f64,
    height: f64,
}

impl Camera {
    fn new(spec: &CameraSpec) -> Result<Self, SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidCamera(m.to_string()));
        let center = Vector3::from(spec.position);
        let fwd = Vector3::from(spec.look_at) - center;
        if !(spec.focal_px.is_finite() && spec.focal_px > 0.0) {
            return bad("focal_px must be positive");
        }
        if spec.image_size[0] == 0 || spec.image_size[1] == 0 {
            return bad("image_size must be positive");
        }
        if !fwd.iter().all(|v| v.is_finite()) || fwd.norm() == 0.0 {
            return bad("look_at must differ from position");
        }
        let fwd = fwd.normalize();
        let right = fwd.cross(&Vector3::z());
        if right.norm() < 1e-6 {
            return bad("camera cannot look straight up or down");
        }
        let right = right.normalize();
        Ok(Self {
            center,
            fwd,
            right,
            down: fwd.cross(&right),
            focal: spec.focal_px,
            width: spec.image_size[0] as f64,
            height: spec.image_size[1] as f64,
        })
    }

    /// Image point and camera depth of a world point.
    fn project(&self, x: Vector3<f64>) -> (Point2, f64) {
        let v = x - self.center;
        let depth = v.dot(&self.fwd);
        let p = Point2::new(
            self.focal * v.dot(&self.right) / depth + 0.5 * self.width,
            self.focal * v.dot(&self.down) / depth + 0.5 * self.height,
        );
        (p, depth)
    }
}

fn rotate(v: Vector2<f64>, angle: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

fn lift(v: Vector2<f64>, z: f64) -> Vector3<f64> {
    Vector3::new(v.x, v.y, z)
}

/// Andrew's monotone chain; drops collinear points.
fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let half = |iter: &mut dyn Iterator<Item = Point2>| {
        let mut h: Vec<Point2> = Vec::new();
        for p in iter {
            while h.len() >= 2 && h[h.len() - 2].sub(h[h.len() - 1]).cross(p.sub(h[h.len() - 1])) >= 0.0 {
                h.pop();
            }
            h.push(p);
        }
        h.pop();
        h
    };
    let mut hull = half(&mut pts.iter().copied());
    hull.extend(half(&mut pts.iter().rev().copied()));
    hull
}

/// Separating-axis overlap test for convex polygons (touching counts as
/// disjoint).
fn convex_overlap(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let e = poly[(i + 1) % poly.len()] - poly[i];
            let axis = Vector2::new(-e.y, e.x);
            let span = |p: &[Vector2<f64>]| {
                p.iter().map(|v| v.dot(&axis)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                    (lo.min(d), hi.max(d))
                })
            };
            let (a0, a1) = span(a);
            let (b0, b1) = span(b);
            if a1 <= b0 || b1 <= a0 {
                return false;
            }
        }
    }
    true
}

/// Projected ground truth for one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTruth {
    pub unit_id: String,
    /// Side corners in image coordinates, in 3D order top-left, top-right,
    /// bottom-right, bottom-left as seen from the camera.
    pub left_side: [Point2; 4],
    pub right_side: [Point2; 4],
    /// Package faces per side, row-major from the top.
    pub left_packages: Vec<Polygon>,
    pub right_packages: Vec<Polygon>,
    /// Rectangular package face size per side in meters, `(width, height)`,
    /// before lid occlusion.
    pub left_face_m: (f64, f64),
    pub right_face_m: (f64, f64),
}

/// A generated scene with its annotation and projected truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub detections: ImageDetections,
    pub annotation: Annotation,
    pub truth: Vec<UnitTruth>,
}

struct UnitGeometry {
    footprint: Vec<Vector2<f64>>,
    records: Vec<DetectionRecord>,
    annotation: AnnotatedUnit,
    truth: UnitTruth,
    bbox: BBox,
}

fn validate_unit(i: usize, u: &UnitSpec) -> Result<(), SynthError> {
    let bad = |m: String| Err(SynthError::InvalidUnit { unit: i, reason: m });
    if u.n_h_left == 0 || u.n_h_right == 0 || u.n_v == 0 {
        return bad("grid counts must be at least 1".into());
    }
    if !u.package_dims.iter().chain(&u.pallet_dims).all(|v| v.is_finite() && *v > 0.0) {
        return bad("dimensions must be positive".into());
    }
    if !u.package_category.is_package() || !u.pallet_category.is_pallet() {
        return bad("category labels do not match their roles".into());
    }
    if !(0.0..=0.4).contains(&u.lid_occlusion_frac) {
        return bad("lid_occlusion_frac must lie in [0, 0.4]".into());
    }
    let [w, _, d] = u.package_dims;
    if u.n_h_left as f64 * w > u.pallet_dims[0] + DIM_SLACK {
        return bad(format!("{} packages of width {w} exceed the pallet length", u.n_h_left));
    }
    if u.n_h_right as f64 * d > u.pallet_dims[1] + DIM_SLACK {
        return bad(format!("{} packages of depth {d} exceed the pallet width", u.n_h_right));
    }
    let yaw = u.yaw.to_degrees();
    if !(yaw > MIN_YAW_DEG && yaw < MAX_YAW_DEG) {
        return bad(format!("yaw {yaw:.2} deg outside ({MIN_YAW_DEG}, {MAX_YAW_DEG})"));
    }
    if !u.position.iter().all(|v| v.is_finite()) {
        return bad("position must be finite".into());
    }
    Ok(())
}

fn polygon_of(i: usize, pts: &[Point2]) -> Result<Polygon, SynthError> {
    Polygon::new(pts.to_vec()).map_err(|e| SynthError::InvalidUnit {
        unit: i,
        reason: format!("degenerate projection: {e}"),
    })
}

fn record(id: String, category: CategoryLabel, mask: Polygon) -> DetectionRecord {
    DetectionRecord {
        id,
        category,
        confidence: 1.0,
        bbox: BBox::of_polygon(&mask),
        mask,
    }
}

fn build_unit(i: usize, u: &UnitSpec, cam: &Camera) -> Result<UnitGeometry, SynthError> {
    validate_unit(i, u)?;
    let center = Vector2::new(u.position[0], u.position[1]);
    let to_cam = Vector2::new(cam.center.x, cam.center.y) - center;
    if to_cam.norm() < 1e-6 {
        return Err(SynthError::Frustum { unit: i });
    }
    let n_left = rotate(to_cam.normalize(), -u.yaw);
    let n_right = rotate(n_left, FRAC_PI_2);

    let [w, h, d] = u.package_dims;
    let [pl, pw, ph] = u.pallet_dims;
    let stack_a = u.n_h_left as f64 * w;
    let stack_b = u.n_h_right as f64 * d;
    let stack_top = ph + u.n_v as f64 * h;
    let visible_top = stack_top - u.lid_occlusion_frac * h;

    let box_corners = |half_a: f64, half_b: f64, z0: f64, z1: f64| {
        let mut out = Vec::with_capacity(8);
        for sa in [-1.0, 1.0] {
            for sb in [-1.0, 1.0] {
                let g = center + n_right * (sa * half_a) + n_left * (sb * half_b);
                out.push(lift(g, z0));
                out.push(lift(g, z1));
            }
        }
        out
    };
    let pallet_box = box_corners(0.5 * pl, 0.5 * pw, 0.0, ph);
    let stack_box = box_corners(0.5 * stack_a, 0.5 * stack_b, ph, stack_top);

    let project = |x: Vector3<f64>| -> Result<Point2, SynthError> {
        let (p, depth) = cam.project(x);
        let inside = depth > MIN_DEPTH_M
            && p.x >= 0.0
            && p.y >= 0.0
            && p.x <= cam.width
            && p.y <= cam.height;
        inside.then_some(p).ok_or(SynthError::Frustum { unit: i })
    };

    let pallet_img = pallet_box.iter().map(|&x| project(x)).collect::<Result<Vec<_>, _>>()?;
    let mut all_img = pallet_img.clone();
    for &x in &stack_box {
        all_img.push(project(x)?);
    }

    // A face is `origin + t * tangent + z`, `t` in [0, len]. The tangent is
    // chosen so that increasing `t` moves right in the image.
    struct Face {
        origin: Vector2<f64>,
        tangent: Vector2<f64>,
        normal: Vector2<f64>,
        cell: f64,
        count: u32,
    }
    let face = |normal: Vector2<f64>, tangent_axis: Vector2<f64>, half_n: f64, half_t: f64, cell, count| {
        let mid = center + normal * half_n;
        let t = if (cam.project(lift(mid + tangent_axis, ph)).0.x) >= cam.project(lift(mid, ph)).0.x {
            tangent_axis
        } else {
            -tangent_axis
        };
        Face {
            origin: mid - t * half_t,
            tangent: t,
            normal,
            cell,
            count,
        }
    };
    let left = face(n_left, n_right, 0.5 * stack_b, 0.5 * stack_a, w, u.n_h_left);
    let right = face(n_right, n_left, 0.5 * stack_a, 0.5 * stack_b, d, u.n_h_right);

    let mut side_quads = Vec::new();
    let mut side_packages = Vec::new();
    for f in [&left, &right] {
        let mid = f.origin + f.tangent * (0.5 * f.cell * f.count as f64);
        let view = lift(Vector2::new(cam.center.x, cam.center.y) - mid, 0.0);
        if view.dot(&lift(f.normal, 0.0)) <= 0.0 {
            return Err(SynthError::HiddenFace { unit: i });
        }
        let len = f.cell * f.count as f64;
        let quad = |t0: f64, t1: f64, z0: f64, z1: f64| -> Result<[Point2; 4], SynthError> {
            let g0 = f.origin + f.tangent * t0;
            let g1 = f.origin + f.tangent * t1;
            Ok([
                project(lift(g0, z1))?,
                project(lift(g1, z1))?,
                project(lift(g1, z0))?,
                project(lift(g0, z0))?,
            ])
        };
        side_quads.push(quad(0.0, len, ph, visible_top)?);
        let mut pkgs = Vec::new();
        for r in (0..u.n_v).rev() {
            let z0 = ph + r as f64 * h;
            let z1 = (z0 + h).min(visible_top);
            for c in 0..f.count {
                let q = quad(c as f64 * f.cell, (c + 1) as f64 * f.cell, z0, z1)?;
                pkgs.push(polygon_of(i, &q)?);
            }
        }
        side_packages.push(pkgs);
    }

    let prefix = format!("u{i}");
    let unit_poly = polygon_of(i, &convex_hull(&all_img))?;
    let pallet_poly = polygon_of(i, &convex_hull(&pallet_img))?;
    let mut records = vec![
        record(format!("{prefix}_tu"), CategoryLabel::TransportUnit, unit_poly.clone()),
        record(format!("{prefix}_pallet"), u.pallet_category, pallet_poly),
    ];
    for (s, tag) in ["a", "b"].iter().enumerate() {
        records.push(record(
            format!("{prefix}_side_{tag}"),
            CategoryLabel::TuSide,
            polygon_of(i, &side_quads[s])?,
        ));
        for (k, p) in side_packages[s].iter().enumerate() {
            records.push(record(format!("{prefix}_pkg_{tag}{k}"), u.package_category, p.clone()));
        }
    }

    let footprint = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|&(sa, sb)| center + n_right * (sa * 0.5 * pl) + n_left * (sb * 0.5 * pw))
        .collect();
    let bbox = BBox::of_polygon(&unit_poly);
    let right_packages = side_packages.pop().expect("two faces");
    let left_packages = side_packages.pop().expect("two faces");
    Ok(UnitGeometry {
        footprint,
        annotation: AnnotatedUnit {
            polygon: unit_poly,
            pallet_category: u.pallet_category,
            package_category: u.package_category,
            counts: UnitCounts {
                h_left: u.n_h_left,
                h_right: u.n_h_right,
                v: u.n_v,
            },
        },
        truth: UnitTruth {
            unit_id: format!("{prefix}_tu"),
            left_side: side_quads[0],
            right_side: side_quads[1],
            left_packages,
            right_packages,
            left_face_m: (w, h),
            right_face_m: (d, h),
        },
        records,
        bbox,
    })
}

/// Builds a noise-free scene. The seed only shuffles the record order.
pub fn render_scene(
    image_id: &str,
    units: &[UnitSpec],
    cam: &CameraSpec,
    seed: u64,
) -> Result<Scene, SynthError> {
    let camera = Camera::new(cam)?;
    let geoms = units
        .iter()
        .enumerate()
        .map(|(i, u)| build_unit(i, u, &camera))
        .collect::<Result<Vec<_>, _>>()?;
    for a in 0..geoms.len() {
        for b in a + 1..geoms.len() {
            if convex_overlap(&geoms[a].footprint, &geoms[b].footprint) {
                return Err(SynthError::GroundOverlap { a, b });
            }
            if geoms[a].bbox.intersection_area(&geoms[b].bbox) > 0.0 {
                return Err(SynthError::ImageOverlap { a, b });
            }
        }
    }
    let image = ImageInfo {
        id: image_id.to_string(),
        width: cam.image_size[0],
        height: cam.image_size[1],
    };
    let mut records = Vec::new();
    let mut annotated = Vec::new();
    let mut truth = Vec::new();
    for g in geoms {
        records.extend(g.records);
        annotated.push(g.annotation);
        truth.push(g.truth);
    }
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Scene {
        detections: ImageDetections {
            image: image.clone(),
            records,
        },
        annotation: Annotation {
            image,
            units: annotated,
        },
        truth,
    })
}

/// Perfect detections and annotations for one image.
pub fn generate_scene(
    units: &[UnitSpec],
    cam: &CameraSpec,
    seed: u64,
) -> Result<(ImageDetections, Annotation), SynthError> {
    let scene = render_scene(&format!("scene_{seed}"), units, cam, seed)?;
    Ok((scene.detections, scene.annotation))
}

fn jitter_polygon(poly: &Polygon, j: f64, w: f64, h: f64, rng: &mut ChaCha8Rng) -> Polygon {
    for _ in 0..8 {
        let moved: Vec<Point2> = poly
            .vertices()
            .iter()
            .map(|p| {
                Point2::new(
                    (p.x + rng.random_range(-j..=j)).clamp(0.0, w),
                    (p.y + rng.random_range(-j..=j)).clamp(0.0, h),
                )
            })
            .collect();
        if let Ok(p) = Polygon::new(moved) {
            return p;
        }
    }
    poly.clone()
}

/// Degrades a detection document. Transport-unit records are never dropped.
pub fn perturb(dets: &ImageDetections, noise: &NoiseSpec) -> ImageDetections {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let (w, h) = (dets.image.width as f64, dets.image.height as f64);
    let confidence = |rng: &mut ChaCha8Rng, old: f64| match noise.confidence_model {
        Some(c) if c.spread > 0.0 => {
            rng.random_range(c.mean - c.spread..=c.mean + c.spread).clamp(0.0, 1.0)
        }
        Some(c) => c.mean,
        None => old,
    };

    let mut records = Vec::with_capacity(dets.records.len());
    for r in &dets.records {
        let drop = rng.random::<f64>() < noise.dropout_prob;
        if drop && r.category != CategoryLabel::TransportUnit {
            continue;
        }
        let mut out = r.clone();
        if noise.vertex_jitter_px > 0.0 {
            out.mask = jitter_polygon(&r.mask, noise.vertex_jitter_px, w, h, &mut rng);
            out.bbox = BBox::of_polygon(&out.mask);
        }
        out.confidence = confidence(&mut rng, r.confidence);
        records.push(out);
    }

    let spurious = match Poisson::new(noise.spurious_rate) {
        Ok(dist) => dist.sample(&mut rng) as usize,
        Err(_) => 0,
    };
    let category = dets
        .records
        .iter()
        .map(|r| r.category)
        .find(|c| c.is_package())
        .unwrap_or(CategoryLabel::PkgKlt);
    for k in 0..spurious {
        let side = rng.random_range(6.0..30.0_f64).min(w.min(h));
        let x = rng.random_range(0.0..=(w - side).max(0.0));
        let y = rng.random_range(0.0..=(h - side).max(0.0));
        let mask = Polygon::rectangle(Point2::new(x, y), Point2::new(x + side, y + side))
            .expect("positive side");
        let conf = confidence(&mut rng, 1.0);
        records.push(DetectionRecord {
            id: format!("spurious_{k}"),
            category,
            confidence: conf,
            bbox: BBox::of_polygon(&mask),
            mask,
        });
    }
    ImageDetections {
        image: dets.image.clone(),
        records,
    }
}

/// Random scene layout: unit count, grids, package sizes, placement and
/// camera. Defaults follow the imaging restrictions of the recognizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSampler {
    pub max_units: usize,
    pub n_h_range: [u32; 2],
    pub n_v_range: [u32; 2],
    /// Relative yaw range, degrees.
    pub yaw_deg: [f64; 2],
    pub lid_choices: Vec<f64>,
    /// Camera-to-unit ground distance range, meters.
    pub distance_m: [f64; 2],
    pub camera_height_m: [f64; 2],
    pub focal_px: f64,
    pub image_size: [u32; 2],
    /// Layouts where a side covers less than this fraction of its unit's
    /// bounding box are not "clearly visible" and get resampled.
    pub min_side_area_frac: f64,
    pub max_attempts: usize,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            max_units: 2,
            n_h_range: [1, 6],
            n_v_range: [1, 4],
            yaw_deg: [10.0, 80.0],
            lid_choices: vec![0.0, 0.3],
            distance_m: [3.5, 4.5],
            camera_height_m: [1.8, 2.6],
            focal_px: 1500.0,
            image_size: [1600, 1200],
            min_side_area_frac: 0.04,
            max_attempts: 200,
        }
    }
}

impl SceneSampler {
    fn sample_unit(&self, rng: &mut ChaCha8Rng, position: [f64; 2]) -> UnitSpec {
        let [n_lo, n_hi] = self.n_h_range;
        let [v_lo, v_hi] = self.n_v_range;
        let n_h_left = rng.random_range(n_lo..=n_hi);
        let n_h_right = rng.random_range(n_lo..=n_hi);
        let n_v = rng.random_range(v_lo..=v_hi);
        let pallet = default_pallet_dims();
        let w_max = (pallet[0] / n_h_left as f64).min(0.6);
        let d_max = (pallet[1] / n_h_right as f64).min(0.6);
        let w = rng.random_range(0.15_f64.min(w_max)..=w_max);
        let d = rng.random_range(0.12_f64.min(d_max)..=d_max);
        let h = rng.random_range(0.15..=0.4);
        let (y0, y1) = (self.yaw_deg[0], self.yaw_deg[1]);
        // Open interval: never emit the endpoints themselves.
        let yaw = loop {
            let y = rng.random_range(y0..y1);
            if y > y0 {
                break y;
            }
        };
        UnitSpec {
            n_h_left,
            n_h_right,
            n_v,
            package_dims: [w, h, d],
            package_category: *[CategoryLabel::PkgKlt, CategoryLabel::PkgTray].choose(rng).unwrap(),
            pallet_category: *[CategoryLabel::PalletWood, CategoryLabel::PalletPlastic]
                .choose(rng)
                .unwrap(),
            pallet_dims: pallet,
            lid_occlusion_frac: *self.lid_choices.choose(rng).unwrap_or(&0.0),
            position,
            yaw: yaw.to_radians(),
        }
    }

    fn sides_visible(&self, scene: &Scene) -> bool {
        scene.truth.iter().zip(&scene.annotation.units).all(|(t, a)| {
            let unit_area = BBox::of_polygon(&a.polygon).area();
            [t.left_side, t.right_side].iter().all(|q| {
                crate::geometry::signed_area(q).abs() >= self.min_side_area_frac * unit_area
            })
        })
    }

    /// Draws a valid layout, retrying rejected ones.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<(Vec<UnitSpec>, CameraSpec), SynthError> {
        for _ in 0..self.max_attempts {
            let n = rng.random_range(1..=self.max_units.max(1));
            let cam_h = rng.random_range(self.camera_height_m[0]..=self.camera_height_m[1]);
            let spacing = 26.0_f64.to_radians();
            let mut units = Vec::with_capacity(n);
            let mut mean = Vector2::zeros();
            for k in 0..n {
                let bearing = (k as f64 - 0.5 * (n - 1) as f64) * spacing
                    + rng.random_range(-2.0_f64..=2.0).to_radians();
                let r = rng.random_range(self.distance_m[0]..=self.distance_m[1]);
                let pos = [r * bearing.sin(), r * bearing.cos()];
                mean += Vector2::new(pos[0], pos[1]);
                units.push(self.sample_unit(rng, pos));
            }
            mean /= n as f64;
            let cam = CameraSpec {
                position: [0.0, 0.0, cam_h],
                look_at: [mean.x, mean.y, 0.7],
                focal_px: self.focal_px,
                image_size: self.image_size,
            };
            match render_scene("probe", &units, &cam, 0) {
                Ok(scene) if self.sides_visible(&scene) => return Ok((units, cam)),
                Ok(_) => log::trace!("rejected sampled scene: side too small"),
                Err(e) => log::trace!("rejected sampled scene: {e}"),
            }
        }
        Err(SynthError::SamplingExhausted(self.max_attempts))
    }
}

/// Samples and renders one noise-free scene from `seed`.
pub fn random_scene(sampler: &SceneSampler, image_id: &str, seed: u64) -> Result<Scene, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (units, cam) = sampler.sample(&mut rng)?;
    render_scene(image_id, &units, &cam, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detections::{parse_annotations, parse_image_detections};

    fn camera() -> CameraSpec {
        CameraSpec {
            position: [0.0, 0.0, 2.2],
            look_at: [0.0, 4.0, 0.7],
            focal_px: 1500.0,
            image_size: [1600, 1200],
        }
    }

    fn unit(n: (u32, u32, u32)) -> UnitSpec {
        UnitSpec {
            n_h_left: n.0,
            n_h_right: n.1,
            n_v: n.2,
            package_dims: [0.3, 0.25, 0.2],
            package_category: CategoryLabel::PkgKlt,
            pallet_category: CategoryLabel::PalletWood,
            pallet_dims: default_pallet_dims(),
            lid_occlusion_frac: 0.0,
            position: [0.0, 4.0],
            yaw: 40f64.to_radians(),
        }
    }

    fn count(d: &ImageDetections, c: CategoryLabel) -> usize {
        d.records.iter().filter(|r| r.category == c).count()
    }

    #[test]
    fn single_package_unit() {
        let (d, a) = generate_scene(&[unit((1, 1, 1))], &camera(), 1).unwrap();
        assert_eq!(count(&d, CategoryLabel::TransportUnit), 1);
        assert_eq!(count(&d, CategoryLabel::PalletWood), 1);
        assert_eq!(count(&d, CategoryLabel::TuSide), 2);
        assert_eq!(count(&d, CategoryLabel::PkgKlt), 2);
        assert_eq!(a.units[0].counts.total(), 1);
        assert!(d.records.iter().all(|r| r.confidence == 1.0));
    }

    #[test]
    fn package_faces_per_side() {
        let (d, _) = generate_scene(&[unit((3, 4, 2))], &camera(), 1).unwrap();
        assert_eq!(count(&d, CategoryLabel::PkgKlt), 14);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_scene(&[unit((3, 2, 2))], &camera(), 9).unwrap();
        let b = generate_scene(&[unit((3, 2, 2))], &camera(), 9).unwrap();
        assert_eq!(a.0.to_json(), b.0.to_json());
        assert_eq!(a.1.to_json(), b.1.to_json());
    }

    #[test]
    fn documents_reparse() {
        let (d, a) = generate_scene(&[unit((2, 3, 3))], &camera(), 4).unwrap();
        assert_eq!(parse_image_detections(d.to_json().as_bytes()).unwrap(), d);
        assert_eq!(parse_annotations(a.to_json().as_bytes()).unwrap(), a);
    }

    #[test]
    fn left_face_is_left_in_the_image() {
        let s = render_scene("s", &[unit((2, 2, 1))], &camera(), 0).unwrap();
        let t = &s.truth[0];
        let mx = |q: &[Point2; 4]| q.iter().map(|p| p.x).sum::<f64>() / 4.0;
        assert!(mx(&t.left_side) < mx(&t.right_side));
        // Faces share their vertical edge.
        assert!(t.left_side[1].distance(t.right_side[0]) < 1e-9);
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        assert!(matches!(
            generate_scene(&[unit((5, 1, 1))], &camera(), 0),
            Err(SynthError::InvalidUnit { .. })
        ));
        let far_left = UnitSpec {
            position: [-30.0, 4.0],
            ..unit((1, 1, 1))
        };
        assert_eq!(
            generate_scene(&[far_left], &camera(), 0),
            Err(SynthError::Frustum { unit: 0 })
        );
        let twin = UnitSpec {
            position: [0.3, 4.2],
            ..unit((1, 1, 1))
        };
        assert_eq!(
            generate_scene(&[unit((1, 1, 1)), twin], &camera(), 0),
            Err(SynthError::GroundOverlap { a: 0, b: 1 })
        );
        let mut flat = unit((1, 1, 1));
        flat.yaw = 88f64.to_radians();
        assert!(generate_scene(&[flat], &camera(), 0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let (d, _) = generate_scene(&[unit((2, 2, 2))], &camera(), 3).unwrap();
        assert_eq!(perturb(&d, &NoiseSpec::none()), d);
    }

    #[test]
    fn full_dropout_keeps_only_units() {
        let (d, _) = generate_scene(&[unit((2, 2, 2))], &camera(), 3).unwrap();
        let noise = NoiseSpec {
            dropout_prob: 1.0,
            ..NoiseSpec::none()
        };
        let out = perturb(&d, &noise);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].category, CategoryLabel::TransportUnit);
    }

    #[test]
    fn perturbation_is_seeded() {
        let (d, _) = generate_scene(&[unit((2, 2, 2))], &camera(), 3).unwrap();
        let noise = NoiseSpec {
            vertex_jitter_px: 1.5,
            dropout_prob: 0.1,
            spurious_rate: 2.0,
            confidence_model: Some(ConfidenceModel { mean: 0.8, spread: 0.15 }),
            seed: 77,
        };
        let a = perturb(&d, &noise);
        assert_eq!(a, perturb(&d, &noise));
        assert_ne!(a, perturb(&d, &NoiseSpec { seed: 78, ..noise.clone() }));
        for r in &a.records {
            assert!((0.65..=0.95).contains(&r.confidence));
            assert!(r.bbox.x_min >= 0.0 && r.bbox.x_max <= 1600.0);
        }
        assert!(parse_image_detections(a.to_json().as_bytes()).is_ok());
    }

    #[test]
    fn corpus_scenes_are_independent_of_count() {
        let spec = SceneSpec {
            units: vec![unit((2, 2, 1))],
            camera: Some(camera()),
            noise: NoiseSpec {
                vertex_jitter_px: 0.5,
                ..NoiseSpec::none()
            },
            sampler: None,
        };
        let a = spec.generate(3, 11).unwrap();
        assert_eq!(a.detections.image.id, "scene_3");
        assert_eq!(a, spec.generate(3, 11).unwrap());
        assert_ne!(a.detections, spec.generate(4, 11).unwrap().detections);
        let random = SceneSpec {
            units: vec![],
            camera: None,
            noise: NoiseSpec::none(),
            sampler: None,
        };
        assert!(random.generate(0, 1).is_ok());
        assert!(SceneSpec { camera: None, ..spec }.generate(0, 1).is_err());
    }

    #[test]
    fn sampler_produces_valid_scenes() {
        let sampler = SceneSampler::default();
        for seed in 0..20 {
            let s = random_scene(&sampler, "r", seed).unwrap();
            assert!(!s.annotation.units.is_empty());
            assert_eq!(s, random_scene(&sampler, "r", seed).unwrap());
        }
    }
}
