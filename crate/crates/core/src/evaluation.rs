//! Scoring recognition results against annotations: IoU matching,
//! extraction precision/recall and the per-image recognition error `e_i`.

use crate::detections::{parse_annotations, AnnotatedUnit, Annotation, CategoryLabel};
use crate::geometry::{iou, rasterize_ring, Point2, Polygon};
use crate::pipeline::{ResultDocument, UnitResult, UnitStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no images to average")]
    Empty,
    #[error("{expected} true positives but {got} correctness flags")]
    CorrectnessLength { expected: usize, got: usize },
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error(
        "image ids differ: without results {missing_results:?}, without annotations {missing_annotations:?}"
    )]
    IdMismatch {
        missing_results: Vec<String>,
        missing_annotations: Vec<String>,
    },
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Also require the pallet category to match for a correct recognition.
    pub strict_pallet: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            strict_pallet: false,
        }
    }
}

/// True positive pairs `(gt, pred)`, unmatched predictions and unmatched
/// ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub tp: Vec<(String, String)>,
    pub fp: Vec<String>,
    #[serde(rename = "fn")]
    pub fn_: Vec<String>,
}

impl MatchOutcome {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.tp.len(), self.fp.len(), self.fn_.len())
    }
}

/// IoU of two polygons rasterized on a shared pixel grid.
pub fn polygon_iou(a: &Polygon, b: &Polygon) -> f64 {
    let (a_lo, a_hi) = a.bbox();
    let (b_lo, b_hi) = b.bbox();
    if a_hi.x <= b_lo.x || b_hi.x <= a_lo.x || a_hi.y <= b_lo.y || b_hi.y <= a_lo.y {
        return 0.0;
    }
    let origin = Point2::new(a_lo.x.min(b_lo.x).floor(), a_lo.y.min(b_lo.y).floor());
    let w = (a_hi.x.max(b_hi.x) - origin.x).ceil().max(1.0) as usize;
    let h = (a_hi.y.max(b_hi.y) - origin.y).ceil().max(1.0) as usize;
    let raster = |p: &Polygon| {
        let ring: Vec<Point2> = p
            .vertices()
            .iter()
            .map(|v| Point2::new(v.x - origin.x, v.y - origin.y))
            .collect();
        rasterize_ring(&ring, w, h).expect("grid is nonempty").raster
    };
    iou(&raster(a), &raster(b)).expect("same grid")
}

/// Greedy one-to-one matching on a precomputed IoU matrix (`iou[g][p]`).
/// Pairs at or above the threshold are taken in descending IoU order, ties
/// by gt index then prediction index.
pub fn match_by_iou(
    gt_ids: &[String],
    pred_ids: &[String],
    iou: &[Vec<f64>],
    iou_threshold: f64,
) -> MatchOutcome {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (g, row) in iou.iter().enumerate().take(gt_ids.len()) {
        for (p, &v) in row.iter().enumerate().take(pred_ids.len()) {
            if v >= iou_threshold {
                pairs.push((g, p, v));
            }
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut gt_used = vec![false; gt_ids.len()];
    let mut pred_used = vec![false; pred_ids.len()];
    let mut out = MatchOutcome::default();
    for (g, p, _) in pairs {
        if !gt_used[g] && !pred_used[p] {
            gt_used[g] = true;
            pred_used[p] = true;
            out.tp.push((gt_ids[g].clone(), pred_ids[p].clone()));
        }
    }
    out.fp = pred_ids
        .iter()
        .zip(&pred_used)
        .filter(|(_, &u)| !u)
        .map(|(id, _)| id.clone())
        .collect();
    out.fn_ = gt_ids
        .iter()
        .zip(&gt_used)
        .filter(|(_, &u)| !u)
        .map(|(id, _)| id.clone())
        .collect();
    out
}

/// Greedy IoU matching of ground-truth against predicted unit masks.
pub fn match_units(
    gt: &[(String, Polygon)],
    pred: &[(String, Polygon)],
    iou_threshold: f64,
) -> MatchOutcome {
    let matrix: Vec<Vec<f64>> = gt
        .iter()
        .map(|(_, g)| pred.iter().map(|(_, p)| polygon_iou(g, p)).collect())
        .collect();
    let ids = |v: &[(String, Polygon)]| v.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>();
    match_by_iou(&ids(gt), &ids(pred), &matrix, iou_threshold)
}

/// `1 - TP / (TP + FP + FN)`, or 0 when all three are zero.
pub fn error_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let all = tp + fp + fn_;
    if all == 0 {
        0.0
    } else {
        1.0 - tp as f64 / all as f64
    }
}

/// Recognition error of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageError {
    pub image_id: String,
    pub e_i: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Moves incorrectly recognized pairs from TP to FP and computes `e_i`.
/// `correct[k]` belongs to `outcome.tp[k]`.
pub fn image_error(
    image_id: &str,
    outcome: &MatchOutcome,
    correct: &[bool],
) -> Result<ImageError, EvalError> {
    if correct.len() != outcome.tp.len() {
        return Err(EvalError::CorrectnessLength {
            expected: outcome.tp.len(),
            got: correct.len(),
        });
    }
    let tp = correct.iter().filter(|&&c| c).count();
    let fp = outcome.fp.len() + (outcome.tp.len() - tp);
    let fn_ = outcome.fn_.len();
    Ok(ImageError {
        image_id: image_id.to_string(),
        e_i: error_from_counts(tp, fp, fn_),
        tp,
        fp,
        fn_,
    })
}

/// Unweighted mean of `e_i`.
pub fn mean_error(per_image: &[ImageError]) -> Result<f64, EvalError> {
    if per_image.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(per_image.iter().map(|e| e.e_i).sum::<f64>() / per_image.len() as f64)
}

/// Mean over a corpus assembled from subsets given as `(images, mean)`.
pub fn pooled_mean(subsets: &[(usize, f64)]) -> Result<f64, EvalError> {
    let n: usize = subsets.iter().map(|s| s.0).sum();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(subsets.iter().map(|&(k, m)| k as f64 * m).sum::<f64>() / n as f64)
}

/// Extraction precision and recall. An empty denominator yields 1 and sets
/// the matching flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

impl PrecisionRecall {
    pub fn from_totals(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |den: usize| {
            if den == 0 {
                (1.0, true)
            } else {
                (tp as f64 / den as f64, false)
            }
        };
        let (precision, precision_undefined) = ratio(tp + fp);
        let (recall, recall_undefined) = ratio(tp + fn_);
        Self {
            precision,
            recall,
            precision_undefined,
            recall_undefined,
        }
    }
}

pub fn precision_recall(outcomes: &[MatchOutcome]) -> PrecisionRecall {
    let (tp, fp, fn_) = outcomes.iter().map(MatchOutcome::counts).fold((0, 0, 0), |a, c| {
        (a.0 + c.0, a.1 + c.1, a.2 + c.2)
    });
    PrecisionRecall::from_totals(tp, fp, fn_)
}

/// Whether a result reproduces an annotated structure. Left and right counts
/// may be swapped.
pub fn structure_matches(gt: &AnnotatedUnit, res: &UnitResult, strict_pallet: bool) -> bool {
    if res.status != UnitStatus::Ok {
        return false;
    }
    let (Some(l), Some(r), Some(v)) = (res.n_h_left, res.n_h_right, res.n_v) else {
        return false;
    };
    let c = &gt.counts;
    let counts_ok = v == c.v && ((l, r) == (c.h_left, c.h_right) || (r, l) == (c.h_left, c.h_right));
    let package_ok = res.package_category == Some(gt.package_category);
    let pallet_ok = !strict_pallet || res.pallet_category == Some(gt.pallet_category);
    counts_ok && package_ok && pallet_ok
}

/// Everything measured on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEvaluation {
    /// Matching over every emitted unit, used for precision and recall.
    pub extraction: MatchOutcome,
    pub error: ImageError,
    pub pallet_mismatches: usize,
}

fn gt_id(k: usize) -> String {
    format!("gt{k}")
}

fn pred_id(k: usize, u: &UnitResult) -> String {
    u.unit_id.clone().unwrap_or_else(|| format!("pred{k}"))
}

/// Scores one image. Every emitted unit takes part in matching. A matched
/// unit counts as TP only if it was recognized and its structure is correct;
/// otherwise it is FP. An unmatched unit that failed in the pipeline is not
/// a result at all, so it adds nothing beyond its ground truth's FN.
pub fn evaluate_image(ann: &Annotation, res: &ResultDocument, cfg: &EvalConfig) -> ImageEvaluation {
    let gt: Vec<(String, Polygon)> = ann
        .units
        .iter()
        .enumerate()
        .map(|(k, u)| (gt_id(k), u.polygon.clone()))
        .collect();
    let mut by_pred = BTreeMap::new();
    let mut pred = Vec::new();
    let mut unmatchable = Vec::new();
    for (k, u) in res.units.iter().enumerate() {
        let mut id = pred_id(k, u);
        if by_pred.contains_key(&id) {
            id = format!("{id}#{k}");
        }
        match &u.polygon {
            Some(p) => pred.push((id.clone(), p.clone())),
            None => unmatchable.push(id.clone()),
        }
        by_pred.insert(id, u);
    }
    let mut extraction = match_units(&gt, &pred, cfg.iou_threshold);
    extraction.fp.extend(unmatchable);

    let mut pallet_mismatches = 0;
    let correct: Vec<bool> = extraction
        .tp
        .iter()
        .map(|(g, p)| {
            let gt_unit = &ann.units[g[2..].parse::<usize>().expect("own gt ids")];
            let unit = by_pred[p];
            let ok = structure_matches(gt_unit, unit, cfg.strict_pallet);
            if ok && unit.pallet_category != Some(gt_unit.pallet_category) {
                pallet_mismatches += 1;
            }
            ok
        })
        .collect();
    let scored = MatchOutcome {
        tp: extraction.tp.clone(),
        fp: extraction
            .fp
            .iter()
            .filter(|p| by_pred[p.as_str()].status == UnitStatus::Ok)
            .cloned()
            .collect(),
        fn_: extraction.fn_.clone(),
    };
    let error = image_error(&ann.image.id, &scored, &correct).expect("one flag per pair");
    ImageEvaluation {
        extraction,
        error,
        pallet_mismatches,
    }
}

/// Images and mean error of one subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub images: usize,
    pub mean_error: f64,
}

/// Dataset-level results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageError>,
    pub mean_error: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    /// Extraction totals `(tp, fp, fn)`.
    pub extraction_totals: (usize, usize, usize),
    /// Correct recognitions whose pallet category differs from the annotation.
    pub pallet_mismatches: usize,
    /// `klt`, `tray`, `mixed` (images with both or no packages) and `all`.
    pub subsets: BTreeMap<String, SubsetSummary>,
}

fn subset_label(ann: &Annotation) -> &'static str {
    let cats: BTreeSet<CategoryLabel> = ann.units.iter().map(|u| u.package_category).collect();
    match cats.iter().collect::<Vec<_>>().as_slice() {
        [CategoryLabel::PkgKlt] => "klt",
        [CategoryLabel::PkgTray] => "tray",
        _ => "mixed",
    }
}

/// Scores a paired corpus. Images are reported in id order.
pub fn evaluate(
    pairs: &[(Annotation, ResultDocument)],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let mut sorted: Vec<&(Annotation, ResultDocument)> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.0.image.id.cmp(&b.0.image.id));
    let evals: Vec<ImageEvaluation> = sorted
        .par_iter()
        .map(|(a, r)| evaluate_image(a, r, cfg))
        .collect();

    let per_image: Vec<ImageError> = evals.iter().map(|e| e.error.clone()).collect();
    let outcomes: Vec<MatchOutcome> = evals.iter().map(|e| e.extraction.clone()).collect();
    let pr = precision_recall(&outcomes);
    let totals = outcomes.iter().map(MatchOutcome::counts).fold((0, 0, 0), |a, c| {
        (a.0 + c.0, a.1 + c.1, a.2 + c.2)
    });

    let mut groups: BTreeMap<String, Vec<ImageError>> = BTreeMap::new();
    for ((ann, _), e) in sorted.iter().zip(&per_image) {
        groups.entry(subset_label(ann).to_string()).or_default().push(e.clone());
    }
    let mut subsets = BTreeMap::new();
    for (label, errors) in &groups {
        subsets.insert(
            label.clone(),
            SubsetSummary {
                images: errors.len(),
                mean_error: mean_error(errors)?,
            },
        );
    }
    let mean = mean_error(&per_image)?;
    subsets.insert(
        "all".to_string(),
        SubsetSummary {
            images: per_image.len(),
            mean_error: mean,
        },
    );
    Ok(EvalReport {
        mean_error: mean,
        precision: pr.precision,
        recall: pr.recall,
        precision_undefined: pr.precision_undefined,
        recall_undefined: pr.recall_undefined,
        extraction_totals: totals,
        pallet_mismatches: evals.iter().map(|e| e.pallet_mismatches).sum(),
        per_image,
        subsets,
    })
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, EvalError> {
    let read_err = |e: std::io::Error| EvalError::Read {
        path: dir.to_path_buf(),
        message: e.to_string(),
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(read_err)? {
        let path = entry.map_err(read_err)?.path();
        let matches = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix));
        if matches && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_file(path: &Path) -> Result<Vec<u8>, EvalError> {
    std::fs::read(path).map_err(|e| EvalError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads `*_ann.json` and `*_res.json` files and pairs them by image id.
pub fn load_dataset(
    annotations_dir: &Path,
    results_dir: &Path,
) -> Result<Vec<(Annotation, ResultDocument)>, EvalError> {
    let mut anns = BTreeMap::new();
    for path in files_with_suffix(annotations_dir, "_ann.json")? {
        let ann = parse_annotations(&read_file(&path)?).map_err(|e| EvalError::Read {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let id = ann.image.id.clone();
        if anns.insert(id.clone(), ann).is_some() {
            return Err(EvalError::DuplicateImage(id));
        }
    }
    let mut results = BTreeMap::new();
    for path in files_with_suffix(results_dir, "_res.json")? {
        let res = ResultDocument::parse(&read_file(&path)?).map_err(|e| EvalError::Read {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let id = res.image_id.clone();
        if results.insert(id.clone(), res).is_some() {
            return Err(EvalError::DuplicateImage(id));
        }
    }
    let missing_results: Vec<String> =
        anns.keys().filter(|k| !results.contains_key(*k)).cloned().collect();
    let missing_annotations: Vec<String> =
        results.keys().filter(|k| !anns.contains_key(*k)).cloned().collect();
    if !missing_results.is_empty() || !missing_annotations.is_empty() {
        return Err(EvalError::IdMismatch {
            missing_results,
            missing_annotations,
        });
    }
    Ok(anns
        .into_iter()
        .map(|(id, a)| {
            let r = results.remove(&id).expect("ids checked");
            (a, r)
        })
        .collect())
}

/// Loads and scores a directory pair.
pub fn evaluate_dataset(
    annotations_dir: &Path,
    results_dir: &Path,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    evaluate(&load_dataset(annotations_dir, results_dir)?, cfg)
}

/// Four decimals without trailing zeros, keeping at least one decimal.
pub fn format_metric(v: f64) -> String {
    let s = format!("{v:.4}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

/// Plain-text summary in the shape of the extraction and recognition tables.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let (tp, fp, fn_) = report.extraction_totals;
    let flag = |u: bool| if u { " (undefined)" } else { "" };
    out.push_str("Transport unit extraction\n");
    let _ = writeln!(out, "  {:<10} {:<10} {:>5} {:>5} {:>5}", "Precision", "Recall", "TP", "FP", "FN");
    let _ = writeln!(
        out,
        "  {:<10} {:<10} {:>5} {:>5} {:>5}",
        format_metric(report.precision) + flag(report.precision_undefined),
        format_metric(report.recall) + flag(report.recall_undefined),
        tp,
        fp,
        fn_
    );
    out.push_str("\nPackaging structure recognition\n");
    let _ = writeln!(out, "  {:<10} {:>7}  Mean error", "Subset", "Images");
    let name = |k: &str| match k {
        "klt" => "KLT",
        "tray" => "Tray",
        "mixed" => "Mixed",
        "all" => "All",
        other => other,
    }
    .to_string();
    let order = ["klt", "tray", "mixed", "all"];
    for key in order.iter().filter(|k| report.subsets.contains_key(**k)) {
        let s = &report.subsets[*key];
        let _ = writeln!(
            out,
            "  {:<10} {:>7}  {}",
            name(key),
            s.images,
            format_metric(s.mean_error)
        );
    }
    if report.pallet_mismatches > 0 {
        let _ = writeln!(out, "\nPallet category mismatches: {}", report.pallet_mismatches);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detections::{ImageInfo, UnitCounts};

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::rectangle(Point2::new(x0, y0), Point2::new(x1, y1)).unwrap()
    }

    fn ids(n: usize, p: &str) -> Vec<String> {
        (0..n).map(|k| format!("{p}{k}")).collect()
    }

    #[test]
    fn polygon_iou_of_half_overlap() {
        let a = rect(0., 0., 10., 10.);
        let b = rect(5., 0., 15., 10.);
        assert!((polygon_iou(&a, &b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(polygon_iou(&a, &a), 1.0);
        assert_eq!(polygon_iou(&a, &rect(20., 20., 30., 30.)), 0.0);
    }

    #[test]
    fn matching_examples() {
        let m = match_by_iou(&ids(1, "g"), &ids(1, "p"), &[vec![0.9]], 0.5);
        assert_eq!(m.counts(), (1, 0, 0));
        let m = match_by_iou(&ids(1, "g"), &ids(1, "p"), &[vec![0.3]], 0.5);
        assert_eq!(m.counts(), (0, 1, 1));
        let m = match_by_iou(
            &ids(2, "g"),
            &ids(3, "p"),
            &[vec![0.8, 0.0, 0.1], vec![0.0, 0.7, 0.0]],
            0.5,
        );
        assert_eq!(m.counts(), (2, 1, 0));
        assert_eq!(m.fp, vec!["p2".to_string()]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = match_by_iou(&ids(1, "g"), &ids(1, "p"), &[vec![0.5]], 0.5);
        assert_eq!(m.counts(), (1, 0, 0));
    }

    #[test]
    fn error_examples() {
        let one_each = MatchOutcome {
            tp: vec![("g".into(), "p".into())],
            fp: vec!["q".into()],
            fn_: vec![],
        };
        assert_eq!(image_error("i", &one_each, &[true]).unwrap().e_i, 0.5);
        let two = MatchOutcome {
            tp: vec![("a".into(), "x".into()), ("b".into(), "y".into())],
            ..Default::default()
        };
        assert_eq!(image_error("i", &two, &[true, true]).unwrap().e_i, 0.0);
        let wrong = MatchOutcome {
            tp: vec![("g".into(), "p".into())],
            ..Default::default()
        };
        let e = image_error("i", &wrong, &[false]).unwrap();
        assert_eq!((e.tp, e.fp, e.fn_, e.e_i), (0, 1, 0, 1.0));
        assert_eq!(image_error("i", &MatchOutcome::default(), &[]).unwrap().e_i, 0.0);
        assert!(image_error("i", &wrong, &[]).is_err());
    }

    #[test]
    fn means() {
        let e = |v: f64| ImageError {
            image_id: String::new(),
            e_i: v,
            tp: 0,
            fp: 0,
            fn_: 0,
        };
        assert_eq!(mean_error(&[e(0.0), e(0.5)]).unwrap(), 0.25);
        assert_eq!(mean_error(&[e(0.0), e(0.0)]).unwrap(), 0.0);
        assert_eq!(mean_error(&[]), Err(EvalError::Empty));
        assert!((pooled_mean(&[(112, 0.0938), (51, 0.2941)]).unwrap() - 0.1564).abs() < 1e-4);
    }

    #[test]
    fn precision_recall_conventions() {
        let pr = PrecisionRecall::from_totals(175, 1, 0);
        assert!((pr.precision - 0.99432).abs() < 1e-5);
        assert_eq!(pr.recall, 1.0);
        let pr = PrecisionRecall::from_totals(0, 0, 5);
        assert_eq!((pr.precision, pr.precision_undefined), (1.0, true));
        assert_eq!((pr.recall, pr.recall_undefined), (0.0, false));
    }

    #[test]
    fn metric_formatting() {
        assert_eq!(format_metric(175.0 / 176.0), "0.9943");
        assert_eq!(format_metric(1.0), "1.0");
        assert_eq!(format_metric(0.0), "0.0");
        assert_eq!(format_metric(0.25), "0.25");
    }

    fn gt_unit(poly: Polygon, counts: (u32, u32, u32)) -> AnnotatedUnit {
        AnnotatedUnit {
            polygon: poly,
            pallet_category: CategoryLabel::PalletWood,
            package_category: CategoryLabel::PkgKlt,
            counts: UnitCounts {
                h_left: counts.0,
                h_right: counts.1,
                v: counts.2,
            },
        }
    }

    fn ok_result(id: &str, poly: Polygon, counts: (u32, u32, u32)) -> UnitResult {
        UnitResult {
            status: UnitStatus::Ok,
            error_kind: None,
            n_h_left: Some(counts.0),
            n_h_right: Some(counts.1),
            n_v: Some(counts.2),
            total: Some(counts.0 as u64 * counts.1 as u64 * counts.2 as u64),
            package_category: Some(CategoryLabel::PkgKlt),
            pallet_category: Some(CategoryLabel::PalletWood),
            unit_id: Some(id.into()),
            polygon: Some(poly),
        }
    }

    fn error_result(id: &str, poly: Polygon) -> UnitResult {
        UnitResult {
            status: UnitStatus::Error,
            error_kind: Some("AmbiguousSides".into()),
            n_h_left: None,
            n_h_right: None,
            n_v: None,
            total: None,
            package_category: None,
            pallet_category: None,
            unit_id: Some(id.into()),
            polygon: Some(poly),
        }
    }

    fn image(units: Vec<AnnotatedUnit>, results: Vec<UnitResult>) -> (Annotation, ResultDocument) {
        let info = ImageInfo {
            id: "img".into(),
            width: 100,
            height: 100,
        };
        (
            Annotation { image: info, units },
            ResultDocument {
                image_id: "img".into(),
                units: results,
            },
        )
    }

    #[test]
    fn mirrored_counts_are_correct() {
        let (a, r) = image(
            vec![gt_unit(rect(0., 0., 40., 40.), (3, 2, 4))],
            vec![ok_result("u", rect(0., 0., 40., 40.), (2, 3, 4))],
        );
        let e = evaluate_image(&a, &r, &EvalConfig::default());
        assert_eq!(e.error.e_i, 0.0);
    }

    #[test]
    fn errored_units_are_fp_when_matched_and_ignored_otherwise() {
        let (a, r) = image(
            vec![
                gt_unit(rect(0., 0., 40., 40.), (1, 1, 1)),
                gt_unit(rect(50., 0., 90., 40.), (1, 1, 1)),
            ],
            vec![
                error_result("matched", rect(0., 0., 40., 40.)),
                error_result("stray", rect(0., 60., 20., 80.)),
            ],
        );
        let e = evaluate_image(&a, &r, &EvalConfig::default());
        assert_eq!(e.extraction.counts(), (1, 1, 1));
        assert_eq!((e.error.tp, e.error.fp, e.error.fn_), (0, 1, 1));
        assert_eq!(e.error.e_i, 1.0);
    }

    #[test]
    fn strict_pallet_flag() {
        let mut res = ok_result("u", rect(0., 0., 40., 40.), (1, 1, 1));
        res.pallet_category = Some(CategoryLabel::PalletPlastic);
        let (a, r) = image(vec![gt_unit(rect(0., 0., 40., 40.), (1, 1, 1))], vec![res]);
        let lenient = evaluate_image(&a, &r, &EvalConfig::default());
        assert_eq!((lenient.error.e_i, lenient.pallet_mismatches), (0.0, 1));
        let strict = EvalConfig {
            strict_pallet: true,
            ..EvalConfig::default()
        };
        assert_eq!(evaluate_image(&a, &r, &strict).error.e_i, 1.0);
    }

    #[test]
    fn empty_results_give_zero_recall() {
        let (a, mut r) = image(vec![gt_unit(rect(0., 0., 40., 40.), (1, 1, 1))], vec![]);
        r.units.clear();
        let report = evaluate(&[(a, r)], &EvalConfig::default()).unwrap();
        assert_eq!(report.recall, 0.0);
        assert!(report.precision_undefined);
        assert_eq!(report.mean_error, 1.0);
    }

    #[test]
    fn table_lists_subsets() {
        let (a, r) = image(
            vec![gt_unit(rect(0., 0., 40., 40.), (1, 1, 1))],
            vec![ok_result("u", rect(0., 0., 40., 40.), (1, 1, 1))],
        );
        let report = evaluate(&[(a, r)], &EvalConfig::default()).unwrap();
        let table = render_table(&report);
        assert!(table.contains("KLT"));
        assert!(table.contains("1.0"));
        assert!(!table.contains("Tray"));
    }
}
