use packstruct::detections::FilterConfig;
use packstruct::evaluation::EvalConfig;
use packstruct::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Flat run configuration. Field names match the `--config` JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub raster_scale: Option<u32>,
    pub min_confidence_tu: f64,
    pub min_confidence_intra: f64,
    pub min_size_frac: f64,
    pub suppression_iou: f64,
    pub containment_frac: f64,
    pub min_side_area_frac: f64,
    pub iou_threshold: f64,
    pub strict_pallet: bool,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let e = EvalConfig::default();
        Self {
            delta1: p.delta1,
            delta2: p.delta2,
            raster_scale: p.raster_scale,
            min_confidence_tu: p.filter.min_confidence_tu,
            min_confidence_intra: p.filter.min_confidence_intra,
            min_size_frac: p.filter.min_size_frac,
            suppression_iou: p.filter.suppression_iou,
            containment_frac: p.filter.containment_frac,
            min_side_area_frac: p.filter.min_side_area_frac,
            iou_threshold: e.iou_threshold,
            strict_pallet: e.strict_pallet,
            out: PathBuf::from("."),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            delta1: self.delta1,
            delta2: self.delta2,
            raster_scale: self.raster_scale,
            filter: FilterConfig {
                min_confidence_tu: self.min_confidence_tu,
                min_confidence_intra: self.min_confidence_intra,
                min_size_frac: self.min_size_frac,
                suppression_iou: self.suppression_iou,
                containment_frac: self.containment_frac,
                min_side_area_frac: self.min_side_area_frac,
            },
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            iou_threshold: self.iou_threshold,
            strict_pallet: self.strict_pallet,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.pipeline().validate()?;
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(format!("iou_threshold must lie in (0, 1], got {}", self.iou_threshold));
        }
        Ok(())
    }
}
