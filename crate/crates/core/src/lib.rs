//! Packaging structure recognition for palletized transport units.
//!
//! Given instance-segmentation masks for transport units, pallets, unit
//! sides and package faces, `packstruct` estimates for each unit the number
//! of package columns on its two visible sides and the number of layers.
//!
//! - [`detections`]: input and annotation documents, filtering and grouping
//!   into per-unit hypotheses.
//! - [`geometry`]: rasterization, boundary simplification, tetragon fitting
//!   and homographies.
//! - [`pipeline`]: per-unit recognition and result documents.
//! - [`synthgen`]: synthetic scenes with exact ground truth.
//! - [`evaluation`]: IoU matching, recognition error and extraction
//!   precision/recall.
//!
//! ```
//! use packstruct::pipeline::{recognize_image, PipelineConfig};
//! use packstruct::synthgen::{random_scene, SceneSampler};
//!
//! let scene = random_scene(&SceneSampler::default(), "example", 1).unwrap();
//! let rec = recognize_image(&scene.detections, &PipelineConfig::default());
//! let s = &rec.units[0].result.as_ref().unwrap().structure;
//! assert_eq!(s.total, scene.annotation.units[0].counts.total());
//! ```
//!
//! The guide in `book/` walks through each stage; its examples run as
//! doc-tests of this crate.

pub mod detections;
pub mod evaluation;
pub mod geometry;
pub mod pipeline;
pub mod synthgen;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/tetragon.md")]
    mod tetragon {}
    #[doc = include_str!("../../../book/src/counting.md")]
    mod counting {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/recognition.md")]
    mod recognition {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
