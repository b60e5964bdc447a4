//! chartreader — desk-scale chart derendering and comprehension.
//!
//! The pipeline, end to end:
//!
//! 1. **chartgen** – deterministic synthetic corpus: rasterized bar/line/pie
//!    charts with ground-truth component annotations, tables, QA pairs and
//!    blank-template summaries.
//! 2. **detector** – center/keypoint heatmaps from a small hourglass
//!    backbone, trained with focal + smooth-L1 losses, decoded with soft-NMS.
//! 3. **grouper** – multi-head attention affinities between detected centers
//!    and keypoints.
//! 4. **assembler** – attention-refined component positions, type
//!    classification, and geometric value decoding via axis calibration.
//! 5. **chart2x** – a miniature encoder-decoder that answers questions,
//!    linearizes tables and fills summary templates, emitting data-variable
//!    tokens that are resolved to decoded values afterwards.
//! 6. **metrics** – relaxed accuracy, table scoring and BLEU-4.
//!
//! Everything is seeded and deterministic; `autodiff` carries its own
//! finite-difference oracle for every registered op.

pub mod autodiff;
pub mod chartgen;
pub mod detector;
pub mod grouper;
pub mod assembler;
pub mod chart2x;
pub mod metrics;
pub mod pipeline;
pub mod cli;
