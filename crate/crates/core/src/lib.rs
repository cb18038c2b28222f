//! Benchmark engine for open-set fruit detection experiments.
//!
//! The crate covers the evaluation side of a detection study end to end:
//!
//! - [`geometry`]: box arithmetic (IoU, GIoU, normalized L1).
//! - [`datamodel`]: the canonical dataset, COCO/Labelme/results file formats
//!   and per-category statistics.
//! - [`splits`]: seeded train/test, k-shot, zero-shot and leave-one-class-out
//!   partitions with digest-checked manifests.
//! - [`assignment`]: optimal bipartite matching and the set-prediction loss
//!   (L1 + GIoU + token-alignment BCE).
//! - [`evaluation`]: COCO-protocol mAP / AP50 / mAR, including
//!   referring-expression filtered scoring.
//! - [`reporting`]: markdown/CSV/JSON tables for statistics, metric grids
//!   and inference timing.
//! - [`cli`]: the `fruitbench` command-line front end.
//!
//! Runnable walkthroughs of each capability live in this crate's
//! `examples/` directory.

pub mod assignment;
pub mod cli;
pub mod datamodel;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod reporting;
pub mod splits;

pub use error::{Error, Result};
