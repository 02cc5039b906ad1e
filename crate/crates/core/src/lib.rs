//! Boundary-aware evaluation and training for 3D point-cloud segmentation.
//!
//! - [`cloud`]: point-cloud container and text format.
//! - [`index`]: exact radius-neighborhood search.
//! - [`hierarchy`]: grid sub-sampling stages with pooled label distributions.
//! - [`metrics`]: boundary extraction, mIoU split by boundary/inner area, B-IoU.
//! - [`mining`]: boundary sets on sub-sampled stages.
//! - [`cbl`]: contrastive boundary loss with analytic gradients.
//! - [`net`]: a small continuous-convolution encoder-decoder and its trainer.
//! - [`synth`]: synthetic labeled scenes.

pub mod cbl;
pub mod cloud;
pub mod error;
pub mod gradcheck;
pub mod hierarchy;
pub mod index;
pub mod manifest;
pub mod metrics;
pub mod mining;
pub mod net;
pub mod synth;

pub use cbl::{cbl_backward, cbl_forward, total_loss, CblConfig, FeatureMatrix};
pub use cloud::{Point3, PointCloud};
pub use error::{Error, Result};
pub use hierarchy::{grid_subsample, grid_subsample_weighted, SamplingHierarchy};
pub use index::NeighborhoodIndex;
pub use metrics::{boundary_iou, extract_boundary, full_report, miou_on, BoundarySet, MetricsReport};
pub use mining::{mine_stage_boundaries, soft_vs_hard_divergence, MiningConfig, MiningVariant};
pub use synth::{generate, generate_split, Layout, SynthConfig};
