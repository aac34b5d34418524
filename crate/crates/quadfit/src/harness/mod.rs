//! Synthetic scenes with ground truth, tensor/image file formats, PCA,
//! and evaluation metrics.

pub mod fts;
pub mod metrics;
pub mod pca;
pub mod pngio;
pub mod rng;
pub mod synth;

pub use fts::{read_fts, write_fts, Tensor};
pub use metrics::{eval_iou, eval_keypoint_transfer, eval_pck_linear, KeypointSet, Recon};
pub use pca::pca_reduce;
pub use synth::{generate_views, synth_quadruped, SynthScene, SynthSpec, ViewData};
