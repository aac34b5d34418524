//! Deformable articulated quadruped model engine.
//!
//! The crate couples a semantic bank of base shapes (key/value memory with
//! cosine-similarity queries), a heuristic quadruped skeleton with linear
//! blend skinning, a z-buffered rasterizer with a differentiable soft
//! silhouette, reconstruction/adversarial losses, and a staged
//! analysis-by-synthesis fitting loop — all differentiated by the crate's own
//! reverse-mode tape and verified against synthetic scenes with known ground
//! truth.

pub mod autodiff;
pub mod bank;
pub mod fit;
pub mod geometry;
pub mod harness;
pub mod math;
pub mod objective;
pub mod render;
pub mod selftest;
pub mod skeleton;
