//! Monocular depth-to-reconstruction core: metric scaling of disparity,
//! temporal depth refinement, direct photometric tracking, TSDF fusion and
//! trajectory/reconstruction metrics.

pub mod depth_scaling;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod parallel;
pub mod refine;
pub mod tracking;
