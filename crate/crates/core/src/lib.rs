//! Building blocks for a dense-CSP YOLO-style detector with CBAM attention in the
//! neck and shifted-window attention in the prediction heads, together with the
//! box losses, detection metrics and data handling needed to evaluate it.

pub mod attention;
pub mod blocks;
pub mod data;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod params;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{BBox, Detection};
pub use tensor::Tensor;
