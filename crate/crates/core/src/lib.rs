//! Goal-directed path planning for a wheelchair robot from RGB-D perception:
//! costmaps, classical planners, self-supervised path labels, plane-fit
//! losses, intermediate-goal navigation and evaluation metrics.

mod error;

pub mod costmap;
pub mod evaluation;
pub mod geometry;
pub mod labels;
pub mod navigation;
pub mod planeloss;
pub mod planners;
pub mod render;
pub mod scene;

pub use error::{Error, Result};
