//! Camera model, image ingestion, point clouds and synthetic scenes.

mod camera;
mod cloud;
mod image;
mod synth;

pub use camera::{load_camera, CameraModel, Extrinsics, WORKING_HEIGHT, WORKING_WIDTH};
pub use cloud::{
    backproject, filter_outliers, Frame, LabeledPoint, OutlierFilterOutput, PointCloud,
    DEFAULT_OUTLIER_K, DEFAULT_OUTLIER_STD_MULT,
};
pub use image::{
    downsample_depth, downsample_semantic, encode_depth_pgm, encode_gray8, encode_ppm,
    encode_semantic_pgm, load_depth, load_semantic, parse_depth_pgm, parse_gray,
    parse_semantic_pgm, DepthImage, RgbRef, SemanticClass, SemanticImage,
};
pub use synth::{generate_scene, random_scene, NoiseSpec, Obstacle, SceneRender, SceneSpec};
