//! Synthetic depth dataset generation and category-level pose tooling.

pub mod asset;
pub mod cloud;
pub mod dataset;
pub mod estimator;
pub mod grasp;
pub mod instruction;
pub mod knn;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod ply;
pub mod primitives;
pub mod render;
pub mod se3;
pub mod template;
pub mod views;

pub use asset::{global_bbox, load_mesh, load_model, model_scale, ModelAsset, PartAsset};
pub use cloud::{Frame, PointCloud};
pub use mesh::{Aabb, TriangleMesh};
pub use render::{CameraIntrinsics, DepthImage, InstanceMask, Scene};
pub use se3::{Scale3, Se3Pose};
pub use template::{build_template, canonicalize, TemplateParams, TemplatePointCloud};
pub use views::{sample_viewpoints, ViewSamplingConfig, Viewpoint};
