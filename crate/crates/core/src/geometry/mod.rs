//! Rigid transforms, pinhole projection, depth buffers, spatial search and
//! normal estimation.

pub mod camera;
pub mod cloud;
pub mod depth;
pub mod kdtree;
pub mod normals;
pub mod pose;
pub mod raycast;

pub use camera::{optical_from_body, CameraIntrinsics, CameraView, Projection};
pub use cloud::{centroid, PointCloud, PointLabel};
pub use depth::{render_depth, splat_footprint, DepthImage, PixelRect};
pub use kdtree::{nearest_neighbor, KdTree};
pub use normals::{estimate_normals, DEFAULT_NORMAL_K};
pub use pose::{orthonormality_error, orthonormalize, Pose};
pub use raycast::{Aabb, Bvh, Hit, Ray, Triangle};
