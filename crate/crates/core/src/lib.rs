//! Lift-Splat-Shoot camera-to-BEV view transformation.
//!
//! The pipeline splits into an offline part that depends only on camera
//! geometry and a runtime part that depends on network outputs:
//!
//! ```text
//! offline:  FrustumSpec --create_frustum--> FrustumPoints
//!           + CameraRig --frustum_to_ego--> EgoPoints
//!           + VoxelGridSpec --voxelize--> VoxelIndexMap --build_plan--> PoolingPlan
//! runtime:  DepthScores x ImageFeatures x PoolingPlan --pool_*--> BevFeature
//! ```
//!
//! Four pooling kernels compute the same result with very different memory
//! behavior; see [`kernels`].

pub mod config;
pub mod digest;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod plan;
pub mod synth;
pub mod tensor;
pub mod verify;

pub use error::{CodecError, ConfigError, GeometryError, KernelError, PlanError};
pub use geometry::{
    create_frustum, frustum_to_ego, voxel_index_map, voxelize, CameraRig, CameraView, EgoPoints, FrustumPoints,
    FrustumSpec, VoxelGridSpec, VoxelIndexMap, INVALID_VOXEL,
};
pub use kernels::{
    estimate_working_set, pool_bevpool, pool_bevpoolv2, pool_cumsum, pool_oracle, KernelKind, ShapeSummary,
    WorkingSetModel,
};
pub use plan::{build_plan, deserialize_plan, serialize_plan, validate_plan, PoolingPlan, Violation};
pub use tensor::{BevFeature, DepthScores, ImageFeatures};
