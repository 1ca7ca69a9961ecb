//! Cluster MDS: a low-dimensional embedding built by running MDS inside
//! clusters and stitching the pieces together through a few anchor points.

pub mod anchors;
pub mod data;
pub mod datagen;
pub mod error;
pub mod io;
pub mod kernel;
pub mod kmedoids;
pub mod mds;
pub mod pipeline;
mod seed;
pub mod transforms;

pub use data::{
    euclidean, euclidean_distances, validate_distance_matrix, ClmdsResult, Clustering, DistanceMatrix, FeatureSet,
    HierarchySpec, LevelResult, Point2,
};
pub use error::{ClmdsError, Result};
pub use kmedoids::{kmedoids_best, InitStrategy, KmedoidsConfig};
pub use mds::{mds_embed, MdsConfig, WeightSpec};
pub use pipeline::{clmds_embed, run, ClmdsConfig, Input, Metric, Sparsify};
pub use transforms::{Transform2D, TransformKind};
