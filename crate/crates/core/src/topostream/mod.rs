//! Topological residual stream: KNN spatial graph, two-layer GCN with mean
//! pooling and a linear residual head, and the coordinate-shuffle texture loss.

mod gcn;
mod graph;

pub use gcn::{
    gcn_backward, gcn_forward, node_scores, shuffled_forward, texture_hinge, texture_loss, DropoutMasks,
    GcnCache, GcnOutput, GcnParams, TextureLoss,
};
pub use graph::{build_knn_graph, SpatialGraph};

pub const DEFAULT_K_KNN: usize = 8;
pub const DEFAULT_MARGIN: f64 = 0.3;
