//! Evaluation metrics: FD, P-FD, MSE, SID, Var, PCC/rPCC, LVE, FDD.

pub mod diversity;
pub mod fd;
pub mod kmeans;
pub mod pcc;
pub mod report;
pub mod vertex;

pub use diversity::{sid_from_distribution, sid_from_labels, variation};
pub use fd::{frechet_distance, frechet_distance_stats, GaussianStats};
pub use kmeans::{kmeans_assign, kmeans_fit, ClusterModel};
pub use pcc::{pcc, pcc_mean, pcc_per_dim, rpcc};
pub use report::{evaluate, mse, paired_fd, Corpus, MetricConfig, MetricReport, SidClusters};
pub use vertex::{lip_vertex_error, upper_face_dynamics_deviation, VertexProxy};
