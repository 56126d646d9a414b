//! Phase-alignment clustering for networks of complex-gain agents.
//!
//! Agents whose gain matrices can be pushed into a common phase sector by a
//! single right factor `K` may share a controller. This crate computes matrix
//! phases, decides simultaneous alignability with LMIs, clusters a set of
//! matrices into as few alignable groups as possible (exactly or by annealed
//! search), and simulates the resulting synchronized network.

pub mod align;
pub mod anneal;
pub mod exact;
pub mod formats;
pub mod graph;
pub mod matrix;
pub mod netsim;
pub mod partition;
pub mod phase;
pub mod pipeline;

pub use align::{
    AlignError, AlignmentCertificate, CountingOracle, DiversityResult, FeasibilityOracle,
    ScalarArcOracle, SdpOracle,
};
pub use anneal::{AnnealConfig, ConvergenceLog, LogEvent, SearchPath};
pub use exact::ExactConfig;
pub use graph::{Cluster, GraphError, SimilarityGraph};
pub use matrix::{CMatrix, MatrixError, MatrixSet, C64};
pub use netsim::{AgentNetwork, NetError, SimSettings, SimTrace};
pub use partition::{ClusterError, Partition, PartitionSource, SearchStats};
pub use phase::{PhaseError, PhaseSpectrum, SectorClass, SectorialFactorization};
