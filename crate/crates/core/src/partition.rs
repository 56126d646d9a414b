use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{AlignError, FeasibilityOracle};
use crate::graph::{Cluster, GraphError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("search budget of {limit} nodes exceeded")]
    BudgetExceeded { limit: u64 },
    #[error("brute force supports at most {max} matrices, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid swap: {0}")]
    InvalidSwap(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("cluster {0:?} could not be certified")]
    Uncertifiable(Vec<usize>),
    #[error("invalid annealing config: {0}")]
    InvalidConfig(String),
    #[error("backtrack requested on an empty path")]
    EmptyPath,
}

impl ClusterError {
    pub fn is_solver_failure(&self) -> bool {
        match self {
            ClusterError::Align(e) => e.is_solver_failure(),
            ClusterError::Graph(e) => e.is_solver_failure(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionSource {
    BnR,
    HBnB,
    BruteForce,
    Singletons,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub oracle_calls: u64,
}

/// Disjoint clusters covering `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub clusters: Vec<Cluster>,
    pub alpha: f64,
    pub source: PartitionSource,
    pub stats: SearchStats,
}

impl Partition {
    pub fn new(mut clusters: Vec<Cluster>, alpha: f64, source: PartitionSource) -> Self {
        clusters.sort_by(|a, b| a.members.cmp(&b.members));
        Self {
            clusters,
            alpha,
            source,
            stats: SearchStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Cluster index of each vertex.
    pub fn assignment(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (c, cluster) in self.clusters.iter().enumerate() {
            for &v in &cluster.members {
                if v < n {
                    out[v] = Some(c);
                }
            }
        }
        out
    }

    /// Checks that clusters are nonempty, pairwise disjoint and cover exactly
    /// `0..n`.
    pub fn validate(&self, n: usize) -> Result<(), ClusterError> {
        let mut seen = vec![false; n];
        for cluster in &self.clusters {
            if cluster.members.is_empty() {
                return Err(ClusterError::InvalidPartition("empty cluster".into()));
            }
            for &v in &cluster.members {
                if v >= n {
                    return Err(ClusterError::InvalidPartition(format!(
                        "vertex {v} out of range"
                    )));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(ClusterError::InvalidPartition(format!(
                        "vertex {v} covered twice"
                    )));
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(ClusterError::InvalidPartition(format!(
                "vertex {v} not covered"
            )));
        }
        Ok(())
    }

    pub fn is_certified(&self) -> bool {
        self.clusters.iter().all(|c| c.certificate.is_some())
    }

    /// Replaces every certificate by one freshly derived from the oracle at the
    /// partition's angle.
    pub fn certify<O: FeasibilityOracle + ?Sized>(
        mut self,
        oracle: &O,
    ) -> Result<Self, ClusterError> {
        for cluster in &mut self.clusters {
            match oracle.recertify(&cluster.members, self.alpha)? {
                Some(cert) => cluster.certificate = Some(cert),
                None => return Err(ClusterError::Uncertifiable(cluster.members.clone())),
            }
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_overlap_and_gaps() {
        let p = Partition::new(
            vec![
                Cluster::new(vec![0, 1], None),
                Cluster::new(vec![1, 2], None),
            ],
            0.1,
            PartitionSource::BnR,
        );
        assert!(matches!(
            p.validate(3),
            Err(ClusterError::InvalidPartition(_))
        ));
        let p = Partition::new(
            vec![Cluster::new(vec![0, 2], None)],
            0.1,
            PartitionSource::BnR,
        );
        assert!(p.validate(3).is_err());
        let p = Partition::new(
            vec![Cluster::new(vec![2, 0], None), Cluster::singleton(1)],
            0.1,
            PartitionSource::BnR,
        );
        p.validate(3).unwrap();
        assert_eq!(p.assignment(3), vec![Some(0), Some(1), Some(0)]);
    }
}
