//! Exact minimum clustering by branch-and-recurse, a brute-force reference
//! solver, and the cluster-swapping utility behind the optimality argument.

use std::collections::HashMap;

use crate::align::{CountingOracle, FeasibilityOracle};
use crate::graph::{
    connected_components, enumerate_maximal_clusters, mis_lower_bound, Cluster, NoGoods,
    SimilarityGraph,
};
use crate::partition::{ClusterError, Partition, PartitionSource, SearchStats};

pub const DEFAULT_NODE_CAP: u64 = 10_000_000;
pub const BRUTE_FORCE_MAX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactConfig {
    /// Maximum number of branch nodes before the search gives up.
    pub node_cap: u64,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

struct Search<'a, O: FeasibilityOracle + ?Sized> {
    g: &'a SimilarityGraph,
    oracle: &'a O,
    nogoods: NoGoods,
    nodes: u64,
    cap: u64,
}

impl<O: FeasibilityOracle + ?Sized> Search<'_, O> {
    fn recurse(
        &mut self,
        current: &mut Vec<Cluster>,
        uncovered: &[usize],
        best: &mut Option<Vec<Cluster>>,
    ) -> Result<(), ClusterError> {
        self.nodes += 1;
        if self.nodes > self.cap {
            return Err(ClusterError::BudgetExceeded { limit: self.cap });
        }
        if uncovered.is_empty() {
            if best.as_ref().is_none_or(|b| current.len() < b.len()) {
                *best = Some(current.clone());
            }
            return Ok(());
        }
        if let Some(b) = best {
            if current.len() + mis_lower_bound(self.g, uncovered) >= b.len() {
                return Ok(());
            }
        }
        let root = self
            .g
            .min_degree_vertex(uncovered)
            .expect("uncovered is nonempty");
        for cluster in
            enumerate_maximal_clusters(self.g, root, uncovered, self.oracle, &self.nogoods)?
        {
            let rest: Vec<usize> = uncovered
                .iter()
                .copied()
                .filter(|&u| !cluster.contains(u))
                .collect();
            current.push(cluster);
            self.recurse(current, &rest, best)?;
            current.pop();
        }
        Ok(())
    }
}

/// Minimum-size partition of the graph's vertices into clusters the oracle
/// certifies at the graph's angle.
///
/// Components are solved independently. Within a component the search roots
/// at a minimum-degree uncovered vertex and branches over every maximal cluster
/// through it, pruning with the independent-set lower bound. Final clusters are
/// recertified rather than taken from the cache.
pub fn bnr_min_clustering<O: FeasibilityOracle + ?Sized>(
    g: &SimilarityGraph,
    oracle: &O,
    config: &ExactConfig,
) -> Result<Partition, ClusterError> {
    let counting = CountingOracle::new(oracle);
    let mut search = Search {
        g,
        oracle: &counting,
        nogoods: NoGoods::new(),
        nodes: 0,
        cap: config.node_cap,
    };
    let mut clusters = Vec::new();
    for component in connected_components(g) {
        let mut best = None;
        search.recurse(&mut Vec::new(), &component, &mut best)?;
        clusters.extend(best.expect("every completed search yields a partition"));
    }
    let nodes = search.nodes;
    let mut partition =
        Partition::new(clusters, g.alpha(), PartitionSource::BnR).certify(&counting)?;
    partition.stats = SearchStats {
        nodes_expanded: nodes,
        oracle_calls: counting.queries() as u64,
    };
    Ok(partition)
}

/// Exhaustive search over set partitions in nondecreasing block count. Only
/// meant as a reference for small instances.
pub fn brute_force_min_partition<O: FeasibilityOracle + ?Sized>(
    oracle: &O,
    alpha: f64,
) -> Result<Partition, ClusterError> {
    let n = oracle.len();
    if n > BRUTE_FORCE_MAX {
        return Err(ClusterError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX,
        });
    }
    let counting = CountingOracle::new(oracle);
    let mut memo: HashMap<u32, bool> = HashMap::new();
    let mut feasible = |mask: u32| -> Result<bool, ClusterError> {
        if let Some(&hit) = memo.get(&mask) {
            return Ok(hit);
        }
        let members: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let ok = counting.check(&members, alpha)?.is_some();
        memo.insert(mask, ok);
        Ok(ok)
    };

    // Restricted growth strings with at most `p` blocks. A block that turns
    // infeasible stays infeasible under extension, so prune immediately.
    fn dfs(
        v: usize,
        n: usize,
        p: usize,
        blocks: &mut Vec<u32>,
        nodes: &mut u64,
        feasible: &mut dyn FnMut(u32) -> Result<bool, ClusterError>,
    ) -> Result<bool, ClusterError> {
        *nodes += 1;
        if v == n {
            return Ok(true);
        }
        for b in 0..blocks.len() {
            blocks[b] |= 1 << v;
            if feasible(blocks[b])? && dfs(v + 1, n, p, blocks, nodes, feasible)? {
                return Ok(true);
            }
            blocks[b] &= !(1 << v);
        }
        if blocks.len() < p {
            blocks.push(1 << v);
            if feasible(1 << v)? && dfs(v + 1, n, p, blocks, nodes, feasible)? {
                return Ok(true);
            }
            blocks.pop();
        }
        Ok(false)
    }

    let mut nodes = 0;
    for p in 1..=n.max(1) {
        let mut blocks = Vec::new();
        if n == 0 || dfs(0, n, p, &mut blocks, &mut nodes, &mut feasible)? {
            let clusters = blocks
                .iter()
                .map(|&mask| Cluster::new((0..n).filter(|&i| mask & (1 << i) != 0).collect(), None))
                .collect();
            let mut partition =
                Partition::new(clusters, alpha, PartitionSource::BruteForce).certify(&counting)?;
            partition.stats = SearchStats {
                nodes_expanded: nodes,
                oracle_calls: counting.queries() as u64,
            };
            return Ok(partition);
        }
    }
    // Some singleton is not alignable on its own.
    let bad = (0..n)
        .find(|&i| !memo.get(&(1 << i)).copied().unwrap_or(true))
        .unwrap_or(0);
    Err(ClusterError::Uncertifiable(vec![bad]))
}

/// Replaces the clusters `x` of `c` by the clusters `y`, which must cover at
/// least the vertices of `x` and number no more than `x`. Vertices of `y` that
/// lay outside `x` are removed from the remaining clusters; those shrink but
/// stay alignable, and their certificates are restricted accordingly.
pub fn swap_partition<O: FeasibilityOracle + ?Sized>(
    c: &Partition,
    x: &[Vec<usize>],
    y: &[Vec<usize>],
    oracle: &O,
) -> Result<Partition, ClusterError> {
    let canon = |s: &Vec<usize>| {
        let mut s = s.clone();
        s.sort_unstable();
        s.dedup();
        s
    };
    let x: Vec<Vec<usize>> = x.iter().map(canon).collect();
    let y: Vec<Vec<usize>> = y.iter().map(canon).collect();
    if y.len() > x.len() {
        return Err(ClusterError::InvalidSwap(format!(
            "{} replacement clusters for {} removed",
            y.len(),
            x.len()
        )));
    }
    let mut removed = vec![false; c.clusters.len()];
    for xi in &x {
        let pos = c
            .clusters
            .iter()
            .position(|cl| &cl.members == xi)
            .ok_or_else(|| {
                ClusterError::InvalidSwap(format!("{xi:?} is not a cluster of the partition"))
            })?;
        if std::mem::replace(&mut removed[pos], true) {
            return Err(ClusterError::InvalidSwap(format!("{xi:?} listed twice")));
        }
    }
    let mut q: Vec<usize> = Vec::new();
    for yi in &y {
        if yi.is_empty() {
            return Err(ClusterError::InvalidSwap(
                "empty replacement cluster".into(),
            ));
        }
        if yi.iter().any(|v| q.contains(v)) {
            return Err(ClusterError::InvalidSwap(
                "replacement clusters overlap".into(),
            ));
        }
        q.extend(yi);
    }
    if let Some(v) = x.iter().flatten().find(|v| !q.contains(v)) {
        return Err(ClusterError::InvalidSwap(format!(
            "vertex {v} of the removed clusters is not covered"
        )));
    }

    let mut out = Vec::with_capacity(c.clusters.len());
    for yi in &y {
        match oracle.check(yi, c.alpha)? {
            Some(cert) => out.push(Cluster::new(yi.clone(), Some(cert))),
            None => {
                return Err(ClusterError::InvalidSwap(format!(
                    "replacement {yi:?} is not alignable"
                )))
            }
        }
    }
    for (cl, _) in c.clusters.iter().zip(&removed).filter(|(_, &r)| !r) {
        let positions: Vec<usize> = (0..cl.len())
            .filter(|&p| !q.contains(&cl.members[p]))
            .collect();
        if positions.is_empty() {
            continue;
        }
        let members = positions.iter().map(|&p| cl.members[p]).collect();
        let certificate = cl
            .certificate
            .as_ref()
            .map(|cert| cert.restrict(&positions));
        out.push(Cluster {
            members,
            certificate,
        });
    }
    let mut partition = Partition::new(out, c.alpha, c.source);
    partition.stats = c.stats;
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::ScalarArcOracle;
    use crate::graph::build_similarity_graph;

    fn members(p: &Partition) -> Vec<Vec<usize>> {
        p.clusters.iter().map(|c| c.members.clone()).collect()
    }

    #[test]
    fn four_angle_example() {
        let o = ScalarArcOracle::from_angles(&[0.0, 0.1, 0.5, 0.6]);
        let g = build_similarity_graph(&o, 0.06).unwrap();
        let p = bnr_min_clustering(&g, &o, &ExactConfig::default()).unwrap();
        assert_eq!(members(&p), vec![vec![0, 1], vec![2, 3]]);
        assert!(p.is_certified());
        p.validate(4).unwrap();
        assert_eq!(brute_force_min_partition(&o, 0.06).unwrap().len(), 2);
    }

    #[test]
    fn edgeless_and_complete() {
        let o = ScalarArcOracle::from_angles(&[0.0, 1.0, 2.0, 3.0]);
        let g = build_similarity_graph(&o, 0.1).unwrap();
        assert_eq!(
            bnr_min_clustering(&g, &o, &ExactConfig::default())
                .unwrap()
                .len(),
            4
        );
        let o = ScalarArcOracle::from_angles(&[0.0, 0.01, 0.02, 0.03, 0.04]);
        let g = build_similarity_graph(&o, 0.1).unwrap();
        let p = bnr_min_clustering(&g, &o, &ExactConfig::default()).unwrap();
        assert_eq!(members(&p), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn brute_force_small_cases() {
        let o = ScalarArcOracle::from_angles(&[0.3]);
        assert_eq!(
            members(&brute_force_min_partition(&o, 0.1).unwrap()),
            vec![vec![0]]
        );
        let o = ScalarArcOracle::from_angles(&[0.0, 2.0]);
        assert_eq!(
            members(&brute_force_min_partition(&o, 0.1).unwrap()),
            vec![vec![0], vec![1]]
        );
        let o = ScalarArcOracle::from_angles(&[0.0; 13]);
        assert!(matches!(
            brute_force_min_partition(&o, 0.1),
            Err(ClusterError::TooLarge { n: 13, .. })
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let o = ScalarArcOracle::from_angles(&[0.0, 0.2, 0.4, 0.6, 0.8]);
        let g = build_similarity_graph(&o, 0.11).unwrap();
        let err = bnr_min_clustering(&g, &o, &ExactConfig { node_cap: 2 }).unwrap_err();
        assert_eq!(err, ClusterError::BudgetExceeded { limit: 2 });
    }

    #[test]
    fn swap_examples() {
        let o = ScalarArcOracle::from_angles(&[0.0, 0.05, 1.0]);
        let c = Partition::new(
            (0..3).map(Cluster::singleton).collect(),
            0.1,
            PartitionSource::Singletons,
        );
        let same = swap_partition(&c, &[vec![0]], &[vec![0]], &o).unwrap();
        assert_eq!(members(&same), members(&c));
        let merged = swap_partition(&c, &[vec![0], vec![1]], &[vec![0, 1]], &o).unwrap();
        assert_eq!(members(&merged), vec![vec![0, 1], vec![2]]);

        assert!(matches!(
            swap_partition(&c, &[vec![0]], &[vec![0], vec![1]], &o),
            Err(ClusterError::InvalidSwap(_))
        ));
        assert!(matches!(
            swap_partition(&c, &[vec![0, 1]], &[vec![0, 1]], &o),
            Err(ClusterError::InvalidSwap(_))
        ));
        assert!(matches!(
            swap_partition(&c, &[vec![0], vec![2]], &[vec![0, 2]], &o),
            Err(ClusterError::InvalidSwap(_))
        ));
        assert!(matches!(
            swap_partition(&c, &[vec![0]], &[vec![1]], &o),
            Err(ClusterError::InvalidSwap(_))
        ));
    }

    #[test]
    fn swap_shrinks_outside_clusters() {
        let o = ScalarArcOracle::from_angles(&[0.0, 0.05, 0.1, 0.15]);
        let c = Partition::new(
            vec![
                Cluster::new(vec![0], None),
                Cluster::new(vec![1, 2, 3], None),
            ],
            0.1,
            PartitionSource::BnR,
        )
        .certify(&o)
        .unwrap();
        let out = swap_partition(&c, &[vec![0]], &[vec![0, 1]], &o).unwrap();
        assert_eq!(members(&out), vec![vec![0, 1], vec![2, 3]]);
        out.validate(4).unwrap();
        assert_eq!(
            out.clusters[1]
                .certificate
                .as_ref()
                .unwrap()
                .achieved_phases
                .len(),
            2
        );
    }
}
