//! Similarity graph over matrix indices and the cluster enumeration built on it.
//!
//! An edge `{i, j}` exists when the pair is alignable at the graph's angle; its
//! weight is `pi/2 - div({A_i, A_j})`. Simultaneous alignability is downward
//! closed, so every alignable set is a clique of this graph. The converse fails,
//! which is why enumeration confirms candidate cliques with the oracle.

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::FRAC_PI_2;
use std::sync::Mutex;

use rayon::prelude::*;
use thiserror::Error;

use crate::align::{AlignError, AlignmentCertificate, FeasibilityOracle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("invalid similarity weights: {0}")]
    InvalidWeights(String),
    #[error("vertex {0} cannot be aligned even on its own")]
    Uncoverable(usize),
}

impl GraphError {
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, GraphError::Align(e) if e.is_solver_failure())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    weights: Vec<f64>,
    alpha: f64,
}

impl SimilarityGraph {
    /// Validates symmetry, nonnegativity, zero diagonal and the `[0, pi/2]` range.
    pub fn from_weights(rows: Vec<Vec<f64>>, alpha: f64) -> Result<Self, GraphError> {
        let n = rows.len();
        let mut weights = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::InvalidWeights(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            weights.extend_from_slice(row);
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(GraphError::InvalidWeights(format!(
                    "diagonal entry {i} is nonzero"
                )));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !w.is_finite() || !(0.0..=FRAC_PI_2 + 1e-12).contains(&w) {
                    return Err(GraphError::InvalidWeights(format!(
                        "entry ({i},{j}) = {w} outside [0, pi/2]"
                    )));
                }
                if w != weights[j * n + i] {
                    return Err(GraphError::InvalidWeights(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(Self { n, weights, alpha })
    }

    /// Graph with the given unit-weight edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], alpha: f64) -> Self {
        let mut weights = vec![0.0; n * n];
        for &(i, j) in edges {
            weights[i * n + j] = 1.0;
            weights[j * n + i] = 1.0;
        }
        Self { n, weights, alpha }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        i != j && self.weight(i, j) > 0.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights
            .chunks(self.n.max(1))
            .take(self.n)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn vertices(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    /// Positive-weight degree of `v` counting only vertices in `within`.
    pub fn degree_within(&self, v: usize, within: &[usize]) -> usize {
        within.iter().filter(|&&u| self.adjacent(v, u)).count()
    }

    /// Uncovered vertex of minimum degree in the uncovered subgraph, ties to the
    /// smallest index.
    pub fn min_degree_vertex(&self, uncovered: &[usize]) -> Option<usize> {
        uncovered
            .iter()
            .copied()
            .min_by_key(|&v| (self.degree_within(v, uncovered), v))
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|i| (i + 1..self.n).filter(|&j| self.adjacent(i, j)).count())
            .sum()
    }
}

/// Set of member indices plus the alignment certificate, when one has been
/// attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub certificate: Option<AlignmentCertificate>,
}

impl Cluster {
    pub fn new(mut members: Vec<usize>, certificate: Option<AlignmentCertificate>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self {
            members,
            certificate,
        }
    }

    pub fn singleton(v: usize) -> Self {
        Self {
            members: vec![v],
            certificate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

/// Pairwise graph at `alpha`: each feasible pair is weighted by its diversity.
/// Pairs are evaluated in parallel.
pub fn build_similarity_graph<O: FeasibilityOracle + ?Sized>(
    oracle: &O,
    alpha: f64,
) -> Result<SimilarityGraph, GraphError> {
    let n = oracle.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let weighted: Vec<(usize, usize, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<_, AlignError> {
            if oracle.check(&[i, j], alpha)?.is_none() {
                return Ok((i, j, 0.0));
            }
            let div = oracle.diversity(&[i, j])?.value;
            Ok((i, j, (FRAC_PI_2 - div).clamp(0.0, FRAC_PI_2)))
        })
        .collect::<Result<_, _>>()?;
    let mut weights = vec![0.0; n * n];
    for (i, j, w) in weighted {
        weights[i * n + j] = w;
        weights[j * n + i] = w;
    }
    Ok(SimilarityGraph { n, weights, alpha })
}

/// Components over positive-weight edges, ordered by smallest member.
pub fn connected_components(g: &SimilarityGraph) -> Vec<Vec<usize>> {
    components_within(g, &g.vertices())
}

/// Components of the subgraph induced by `within`.
pub fn components_within(g: &SimilarityGraph, within: &[usize]) -> Vec<Vec<usize>> {
    let mut remaining: BTreeSet<usize> = within.iter().copied().collect();
    let mut out = Vec::new();
    while let Some(&start) = remaining.iter().next() {
        remaining.remove(&start);
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            let next: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&u| g.adjacent(v, u))
                .collect();
            for u in next {
                remaining.remove(&u);
                comp.push(u);
                stack.push(u);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Sets already known to be infeasible at the graph's angle. Any superset of a
/// no-good is infeasible too.
#[derive(Debug, Default)]
pub struct NoGoods {
    sets: Mutex<Vec<Vec<usize>>>,
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.any(|y| y == x))
}

impl NoGoods {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn covers(&self, set: &[usize]) -> bool {
        self.sets
            .lock()
            .expect("no-good lock")
            .iter()
            .any(|ng| is_subset(ng, set))
    }

    pub fn insert(&self, set: Vec<usize>) {
        let mut sets = self.sets.lock().expect("no-good lock");
        if !sets.iter().any(|ng| is_subset(ng, &set)) {
            sets.retain(|ng| !is_subset(&set, ng));
            sets.push(set);
        }
    }

    pub fn len(&self) -> usize {
        self.sets.lock().expect("no-good lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bron-Kerbosch with pivoting on the subgraph induced by `p`.
fn maximal_cliques(g: &SimilarityGraph, p: Vec<usize>) -> Vec<Vec<usize>> {
    fn recurse(
        g: &SimilarityGraph,
        r: &mut Vec<usize>,
        mut p: Vec<usize>,
        mut x: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if p.is_empty() {
            if x.is_empty() {
                let mut c = r.clone();
                c.sort_unstable();
                out.push(c);
            }
            return;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .copied()
            .max_by_key(|&u| {
                (
                    p.iter().filter(|&&w| g.adjacent(u, w)).count(),
                    std::cmp::Reverse(u),
                )
            })
            .expect("p is nonempty");
        let branch: Vec<usize> = p
            .iter()
            .copied()
            .filter(|&v| !g.adjacent(pivot, v))
            .collect();
        for v in branch {
            r.push(v);
            let np = p.iter().copied().filter(|&u| g.adjacent(v, u)).collect();
            let nx = x.iter().copied().filter(|&u| g.adjacent(v, u)).collect();
            recurse(g, r, np, nx, out);
            r.pop();
            p.retain(|&u| u != v);
            x.push(v);
        }
    }
    let mut out = Vec::new();
    recurse(g, &mut Vec::new(), p, Vec::new(), &mut out);
    out.sort();
    out
}

/// All inclusion-maximal sets `C` with `root` in `C`, `C` inside `uncovered`,
/// that the oracle certifies at the graph's angle.
///
/// Candidates are the maximal cliques through `root`; a clique that fails the
/// oracle is searched top-down, level by level, for its largest certified
/// subsets. Results are sorted lexicographically.
pub fn enumerate_maximal_clusters<O: FeasibilityOracle + ?Sized>(
    g: &SimilarityGraph,
    root: usize,
    uncovered: &[usize],
    oracle: &O,
    nogoods: &NoGoods,
) -> Result<Vec<Cluster>, GraphError> {
    debug_assert!(uncovered.contains(&root));
    let alpha = g.alpha();
    let neighbors: Vec<usize> = uncovered
        .iter()
        .copied()
        .filter(|&u| g.adjacent(root, u))
        .collect();
    let mut found: Vec<Cluster> = Vec::new();
    let mut visited: HashSet<Vec<usize>> = HashSet::new();

    for clique in maximal_cliques(g, neighbors) {
        let mut start = clique;
        start.push(root);
        start.sort_unstable();
        if !visited.insert(start.clone()) {
            continue;
        }
        let mut frontier = vec![start];
        while !frontier.is_empty() {
            frontier.sort();
            let mut next = Vec::new();
            for set in frontier {
                if found.iter().any(|c| is_subset(&set, &c.members)) {
                    continue;
                }
                let cert = if nogoods.covers(&set) {
                    None
                } else {
                    oracle.check(&set, alpha)?
                };
                match cert {
                    Some(cert) => found.push(Cluster::new(set, Some(cert))),
                    None => {
                        if set.len() == 1 {
                            return Err(GraphError::Uncoverable(root));
                        }
                        for &u in set.iter().filter(|&&u| u != root) {
                            let child: Vec<usize> =
                                set.iter().copied().filter(|&w| w != u).collect();
                            if visited.insert(child.clone()) {
                                next.push(child);
                            }
                        }
                        nogoods.insert(set);
                    }
                }
            }
            frontier = next;
        }
    }

    let mut maximal: Vec<Cluster> = found
        .iter()
        .filter(|c| {
            !found
                .iter()
                .any(|d| d.len() > c.len() && is_subset(&c.members, &d.members))
        })
        .cloned()
        .collect();
    maximal.sort_by(|a, b| a.members.cmp(&b.members));
    maximal.dedup_by(|a, b| a.members == b.members);
    Ok(maximal)
}

/// Size of an independent set of the subgraph induced by `uncovered`, found by
/// reducing-peeling: take degree-0 vertices, take degree-1 vertices and drop
/// their neighbor, otherwise peel a maximum-degree vertex. Never exceeds the
/// independence number, so it bounds the cluster count from below.
pub fn mis_lower_bound(g: &SimilarityGraph, uncovered: &[usize]) -> usize {
    independent_set(g, uncovered).len()
}

pub fn independent_set(g: &SimilarityGraph, uncovered: &[usize]) -> Vec<usize> {
    let mut alive: Vec<usize> = uncovered.to_vec();
    alive.sort_unstable();
    let mut chosen = Vec::new();
    while !alive.is_empty() {
        let degrees: Vec<usize> = alive.iter().map(|&v| g.degree_within(v, &alive)).collect();
        let pick = |d: usize| {
            alive
                .iter()
                .zip(&degrees)
                .find(|(_, &dd)| dd == d)
                .map(|(&v, _)| v)
        };
        if let Some(v) = pick(0) {
            chosen.push(v);
            alive.retain(|&u| u != v);
        } else if let Some(v) = pick(1) {
            chosen.push(v);
            alive.retain(|&u| u != v && !g.adjacent(v, u));
        } else {
            let dmax = *degrees.iter().max().expect("alive is nonempty");
            let v = pick(dmax).expect("some vertex has the max degree");
            alive.retain(|&u| u != v);
        }
    }
    chosen.sort_unstable();
    chosen
}
