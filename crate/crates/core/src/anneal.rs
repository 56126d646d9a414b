//! Annealed heuristic branch-and-bound.
//!
//! Two temperatures drive the search: the branch temperature `t` sharpens the
//! softmax over candidate clusters as a descent deepens, and the global
//! temperature `T` sets how far a backtrack may jump. `T` cools on every
//! completed or pruned path; the run ends once it drops below `e`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::align::{CountingOracle, FeasibilityOracle};
use crate::graph::{
    connected_components, enumerate_maximal_clusters, mis_lower_bound, Cluster, NoGoods,
    SimilarityGraph,
};
use crate::partition::{ClusterError, Partition, PartitionSource, SearchStats};

/// Stand-in for `1/x` when `x` is zero in the branching potential.
pub const DEGENERATE_RECIPROCAL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealConfig {
    pub t0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub e: f64,
    pub seed: u64,
    pub node_budget: Option<u64>,
    /// Score candidates by inverse diversity instead of diversity.
    pub invert_diversity_term: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            t0: 100.0,
            beta: 0.9,
            gamma: 0.9,
            e: 1e-5,
            seed: 0,
            node_budget: None,
            invert_diversity_term: false,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |msg: String| Err(ClusterError::InvalidConfig(msg));
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return bad(format!("T0 must be positive, got {}", self.t0));
        }
        if !(self.e > 0.0 && self.e < self.t0) {
            return bad(format!("e must lie in (0, T0), got {}", self.e));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.node_budget == Some(0) {
            return bad("node_budget must be positive".into());
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Keys: `T0`, `beta`, `gamma`, `e`,
    /// `seed`, `node_budget`, `invert_diversity`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ClusterError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ClusterError> {
            value
                .parse()
                .map_err(|_| ClusterError::InvalidConfig(format!("cannot parse {key}={value}")))
        }
        match key {
            "T0" | "t0" => self.t0 = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "e" => self.e = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "node_budget" => self.node_budget = Some(num(key, value)?),
            "invert_diversity" => self.invert_diversity_term = num(key, value)?,
            _ => return Err(ClusterError::InvalidConfig(format!("unknown key {key}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over `self`; blank lines and `#` comments are
    /// skipped.
    pub fn merge_key_values(mut self, text: &str) -> Result<Self, ClusterError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ClusterError::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogEvent {
    Improve,
    Prune,
    Complete,
    Backtrack,
}

impl fmt::Display for LogEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogEvent::Improve => "improve",
            LogEvent::Prune => "prune",
            LogEvent::Complete => "complete",
            LogEvent::Backtrack => "backtrack",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub iteration: u64,
    /// Total count over all components, with unsolved components at their
    /// current best.
    pub best_count: usize,
    pub temperature: f64,
    pub branch_temperature: f64,
    pub event: LogEvent,
    pub path_len: usize,
    /// Independent-set bound on the uncovered remainder, for prune events.
    pub bound: Option<usize>,
    /// Best count within the component being searched.
    pub component_best: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceLog {
    pub records: Vec<LogRecord>,
}

impl ConvergenceLog {
    pub fn best_counts(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.best_count)
    }

    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].best_count <= w[0].best_count)
    }
}

/// Partial solution: chosen clusters in order, the vertices they leave
/// uncovered, and the signatures of every abandoned path.
#[derive(Debug, Clone, Default)]
pub struct SearchPath {
    pub steps: Vec<(usize, Cluster)>,
    pub uncovered: Vec<usize>,
    pub visited_signatures: HashSet<Vec<Vec<usize>>>,
}

impl SearchPath {
    pub fn new(vertices: &[usize]) -> Self {
        let mut uncovered = vertices.to_vec();
        uncovered.sort_unstable();
        Self {
            steps: Vec::new(),
            uncovered,
            visited_signatures: HashSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Ordered member lists of the chosen clusters.
    pub fn signature(&self) -> Vec<Vec<usize>> {
        self.steps.iter().map(|(_, c)| c.members.clone()).collect()
    }

    /// Signature the path would have after appending `cluster`.
    pub fn extended_signature(&self, cluster: &Cluster) -> Vec<Vec<usize>> {
        let mut sig = self.signature();
        sig.push(cluster.members.clone());
        sig
    }

    pub fn is_visited(&self, cluster: &Cluster) -> bool {
        self.visited_signatures
            .contains(&self.extended_signature(cluster))
    }

    pub fn push(&mut self, root: usize, cluster: Cluster) {
        self.uncovered.retain(|&u| !cluster.contains(u));
        self.steps.push((root, cluster));
    }

    pub fn mark_visited(&mut self) {
        let sig = self.signature();
        self.visited_signatures.insert(sig);
    }

    /// Drops the last `d` steps and returns their vertices to `uncovered`.
    pub fn truncate_by(&mut self, d: usize) {
        for (_, cluster) in self.steps.drain(self.steps.len().saturating_sub(d)..) {
            self.uncovered.extend(cluster.members);
        }
        self.uncovered.sort_unstable();
    }

    pub fn clusters(&self) -> Vec<Cluster> {
        self.steps.iter().map(|(_, c)| c.clone()).collect()
    }
}

/// Branching potential from precomputed diversities and remainder bounds.
pub fn potential_from_terms(
    diversities: &[f64],
    bounds: &[usize],
    invert_diversity: bool,
) -> Vec<f64> {
    let n = diversities.len();
    let recip = |x: f64| {
        if x > 0.0 {
            1.0 / x
        } else {
            DEGENERATE_RECIPROCAL
        }
    };
    let div_terms: Vec<f64> = if invert_diversity {
        diversities.iter().map(|&d| recip(d)).collect()
    } else {
        diversities.to_vec()
    };
    let div_sum: f64 = div_terms.iter().sum();
    let bound_terms: Vec<f64> = bounds.iter().map(|&b| recip(b as f64)).collect();
    let bound_sum: f64 = bound_terms.iter().sum();
    (0..n)
        .map(|i| {
            let first = if div_sum > 0.0 {
                div_terms[i] / div_sum
            } else {
                1.0 / n as f64
            };
            first + bound_terms[i] / bound_sum
        })
        .collect()
}

/// Potential of each candidate cluster at the current path: its share of the
/// total diversity plus its share of the inverse independent-set bound left
/// after taking it.
pub fn potential<O: FeasibilityOracle + ?Sized>(
    g: &SimilarityGraph,
    path: &SearchPath,
    candidates: &[Cluster],
    oracle: &O,
    invert_diversity: bool,
) -> Result<Vec<f64>, ClusterError> {
    let mut divs = Vec::with_capacity(candidates.len());
    let mut bounds = Vec::with_capacity(candidates.len());
    for c in candidates {
        divs.push(if c.len() == 1 {
            0.0
        } else {
            oracle.diversity(&c.members)?.value
        });
        let rest: Vec<usize> = path
            .uncovered
            .iter()
            .copied()
            .filter(|&u| !c.contains(u))
            .collect();
        bounds.push(mis_lower_bound(g, &rest));
    }
    Ok(potential_from_terms(&divs, &bounds, invert_diversity))
}

/// Samples an index with probability proportional to `exp(p_i / t)`.
pub fn choose_branch<R: Rng + ?Sized>(potentials: &[f64], t: f64, rng: &mut R) -> usize {
    assert!(!potentials.is_empty(), "no branches to choose from");
    let pmax = potentials.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = potentials.iter().map(|&p| ((p - pmax) / t).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding left `u` past the end; fall back to the heaviest weight.
    weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Depth in `1..=len` from a geometric law with success probability
/// `1 / (1 + temperature / t0)`, truncated to `len`.
pub fn backtrack_depth<R: Rng + ?Sized>(
    len: usize,
    temperature: f64,
    t0: f64,
    rng: &mut R,
) -> usize {
    let q = 1.0 / (1.0 + temperature / t0);
    let weights: Vec<f64> = (0..len).map(|k| q * (1.0 - q).powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k + 1;
        }
        u -= w;
    }
    len
}

/// Marks the current path as visited, then reverts a random number of steps.
pub fn backtrack<R: Rng + ?Sized>(
    path: &mut SearchPath,
    temperature: f64,
    t0: f64,
    rng: &mut R,
) -> Result<usize, ClusterError> {
    if path.is_empty() {
        return Err(ClusterError::EmptyPath);
    }
    path.mark_visited();
    let d = backtrack_depth(path.len(), temperature, t0, rng);
    path.truncate_by(d);
    Ok(d)
}

/// One singleton cluster per vertex, without certificates.
pub fn singleton_partition(g: &SimilarityGraph) -> Partition {
    Partition::new(
        g.vertices().into_iter().map(Cluster::singleton).collect(),
        g.alpha(),
        PartitionSource::Singletons,
    )
}

struct Run<'a, O: FeasibilityOracle + ?Sized> {
    g: &'a SimilarityGraph,
    oracle: &'a O,
    config: &'a AnnealConfig,
    rng: ChaCha8Rng,
    nogoods: NoGoods,
    log: ConvergenceLog,
    iteration: u64,
    nodes: u64,
}

impl<O: FeasibilityOracle + ?Sized> Run<'_, O> {
    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        event: LogEvent,
        others: usize,
        best: usize,
        temps: (f64, f64),
        path_len: usize,
        bound: Option<usize>,
    ) {
        self.log.records.push(LogRecord {
            iteration: self.iteration,
            best_count: others + best,
            temperature: temps.0,
            branch_temperature: temps.1,
            event,
            path_len,
            bound,
            component_best: best,
        });
    }

    /// Searches one component. `others` is the count contributed by every
    /// other component at the time of the call, used only for logging.
    fn component(
        &mut self,
        vertices: &[usize],
        others: usize,
    ) -> Result<Vec<Cluster>, ClusterError> {
        let cfg = *self.config;
        let mut best: Vec<Cluster> = vertices.iter().map(|&v| Cluster::singleton(v)).collect();
        let mut path = SearchPath::new(vertices);
        let (mut big_t, mut t) = (cfg.t0, cfg.t0);

        while big_t >= cfg.e {
            self.iteration += 1;
            if path.uncovered.is_empty() {
                let event = if path.len() < best.len() {
                    best = path.clusters();
                    LogEvent::Improve
                } else {
                    LogEvent::Complete
                };
                self.record(event, others, best.len(), (big_t, t), path.len(), None);
                big_t *= cfg.beta;
                t = big_t;
                backtrack(&mut path, big_t, cfg.t0, &mut self.rng)?;
                continue;
            }

            let bound = mis_lower_bound(self.g, &path.uncovered);
            if path.len() + bound >= best.len() {
                self.record(
                    LogEvent::Prune,
                    others,
                    best.len(),
                    (big_t, t),
                    path.len(),
                    Some(bound),
                );
                if path.is_empty() {
                    // The bound proves the current best optimal.
                    break;
                }
                big_t *= cfg.beta;
                t = big_t;
                backtrack(&mut path, big_t, cfg.t0, &mut self.rng)?;
                continue;
            }

            self.nodes += 1;
            if let Some(limit) = cfg.node_budget {
                if self.nodes > limit {
                    return Err(ClusterError::BudgetExceeded { limit });
                }
            }
            let root = self
                .g
                .min_degree_vertex(&path.uncovered)
                .expect("uncovered is nonempty");
            let candidates: Vec<Cluster> = enumerate_maximal_clusters(
                self.g,
                root,
                &path.uncovered,
                self.oracle,
                &self.nogoods,
            )?
            .into_iter()
            .filter(|c| !path.is_visited(c))
            .collect();
            if candidates.is_empty() {
                self.record(
                    LogEvent::Backtrack,
                    others,
                    best.len(),
                    (big_t, t),
                    path.len(),
                    None,
                );
                if path.is_empty() {
                    // Every branch below the root has been explored.
                    break;
                }
                big_t *= cfg.beta;
                t = big_t;
                backtrack(&mut path, big_t, cfg.t0, &mut self.rng)?;
                continue;
            }
            let p = potential(
                self.g,
                &path,
                &candidates,
                self.oracle,
                cfg.invert_diversity_term,
            )?;
            let pick = choose_branch(&p, t, &mut self.rng);
            path.push(
                root,
                candidates.into_iter().nth(pick).expect("index in range"),
            );
            t *= cfg.gamma;
        }
        Ok(best)
    }
}

/// Heuristic minimum clustering. Never returns more clusters than vertices;
/// the result is certified at the graph's angle.
pub fn hbnb_min_clustering<O: FeasibilityOracle + ?Sized>(
    g: &SimilarityGraph,
    oracle: &O,
    config: &AnnealConfig,
) -> Result<(Partition, ConvergenceLog), ClusterError> {
    config.validate()?;
    let counting = CountingOracle::new(oracle);
    let mut run = Run {
        g,
        oracle: &counting,
        config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        nogoods: NoGoods::new(),
        log: ConvergenceLog::default(),
        iteration: 0,
        nodes: 0,
    };
    let components = connected_components(g);
    let mut done = 0;
    let mut pending: usize = components.iter().map(Vec::len).sum();
    let mut clusters = Vec::new();
    for component in &components {
        pending -= component.len();
        let best = run.component(component, done + pending)?;
        done += best.len();
        clusters.extend(best);
    }
    let (nodes, log) = (run.nodes, run.log);
    let mut partition =
        Partition::new(clusters, g.alpha(), PartitionSource::HBnB).certify(&counting)?;
    partition.stats = SearchStats {
        nodes_expanded: nodes,
        oracle_calls: counting.queries() as u64,
    };
    Ok((partition, log))
}

/// Independent runs over `seeds` in parallel; returns the smallest partition,
/// ties going to the earliest seed, together with that seed and its log.
pub fn hbnb_multistart<O: FeasibilityOracle + ?Sized>(
    g: &SimilarityGraph,
    oracle: &O,
    config: &AnnealConfig,
    seeds: &[u64],
) -> Result<(u64, Partition, ConvergenceLog), ClusterError> {
    let runs: Vec<(u64, Partition, ConvergenceLog)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = AnnealConfig { seed, ..*config };
            hbnb_min_clustering(g, oracle, &cfg).map(|(p, l)| (seed, p, l))
        })
        .collect::<Result<_, _>>()?;
    runs.into_iter()
        .min_by_key(|(_, p, _)| p.len())
        .ok_or_else(|| ClusterError::InvalidConfig("no seeds given".into()))
}
