//! Text formats: JSON for matrix sets, partitions and network instances; CSV
//! with a `#` prologue for similarity matrices, convergence logs and traces.
//!
//! Every writer records the tool version, the angle and the seed (when there
//! is one) so outputs can be traced back to the run that made them. Floats are
//! written in shortest round-trip form, so equal inputs give byte-identical
//! files.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::certify;
use crate::anneal::ConvergenceLog;
use crate::graph::{Cluster, GraphError, SimilarityGraph};
use crate::matrix::{c64, CMatrix, MatrixError, MatrixSet};
use crate::netsim::{AgentNetwork, SimTrace};
use crate::partition::{Partition, PartitionSource, SearchStats};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TOOL: &str = "phasealign";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid {field}: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn field(field: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::Field {
        field: field.into(),
        message: message.into(),
    }
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        FormatError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Real and imaginary parts as row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixDoc {
    pub fn from_matrix(a: &CMatrix) -> Self {
        let rows = |f: fn(&crate::matrix::C64) -> f64| {
            (0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| f(&a[(i, j)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_matrix(&self, name: &str) -> Result<CMatrix, FormatError> {
        let m = self.re.len();
        if self.im.len() != m {
            return Err(field(
                name,
                format!("re has {m} rows, im has {}", self.im.len()),
            ));
        }
        let n = self.re.first().map_or(0, Vec::len);
        for (i, (r, c)) in self.re.iter().zip(&self.im).enumerate() {
            if r.len() != n || c.len() != n {
                return Err(field(
                    name,
                    format!("row {i} is ragged: expected {n} entries"),
                ));
            }
        }
        Ok(CMatrix::from_fn(m, n, |i, j| {
            c64(self.re[i][j], self.im[i][j])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixSetDoc {
    #[serde(default)]
    version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    count: usize,
    rows: usize,
    cols: usize,
    matrices: Vec<MatrixDoc>,
}

/// Parses a matrix set. Order is preserved: positions are the indices used in
/// every other output.
pub fn parse_matrix_set(text: &str) -> Result<MatrixSet, FormatError> {
    let doc: MatrixSetDoc = serde_json::from_str(text)?;
    if doc.count != doc.matrices.len() {
        return Err(field(
            "count",
            format!(
                "declares {} matrices, found {}",
                doc.count,
                doc.matrices.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(doc.count);
    for (index, md) in doc.matrices.iter().enumerate() {
        let a = md.to_matrix(&format!("matrices[{index}]"))?;
        if a.shape() != (doc.rows, doc.cols) {
            return Err(MatrixError::DimensionMismatch {
                index,
                rows: a.nrows(),
                cols: a.ncols(),
                expected_rows: doc.rows,
                expected_cols: doc.cols,
            }
            .into());
        }
        out.push(a);
    }
    Ok(MatrixSet::new(out)?)
}

/// Writes a matrix set; `alpha` and `seed` are recorded when the set came out
/// of a run.
pub fn write_matrix_set(set: &MatrixSet, alpha: Option<f64>, seed: Option<u64>) -> String {
    let (rows, cols) = set.shape();
    let doc = MatrixSetDoc {
        version: Some(format!("{TOOL} {VERSION}")),
        alpha,
        seed,
        count: set.len(),
        rows,
        cols,
        matrices: set.iter().map(MatrixDoc::from_matrix).collect(),
    };
    to_json(&doc)
}

fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents always serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClusterDoc {
    members: Vec<usize>,
    k: Option<MatrixDoc>,
    max_abs_phase: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PartitionDoc {
    version: String,
    alpha: f64,
    seed: Option<u64>,
    source: PartitionSource,
    count: usize,
    stats: SearchStats,
    clusters: Vec<ClusterDoc>,
}

pub fn write_partition(p: &Partition, seed: Option<u64>) -> String {
    let doc = PartitionDoc {
        version: format!("{TOOL} {VERSION}"),
        alpha: p.alpha,
        seed,
        source: p.source,
        count: p.len(),
        stats: p.stats,
        clusters: p
            .clusters
            .iter()
            .map(|c| ClusterDoc {
                members: c.members.clone(),
                k: c.certificate
                    .as_ref()
                    .map(|cert| MatrixDoc::from_matrix(&cert.k)),
                max_abs_phase: c.certificate.as_ref().map(|cert| cert.max_abs_phase()),
            })
            .collect(),
    };
    to_json(&doc)
}

/// Parses a partition and re-verifies every stored `K` against `set`. Clusters
/// without a stored `K` keep no certificate.
pub fn parse_partition(
    text: &str,
    set: &MatrixSet,
) -> Result<(Partition, Option<u64>), FormatError> {
    let doc: PartitionDoc = serde_json::from_str(text)?;
    let mut clusters = Vec::with_capacity(doc.clusters.len());
    for (c, cd) in doc.clusters.iter().enumerate() {
        if let Some(&v) = cd.members.iter().find(|&&v| v >= set.len()) {
            return Err(field(
                format!("clusters[{c}].members"),
                format!("index {v} out of range"),
            ));
        }
        let certificate = match &cd.k {
            None => None,
            Some(kd) => {
                let k = kd.to_matrix(&format!("clusters[{c}].k"))?;
                let cert = certify(&set.subset(&cd.members), doc.alpha, &k).ok_or_else(|| {
                    field(format!("clusters[{c}].k"), "does not align the cluster")
                })?;
                Some(cert)
            }
        };
        clusters.push(Cluster::new(cd.members.clone(), certificate));
    }
    let mut p = Partition::new(clusters, doc.alpha, doc.source);
    p.stats = doc.stats;
    p.validate(set.len())
        .map_err(|e| field("clusters", e.to_string()))?;
    Ok((p, doc.seed))
}

/// `#` lines naming the tool version, the angle and the seed.
pub fn prologue(out: &mut String, alpha: Option<f64>, seed: Option<u64>) {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    let _ = writeln!(out, "# {TOOL} {VERSION}");
    let _ = writeln!(out, "# alpha={}", opt(alpha.map(|a| a.to_string())));
    let _ = writeln!(out, "# seed={}", opt(seed.map(|s| s.to_string())));
}

/// Reads `key=value` pairs from the leading `#` lines of a CSV document.
pub fn read_prologue(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            l.trim_start_matches('#')
                .trim()
                .split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

pub fn write_similarity_csv(g: &SimilarityGraph, seed: Option<u64>) -> String {
    let mut out = String::new();
    prologue(&mut out, Some(g.alpha()), seed);
    for row in g.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a similarity matrix; the angle comes from the prologue unless
/// `alpha` overrides it.
pub fn parse_similarity_csv(
    text: &str,
    alpha: Option<f64>,
) -> Result<SimilarityGraph, FormatError> {
    let from_prologue = read_prologue(text)
        .into_iter()
        .find(|(k, _)| k == "alpha")
        .and_then(|(_, v)| v.parse().ok());
    let alpha = alpha
        .or(from_prologue)
        .ok_or_else(|| field("alpha", "missing from prologue"))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, cell)| {
                cell.trim().parse::<f64>().map_err(|e| FormatError::Parse {
                    line: lineno + 1,
                    column: col + 1,
                    message: format!("{cell:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(SimilarityGraph::from_weights(rows, alpha)?)
}

pub fn write_log_csv(log: &ConvergenceLog, alpha: f64, seed: Option<u64>) -> String {
    let mut out = String::new();
    prologue(&mut out, Some(alpha), seed);
    out.push_str("iteration,best_count,T,t,event,path_len,bound,component_best\n");
    for r in &log.records {
        let bound = r.bound.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.best_count,
            r.temperature,
            r.branch_temperature,
            r.event,
            r.path_len,
            bound,
            r.component_best
        );
    }
    out
}

/// Time, the real part of every output agent-major, then the synchronization
/// error.
pub fn write_trace_csv(trace: &SimTrace, alpha: f64, seed: Option<u64>) -> String {
    let mut out = String::new();
    prologue(&mut out, Some(alpha), seed);
    let agents = trace
        .states
        .first()
        .map_or(0, |y| y.len() / trace.dim.max(1));
    let mut header = vec!["time".to_string()];
    for i in 1..=agents {
        for k in 1..=trace.dim {
            header.push(format!("y{i}_{k}"));
        }
    }
    header.push("sync_error".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for ((t, y), e) in trace.times.iter().zip(&trace.states).zip(&trace.sync_error) {
        let mut cells = vec![t.to_string()];
        cells.extend(y.iter().map(|z| z.re.to_string()));
        cells.push(e.to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One static controller per cluster, in partition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllersDoc {
    pub version: String,
    pub alpha: f64,
    pub seed: Option<u64>,
    pub gain: f64,
    pub clusters: Vec<Vec<usize>>,
    pub controllers: Vec<MatrixDoc>,
}

impl ControllersDoc {
    pub fn new(p: &Partition, controllers: &[CMatrix], gain: f64, seed: Option<u64>) -> Self {
        Self {
            version: format!("{TOOL} {VERSION}"),
            alpha: p.alpha,
            seed,
            gain,
            clusters: p.clusters.iter().map(|c| c.members.clone()).collect(),
            controllers: controllers.iter().map(MatrixDoc::from_matrix).collect(),
        }
    }
}

pub fn write_controllers(doc: &ControllersDoc) -> String {
    to_json(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub version: String,
    pub alpha: f64,
    pub phi_ess: f64,
    pub seed: Option<u64>,
    pub agents: Vec<MatrixDoc>,
    pub laplacian: MatrixDoc,
    pub assignment: Vec<usize>,
    pub controllers: Vec<MatrixDoc>,
    pub initial_outputs: Vec<f64>,
}

impl NetworkDoc {
    pub fn new(
        net: &AgentNetwork,
        alpha: f64,
        phi_ess: f64,
        seed: Option<u64>,
        x0: &[f64],
    ) -> Self {
        Self {
            version: format!("{TOOL} {VERSION}"),
            alpha,
            phi_ess,
            seed,
            agents: net.m.iter().map(MatrixDoc::from_matrix).collect(),
            laplacian: MatrixDoc::from_matrix(&net.l),
            assignment: net.assignment.clone(),
            controllers: net.controllers.iter().map(MatrixDoc::from_matrix).collect(),
            initial_outputs: x0.to_vec(),
        }
    }

    pub fn to_network(&self) -> Result<AgentNetwork, FormatError> {
        let named = |docs: &[MatrixDoc], name: &str| -> Result<Vec<CMatrix>, FormatError> {
            docs.iter()
                .enumerate()
                .map(|(i, d)| d.to_matrix(&format!("{name}[{i}]")))
                .collect()
        };
        let m = named(&self.agents, "agents")?;
        if m.is_empty() {
            return Err(field("agents", "no agents"));
        }
        let l = self.laplacian.to_matrix("laplacian")?;
        let controllers = named(&self.controllers, "controllers")?;
        AgentNetwork::new(m, l, self.assignment.clone(), controllers)
            .map_err(|e| field("network", e.to_string()))
    }
}

pub fn write_network(doc: &NetworkDoc) -> String {
    to_json(doc)
}

pub fn parse_network(text: &str) -> Result<NetworkDoc, FormatError> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::ScalarArcOracle;
    use crate::exact::{bnr_min_clustering, ExactConfig};
    use crate::graph::build_similarity_graph;
    use crate::matrix::cis;

    #[test]
    fn identity_set_parses() {
        let text = r#"{"count": 1, "rows": 2, "cols": 2,
            "matrices": [{"re": [[1, 0], [0, 1]], "im": [[0, 0], [0, 0]]}]}"#;
        let set = parse_matrix_set(text).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(0), &CMatrix::identity(2, 2));
    }

    #[test]
    fn mixed_sizes_are_rejected() {
        let text = r#"{"count": 2, "rows": 2, "cols": 2, "matrices": [
            {"re": [[1, 0], [0, 1]], "im": [[0, 0], [0, 0]]},
            {"re": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "im": [[0, 0, 0], [0, 0, 0], [0, 0, 0]]}]}"#;
        assert!(matches!(
            parse_matrix_set(text),
            Err(FormatError::Matrix(MatrixError::DimensionMismatch {
                index: 1,
                ..
            }))
        ));
        let ragged = r#"{"count": 1, "rows": 2, "cols": 2, "matrices": [{"re": [[1, 0], [0]], "im": [[0, 0], [0, 0]]}]}"#;
        assert!(matches!(
            parse_matrix_set(ragged),
            Err(FormatError::Field { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_matrix_set("{\n  \"count\": 1,\n  \"rows\": x\n}").unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn partition_round_trip() {
        let o = ScalarArcOracle::from_angles(&[0.0, 0.1, 0.5, 0.6]);
        let set = MatrixSet::new(
            [0.0, 0.1, 0.5, 0.6]
                .iter()
                .map(|&t| CMatrix::from_element(1, 1, cis(t)))
                .collect(),
        )
        .unwrap();
        let g = build_similarity_graph(&o, 0.06).unwrap();
        let p = bnr_min_clustering(&g, &o, &ExactConfig::default()).unwrap();
        let text = write_partition(&p, Some(3));
        let (q, seed) = parse_partition(&text, &set).unwrap();
        assert_eq!(seed, Some(3));
        assert_eq!(
            q.clusters.iter().map(|c| &c.members).collect::<Vec<_>>(),
            p.clusters.iter().map(|c| &c.members).collect::<Vec<_>>()
        );
        assert!(q.is_certified());

        let sim = write_similarity_csv(&g, None);
        let h = parse_similarity_csv(&sim, None).unwrap();
        assert_eq!(h, g);
    }
}
