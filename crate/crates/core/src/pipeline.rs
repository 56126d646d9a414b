//! End-to-end run: random network, essential phase, clustering at a margin of
//! it, controller synthesis and closed-loop simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::align::{FeasibilityOracle, SdpOracle};
use crate::anneal::{hbnb_min_clustering, AnnealConfig, ConvergenceLog};
use crate::exact::{bnr_min_clustering, ExactConfig};
use crate::graph::{build_similarity_graph, SimilarityGraph};
use crate::matrix::{CMatrix, MatrixError, MatrixSet};
use crate::netsim::{
    random_agent_matrices, random_strongly_connected_laplacian, simulate_closed_loop,
    synthesize_controllers, AgentBand, AgentNetwork, NetError, SimSettings, SimTrace,
};
use crate::partition::{ClusterError, Partition};
use crate::phase::essential_phase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid pipeline settings: {0}")]
    InvalidSettings(String),
}

pub const DEFAULT_CONTROLLER_GAIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMethod {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub agents: usize,
    pub seed: u64,
    /// Clustering angle as a fraction of the essential phase.
    pub margin: f64,
    pub density: f64,
    pub band: AgentBand,
    pub method: ClusterMethod,
    pub anneal: AnnealConfig,
    pub exact: ExactConfig,
    pub sim: SimSettings,
    /// Weakest agent gain each controller is scaled to.
    pub controller_gain: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            agents: 10,
            seed: 0,
            margin: 0.95,
            density: 0.3,
            band: AgentBand::default(),
            method: ClusterMethod::Heuristic,
            anneal: AnnealConfig::default(),
            exact: ExactConfig::default(),
            sim: SimSettings::default(),
            controller_gain: DEFAULT_CONTROLLER_GAIN,
        }
    }
}

/// Random agents, Laplacian and initial outputs, all drawn from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub set: MatrixSet,
    pub laplacian: CMatrix,
    pub x0: Vec<f64>,
}

pub fn generate_instance(
    agents: usize,
    density: f64,
    band: &AgentBand,
    seed: u64,
) -> Result<Instance, PipelineError> {
    if agents < 2 {
        return Err(PipelineError::InvalidSettings(
            "at least two agents are needed".into(),
        ));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(PipelineError::InvalidSettings(format!(
            "density {density} outside (0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = MatrixSet::new(random_agent_matrices(agents, band, &mut rng))?;
    let laplacian = random_strongly_connected_laplacian(agents, density, &mut rng);
    let x0 = (0..2 * agents)
        .map(|_| 2.0 * rng.gen::<f64>() - 1.0)
        .collect();
    Ok(Instance { set, laplacian, x0 })
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub instance: Instance,
    pub phi_ess: f64,
    pub alpha: f64,
    pub graph: SimilarityGraph,
    pub partition: Partition,
    pub log: Option<ConvergenceLog>,
    pub controllers: Vec<CMatrix>,
    pub network: AgentNetwork,
    pub trace: SimTrace,
}

impl PipelineResult {
    pub fn residual_ratio(&self) -> f64 {
        self.trace.residual_ratio()
    }
}

/// Clusters `instance` at `margin * phi_ess`, synthesizes controllers and
/// simulates the closed loop.
pub fn run_instance(
    instance: Instance,
    config: &PipelineConfig,
) -> Result<PipelineResult, PipelineError> {
    if !(config.margin > 0.0 && config.margin <= 1.0) {
        return Err(PipelineError::InvalidSettings(format!(
            "margin {} outside (0, 1]",
            config.margin
        )));
    }
    let phi_ess = essential_phase(&instance.laplacian).map_err(NetError::from)?;
    let alpha = config.margin * phi_ess;
    let oracle = SdpOracle::new(instance.set.clone());
    let graph = build_similarity_graph(&oracle, alpha).map_err(ClusterError::from)?;
    let (partition, log) = cluster(&graph, &oracle, config)?;
    let controllers = synthesize_controllers(&partition, &instance.set, config.controller_gain)?;
    let assignment = partition
        .assignment(instance.set.len())
        .into_iter()
        .map(|c| c.expect("partition covers every agent"))
        .collect();
    let network = AgentNetwork::new(
        instance.set.as_slice().to_vec(),
        instance.laplacian.clone(),
        assignment,
        controllers.clone(),
    )?;
    let trace = simulate_closed_loop(&network, &instance.x0, &config.sim)?;
    Ok(PipelineResult {
        instance,
        phi_ess,
        alpha,
        graph,
        partition,
        log,
        controllers,
        network,
        trace,
    })
}

fn cluster<O: FeasibilityOracle + ?Sized>(
    graph: &SimilarityGraph,
    oracle: &O,
    config: &PipelineConfig,
) -> Result<(Partition, Option<ConvergenceLog>), ClusterError> {
    match config.method {
        ClusterMethod::Exact => Ok((bnr_min_clustering(graph, oracle, &config.exact)?, None)),
        ClusterMethod::Heuristic => {
            let cfg = AnnealConfig {
                seed: config.seed,
                ..config.anneal
            };
            let (p, log) = hbnb_min_clustering(graph, oracle, &cfg)?;
            Ok((p, Some(log)))
        }
    }
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineResult, PipelineError> {
    let instance = generate_instance(config.agents, config.density, &config.band, config.seed)?;
    run_instance(instance, config)
}
