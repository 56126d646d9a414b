//! Command-line front end: phases, alignment, graphs, clustering, controller
//! synthesis and simulation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use phasealign::anneal::{hbnb_multistart, AnnealConfig};
use phasealign::exact::{
    bnr_min_clustering, brute_force_min_partition, ExactConfig, DEFAULT_NODE_CAP,
};
use phasealign::formats::{self, ControllersDoc, FormatError, NetworkDoc};
use phasealign::graph::build_similarity_graph;
use phasealign::netsim::{simulate_closed_loop, synthesize_controllers, NetError, SimSettings};
use phasealign::phase::{classify, numerical_range_boundary, phases};
use phasealign::pipeline::{
    run_pipeline, ClusterMethod, PipelineConfig, PipelineError, DEFAULT_CONTROLLER_GAIN,
};
use phasealign::{
    ClusterError, FeasibilityOracle, GraphError, MatrixSet, SdpOracle, SimilarityGraph,
};

const EXIT_PARSE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_DIVERGED: u8 = 4;
const EXIT_OTHER: u8 = 5;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "phasealign",
    version,
    about = "Phase-alignment clustering and controller synthesis"
)]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = "PHASEALIGN_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for parallel stages (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify each matrix and list its phases.
    Phases {
        input: PathBuf,
        /// Also write this many numerical-range boundary points per matrix.
        #[arg(long)]
        boundary: Option<usize>,
    },
    /// Diversity (smallest alignment angle) of a set of matrices.
    Divergence {
        input: PathBuf,
        /// Comma-separated member indices; all matrices by default.
        #[arg(long, value_delimiter = ',')]
        members: Option<Vec<usize>>,
    },
    /// Pairwise similarity matrix at an angle.
    Graph {
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Exact minimum clustering.
    ClusterExact {
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
        /// Enumerate all set partitions instead (at most 12 matrices).
        #[arg(long)]
        brute_force: bool,
        #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
        node_budget: u64,
        /// Reuse a similarity matrix written by `graph`.
        #[arg(long)]
        similarity: Option<PathBuf>,
    },
    /// Annealed heuristic clustering.
    ClusterHbnb {
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        anneal: AnnealArgs,
        /// Independent seeds `seed, seed+1, ...` run in parallel; the best wins.
        #[arg(long, default_value_t = 1)]
        restarts: u64,
        #[arg(long)]
        similarity: Option<PathBuf>,
    },
    /// Controllers from a certified partition.
    Synth {
        input: PathBuf,
        partition: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONTROLLER_GAIN)]
        gain: f64,
    },
    /// Simulate a network file written by `pipeline`.
    Simulate {
        network: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Random network end to end: cluster at margin * phi_ess, synthesize, simulate.
    Pipeline {
        #[arg(long, default_value_t = 10)]
        agents: usize,
        #[arg(long, default_value_t = 0.95)]
        margin: f64,
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        /// Cluster exactly instead of by annealing.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = DEFAULT_CONTROLLER_GAIN)]
        gain: f64,
        #[command(flatten)]
        anneal: AnnealArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Args, Debug)]
struct AnnealArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "T0")]
    t0: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    e: Option<f64>,
    #[arg(long)]
    node_budget: Option<u64>,
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl AnnealArgs {
    fn resolve(&self) -> Result<AnnealConfig> {
        let mut cfg = AnnealConfig::default();
        if let Some(path) = &self.config {
            cfg = cfg.merge_key_values(&read(path)?)?;
        }
        cfg.seed = self.seed;
        cfg.t0 = self.t0.unwrap_or(cfg.t0);
        cfg.beta = self.beta.unwrap_or(cfg.beta);
        cfg.gamma = self.gamma.unwrap_or(cfg.gamma);
        cfg.e = self.e.unwrap_or(cfg.e);
        cfg.node_budget = self.node_budget.or(cfg.node_budget);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    /// Write every n-th step to the trace.
    #[arg(long, default_value_t = 100)]
    record_every: usize,
}

impl SimArgs {
    fn settings(&self) -> SimSettings {
        SimSettings {
            dt: self.dt,
            horizon: self.horizon,
            record_every: self.record_every,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_set(path: &Path) -> Result<MatrixSet> {
    formats::parse_matrix_set(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn graph_for<O: FeasibilityOracle + ?Sized>(
    oracle: &O,
    alpha: f64,
    similarity: Option<&PathBuf>,
) -> Result<SimilarityGraph> {
    match similarity {
        Some(path) => {
            // Edges depend on the angle, so a graph built at another one
            // cannot be reused.
            let text = read(path)?;
            let g = formats::parse_similarity_csv(&text, None).or_else(|e| match e {
                FormatError::Field { .. } => formats::parse_similarity_csv(&text, Some(alpha)),
                e => Err(e),
            })?;
            if (g.alpha() - alpha).abs() > 1e-12 {
                bail!(FormatError::Field {
                    field: "alpha".into(),
                    message: format!("similarity matrix was built at {}, not {alpha}", g.alpha()),
                });
            }
            if g.len() != oracle.len() {
                bail!(
                    "similarity matrix has {} vertices, matrix set has {}",
                    g.len(),
                    oracle.len()
                );
            }
            Ok(g)
        }
        None => Ok(build_similarity_graph(oracle, alpha)?),
    }
}

fn run(cli: Cli) -> Result<String> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let out = Output { dir: cli.out_dir };
    let started = Instant::now();
    let summary = match cli.command {
        Command::Phases { input, boundary } => {
            let set = load_set(&input)?;
            let mut csv = String::new();
            formats::prologue(&mut csv, None, None);
            let mut bcsv = csv.clone();
            csv.push_str("index,class,rank,phases\n");
            bcsv.push_str("index,re,im\n");
            for (i, a) in set.iter().enumerate() {
                let (class, spec) = match phases(a) {
                    Ok(s) => (s.class, Some(s)),
                    Err(_) => (classify(a)?, None),
                };
                let list = spec
                    .as_ref()
                    .map(|s| {
                        s.phases
                            .iter()
                            .map(f64::to_string)
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default();
                let rank = spec
                    .as_ref()
                    .map(|s| s.rank.to_string())
                    .unwrap_or_default();
                csv.push_str(&format!("{i},{class:?},{rank},{list}\n"));
                if let Some(k) = boundary {
                    for z in numerical_range_boundary(a, k)? {
                        bcsv.push_str(&format!("{i},{},{}\n", z.re, z.im));
                    }
                }
            }
            out.write("phases.csv", &csv)?;
            if boundary.is_some() {
                out.write("boundary.csv", &bcsv)?;
            }
            format!("matrices={}", set.len())
        }
        Command::Divergence { input, members } => {
            let set = load_set(&input)?;
            let members = members.unwrap_or_else(|| (0..set.len()).collect());
            if let Some(&v) = members.iter().find(|&&v| v >= set.len()) {
                bail!(FormatError::Field {
                    field: "members".into(),
                    message: format!("index {v} out of range")
                });
            }
            let oracle = SdpOracle::new(set);
            let div = oracle.diversity(&members)?;
            format!(
                "members={} diversity={:.6} alignable={}",
                members.len(),
                div.value,
                div.certificate_at.is_some()
            )
        }
        Command::Graph { input, alpha } => {
            let oracle = SdpOracle::new(load_set(&input)?);
            let g = build_similarity_graph(&oracle, alpha)?;
            out.write("similarity.csv", &formats::write_similarity_csv(&g, None))?;
            format!(
                "vertices={} edges={} alpha={alpha}",
                g.len(),
                g.edge_count()
            )
        }
        Command::ClusterExact {
            input,
            alpha,
            brute_force,
            node_budget,
            similarity,
        } => {
            let oracle = SdpOracle::new(load_set(&input)?);
            let p = if brute_force {
                brute_force_min_partition(&oracle, alpha)?
            } else {
                let g = graph_for(&oracle, alpha, similarity.as_ref())?;
                bnr_min_clustering(
                    &g,
                    &oracle,
                    &ExactConfig {
                        node_cap: node_budget,
                    },
                )?
            };
            out.write("partition.json", &formats::write_partition(&p, None))?;
            format!(
                "clusters={} alpha={alpha} nodes={}",
                p.len(),
                p.stats.nodes_expanded
            )
        }
        Command::ClusterHbnb {
            input,
            alpha,
            anneal,
            restarts,
            similarity,
        } => {
            let cfg = anneal.resolve()?;
            let oracle = SdpOracle::new(load_set(&input)?);
            let g = graph_for(&oracle, alpha, similarity.as_ref())?;
            let seeds: Vec<u64> = (0..restarts.max(1))
                .map(|k| cfg.seed.wrapping_add(k))
                .collect();
            let (seed, p, log) = hbnb_multistart(&g, &oracle, &cfg, &seeds)?;
            out.write("partition.json", &formats::write_partition(&p, Some(seed)))?;
            out.write(
                "convergence.csv",
                &formats::write_log_csv(&log, alpha, Some(seed)),
            )?;
            format!(
                "clusters={} alpha={alpha} seed={seed} iterations={}",
                p.len(),
                log.records.last().map_or(0, |r| r.iteration)
            )
        }
        Command::Synth {
            input,
            partition,
            gain,
        } => {
            let set = load_set(&input)?;
            let (p, seed) = formats::parse_partition(&read(&partition)?, &set)
                .with_context(|| format!("parsing {}", partition.display()))?;
            let ks = synthesize_controllers(&p, &set, gain)?;
            out.write(
                "controllers.json",
                &formats::write_controllers(&ControllersDoc::new(&p, &ks, gain, seed)),
            )?;
            format!("controllers={} alpha={}", ks.len(), p.alpha)
        }
        Command::Simulate { network, sim } => {
            let doc = formats::parse_network(&read(&network)?)
                .with_context(|| format!("parsing {}", network.display()))?;
            let net = doc.to_network()?;
            let trace = simulate_closed_loop(&net, &doc.initial_outputs, &sim.settings())?;
            out.write(
                "trace.csv",
                &formats::write_trace_csv(&trace, doc.alpha, doc.seed),
            )?;
            format!(
                "agents={} sync_residual={:.3e}",
                net.agents(),
                trace.residual_ratio()
            )
        }
        Command::Pipeline {
            agents,
            margin,
            density,
            exact,
            gain,
            anneal,
            sim,
        } => {
            let cfg = PipelineConfig {
                agents,
                seed: anneal.seed,
                margin,
                density,
                method: if exact {
                    ClusterMethod::Exact
                } else {
                    ClusterMethod::Heuristic
                },
                anneal: anneal.resolve()?,
                exact: ExactConfig {
                    node_cap: anneal.node_budget.unwrap_or(DEFAULT_NODE_CAP),
                },
                sim: sim.settings(),
                controller_gain: gain,
                ..Default::default()
            };
            let r = run_pipeline(&cfg)?;
            let seed = Some(cfg.seed);
            out.write(
                "agents.json",
                &formats::write_matrix_set(&r.instance.set, Some(r.alpha), seed),
            )?;
            out.write(
                "similarity.csv",
                &formats::write_similarity_csv(&r.graph, seed),
            )?;
            out.write(
                "partition.json",
                &formats::write_partition(&r.partition, seed),
            )?;
            if let Some(log) = &r.log {
                out.write(
                    "convergence.csv",
                    &formats::write_log_csv(log, r.alpha, seed),
                )?;
            }
            out.write(
                "controllers.json",
                &formats::write_controllers(&ControllersDoc::new(
                    &r.partition,
                    &r.controllers,
                    gain,
                    seed,
                )),
            )?;
            out.write(
                "network.json",
                &formats::write_network(&NetworkDoc::new(
                    &r.network,
                    r.alpha,
                    r.phi_ess,
                    seed,
                    &r.instance.x0,
                )),
            )?;
            out.write(
                "trace.csv",
                &formats::write_trace_csv(&r.trace, r.alpha, seed),
            )?;
            format!(
                "clusters={} agents={agents} phi_ess={:.4} alpha={:.4} sync_residual={:.3e}",
                r.partition.len(),
                r.phi_ess,
                r.alpha,
                r.residual_ratio()
            )
        }
    };
    Ok(format!(
        "{summary} runtime={:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<FormatError>().is_some() {
            return EXIT_PARSE;
        }
        let code = if let Some(e) = cause.downcast_ref::<PipelineError>() {
            match e {
                PipelineError::Cluster(c) => cluster_code(c),
                PipelineError::Net(n) => net_code(n),
                _ => None,
            }
        } else if let Some(e) = cause.downcast_ref::<ClusterError>() {
            cluster_code(e)
        } else if let Some(e) = cause.downcast_ref::<GraphError>() {
            e.is_solver_failure().then_some(EXIT_SOLVER)
        } else if let Some(e) = cause.downcast_ref::<phasealign::AlignError>() {
            e.is_solver_failure().then_some(EXIT_SOLVER)
        } else if let Some(e) = cause.downcast_ref::<NetError>() {
            net_code(e)
        } else {
            None
        };
        if let Some(code) = code {
            return code;
        }
    }
    EXIT_OTHER
}

fn cluster_code(e: &ClusterError) -> Option<u8> {
    match e {
        ClusterError::BudgetExceeded { .. } => Some(EXIT_BUDGET),
        _ if e.is_solver_failure() => Some(EXIT_SOLVER),
        _ => None,
    }
}

fn net_code(e: &NetError) -> Option<u8> {
    matches!(e, NetError::Diverged { .. }).then_some(EXIT_DIVERGED)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
