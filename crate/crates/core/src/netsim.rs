//! Networked integrator agents `y_i' = M_i u_i` with static per-cluster
//! controllers and diffusive coupling through a directed Laplacian.

use nalgebra::DVector;
use rand::Rng;
use thiserror::Error;

use crate::align::certify;
use crate::matrix::{
    c64, cis, diag, is_finite, singular_values, CMatrix, MatrixSet, C64, RANK_RTOL,
};
use crate::partition::Partition;
use crate::phase::{essential_phase, PhaseError, LAPLACIAN_TOL};

/// State magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error("invalid Laplacian: {0}")]
    InvalidLaplacian(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("cluster {cluster} has no alignment certificate")]
    MissingCertificate { cluster: usize },
    #[error("controller of cluster {cluster} no longer verifies")]
    ControllerRejected { cluster: usize },
    #[error("invalid simulation settings: {0}")]
    InvalidSettings(String),
    #[error("state diverged at t = {time}")]
    Diverged { time: f64 },
}

/// Directed ring `i -> i+1` plus each remaining ordered pair with probability
/// `density`, weights uniform in `(0, 1]`. Rows hold the in-weights negated,
/// diagonals the row sums, so rows sum to zero.
pub fn random_strongly_connected_laplacian<R: Rng + ?Sized>(
    n: usize,
    density: f64,
    rng: &mut R,
) -> CMatrix {
    assert!(n >= 2, "a network needs at least two agents");
    let mut w = vec![vec![0.0f64; n]; n];
    let weight = |rng: &mut R| 1.0 - rng.gen::<f64>();
    for (i, row) in w.iter_mut().enumerate() {
        row[(i + 1) % n] = weight(rng);
    }
    for (i, row) in w.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            if i != j && *x == 0.0 && rng.gen::<f64>() < density {
                *x = weight(rng);
            }
        }
    }
    laplacian_from_weights(&w)
}

/// `L = diag(W 1) - W`.
pub fn laplacian_from_weights(w: &[Vec<f64>]) -> CMatrix {
    let n = w.len();
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            c64(
                w[i].iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i)
                    .map(|(_, x)| x)
                    .sum(),
                0.0,
            )
        } else {
            c64(-w[i][j], 0.0)
        }
    })
}

/// Checks real entries, nonpositive off-diagonals and zero row sums, up to a
/// tolerance relative to the largest entry.
pub fn validate_laplacian(l: &CMatrix) -> Result<(), NetError> {
    if l.nrows() != l.ncols() || l.nrows() == 0 {
        return Err(NetError::InvalidLaplacian(format!(
            "shape {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    let n = l.nrows();
    let tol = LAPLACIAN_TOL * l.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let z = l[(i, j)];
            if z.im.abs() > tol || !z.re.is_finite() {
                return Err(NetError::InvalidLaplacian(format!(
                    "entry ({i},{j}) is not a finite real"
                )));
            }
            if i != j && z.re > 0.0 {
                return Err(NetError::InvalidLaplacian(format!(
                    "off-diagonal entry ({i},{j}) is positive"
                )));
            }
            sum += z.re;
        }
        if sum.abs() > tol * n as f64 {
            return Err(NetError::InvalidLaplacian(format!(
                "row {i} sums to {sum:.3e}"
            )));
        }
    }
    Ok(())
}

/// Shape of the random agent gains `M_i = T_i^H D_i T_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentBand {
    /// Per-agent phase centers are uniform in `[-center_spread, center_spread]`.
    pub center_spread: f64,
    /// The two phases of `D_i` sit at the center plus and minus this value.
    pub half_width: f64,
    /// Entrywise magnitude of the perturbation `T_i - I`.
    pub noise: f64,
}

impl Default for AgentBand {
    fn default() -> Self {
        Self {
            center_spread: 1.2,
            half_width: 0.1,
            noise: 0.2,
        }
    }
}

/// Random sectorial 2x2 gains whose phases lie in a band around a random
/// center.
pub fn random_agent_matrices<R: Rng + ?Sized>(
    n: usize,
    band: &AgentBand,
    rng: &mut R,
) -> Vec<CMatrix> {
    (0..n)
        .map(|_| {
            let center = band.center_spread * (2.0 * rng.gen::<f64>() - 1.0);
            let t = CMatrix::from_fn(2, 2, |i, j| {
                let e =
                    c64(2.0 * rng.gen::<f64>() - 1.0, 2.0 * rng.gen::<f64>() - 1.0) * band.noise;
                if i == j {
                    e + c64(1.0, 0.0)
                } else {
                    e
                }
            });
            let d = diag(&[cis(center + band.half_width), cis(center - band.half_width)]);
            t.adjoint() * d * t
        })
        .collect()
}

/// Agent gains, coupling Laplacian, cluster assignment and one controller per
/// cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNetwork {
    pub m: Vec<CMatrix>,
    pub l: CMatrix,
    pub assignment: Vec<usize>,
    pub controllers: Vec<CMatrix>,
}

impl AgentNetwork {
    pub fn new(
        m: Vec<CMatrix>,
        l: CMatrix,
        assignment: Vec<usize>,
        controllers: Vec<CMatrix>,
    ) -> Result<Self, NetError> {
        validate_laplacian(&l)?;
        let n = l.nrows();
        if m.len() != n || assignment.len() != n {
            return Err(NetError::InvalidNetwork(format!(
                "{} agents and {} assignments for a {n}-node Laplacian",
                m.len(),
                assignment.len()
            )));
        }
        let d = m[0].nrows();
        if let Some(i) = m
            .iter()
            .position(|mi| mi.shape() != (d, d) || !is_finite(mi))
        {
            return Err(NetError::InvalidNetwork(format!(
                "agent {i} is not a finite {d}x{d} matrix"
            )));
        }
        if let Some(i) = assignment.iter().position(|&c| c >= controllers.len()) {
            return Err(NetError::InvalidNetwork(format!(
                "agent {i} is assigned to a cluster without a controller"
            )));
        }
        if let Some(c) = controllers
            .iter()
            .position(|k| k.shape() != (d, d) || !is_finite(k))
        {
            return Err(NetError::InvalidNetwork(format!(
                "controller {c} is not a finite {d}x{d} matrix"
            )));
        }
        Ok(Self {
            m,
            l,
            assignment,
            controllers,
        })
    }

    pub fn agents(&self) -> usize {
        self.m.len()
    }

    pub fn dim(&self) -> usize {
        self.m[0].nrows()
    }

    pub fn essential_phase(&self) -> Result<f64, NetError> {
        Ok(essential_phase(&self.l)?)
    }

    /// `-blockdiag(M_i K_{c(i)}) (L kron I)`.
    pub fn system_matrix(&self) -> CMatrix {
        let (n, d) = (self.agents(), self.dim());
        let mut a = CMatrix::zeros(n * d, n * d);
        for i in 0..n {
            let gain = &self.m[i] * &self.controllers[self.assignment[i]];
            for j in 0..n {
                let lij = self.l[(i, j)];
                if lij == c64(0.0, 0.0) {
                    continue;
                }
                let block = &gain * (-lij);
                a.view_mut((i * d, j * d), (d, d)).copy_from(&block);
            }
        }
        a
    }
}

/// One controller per cluster, in partition order: the certificate's `K`,
/// re-verified against the cluster's members and scaled so that the weakest
/// member gain `min_j sigma_min(M_j K)` equals `gain`. Positive scaling leaves
/// phases and ranks unchanged, so it only sets the convergence speed.
pub fn synthesize_controllers(
    partition: &Partition,
    set: &MatrixSet,
    gain: f64,
) -> Result<Vec<CMatrix>, NetError> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(NetError::InvalidSettings(format!(
            "controller gain {gain} must be positive"
        )));
    }
    partition
        .clusters
        .iter()
        .enumerate()
        .map(|(c, cluster)| {
            let cert = cluster
                .certificate
                .as_ref()
                .ok_or(NetError::MissingCertificate { cluster: c })?;
            let members = set.subset(&cluster.members);
            if certify(&members, partition.alpha, &cert.k).is_none() {
                return Err(NetError::ControllerRejected { cluster: c });
            }
            let weakest = members
                .iter()
                .map(|m| min_gain(&(*m * &cert.k)))
                .fold(f64::INFINITY, f64::min);
            if !(weakest.is_finite() && weakest > 0.0) {
                return Err(NetError::ControllerRejected { cluster: c });
            }
            Ok(cert.k.scale(gain / weakest))
        })
        .collect()
}

/// Smallest nonzero singular value.
fn min_gain(a: &CMatrix) -> f64 {
    let sv = singular_values(a);
    let cutoff = RANK_RTOL * sv.first().copied().unwrap_or(0.0);
    sv.into_iter()
        .filter(|&s| s > cutoff)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    /// Stacked agent outputs, agent-major.
    pub states: Vec<DVector<C64>>,
    pub sync_error: Vec<f64>,
    pub dim: usize,
}

impl SimTrace {
    pub fn final_state(&self) -> &DVector<C64> {
        self.states
            .last()
            .expect("a trace holds at least the initial state")
    }

    /// Final over initial synchronization error; zero when the agents start
    /// synchronized.
    pub fn residual_ratio(&self) -> f64 {
        let first = self.sync_error[0];
        let last = *self.sync_error.last().expect("nonempty");
        if first == 0.0 {
            0.0
        } else {
            last / first
        }
    }
}

/// Largest pairwise distance between agent outputs.
pub fn sync_error(y: &DVector<C64>, dim: usize) -> f64 {
    let n = y.len() / dim;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..dim)
                .map(|k| (y[i * dim + k] - y[j * dim + k]).norm_sqr())
                .sum();
            worst = worst.max(d.sqrt());
        }
    }
    worst
}

pub fn sync_error_series(trace: &SimTrace) -> Vec<f64> {
    trace
        .states
        .iter()
        .map(|y| sync_error(y, trace.dim))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub horizon: f64,
    /// Keep every `record_every`-th step; the final step is always kept.
    pub record_every: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 50.0,
            record_every: 1,
        }
    }
}

/// Integrates `y' = -B (L kron I) y` with classical fixed-step RK4.
pub fn simulate_closed_loop(
    net: &AgentNetwork,
    x0: &[f64],
    settings: &SimSettings,
) -> Result<SimTrace, NetError> {
    let SimSettings {
        dt,
        horizon,
        record_every,
    } = *settings;
    if !(dt > 0.0 && dt.is_finite()) || !(horizon >= dt && horizon.is_finite()) || record_every == 0
    {
        return Err(NetError::InvalidSettings(format!(
            "dt={dt}, horizon={horizon}, record_every={record_every}"
        )));
    }
    let dim = net.dim();
    if x0.len() != net.agents() * dim {
        return Err(NetError::InvalidSettings(format!(
            "{} initial values for {} states",
            x0.len(),
            net.agents() * dim
        )));
    }
    let a = net.system_matrix();
    let mut y = DVector::from_iterator(x0.len(), x0.iter().map(|&x| c64(x, 0.0)));
    let steps = (horizon / dt).round() as usize;
    let mut trace = SimTrace {
        times: vec![0.0],
        states: vec![y.clone()],
        sync_error: vec![sync_error(&y, dim)],
        dim,
    };
    let half = c64(0.5 * dt, 0.0);
    let full = c64(dt, 0.0);
    let sixth = c64(dt / 6.0, 0.0);
    for step in 1..=steps {
        let k1 = &a * &y;
        let k2 = &a * (&y + &k1 * half);
        let k3 = &a * (&y + &k2 * half);
        let k4 = &a * (&y + &k3 * full);
        y += (k1 + k2 * c64(2.0, 0.0) + k3 * c64(2.0, 0.0) + k4) * sixth;
        let time = step as f64 * dt;
        if y.iter()
            .any(|z| z.norm().is_nan() || z.norm() > DIVERGENCE_LIMIT)
        {
            return Err(NetError::Diverged { time });
        }
        if step % record_every == 0 || step == steps {
            trace.times.push(time);
            trace.sync_error.push(sync_error(&y, dim));
            trace.states.push(y.clone());
        }
    }
    Ok(trace)
}
