use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::atomic::{AtomicUsize, Ordering};

use dashmap::DashMap;

use super::{
    align_feasibility, bisect_diversity, certify, AlignError, AlignmentCertificate,
    DiversityResult, DIVERSITY_TOL,
};
use crate::matrix::{cis, CMatrix, MatrixSet};

/// Set-level alignability test over the indices of a fixed matrix set.
///
/// Member lists are treated as sets; certificates list achieved phases in
/// ascending index order.
pub trait FeasibilityOracle: Sync {
    /// Number of matrices indexed by this oracle.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(
        &self,
        members: &[usize],
        alpha: f64,
    ) -> Result<Option<AlignmentCertificate>, AlignError>;

    fn diversity(&self, members: &[usize]) -> Result<DiversityResult, AlignError> {
        bisect_diversity(|alpha| self.check(members, alpha))
    }

    /// Like [`check`](Self::check) but never answers from a cache.
    fn recertify(
        &self,
        members: &[usize],
        alpha: f64,
    ) -> Result<Option<AlignmentCertificate>, AlignError> {
        self.check(members, alpha)
    }

    /// Number of underlying solver runs so far.
    fn solver_calls(&self) -> usize {
        0
    }
}

pub(crate) fn canonical(members: &[usize]) -> Vec<usize> {
    let mut v = members.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn alpha_key(alpha: f64) -> i64 {
    (alpha / (0.5 * DIVERSITY_TOL)).round() as i64
}

/// Counts the queries a search issues against an inner oracle, cache hits
/// included.
pub struct CountingOracle<'a, O: ?Sized> {
    inner: &'a O,
    queries: AtomicUsize,
}

impl<'a, O: FeasibilityOracle + ?Sized> CountingOracle<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        Self {
            inner,
            queries: AtomicUsize::new(0),
        }
    }

    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }
}

impl<O: FeasibilityOracle + ?Sized> FeasibilityOracle for CountingOracle<'_, O> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn check(
        &self,
        members: &[usize],
        alpha: f64,
    ) -> Result<Option<AlignmentCertificate>, AlignError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.check(members, alpha)
    }

    fn diversity(&self, members: &[usize]) -> Result<DiversityResult, AlignError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.diversity(members)
    }

    fn recertify(
        &self,
        members: &[usize],
        alpha: f64,
    ) -> Result<Option<AlignmentCertificate>, AlignError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.recertify(members, alpha)
    }

    fn solver_calls(&self) -> usize {
        self.inner.solver_calls()
    }
}

/// LMI-backed oracle with a shared, concurrently readable cache.
pub struct SdpOracle {
    set: MatrixSet,
    feasibility: DashMap<(Vec<usize>, i64), Option<AlignmentCertificate>>,
    diversities: DashMap<Vec<usize>, DiversityResult>,
    solves: AtomicUsize,
}

impl SdpOracle {
    pub fn new(set: MatrixSet) -> Self {
        Self {
            set,
            feasibility: DashMap::new(),
            diversities: DashMap::new(),
            solves: AtomicUsize::new(0),
        }
    }

    pub fn set(&self) -> &MatrixSet {
        &self.set
    }

    fn solve(
        &self,
        members: &[usize],
        alpha: f64,
    ) -> Result<Option<AlignmentCertificate>, AlignError> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        align_feasibility(&self.set.subset(members), alpha).map_err(|e| match e {
            AlignError::SolverFailure { alpha, reason, .. } => AlignError::SolverFailure {
                members: members.to_vec(),
                alpha,
                reason,
            },
            other => other,
        })
    }
}

impl FeasibilityOracle for SdpOracle {
    fn len(&self) -> usize {
        self.set.len()
    }

    fn check(
        &self,
        members: &[usize],
        alpha: f64,
    ) -> Result<Option<AlignmentCertificate>, AlignError> {
        let members = canonical(members);
        let key = (members, alpha_key(alpha));
        if let Some(hit) = self.feasibility.get(&key) {
            return Ok(hit.clone());
        }
        let result = self.solve(&key.0, alpha)?;
        Ok(self.feasibility.entry(key).or_insert(result).clone())
    }

    fn diversity(&self, members: &[usize]) -> Result<DiversityResult, AlignError> {
        let members = canonical(members);
        if let Some(hit) = self.diversities.get(&members) {
            return Ok(hit.clone());
        }
        let result = bisect_diversity(|alpha| self.check(&members, alpha))?;
        Ok(self.diversities.entry(members).or_insert(result).clone())
    }

    fn recertify(
        &self,
        members: &[usize],
        alpha: f64,
    ) -> Result<Option<AlignmentCertificate>, AlignError> {
        let members = canonical(members);
        let cached = self
            .feasibility
            .get(&(members.clone(), alpha_key(alpha)))
            .and_then(|c| c.clone());
        if let Some(cert) = cached.and_then(|c| certify(&self.set.subset(&members), alpha, &c.k)) {
            return Ok(Some(cert));
        }
        self.solve(&members, alpha)
    }

    fn solver_calls(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }
}

/// Closed-form oracle for sets of 1x1 matrices (complex scalars).
///
/// A single `k = e^{-i psi}` rotates every scalar by the same angle, so a set
/// is alignable at `alpha` exactly when its nonzero arguments fit in a circular
/// arc of width `2 alpha`.
pub struct ScalarArcOracle {
    scalars: Vec<CMatrix>,
    angles: Vec<Option<f64>>,
    queries: AtomicUsize,
}

impl ScalarArcOracle {
    pub fn new(set: &MatrixSet) -> Result<Self, AlignError> {
        if set.shape() != (1, 1) {
            let (rows, cols) = set.shape();
            return Err(AlignError::DimensionMismatch {
                index: 0,
                rows,
                cols,
                expected_rows: 1,
                expected_cols: 1,
            });
        }
        let scalars: Vec<CMatrix> = set.iter().cloned().collect();
        let angles = scalars
            .iter()
            .map(|s| (s[(0, 0)].norm() > 0.0).then(|| s[(0, 0)].arg()))
            .collect();
        Ok(Self {
            scalars,
            angles,
            queries: AtomicUsize::new(0),
        })
    }

    /// Unit scalars `e^{i theta_j}`.
    pub fn from_angles(thetas: &[f64]) -> Self {
        let set = MatrixSet::new(
            thetas
                .iter()
                .map(|&t| CMatrix::from_element(1, 1, cis(t)))
                .collect(),
        )
        .expect("at least one angle");
        Self::new(&set).expect("scalar set")
    }

    /// Half-width and center of the smallest arc holding the members' arguments.
    pub fn arc(&self, members: &[usize]) -> (f64, f64) {
        let mut th: Vec<f64> = members
            .iter()
            .filter_map(|&i| self.angles[i])
            .map(|t| t.rem_euclid(2.0 * PI))
            .collect();
        if th.len() <= 1 {
            return (0.0, th.first().copied().unwrap_or(0.0));
        }
        th.sort_by(f64::total_cmp);
        let n = th.len();
        let (mut gap, mut after) = (th[0] + 2.0 * PI - th[n - 1], 0);
        for i in 1..n {
            let g = th[i] - th[i - 1];
            if g > gap {
                gap = g;
                after = i;
            }
        }
        let width = 2.0 * PI - gap;
        (0.5 * width, th[after] + 0.5 * width)
    }

    fn certificate(&self, members: &[usize], alpha: f64) -> Option<AlignmentCertificate> {
        let (half, center) = self.arc(members);
        if half > alpha + 1e-12 {
            return None;
        }
        let k = CMatrix::from_element(1, 1, cis(-center));
        let subset: Vec<&CMatrix> = members.iter().map(|&i| &self.scalars[i]).collect();
        certify(&subset, alpha, &k)
    }
}

impl FeasibilityOracle for ScalarArcOracle {
    fn len(&self) -> usize {
        self.scalars.len()
    }

    fn check(
        &self,
        members: &[usize],
        alpha: f64,
    ) -> Result<Option<AlignmentCertificate>, AlignError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(self.certificate(&canonical(members), alpha))
    }

    fn diversity(&self, members: &[usize]) -> Result<DiversityResult, AlignError> {
        let members = canonical(members);
        let (half, _) = self.arc(&members);
        if half >= FRAC_PI_2 {
            return Ok(DiversityResult {
                value: FRAC_PI_2,
                certificate_at: None,
            });
        }
        Ok(DiversityResult {
            value: half,
            certificate_at: self.certificate(&members, half),
        })
    }

    fn solver_calls(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }
}
