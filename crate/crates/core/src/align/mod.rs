//! Simultaneous alignment of matrix sets: LMI feasibility, certificate
//! verification and diversity.

mod lmi;
mod oracle;

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::matrix::{numerical_rank, CMatrix};
use crate::phase::{phases, PhaseSpectrum};

pub use lmi::{solve_alignment_lmis, LmiOutcome, LMI_SHIFT};
pub use oracle::{CountingOracle, FeasibilityOracle, ScalarArcOracle, SdpOracle};

/// Slack on the phase bracket `[-alpha, alpha]` during verification.
pub const PHASE_SLACK: f64 = 1e-6;
/// Bracket width at which diversity bisection stops.
pub const DIVERSITY_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("member {index} is {rows}x{cols}, expected {expected_rows}x{expected_cols} with rows <= cols")]
    DimensionMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("alignment angle {0} outside [0, pi/2)")]
    InvalidAlpha(f64),
    #[error("empty member list")]
    Empty,
    #[error("solver failure on members {members:?} at alpha={alpha}: {reason}")]
    SolverFailure {
        members: Vec<usize>,
        alpha: f64,
        reason: String,
    },
}

impl AlignError {
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, AlignError::SolverFailure { .. })
    }
}

/// A uniform `K` together with the phases it achieves on every member.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentCertificate {
    pub k: CMatrix,
    pub alpha: f64,
    /// Phases of `A_i K`, in member order.
    pub achieved_phases: Vec<PhaseSpectrum>,
    pub ranks_preserved: bool,
}

impl AlignmentCertificate {
    /// Same `K` restricted to a subset of the members it was built for.
    /// `positions` index into `achieved_phases`.
    pub fn restrict(&self, positions: &[usize]) -> Self {
        Self {
            k: self.k.clone(),
            alpha: self.alpha,
            achieved_phases: positions
                .iter()
                .map(|&p| self.achieved_phases[p].clone())
                .collect(),
            ranks_preserved: self.ranks_preserved,
        }
    }

    /// Largest absolute achieved phase.
    pub fn max_abs_phase(&self) -> f64 {
        self.achieved_phases
            .iter()
            .flat_map(|s| s.phases.iter())
            .fold(0.0, |acc, p| acc.max(p.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityResult {
    pub value: f64,
    pub certificate_at: Option<AlignmentCertificate>,
}

fn check_shapes(members: &[&CMatrix]) -> Result<(), AlignError> {
    let first = members.first().ok_or(AlignError::Empty)?;
    let (m, n) = first.shape();
    for (index, a) in members.iter().enumerate() {
        if a.shape() != (m, n) || m > n {
            return Err(AlignError::DimensionMismatch {
                index,
                rows: a.nrows(),
                cols: a.ncols(),
                expected_rows: m,
                expected_cols: n,
            });
        }
    }
    Ok(())
}

/// Builds a certificate for `K` if every `A_i K` has its phases inside
/// `[-alpha - PHASE_SLACK, alpha + PHASE_SLACK]` and `rank(A_i K) = rank(A_i)`.
pub fn certify(members: &[&CMatrix], alpha: f64, k: &CMatrix) -> Option<AlignmentCertificate> {
    let mut achieved = Vec::with_capacity(members.len());
    for &a in members {
        if a.ncols() != k.nrows() || k.ncols() != a.nrows() {
            return None;
        }
        let product = a * k;
        if numerical_rank(&product) != numerical_rank(a) {
            return None;
        }
        let spectrum = phases(&product).ok()?;
        if !spectrum.within(-alpha - PHASE_SLACK, alpha + PHASE_SLACK) {
            return None;
        }
        achieved.push(spectrum);
    }
    Some(AlignmentCertificate {
        k: k.clone(),
        alpha,
        achieved_phases: achieved,
        ranks_preserved: true,
    })
}

pub fn verify_certificate(members: &[&CMatrix], alpha: f64, k: &CMatrix) -> bool {
    certify(members, alpha, k).is_some()
}

/// Decides whether `members` are simultaneously `alpha`-alignable by solving
/// the alignment LMIs. A returned certificate has always passed
/// [`verify_certificate`]. `Ok(None)` means infeasible, or that the solver's
/// `K` collapsed a rank.
pub fn align_feasibility(
    members: &[&CMatrix],
    alpha: f64,
) -> Result<Option<AlignmentCertificate>, AlignError> {
    check_shapes(members)?;
    if !(0.0..FRAC_PI_2).contains(&alpha) {
        return Err(AlignError::InvalidAlpha(alpha));
    }
    let mut last_status = String::new();
    let mut conclusive = false;
    for maximize_trace in [true, false] {
        match solve_alignment_lmis(members, alpha, maximize_trace) {
            LmiOutcome::Candidate(k) => {
                if let Some(cert) = certify(members, alpha, &k) {
                    return Ok(Some(cert));
                }
                conclusive = true;
            }
            LmiOutcome::Infeasible => return Ok(None),
            LmiOutcome::Inconclusive { iterate, status } => {
                if let Some(cert) = iterate.and_then(|k| certify(members, alpha, &k)) {
                    return Ok(Some(cert));
                }
                last_status = status;
            }
        }
    }
    if conclusive {
        Ok(None)
    } else {
        Err(AlignError::SolverFailure {
            members: Vec::new(),
            alpha,
            reason: last_status,
        })
    }
}

/// Bisection for the smallest feasible angle on `[0, pi/2)`, given any
/// feasibility test. Stops once the bracket is at most [`DIVERSITY_TOL`] wide
/// and returns its upper end.
pub fn bisect_diversity<F>(mut feasible: F) -> Result<DiversityResult, AlignError>
where
    F: FnMut(f64) -> Result<Option<AlignmentCertificate>, AlignError>,
{
    let mut hi = FRAC_PI_2 - DIVERSITY_TOL;
    let Some(mut cert) = feasible(hi)? else {
        return Ok(DiversityResult {
            value: FRAC_PI_2,
            certificate_at: None,
        });
    };
    let mut lo = 0.0;
    while hi - lo > DIVERSITY_TOL {
        let mid = 0.5 * (lo + hi);
        match feasible(mid)? {
            Some(c) => {
                hi = mid;
                cert = c;
            }
            None => lo = mid,
        }
    }
    Ok(DiversityResult {
        value: hi,
        certificate_at: Some(cert),
    })
}

/// Diversity of a matrix set via the LMI oracle.
pub fn diversity(members: &[&CMatrix]) -> Result<DiversityResult, AlignError> {
    check_shapes(members)?;
    bisect_diversity(|alpha| align_feasibility(members, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{c64, cis, diag};

    #[test]
    fn verify_examples() {
        let i2 = CMatrix::identity(2, 2);
        assert!(verify_certificate(&[&i2], 0.0, &i2));
        assert!(!verify_certificate(&[&i2], 0.0, &CMatrix::zeros(2, 2)));
        let a = diag(&[cis(0.4)]);
        let k = CMatrix::identity(1, 1);
        assert!(!verify_certificate(&[&a], 0.3, &k));
        assert!(verify_certificate(&[&a], 0.5, &k));
    }

    #[test]
    fn verify_rejects_shape_mismatch() {
        let a = CMatrix::identity(2, 2);
        assert!(!verify_certificate(&[&a], 0.5, &CMatrix::identity(3, 2)));
    }

    #[test]
    fn nonsingular_single_matrix_aligns() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[c64(1.0, 0.5), c64(-0.3, 0.2), c64(0.4, -1.0), c64(0.7, 0.1)],
        );
        for alpha in [0.0, 0.01, 0.7] {
            let cert = align_feasibility(&[&a], alpha).unwrap().expect("feasible");
            assert!(cert.max_abs_phase() <= alpha + PHASE_SLACK);
        }
    }

    #[test]
    fn singular_single_matrix_aligns_at_zero() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[c64(1.0, 1.0), c64(2.0, 2.0), c64(0.5, 0.0), c64(1.0, 0.0)],
        );
        let cert = align_feasibility(&[&a], 0.0).unwrap().expect("feasible");
        assert_eq!(cert.achieved_phases[0].rank, 1);
        assert!(cert.max_abs_phase() <= PHASE_SLACK);
    }

    #[test]
    fn rotated_pair_needs_matching_budget() {
        let a = diag(&[cis(1.0), cis(1.0)]);
        let b = diag(&[cis(-1.0), cis(-1.0)]);
        assert!(align_feasibility(&[&a, &b], 0.2).unwrap().is_none());
        assert!(align_feasibility(&[&a, &b], 1.0).unwrap().is_some());
    }

    #[test]
    fn rectangular_members_align() {
        let a = CMatrix::from_row_slice(1, 2, &[c64(1.0, 0.2), c64(0.3, -0.4)]);
        let cert = align_feasibility(&[&a], 0.1).unwrap().expect("feasible");
        assert_eq!(cert.k.shape(), (2, 1));
    }

    #[test]
    fn invalid_inputs() {
        let a = CMatrix::identity(2, 2);
        let b = CMatrix::identity(3, 3);
        assert!(matches!(
            align_feasibility(&[&a, &b], 0.1),
            Err(AlignError::DimensionMismatch { index: 1, .. })
        ));
        assert_eq!(
            align_feasibility(&[&a], 2.0),
            Err(AlignError::InvalidAlpha(2.0))
        );
        assert_eq!(align_feasibility(&[], 0.1), Err(AlignError::Empty));
        let tall = CMatrix::zeros(3, 2);
        assert!(matches!(
            align_feasibility(&[&tall], 0.1),
            Err(AlignError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diversity_examples() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[c64(0.3, 0.5), c64(-0.3, 0.2), c64(0.4, -1.0), c64(0.7, 0.1)],
        );
        assert!(diversity(&[&a]).unwrap().value <= DIVERSITY_TOL);
        assert!(diversity(&[&a, &a]).unwrap().value <= DIVERSITY_TOL);
        let x = diag(&[cis(0.8)]);
        let y = diag(&[cis(-0.8)]);
        let d = diversity(&[&x, &y]).unwrap();
        assert!((d.value - 0.8).abs() <= 2.0 * DIVERSITY_TOL, "{}", d.value);
        let third = 2.0 * std::f64::consts::PI / 3.0;
        let far = diversity(&[
            &diag(&[cis(0.0)]),
            &diag(&[cis(third)]),
            &diag(&[cis(-third)]),
        ])
        .unwrap();
        assert_eq!(far.value, FRAC_PI_2);
        assert!(far.certificate_at.is_none());
    }
}
