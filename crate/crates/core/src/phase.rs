//! Numerical ranges, matrix phases and the sectorial decomposition.
//!
//! A square matrix `A` is sectorial when its numerical range
//! `W(A) = { x^H A x : |x| = 1 }` sits in an open half-plane that excludes
//! the origin. Rotating by the half-plane's center angle `gamma` gives
//! `e^{-i gamma} A = H + iS` with `H` positive definite, and the phases are
//! `gamma + atan(eig(H^{-1/2} S H^{-1/2}))`.
//!
//! Singular matrices whose numerical range only touches the origin are handled
//! by compressing onto the row space, which for these matrices coincides with
//! the range (`ker A = ker A^H` whenever `Re(e^{-i gamma} A) >= 0`).

use std::f64::consts::PI;

use nalgebra::DVector;
use thiserror::Error;

use crate::matrix::{
    c64, cis, hermitian_eigen, hermitian_part, numerical_rank, row_space_basis, skew_part,
    spectral_norm, CMatrix,
};

/// Relative threshold on `max_gamma lambda_min(Re(e^{-i gamma} A))` separating
/// strictly sectorial matrices from those touching the origin.
pub const PD_RTOL: f64 = 1e-10;
/// Relative Frobenius bound met by [`sectorial_factorization`].
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Tolerance on Laplacian row sums, relative to the largest entry.
pub const LAPLACIAN_TOL: f64 = 1e-10;

const CENTER_GRID: usize = 720;
const GOLDEN_ITERS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SectorClass {
    Sectorial,
    QuasiSectorial,
    SemiSectorial,
    NonSectorial,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    #[error("phases are undefined for a non-sectorial matrix")]
    NotPhaseDefined,
    #[error("matrix is {0:?}, a sectorial matrix is required")]
    NotSectorial(SectorClass),
    #[error("not a Laplacian: {0}")]
    NotLaplacian(String),
    #[error("graph is not strongly connected: {0}")]
    NotStronglyConnected(String),
}

/// Phases of a phase-defined matrix, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpectrum {
    pub phases: Vec<f64>,
    pub class: SectorClass,
    /// Rotation angle used during the computation.
    pub center: f64,
    pub rank: usize,
}

impl PhaseSpectrum {
    pub fn max(&self) -> Option<f64> {
        self.phases.first().copied()
    }

    pub fn min(&self) -> Option<f64> {
        self.phases.last().copied()
    }

    /// Whether every phase lies in `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.phases.iter().all(|&p| p >= lo && p <= hi)
    }
}

/// `A = T^H D T` with `D` diagonal and unimodular.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorialFactorization {
    pub t: CMatrix,
    pub d: CMatrix,
}

impl SectorialFactorization {
    pub fn reconstruct(&self) -> CMatrix {
        self.t.adjoint() * &self.d * &self.t
    }
}

fn ensure_square(a: &CMatrix) -> Result<(), PhaseError> {
    if a.nrows() != a.ncols() {
        return Err(PhaseError::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// `H`, `S` such that `A = H + iS`; the rotated Hermitian part is
/// `cos(g) H + sin(g) S`.
struct Parts {
    h: CMatrix,
    s: CMatrix,
}

impl Parts {
    fn new(a: &CMatrix) -> Self {
        Self {
            h: hermitian_part(a),
            s: skew_part(a),
        }
    }

    fn rotated_hermitian(&self, gamma: f64) -> CMatrix {
        &self.h * c64(gamma.cos(), 0.0) + &self.s * c64(gamma.sin(), 0.0)
    }

    fn min_eig(&self, gamma: f64) -> f64 {
        hermitian_eigen(&self.rotated_hermitian(gamma)).0[0]
    }
}

fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Maximizes `lambda_min(Re(e^{-i gamma} A))` over `gamma`: coarse grid, then
/// golden-section refinement around the best grid point.
fn best_center(parts: &Parts) -> (f64, f64) {
    let step = 2.0 * PI / CENTER_GRID as f64;
    let mut best_k = 0;
    let mut best_f = f64::NEG_INFINITY;
    for k in 0..CENTER_GRID {
        let f = parts.min_eig(-PI + step * k as f64);
        if f > best_f {
            best_f = f;
            best_k = k;
        }
    }
    let center = -PI + step * best_k as f64;
    let (mut lo, mut hi) = (center - step, center + step);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = parts.min_eig(x1);
    let mut f2 = parts.min_eig(x2);
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = parts.min_eig(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = parts.min_eig(x1);
        }
    }
    let (g, f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if f >= best_f {
        (wrap_angle(g), f)
    } else {
        (wrap_angle(center), best_f)
    }
}

struct Analysis {
    class: SectorClass,
    center: f64,
    rank: usize,
    /// Orthonormal row-space basis when the matrix was compressed.
    basis: Option<CMatrix>,
}

fn analyze(a: &CMatrix) -> Result<Analysis, PhaseError> {
    ensure_square(a)?;
    let n = a.nrows();
    let norm = spectral_norm(a);
    let rank = numerical_rank(a);
    if n == 0 || rank == 0 {
        return Ok(Analysis {
            class: SectorClass::QuasiSectorial,
            center: 0.0,
            rank: 0,
            basis: None,
        });
    }
    let eps = PD_RTOL * norm;
    let (center, fmax) = best_center(&Parts::new(a));
    if fmax > eps {
        return Ok(Analysis {
            class: SectorClass::Sectorial,
            center,
            rank,
            basis: None,
        });
    }
    if fmax < -eps {
        return Ok(Analysis {
            class: SectorClass::NonSectorial,
            center,
            rank,
            basis: None,
        });
    }
    // The numerical range touches the origin from a closed half-plane.
    let q = row_space_basis(a);
    let compressed = q.adjoint() * a * &q;
    let (c_center, c_fmax) = best_center(&Parts::new(&compressed));
    let c_eps = PD_RTOL * spectral_norm(&compressed);
    let (class, center) = if c_fmax > c_eps {
        (SectorClass::QuasiSectorial, c_center)
    } else if c_fmax >= -c_eps {
        (SectorClass::SemiSectorial, center)
    } else {
        (SectorClass::NonSectorial, center)
    };
    let basis = (rank < n).then_some(q);
    Ok(Analysis {
        class,
        center,
        rank,
        basis,
    })
}

/// Samples `k` support points of the numerical range, one per direction
/// `2 pi j / k`.
pub fn numerical_range_boundary(
    a: &CMatrix,
    k: usize,
) -> Result<Vec<crate::matrix::C64>, PhaseError> {
    ensure_square(a)?;
    assert!(k >= 3, "need at least three boundary directions");
    let parts = Parts::new(a);
    Ok((0..k)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / k as f64;
            let (_, vecs) = hermitian_eigen(&parts.rotated_hermitian(theta));
            let x = vecs.column(vecs.ncols() - 1).into_owned();
            (x.adjoint() * a * &x)[(0, 0)]
        })
        .collect())
}

pub fn classify(a: &CMatrix) -> Result<SectorClass, PhaseError> {
    Ok(analyze(a)?.class)
}

/// Angles `atan(eig(H^{-1/2} S H^{-1/2}))` of `e^{-i gamma} A`, ascending, for
/// `H` positive definite. Also returns the eigenvectors and `H^{1/2}`.
fn rotated_angles(a: &CMatrix, gamma: f64) -> Option<(Vec<f64>, CMatrix, CMatrix)> {
    let b = a * cis(-gamma);
    let h = hermitian_part(&b);
    let s = skew_part(&b);
    let (hvals, hvecs) = hermitian_eigen(&h);
    if hvals.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let sqrt_h = &hvecs
        * CMatrix::from_diagonal(&DVector::from_iterator(
            hvals.len(),
            hvals.iter().map(|v| c64(v.sqrt(), 0.0)),
        ))
        * hvecs.adjoint();
    let inv_sqrt_h = &hvecs
        * CMatrix::from_diagonal(&DVector::from_iterator(
            hvals.len(),
            hvals.iter().map(|v| c64(1.0 / v.sqrt(), 0.0)),
        ))
        * hvecs.adjoint();
    let c = &inv_sqrt_h * s * &inv_sqrt_h;
    let (lams, u) = hermitian_eigen(&c);
    Some((lams, u, sqrt_h))
}

/// Phases of a rotated matrix whose Hermitian part is only semidefinite.
/// Directions in the kernel of `H` carry phases at `+-pi/2`; a tiny diagonal
/// regularization resolves their sign through `S`.
fn semi_angles(a: &CMatrix, gamma: f64) -> Vec<f64> {
    let b = a * cis(-gamma);
    let h = hermitian_part(&b);
    let lmin = hermitian_eigen(&h).0[0];
    let shift = (-lmin).max(0.0) + 1e-13 * spectral_norm(a).max(f64::MIN_POSITIVE);
    let reg = &b + CMatrix::identity(a.nrows(), a.ncols()) * c64(shift, 0.0);
    rotated_angles(&reg, 0.0)
        .map(|(l, _, _)| l.iter().map(|x| x.atan()).collect())
        .unwrap_or_default()
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

pub fn phases(a: &CMatrix) -> Result<PhaseSpectrum, PhaseError> {
    let an = analyze(a)?;
    let target = match &an.basis {
        Some(q) => q.adjoint() * a * q,
        None => a.clone(),
    };
    let angles = match an.class {
        SectorClass::NonSectorial => return Err(PhaseError::NotPhaseDefined),
        _ if an.rank == 0 => Vec::new(),
        SectorClass::Sectorial | SectorClass::QuasiSectorial => {
            match rotated_angles(&target, an.center) {
                Some((lams, _, _)) => lams.iter().map(|l| an.center + l.atan()).collect(),
                None => semi_angles(&target, an.center)
                    .into_iter()
                    .map(|t| an.center + t)
                    .collect(),
            }
        }
        SectorClass::SemiSectorial => semi_angles(&target, an.center)
            .into_iter()
            .map(|t| an.center + t)
            .collect(),
    };
    Ok(PhaseSpectrum {
        phases: sorted_desc(angles),
        class: an.class,
        center: an.center,
        rank: an.rank,
    })
}

pub fn sectorial_factorization(a: &CMatrix) -> Result<SectorialFactorization, PhaseError> {
    let an = analyze(a)?;
    if an.class != SectorClass::Sectorial {
        return Err(PhaseError::NotSectorial(an.class));
    }
    let (lams, u, sqrt_h) =
        rotated_angles(a, an.center).ok_or(PhaseError::NotSectorial(an.class))?;
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lams[j].total_cmp(&lams[i]));
    let mut scaled_ut = CMatrix::zeros(n, n);
    let mut d = CMatrix::zeros(n, n);
    for (row, &k) in order.iter().enumerate() {
        let lam = lams[k];
        let scale = (1.0 + lam * lam).powf(0.25);
        for c in 0..n {
            scaled_ut[(row, c)] = u[(c, k)].conj() * scale;
        }
        d[(row, row)] = cis(an.center + lam.atan());
    }
    Ok(SectorialFactorization {
        t: scaled_ut * sqrt_h,
        d,
    })
}

/// Largest phase of `V^{1/2} L V^{-1/2}`, `v` the positive left null vector of
/// the Laplacian of a strongly connected digraph.
pub fn essential_phase(l: &CMatrix) -> Result<f64, PhaseError> {
    ensure_square(l)?;
    let n = l.nrows();
    let scale = l.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = LAPLACIAN_TOL * scale;
    for i in 0..n {
        let mut sum = c64(0.0, 0.0);
        for j in 0..n {
            let z = l[(i, j)];
            if z.im.abs() > tol {
                return Err(PhaseError::NotLaplacian(format!(
                    "entry ({i},{j}) is not real"
                )));
            }
            if i != j && z.re > tol {
                return Err(PhaseError::NotLaplacian(format!(
                    "off-diagonal entry ({i},{j}) is positive"
                )));
            }
            sum += z;
        }
        if sum.norm() > tol * n as f64 {
            return Err(PhaseError::NotLaplacian(format!(
                "row {i} sums to {:.3e}",
                sum.re
            )));
        }
    }
    if n <= 1 {
        return Ok(0.0);
    }
    let v = left_null_vector(l)?;

    // Orthonormal basis of the complement of sqrt(v) via a Householder reflector.
    let w = DVector::from_iterator(n, v.iter().map(|x| x.sqrt())).normalize();
    let mut u = w.clone();
    u[0] -= 1.0;
    let reflector = if u.norm() < 1e-14 {
        nalgebra::DMatrix::<f64>::identity(n, n)
    } else {
        let u = u.normalize();
        nalgebra::DMatrix::<f64>::identity(n, n) - (&u * u.transpose()) * 2.0
    };
    let q = reflector.columns(1, n - 1).map(|x| c64(x, 0.0));

    let mut scaled = l.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= (v[i] / v[j]).sqrt();
        }
    }
    let compressed = q.adjoint() * scaled * &q;
    let (lams, _, _) = rotated_angles(&compressed, 0.0).ok_or_else(|| {
        PhaseError::NotStronglyConnected("scaled Laplacian is not sectorial on 1^perp".into())
    })?;
    Ok(lams
        .iter()
        .map(|x| x.atan())
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Positive left null vector normalized to unit sum.
fn left_null_vector(l: &CMatrix) -> Result<Vec<f64>, PhaseError> {
    let n = l.nrows();
    let svd = crate::matrix::svd(l);
    let smax = svd.s[0];
    let rank = svd
        .s
        .iter()
        .filter(|&&x| x > crate::matrix::RANK_RTOL * smax)
        .count();
    if rank != n - 1 {
        return Err(PhaseError::NotStronglyConnected(format!(
            "zero eigenvalue has multiplicity {}",
            n - rank
        )));
    }
    let col = svd.u.column(n - 1);
    let mut v: Vec<f64> = col.iter().map(|z| z.re).collect();
    // Remove the arbitrary complex phase of the singular vector first.
    let pivot = col
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap();
    if pivot.norm() > 0.0 {
        let rot = pivot.conj() / pivot.norm();
        v = col.iter().map(|z| (z * rot).re).collect();
    }
    let sum: f64 = v.iter().sum();
    if sum < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let vmax = v.iter().copied().fold(0.0, f64::max);
    if v.iter().any(|&x| x <= 1e-12 * vmax) {
        return Err(PhaseError::NotStronglyConnected(
            "left null vector is not strictly positive".into(),
        ));
    }
    let total: f64 = v.iter().sum();
    Ok(v.into_iter().map(|x| x / total).collect())
}
