//! Dense complex matrices and ordered matrix sets.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Dense complex matrix, row/column counts carried by the storage.
pub type CMatrix = DMatrix<C64>;

/// Singular values at or below this fraction of the largest one count as zero.
pub const RANK_RTOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix set is empty")]
    Empty,
    #[error("matrix {index} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    DimensionMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("matrix {index} has a non-finite entry")]
    NonFinite { index: usize },
    #[error("matrices must have rows <= cols, got {rows}x{cols}")]
    TooManyRows { rows: usize, cols: usize },
}

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// `e^{i theta}`.
pub fn cis(theta: f64) -> C64 {
    Complex::from_polar(1.0, theta)
}

pub fn diag(entries: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_row_slice(entries))
}

pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c64(x, 0.0)))
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).unscale(2.0)
}

/// `(A - A^H) / (2i)`, Hermitian, so that `A = hermitian_part(A) + i * skew_part(A)`.
pub fn skew_part(a: &CMatrix) -> CMatrix {
    (a - a.adjoint()) * c64(0.0, -0.5)
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Thin singular value decomposition `a = u diag(s) v^H`, `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

fn to_faer(a: &CMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

// nalgebra's bidiagonal SVD and symmetric eigensolver can stop early and
// return factors that are off by up to a few percent; faer's are used instead.

pub fn svd(a: &CMatrix) -> Svd {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Svd {
            u: CMatrix::zeros(a.nrows(), 0),
            s: Vec::new(),
            v: CMatrix::zeros(a.ncols(), 0),
        };
    }
    match to_faer(a).thin_svd() {
        Ok(d) => Svd {
            u: from_faer(d.U()),
            s: (0..k).map(|i| d.S()[i].re).collect(),
            v: from_faer(d.V()),
        },
        // Only reachable for non-finite input.
        Err(_) => Svd {
            u: CMatrix::from_element(a.nrows(), k, c64(f64::NAN, 0.0)),
            s: vec![f64::NAN; k],
            v: CMatrix::from_element(a.ncols(), k, c64(f64::NAN, 0.0)),
        },
    }
}

/// Singular values sorted in descending order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    svd(a).s
}

pub fn spectral_norm(a: &CMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn numerical_rank(a: &CMatrix) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > RANK_RTOL * smax).count(),
        _ => 0,
    }
}

/// Orthonormal basis (as columns) of the row space of `a`, i.e. the orthogonal
/// complement of its kernel.
pub fn row_space_basis(a: &CMatrix) -> CMatrix {
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let keep =
        d.s.iter()
            .take_while(|&&x| smax > 0.0 && x > RANK_RTOL * smax)
            .count();
    d.v.columns(0, keep).into_owned()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues ascending.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    match to_faer(&hermitian_part(h)).self_adjoint_eigen(faer::Side::Lower) {
        Ok(e) => ((0..n).map(|i| e.S()[i].re).collect(), from_faer(e.U())),
        Err(_) => (
            vec![f64::NAN; n],
            CMatrix::from_element(n, n, c64(f64::NAN, 0.0)),
        ),
    }
}

pub fn min_hermitian_eigenvalue(h: &CMatrix) -> f64 {
    hermitian_eigen(h)
        .0
        .first()
        .copied()
        .unwrap_or(f64::INFINITY)
}

/// Moore-Penrose pseudoinverse with the shared rank tolerance.
pub fn pseudo_inverse(a: &CMatrix) -> CMatrix {
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let inv: Vec<C64> =
        d.s.iter()
            .map(|&x| {
                c64(
                    if smax > 0.0 && x > RANK_RTOL * smax {
                        1.0 / x
                    } else {
                        0.0
                    },
                    0.0,
                )
            })
            .collect();
    &d.v * CMatrix::from_diagonal(&DVector::from_vec(inv)) * d.u.adjoint()
}

/// Ordered collection of equally shaped complex matrices. Indices are stable
/// identities used by every downstream output.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSet {
    matrices: Vec<CMatrix>,
}

impl MatrixSet {
    pub fn new(matrices: Vec<CMatrix>) -> Result<Self, MatrixError> {
        let first = matrices.first().ok_or(MatrixError::Empty)?;
        let (rows, cols) = first.shape();
        if rows > cols {
            return Err(MatrixError::TooManyRows { rows, cols });
        }
        for (index, m) in matrices.iter().enumerate() {
            if m.shape() != (rows, cols) {
                return Err(MatrixError::DimensionMismatch {
                    index,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    expected_rows: rows,
                    expected_cols: cols,
                });
            }
            if !is_finite(m) {
                return Err(MatrixError::NonFinite { index });
            }
        }
        Ok(Self { matrices })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// `(m, n)` shared by every member.
    pub fn shape(&self) -> (usize, usize) {
        self.matrices[0].shape()
    }

    pub fn get(&self, index: usize) -> &CMatrix {
        &self.matrices[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CMatrix> {
        self.matrices.iter()
    }

    pub fn as_slice(&self) -> &[CMatrix] {
        &self.matrices
    }

    /// Members selected by index, in the given order.
    pub fn subset(&self, members: &[usize]) -> Vec<&CMatrix> {
        members.iter().map(|&i| &self.matrices[i]).collect()
    }
}

impl TryFrom<Vec<CMatrix>> for MatrixSet {
    type Error = MatrixError;

    fn try_from(value: Vec<CMatrix>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<MatrixSet> for Vec<CMatrix> {
    fn from(value: MatrixSet) -> Self {
        value.matrices
    }
}

impl std::ops::Index<usize> for MatrixSet {
    type Output = CMatrix;

    fn index(&self, index: usize) -> &CMatrix {
        &self.matrices[index]
    }
}
