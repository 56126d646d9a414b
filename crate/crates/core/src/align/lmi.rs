//! Real conic embedding of the alignment LMIs, solved with Clarabel.
//!
//! Unknown `K` (n x m complex) is stored as `2nm` reals: real parts row-major,
//! then imaginary parts. For every member `A` with `P = A K`:
//!
//! ```text
//! [ He(P)  K ; K^H  I ] >= 0                 (He(P) >= K K^H, square case)
//! tan(alpha) He(P) - Sk(P) >= 0
//! tan(alpha) He(P) + Sk(P) >= 0
//! ```
//!
//! Complex Hermitian blocks become real symmetric `[[Re, -Im], [Im, Re]]`
//! blocks in Clarabel's scaled upper-triangular PSD cone.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::matrix::{c64, hermitian_part, skew_part, CMatrix};

/// Diagonal slack added to every LMI block before solving.
pub const LMI_SHIFT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LmiOutcome {
    /// Candidate `K`, still to be verified.
    Candidate(CMatrix),
    Infeasible,
    /// Solver stopped without a conclusion; the last iterate, if usable.
    Inconclusive {
        iterate: Option<CMatrix>,
        status: String,
    },
}

/// Affine Hermitian matrix function `F(K)`.
type Block<'a> = Box<dyn Fn(&CMatrix) -> CMatrix + 'a>;

fn blocks<'a>(members: &'a [&'a CMatrix], alpha: f64) -> Vec<Block<'a>> {
    let tan = alpha.tan();
    let mut out: Vec<Block<'a>> = Vec::with_capacity(3 * members.len());
    for &a in members {
        let (m, n) = a.shape();
        out.push(Box::new(move |k: &CMatrix| {
            let he = hermitian_part(&(a * k));
            if m == n {
                let mut blk = CMatrix::identity(2 * m, 2 * m);
                blk.view_mut((0, 0), (m, m)).copy_from(&he);
                blk.view_mut((0, m), (m, m)).copy_from(k);
                blk.view_mut((m, 0), (m, m)).copy_from(&k.adjoint());
                blk
            } else {
                // He(P) >= K^H K: the only dimensionally consistent form when m < n.
                let mut blk = CMatrix::identity(m + n, m + n);
                blk.view_mut((0, 0), (m, m)).copy_from(&he);
                blk.view_mut((0, m), (m, n)).copy_from(&k.adjoint());
                blk.view_mut((m, 0), (n, m)).copy_from(k);
                blk
            }
        }));
        out.push(Box::new(move |k: &CMatrix| {
            let p = a * k;
            hermitian_part(&p) * c64(tan, 0.0) - skew_part(&p)
        }));
        out.push(Box::new(move |k: &CMatrix| {
            let p = a * k;
            hermitian_part(&p) * c64(tan, 0.0) + skew_part(&p)
        }));
    }
    out
}

fn unpack(x: &[f64], n: usize, m: usize) -> CMatrix {
    let nm = n * m;
    CMatrix::from_fn(n, m, |r, c| c64(x[r * m + c], x[nm + r * m + c]))
}

fn unit(j: usize, n: usize, m: usize) -> CMatrix {
    let mut x = vec![0.0; 2 * n * m];
    x[j] = 1.0;
    unpack(&x, n, m)
}

/// Scaled upper-triangular vectorization of the real embedding of `h`.
fn svec_embedded(h: &CMatrix) -> Vec<f64> {
    let p = h.nrows();
    let dim = 2 * p;
    let entry = |i: usize, j: usize| -> f64 {
        let (bi, ii) = (i / p, i % p);
        let (bj, jj) = (j / p, j % p);
        let z = h[(ii, jj)];
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    };
    let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
    for j in 0..dim {
        for i in 0..=j {
            let v = entry(i, j);
            out.push(if i == j {
                v
            } else {
                v * std::f64::consts::SQRT_2
            });
        }
    }
    out
}

/// Runs the conic solver on the alignment LMIs. With `maximize_trace`, the
/// objective `sum_i tr He(A_i K)` keeps the solution away from `K = 0`;
/// otherwise a pure feasibility problem is posed.
pub fn solve_alignment_lmis(members: &[&CMatrix], alpha: f64, maximize_trace: bool) -> LmiOutcome {
    let (m, n) = members[0].shape();
    let nvar = 2 * n * m;
    let fns = blocks(members, alpha);
    let zero = CMatrix::zeros(n, m);

    let mut rows_i = Vec::new();
    let mut cols_j = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row0 = 0;
    let units: Vec<CMatrix> = (0..nvar).map(|j| unit(j, n, m)).collect();
    for f in &fns {
        let f0 = f(&zero);
        let p = f0.nrows();
        let shifted = &f0 + CMatrix::identity(p, p) * c64(LMI_SHIFT, 0.0);
        let b_blk = svec_embedded(&shifted);
        let len = b_blk.len();
        for (j, e) in units.iter().enumerate() {
            let fj = f(e) - &f0;
            for (r, v) in svec_embedded(&fj).into_iter().enumerate() {
                if v != 0.0 {
                    rows_i.push(row0 + r);
                    cols_j.push(j);
                    vals.push(-v);
                }
            }
        }
        b.extend(b_blk);
        cones.push(SupportedConeT::PSDTriangleConeT(2 * p));
        row0 += len;
    }
    let a_mat = CscMatrix::new_from_triplets(row0, nvar, rows_i, cols_j, vals);
    let p_mat = CscMatrix::zeros((nvar, nvar));
    let mut q = vec![0.0; nvar];
    if maximize_trace {
        let scale = 1.0 / members.len() as f64;
        for (j, e) in units.iter().enumerate() {
            q[j] = -scale * members.iter().map(|&a| (a * e).trace().re).sum::<f64>();
        }
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .build()
        .expect("valid solver settings");
    let mut solver = match DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings) {
        Ok(s) => s,
        Err(e) => {
            return LmiOutcome::Inconclusive {
                iterate: None,
                status: format!("solver setup failed: {e:?}"),
            }
        }
    };
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            LmiOutcome::Candidate(unpack(&sol.x, n, m))
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            LmiOutcome::Infeasible
        }
        status => LmiOutcome::Inconclusive {
            iterate: sol
                .x
                .iter()
                .all(|v| v.is_finite())
                .then(|| unpack(&sol.x, n, m)),
            status: format!("{status:?}"),
        },
    }
}
