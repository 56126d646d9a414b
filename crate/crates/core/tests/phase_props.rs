mod common;

use std::f64::consts::PI;

use nalgebra::DVector;
use phasealign::matrix::{c64, from_real, CMatrix};
use phasealign::phase::{
    classify, essential_phase, numerical_range_boundary, phases, sectorial_factorization,
    SectorClass,
};
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn congruence_preserves_phases(seed in any::<u64>(), n in 2usize..=5) {
        let (a, theta) = random_sectorial(n, &mut rng(seed));
        let p = phases(&a).unwrap();
        prop_assert_eq!(p.class, SectorClass::Sectorial);
        assert_close(&p.phases, &theta, 1e-8);
    }

    #[test]
    fn normal_phases_are_eigenvalue_arguments(seed in any::<u64>(), n in 2usize..=6) {
        let (a, _) = random_normal_sectorial(n, &mut rng(seed));
        let p = phases(&a).unwrap();
        // Independent route: eigenvalues from a complex Schur form, their
        // arguments unwrapped around the computed center.
        let eig = a.clone().schur().eigenvalues().unwrap();
        let mut args: Vec<f64> = eig.iter().map(|z| p.center + wrap(z.arg() - p.center)).collect();
        args.sort_by(|x, y| y.total_cmp(x));
        assert_close(&p.phases, &args, 1e-8);
    }

    #[test]
    fn factorization_reconstructs(seed in any::<u64>(), n in 1usize..=6) {
        let (a, _) = random_sectorial(n, &mut rng(seed));
        let f = sectorial_factorization(&a).unwrap();
        prop_assert!((f.reconstruct() - &a).norm() <= 1e-8 * a.norm());
        for i in 0..n {
            prop_assert!((f.d[(i, i)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_forms_stay_between_extreme_phases(seed in any::<u64>(), n in 2usize..=4) {
        let mut r = rng(seed);
        let (a, _) = random_sectorial(n, &mut r);
        let p = phases(&a).unwrap();
        let (lo, hi) = (p.min().unwrap() - 1e-6, p.max().unwrap() + 1e-6);
        for _ in 0..10_000 {
            let x = DVector::from_fn(n, |_, _| c64(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5)).normalize();
            let q = (x.adjoint() * &a * &x)[(0, 0)];
            let arg = p.center + wrap(q.arg() - p.center);
            prop_assert!(arg >= lo && arg <= hi, "{} outside [{}, {}]", arg, lo, hi);
        }
    }

    #[test]
    fn boundary_is_convex(seed in any::<u64>(), n in 1usize..=5) {
        let a = random_complex(n, n, &mut rng(seed));
        let pts = numerical_range_boundary(&a, 96).unwrap();
        let scale = a.norm().max(1.0);
        for k in 0..pts.len() {
            let (p0, p1, p2) = (pts[k], pts[(k + 1) % pts.len()], pts[(k + 2) % pts.len()]);
            let (e1, e2) = (p1 - p0, p2 - p1);
            let cross = e1.re * e2.im - e1.im * e2.re;
            prop_assert!(cross >= -1e-9 * scale * scale, "turn {} at {}", cross, k);
        }
    }

    #[test]
    fn classification_is_rotation_invariant(seed in any::<u64>(), n in 2usize..=4, rot in -3.0f64..3.0) {
        let a = random_complex(n, n, &mut rng(seed));
        let rotated = &a * phasealign::matrix::cis(rot);
        prop_assert_eq!(classify(&a).unwrap(), classify(&rotated).unwrap());
    }

    #[test]
    fn essential_phase_ignores_scaling_and_relabeling(seed in any::<u64>(), n in 2usize..=7, c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let l = phasealign::netsim::random_strongly_connected_laplacian(n, 0.3, &mut r);
        let phi = essential_phase(&l).unwrap();
        prop_assert!((essential_phase(&(&l * c64(c, 0.0))).unwrap() - phi).abs() < 1e-8);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(r.gen_range(0..n));
        let relabeled = CMatrix::from_fn(n, n, |i, j| l[(perm[i], perm[j])]);
        prop_assert!((essential_phase(&relabeled).unwrap() - phi).abs() < 1e-8);
        prop_assert!((essential_phase_oracle(&l, c) - phi).abs() < 1e-8);
    }
}

/// Phases of `V^{1/2} L V^{-1/2}` restricted to the complement of `sqrt(v)`,
/// with `v` found by a dense eigen-solve on `L^T` and rescaled by `c`.
fn essential_phase_oracle(l: &CMatrix, c: f64) -> f64 {
    let n = l.nrows();
    let lt = l.transpose().map(|z| z.re);
    let eig = lt.clone().complex_eigenvalues();
    let k = (0..n)
        .min_by(|&i, &j| eig[i].norm().total_cmp(&eig[j].norm()))
        .unwrap();
    assert!(eig[k].norm() < 1e-9);
    // Null vector of L^T by least squares on a bordered system.
    let mut bordered = nalgebra::DMatrix::<f64>::zeros(n + 1, n);
    bordered.view_mut((0, 0), (n, n)).copy_from(&lt);
    bordered.row_mut(n).fill(1.0);
    let mut rhs = nalgebra::DVector::<f64>::zeros(n + 1);
    rhs[n] = 1.0;
    // The system is consistent, so Householder QR solves it exactly.
    let qr = bordered.qr();
    let v = qr.r().solve_upper_triangular(&(qr.q().transpose() * rhs)).unwrap() * c;
    assert!(v.iter().all(|&x| x > 0.0));
    let scaled = CMatrix::from_fn(n, n, |i, j| l[(i, j)] * (v[i] / v[j]).sqrt());
    // Orthonormal complement of sqrt(v) by Gram-Schmidt on the standard basis.
    let w = v.map(f64::sqrt).normalize();
    let mut basis: Vec<nalgebra::DVector<f64>> = vec![w];
    for e in 0..n {
        let mut x = nalgebra::DVector::<f64>::zeros(n);
        x[e] = 1.0;
        for b in &basis {
            x -= b * b.dot(&x);
        }
        if x.norm() > 1e-8 && basis.len() < n {
            basis.push(x.normalize());
        }
    }
    let q = CMatrix::from_fn(n, n - 1, |i, j| c64(basis[j + 1][i], 0.0));
    let compressed = q.adjoint() * scaled * &q;
    phases(&compressed).unwrap().max().unwrap()
}

#[test]
fn essential_phase_matches_independent_construction() {
    let mut r = rng(11);
    for n in 2..8 {
        let l = phasealign::netsim::random_strongly_connected_laplacian(n, 0.4, &mut r);
        let phi = essential_phase(&l).unwrap();
        assert!((essential_phase_oracle(&l, 3.7) - phi).abs() < 1e-8);
    }
}

#[test]
fn symmetric_laplacians_have_zero_essential_phase() {
    let l = from_real(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
    assert!(essential_phase(&l).unwrap().abs() < 1e-8);
}
