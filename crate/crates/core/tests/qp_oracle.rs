mod common;

use common::oracle;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgflow::qp::{Polyhedron, QpSolver, QpStatus};

fn random_instance(rng: &mut ChaCha8Rng) -> (DVector<f64>, Polyhedron<f64>) {
    let n = rng.random_range(1..=4);
    let total = rng.random_range(0..=6);
    let k = rng.random_range(0..=total.min(n));
    let m = total - k;
    let mut gen = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0));
    let a = gen(m, n);
    let e = gen(k, n);
    let mut rng2 = ChaCha8Rng::seed_from_u64(rng.random());
    let b = DVector::from_fn(m, |_, _| rng2.random_range(-1.0..2.0));
    let e_rhs = DVector::from_fn(k, |_, _| rng2.random_range(-1.0..1.0));
    let point = DVector::from_fn(n, |_, _| rng2.random_range(-3.0..3.0));
    (point, Polyhedron::new(a, b, e, e_rhs))
}

#[test]
fn active_set_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut solver = QpSolver::default();
    let (mut optimal, mut degenerate, mut infeasible) = (0, 0, 0);
    for _ in 0..2000 {
        let (point, poly) = random_instance(&mut rng);
        let sol = solver.project(&point, &poly).unwrap();
        let oracle = oracle::project(&point, &poly.a, &poly.b, &poly.e, &poly.e_rhs);
        match oracle.xi {
            Some(xi) => {
                assert!(
                    matches!(sol.status, QpStatus::Optimal | QpStatus::Degenerate),
                    "oracle found {xi}, got {:?}",
                    sol.status
                );
                assert!((&sol.xi - &xi).amax() <= 1e-8, "{} vs {}", sol.xi, xi);
                let obj = 0.5 * (&sol.xi - &point).norm_squared();
                assert!((obj - oracle.objective).abs() <= 1e-10 * oracle.objective.max(1.0), "obj {obj} oracle {} diff {} xi diff {}", oracle.objective, obj - oracle.objective, (&sol.xi - &xi).amax());
                if sol.status == QpStatus::Optimal {
                    assert!(sol.kkt_residual <= 1e-9);
                    optimal += 1;
                } else {
                    degenerate += 1;
                }
            }
            None => {
                assert_eq!(sol.status, QpStatus::Infeasible);
                infeasible += 1;
            }
        }
    }
    assert!(optimal > 1000 && infeasible > 10, "{optimal} optimal, {infeasible} infeasible");
    assert!(degenerate * 100 <= optimal, "{degenerate} degenerate");
}

#[test]
fn infeasibility_certificates_are_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut solver = QpSolver::default();
    let mut seen = 0;
    for _ in 0..2000 {
        let (point, poly) = random_instance(&mut rng);
        let sol = solver.project(&point, &poly).unwrap();
        if sol.status != QpStatus::Infeasible {
            continue;
        }
        seen += 1;
        let cert = sol.certificate.expect("infeasible solutions carry a certificate");
        let m = poly.a.nrows();
        let y = cert.rows(0, m).into_owned();
        let w = cert.rows(m, poly.e.nrows()).into_owned();
        assert!(y.iter().all(|t| *t >= -1e-12));
        let combo = poly.a.transpose() * &y + poly.e.transpose() * &w;
        let scale = cert.amax().max(1.0);
        assert!(combo.amax() <= 1e-9 * scale, "{combo}");
        assert!(poly.b.dot(&y) + poly.e_rhs.dot(&w) < 0.0);
    }
    assert!(seen > 0);
}

fn fixed_polyhedron() -> Polyhedron<f64> {
    let a = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.5, 0.3, -2.0, 1.0]);
    let b = DVector::from_column_slice(&[1.0, 0.5, 0.2, 1.5]);
    let e = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.2]);
    Polyhedron::new(a, b, e, DVector::from_column_slice(&[0.1]))
}

proptest! {
    #[test]
    fn projection_is_nonexpansive(
        p in prop::collection::vec(-4.0f64..4.0, 3),
        q in prop::collection::vec(-4.0f64..4.0, 3),
    ) {
        let poly = fixed_polyhedron();
        let mut solver = QpSolver::default();
        let p = DVector::from_vec(p);
        let q = DVector::from_vec(q);
        let sp = solver.project(&p, &poly).unwrap();
        let sq = solver.project(&q, &poly).unwrap();
        prop_assert_eq!(sp.status, QpStatus::Optimal);
        prop_assert!((&sp.xi - &sq.xi).norm() <= (&p - &q).norm() + 1e-12);
    }

    #[test]
    fn optimal_solutions_satisfy_stationarity(p in prop::collection::vec(-4.0f64..4.0, 3)) {
        let poly = fixed_polyhedron();
        let p = DVector::from_vec(p);
        let sol = QpSolver::default().project(&p, &poly).unwrap();
        let r = &sol.xi - &p + poly.a.transpose() * &sol.mult_ineq + poly.e.transpose() * &sol.mult_eq;
        prop_assert!(r.amax() <= 1e-9);
        prop_assert!(sol.mult_ineq.iter().all(|u| *u >= -1e-9));
        let slack = &poly.a * &sol.xi - &poly.b;
        for i in 0..4 {
            prop_assert!((sol.mult_ineq[i] * slack[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn dual_program_objective_matches_primal(p in prop::collection::vec(-4.0f64..4.0, 3)) {
        // Strong duality for the projection: the dual optimum of
        // ½wᵀ(JJᵀ)w + (Jp ... ) equals the primal optimum up to sign.
        let poly = fixed_polyhedron();
        let p = DVector::from_vec(p);
        let primal = QpSolver::default().project(&p, &poly).unwrap();
        let jac = {
            let mut j = DMatrix::zeros(5, 3);
            j.rows_mut(0, 4).copy_from(&poly.a);
            j.rows_mut(4, 1).copy_from(&poly.e);
            j
        };
        let rhs = DVector::from_column_slice(&[poly.b[0], poly.b[1], poly.b[2], poly.b[3], poly.e_rhs[0]]);
        // min ½‖ξ − p‖² s.t. Jξ ≤/= r  has dual  min ½wᵀJJᵀw + (r − Jp)ᵀw
        let gram = &jac * jac.transpose();
        let lin = &rhs - &jac * &p;
        let dual = QpSolver::default().solve_dual(&gram, &lin, 4).unwrap();
        prop_assert_eq!(dual.status, QpStatus::Optimal);
        let mut w = DVector::zeros(5);
        w.rows_mut(0, 4).copy_from(&dual.u);
        w[4] = dual.v[0];
        let dual_obj = 0.5 * w.dot(&(&gram * &w)) + lin.dot(&w);
        let primal_obj = 0.5 * (&primal.xi - &p).norm_squared();
        prop_assert!((dual_obj + primal_obj).abs() <= 1e-9, "{} vs {}", dual_obj, primal_obj);
        let xi = &p - jac.transpose() * &w;
        prop_assert!((xi - &primal.xi).amax() <= 1e-8);
    }
}

#[test]
fn singular_gram_dual_objective_is_unique() {
    // Two identical constraint rows: gram singular, lin in its row space.
    let jac = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let gram = &jac * jac.transpose();
    let p = DVector::from_column_slice(&[2.0, 2.0]);
    let rhs = DVector::from_column_slice(&[1.0, 1.0]);
    let lin = &rhs - &jac * &p;
    let dual = QpSolver::default().solve_dual(&gram, &lin, 2).unwrap();
    assert_eq!(dual.status, QpStatus::Optimal);
    let w: DVector<f64> = DVector::from_column_slice(&[dual.u[0], dual.u[1]]);
    let dual_obj: f64 = 0.5 * w.dot(&(&gram * &w)) + lin.dot(&w);
    let primal = QpSolver::default()
        .project(&p, &Polyhedron::inequalities(jac.clone(), rhs.clone()))
        .unwrap();
    let primal_obj: f64 = 0.5 * (&primal.xi - &p).norm_squared();
    assert!((dual_obj + primal_obj).abs() < 1e-10);
}
