//! Random small QPs checked against exhaustive active-set enumeration.

use ccc_core::qp::{solve_qp, QpError, QpProblem, QpSettings};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves the KKT system for every subset of inequality rows and keeps the
/// primal-feasible, dual-feasible candidate with the lowest objective.
fn enumerate(qp: &QpProblem) -> Option<DVector<f64>> {
    let n = qp.dim();
    let me = qp.b_eq.len();
    let mi = qp.b_in.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << mi) {
        let act: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let k = me + act.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        for i in 0..n {
            rhs[i] = -qp.f[i];
        }
        let mut put = |row: usize, a: Vec<f64>, b: f64| {
            for j in 0..n {
                kkt[(n + row, j)] = a[j];
                kkt[(j, n + row)] = a[j];
            }
            rhs[n + row] = b;
        };
        for i in 0..me {
            put(i, qp.a_eq.row(i).iter().copied().collect(), qp.b_eq[i]);
        }
        for (r, &i) in act.iter().enumerate() {
            put(me + r, qp.a_in.row(i).iter().copied().collect(), qp.b_in[i]);
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        // multipliers of A x <= b rows enter as H x + f + A' y = 0
        if act.iter().enumerate().any(|(r, _)| sol[n + me + r] < -1e-9) {
            continue;
        }
        if qp.max_violation(&x) > 1e-9 {
            continue;
        }
        let obj = qp.objective(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.gen_range(1..=6);
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let me = rng.gen_range(0..=n.min(2)).min(n - 1);
    let mi = rng.gen_range(0..=8 - me);
    // rows built around a random point so most instances are feasible
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let a_eq = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
    let b_eq = &a_eq * &x0;
    let a_in = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
    let slack = DVector::from_fn(mi, |_, _| rng.gen_range(-0.3..1.0));
    let b_in = &a_in * &x0 + slack;
    QpProblem::new(h, f)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in)
}

#[test]
fn matches_enumeration_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut feasible = 0;
    let mut infeasible = 0;
    for _ in 0..400 {
        let qp = random_qp(&mut rng);
        let oracle = enumerate(&qp);
        match (solve_qp(&qp, &QpSettings::default()), oracle) {
            (Ok(sol), Some(x)) => {
                feasible += 1;
                assert!((&sol.x - &x).amax() < 1e-6, "solver {} oracle {}", sol.x, x);
                assert!(sol.kkt_residual(&qp) < 1e-6);
                assert!(sol.in_multipliers.iter().all(|&m| m >= 0.0));
            }
            (Err(QpError::Infeasible), None) => infeasible += 1,
            (got, want) => panic!("solver {got:?} vs oracle {want:?} on {qp:?}"),
        }
    }
    assert!(feasible > 200);
    assert!(infeasible > 0);
}

#[test]
fn solve_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let qp = random_qp(&mut rng);
        let a = solve_qp(&qp, &QpSettings::default());
        let b = solve_qp(&qp, &QpSettings::default());
        assert_eq!(a, b);
    }
}
