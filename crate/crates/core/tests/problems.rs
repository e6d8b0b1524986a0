use proptest::prelude::*;

use hjb_core::linalg::Matrix;
use hjb_core::problems::{ControlProblem, Domain};

#[test]
fn nonlinear_factor_at_two_zero() {
    let p = ControlProblem::nonlinear2d(1.0).unwrap();
    let a = p.eval_a(&[2.0, 0.0]).unwrap();
    assert_eq!(a, Matrix::from_rows(&[&[0.0, 1.0], &[4.0, 0.0]]));
    assert_eq!(p.eval_g(&[2.0, 0.0]).unwrap(), Matrix::column(&[0.0, 1.0]));
}

#[test]
fn cucker_smale_with_coincident_positions() {
    let p = ControlProblem::cucker_smale(5).unwrap();
    let mut x = vec![0.7; 5];
    x.extend([0.1, -0.2, 0.3, 0.0, 1.0]);
    let a = p.eval_a(&x).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let expected = if i == j { -0.8 } else { 0.2 };
            assert!((a[(5 + i, 5 + j)] - expected).abs() < 1e-15);
            assert_eq!(a[(i, 5 + j)], if i == j { 1.0 } else { 0.0 });
            assert_eq!(a[(i, j)], 0.0);
            assert_eq!(a[(5 + i, j)], 0.0);
        }
    }
}

#[test]
fn cucker_smale_costs_and_actuation() {
    let p = ControlProblem::cucker_smale(5).unwrap();
    assert_eq!((p.dim(), p.control_dim()), (10, 5));
    assert_eq!(p.q(), &Matrix::identity(10).scale(0.2));
    assert_eq!(p.r(), &Matrix::identity(5));
    let g = p.eval_g(&[0.0; 10]).unwrap();
    assert_eq!(g.block(0, 0, 5, 5), Matrix::zeros(5, 5));
    assert_eq!(g.block(5, 0, 5, 5), Matrix::identity(5));
    assert_eq!(p.domain(), &Domain::cube(10, -3.0, 3.0).unwrap());
}

#[test]
fn running_cost_examples() {
    let lin = ControlProblem::linear2d();
    assert!((lin.running_cost(&[1.0, 0.0], &[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    assert!((lin.running_cost(&[0.0, 0.0], &[1.0, 0.0]).unwrap() - 0.1).abs() < 1e-15);
    let cs = ControlProblem::cucker_smale(5).unwrap();
    assert!((cs.running_cost(&[1.0; 10], &[0.0; 5]).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn control_shape_is_checked() {
    let cs = ControlProblem::cucker_smale(5).unwrap();
    assert!(cs.vector_field(&[0.0; 10], &[0.0; 4]).is_err());
    assert!(cs.eval_a(&[0.0; 9]).is_err());
    assert!(ControlProblem::nonlinear2d(-1.0).is_err());
    assert!(ControlProblem::nonlinear2d(f64::NAN).is_err());
    assert!(ControlProblem::cucker_smale(0).is_err());
}

fn state(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0..3.0f64, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cucker_smale_coupling_rows_sum_to_zero(x in state(10)) {
        let a = ControlProblem::cucker_smale(5).unwrap().eval_a(&x).unwrap();
        for i in 5..10 {
            let s: f64 = (5..10).map(|j| a[(i, j)]).sum();
            prop_assert!(s.abs() <= 1e-14, "row {i} sums to {s:e}");
        }
    }

    #[test]
    fn coupling_symmetric_in_agents(x in state(10)) {
        let a = ControlProblem::cucker_smale(5).unwrap().eval_a(&x).unwrap();
        for i in 5..10 {
            for j in 5..10 {
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
    }

    #[test]
    fn semilinear_consistency(x in state(10), u in proptest::collection::vec(-2.0..2.0f64, 5), eps in 1e-3..100.0f64) {
        let cases = [
            (ControlProblem::linear2d(), 2usize),
            (ControlProblem::nonlinear2d(eps).unwrap(), 2),
            (ControlProblem::cucker_smale(5).unwrap(), 10),
        ];
        for (p, n) in cases {
            let x = &x[..n];
            let u = &u[..p.control_dim()];
            let by_parts: Vec<f64> = p
                .eval_a(x).unwrap().matvec(x).iter()
                .zip(p.eval_g(x).unwrap().matvec(u))
                .map(|(a, b)| a + b)
                .collect();
            prop_assert_eq!(p.vector_field(x, u).unwrap(), by_parts);
        }
    }

    #[test]
    fn nonlinear_factor_ignores_x2(x1 in -2.0..2.0f64, x2 in -2.0..2.0f64, y2 in -2.0..2.0f64) {
        let p = ControlProblem::nonlinear2d(1.5).unwrap();
        prop_assert_eq!(p.eval_a(&[x1, x2]).unwrap(), p.eval_a(&[x1, y2]).unwrap());
    }
}
