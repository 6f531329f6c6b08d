use proptest::prelude::*;
use spncs_core::numerics::{
    is_neg_semidefinite, mat_inv, mat_mul, norm, solve, spectral_norm, sym_eig_extremes, sym_eigenvalues, Matrix,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

fn any_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))
}

fn symmetric() -> impl Strategy<Value = Matrix> {
    (1usize..7).prop_flat_map(|n| matrix(n, n)).prop_map(|b| b.add(&b.transpose()).unwrap().scale(0.5))
}

/// Diagonally dominant, hence well conditioned.
fn dominant() -> impl Strategy<Value = Matrix> {
    (1usize..7).prop_flat_map(|n| matrix(n, n)).prop_map(|mut a| {
        let n = a.rows();
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
            let sign = if a.get(i, i) < 0.0 { -1.0 } else { 1.0 };
            a.set(i, i, sign * (off + 1.0));
        }
        a
    })
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().max_abs()
}

proptest! {
    #[test]
    fn transpose_is_involution(a in any_matrix()) {
        prop_assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn product_transpose_rule(a in matrix(3, 4), b in matrix(4, 2)) {
        let lhs = mat_mul(&a, &b).unwrap().transpose();
        let rhs = mat_mul(&b.transpose(), &a.transpose()).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn spectral_norm_between_entry_and_frobenius(a in any_matrix()) {
        let s = spectral_norm(&a);
        prop_assert!(s + 1e-12 >= a.max_abs());
        prop_assert!(s <= a.frobenius() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn spectral_norm_bounds_action(a in matrix(4, 3), v in prop::collection::vec(-3.0f64..3.0, 3)) {
        let av = a.apply(&v).unwrap();
        prop_assert!(norm(&av) <= spectral_norm(&a) * norm(&v) * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn spectral_norm_is_homogeneous(a in any_matrix(), s in -4.0f64..4.0) {
        let lhs = spectral_norm(&a.scale(s));
        prop_assert!((lhs - s.abs() * spectral_norm(&a)).abs() <= 1e-10 * (1.0 + lhs));
    }

    #[test]
    fn eigenvalues_sum_to_trace(a in symmetric()) {
        let ev = sym_eigenvalues(&a).unwrap();
        let trace: f64 = (0..a.rows()).map(|i| a.get(i, i)).sum();
        prop_assert!((ev.iter().sum::<f64>() - trace).abs() <= 1e-9 * (1.0 + a.frobenius()));
        let fro2: f64 = ev.iter().map(|l| l * l).sum();
        prop_assert!((fro2 - a.frobenius().powi(2)).abs() <= 1e-9 * (1.0 + fro2));
    }

    #[test]
    fn extremes_bracket_rayleigh_quotients(a in symmetric(), seed in prop::collection::vec(-1.0f64..1.0, 7)) {
        let (lo, hi) = sym_eig_extremes(&a).unwrap();
        let v = &seed[..a.rows()];
        let n2 = norm(v).powi(2);
        prop_assume!(n2 > 1e-6);
        let q = v.iter().zip(a.apply(v).unwrap()).map(|(x, y)| x * y).sum::<f64>() / n2;
        prop_assert!(lo - 1e-9 <= q && q <= hi + 1e-9);
    }

    #[test]
    fn shifted_matrix_is_nsd(a in symmetric()) {
        let (_, hi) = sym_eig_extremes(&a).unwrap();
        let shifted = a.sub(&Matrix::identity(a.rows()).scale(hi + 1e-6)).unwrap();
        prop_assert!(is_neg_semidefinite(&shifted, 1e-9).unwrap());
    }

    #[test]
    fn inverse_round_trip(a in dominant()) {
        let inv = mat_inv(&a).unwrap();
        let id = mat_mul(&a, &inv).unwrap();
        prop_assert!(max_abs_diff(&id, &Matrix::identity(a.rows())) <= 1e-10);
    }

    #[test]
    fn solve_residual(a in dominant(), b in prop::collection::vec(-5.0f64..5.0, 6)) {
        let n = a.rows();
        let rhs = Matrix::column(&b[..n]);
        let x = solve(&a, &rhs).unwrap();
        let r = mat_mul(&a, &x).unwrap();
        prop_assert!(max_abs_diff(&r, &rhs) <= 1e-10);
    }
}

#[test]
fn singular_matrix_is_rejected() {
    let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
    assert!(mat_inv(&a).is_err());
}

#[test]
fn asymmetric_input_is_rejected() {
    let a = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
    assert!(sym_eigenvalues(&a).is_err());
}

#[test]
fn known_spectrum() {
    let a = Matrix::from_rows(&[&[2.0, 1.0, 0.0], &[1.0, 2.0, 1.0], &[0.0, 1.0, 2.0]]);
    let mut ev = sym_eigenvalues(&a).unwrap();
    ev.sort_by(f64::total_cmp);
    let r2 = 2f64.sqrt();
    for (got, want) in ev.iter().zip([2.0 - r2, 2.0, 2.0 + r2]) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    assert!((spectral_norm(&Matrix::from_rows(&[&[3.0, 0.0], &[4.0, 5.0]])) - 45f64.sqrt()).abs() < 1e-12);
}
