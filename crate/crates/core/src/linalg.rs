//! Dense real linear algebra used by the spectral code.

use nalgebra::{DMatrix, DVector};

/// Convergence threshold on the off-diagonal Frobenius norm.
pub const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// ascending.
///
/// Only the upper triangle is read. Sweeps stop once the off-diagonal
/// Frobenius norm drops below [`JACOBI_TOL`] (absolute), scaled up for large
/// matrices so that the threshold stays reachable in double precision.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    assert!(m.is_square(), "Jacobi needs a square matrix");
    let n = m.nrows();
    let mut a = m.clone();
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1.0);
    let tol = JACOBI_TOL.max(scale * n as f64 * f64::EPSILON);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) < tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Spectral radius estimate `‖M^(2^k)‖_F^(2^-k)` via `k` normalized
/// squarings (Gelfand's formula). Works for non-normal matrices and complex
/// eigenvalue pairs, where plain power iteration oscillates.
pub fn gelfand_radius(m: &DMatrix<f64>, squarings: u32) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let mut cur = m / norm;
    // log ‖M^(2^j)‖ tracked in log space to avoid under/overflow.
    let mut log_norm = norm.ln();
    for _ in 0..squarings {
        cur = &cur * &cur;
        let s = cur.norm();
        if s == 0.0 {
            return 0.0;
        }
        cur /= s;
        log_norm = 2.0 * log_norm + s.ln();
    }
    (log_norm / 2f64.powi(squarings as i32)).exp()
}

/// `M^(2^k) v` by repeated squaring.
pub fn power_of_two_apply(m: &DMatrix<f64>, k: u32, v: &DVector<f64>) -> DVector<f64> {
    let mut cur = m.clone();
    for _ in 0..k {
        cur = &cur * &cur;
    }
    cur * v
}

/// Column-stacking `vec` of a square matrix.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonal_and_2x2() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        assert_eq!(symmetric_eigenvalues(&d), vec![-1.0, 2.0, 3.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn gelfand_on_nilpotent_and_rotation() {
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(gelfand_radius(&nil, 10), 0.0);
        // 0.5 * rotation by 90 degrees: eigenvalues ±0.5i.
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        // Error decays like log(‖P‖)/2^k for the non-normal part.
        assert!((gelfand_radius(&rot, 40) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vec_stacks_columns() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec_of(&m).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    }
}
