//! Small dense kernels: cyclic Jacobi for symmetric spectra and a Kronecker
//! solve of the continuous Lyapunov equation.

use nalgebra::{DMatrix, DVector};

pub const JACOBI_TOL: f64 = 1e-12;

/// Largest `|a_ij − a_ji|` relative to the largest entry.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let scale = a.amax().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi
/// rotations until the off-diagonal mass falls below `1e−12` of the total.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let total = m.norm();
    if total == 0.0 {
        return vec![0.0; n];
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(f64::INFINITY)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest real part of the spectrum of a general square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `AᵀM + MA = −C` via the `n² × n²` Kronecker system. Returns the
/// symmetrized solution and the condition number of the system matrix.
pub fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let sv = k.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let rhs = DVector::from_column_slice((-c).as_slice());
    let x = k.lu().solve(&rhs)?;
    let m = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((symmetrize(&m), cond))
}

/// Largest `λ` with `X v = λ M v` for symmetric `X` and `M ≻ 0`.
pub fn max_generalized_eigenvalue(x: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<f64> {
    let l = m.clone().cholesky()?.l();
    let li = l.try_inverse()?;
    Some(max_eigenvalue(&symmetrize(&(&li * x * li.transpose()))))
}

/// Builds a matrix from row-major nested rows; all rows must share a length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("rows differ in length".into());
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonal_and_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let ev = sym_eigenvalues(&a);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 0.5]));
        assert_eq!(sym_eigenvalues(&d), vec![-1.0, 0.5, 3.0]);
    }

    #[test]
    fn jacobi_trace_and_frobenius_preserved() {
        let a = DMatrix::from_row_slice(4, 4, &[4., 1., -2., 2., 1., 2., 0., 1., -2., 0., 3., -2., 2., 1., -2., -1.]);
        let ev = sym_eigenvalues(&a);
        assert!((ev.iter().sum::<f64>() - a.trace()).abs() < 1e-12);
        assert!((ev.iter().map(|v| v * v).sum::<f64>() - a.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn lyapunov_scalar_and_matrix() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let (m, _) = lyapunov(&a, &DMatrix::identity(1, 1)).unwrap();
        assert!((m[(0, 0)] - 0.5).abs() < 1e-15);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let c = DMatrix::identity(2, 2);
        let (m, cond) = lyapunov(&a, &c).unwrap();
        let res = a.transpose() * &m + &m * &a + &c;
        assert!(res.amax() < 1e-12);
        assert!(cond.is_finite());
    }

    #[test]
    fn generalized_eigenvalue_of_scaled_identity() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let x = &m * 0.3;
        assert!((max_generalized_eigenvalue(&x, &m).unwrap() - 0.3).abs() < 1e-14);
    }
}
