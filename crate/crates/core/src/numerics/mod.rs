//! Dense complex kernels: Jacobi eigensolver, spectral functions of hermitian
//! matrices, and alternating-projection feasibility over the PSD cone.

mod dykstra;
mod eigh;

pub use dykstra::{
    dykstra_feasibility, AffineConstraint, BlockMatrix, FeasibilityOptions, FeasibilityOutcome, FeasibilityProblem,
    FeasiblePoint, Infeasibility, ProjectionScheme,
};
pub use eigh::{eigh_hermitian, Eigh};

use nalgebra::DMatrix;

pub type C64 = num_complex::Complex64;
pub type CMatrix = DMatrix<C64>;

/// Largest entrywise modulus of `m − m*`.
pub fn hermitian_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut r: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            r = r.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    r
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `tr(a·b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// `(m + m*)/2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Matrix unit `e_{ij}` of size `n`.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut e = CMatrix::zeros(n, n);
    e[(i, j)] = C64::new(1.0, 0.0);
    e
}

/// Operator norm (largest singular value) via the spectrum of `m*m`.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    match eigh_hermitian(&gram) {
        Ok(e) => e.values.first().copied().unwrap_or(0.0).max(0.0).sqrt(),
        Err(_) => frobenius(m),
    }
}

/// `V f(Λ) V*` for hermitian `m = V Λ V*`.
pub fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> crate::Result<CMatrix> {
    let e = eigh_hermitian(m)?;
    Ok(e.recompose_with(f))
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
pub fn project_psd(m: &CMatrix) -> crate::Result<CMatrix> {
    spectral_map(m, |x| x.max(0.0))
}

/// Square root of a PSD matrix; negative round-off eigenvalues are clipped.
pub fn sqrt_psd(m: &CMatrix) -> crate::Result<CMatrix> {
    spectral_map(m, |x| x.max(0.0).sqrt())
}

/// `(m)^{-1/2}` with eigenvalues floored at `delta`.
pub fn inv_sqrt_floor(m: &CMatrix, delta: f64) -> crate::Result<CMatrix> {
    spectral_map(m, |x| 1.0 / x.max(delta).sqrt())
}

/// Sum of absolute eigenvalues of a hermitian matrix.
pub fn trace_norm(m: &CMatrix) -> crate::Result<f64> {
    Ok(eigh_hermitian(m)?.values.iter().map(|v| v.abs()).sum())
}

/// Column-stacking vectorization: `vec(a)[i + n·j] = a[i, j]`.
pub fn vec_columns(a: &CMatrix) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_iterator(a.len(), a.iter().copied())
}

/// Inverse of [`vec_columns`] for a square `n×n` matrix.
pub fn unvec_columns(v: &[C64], n: usize) -> CMatrix {
    CMatrix::from_column_slice(n, n, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_is_column_stacking() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0), C64::new(4.0, 0.0)],
        );
        let v = vec_columns(&a);
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec_columns(v.as_slice(), 2), a);
    }

    #[test]
    fn operator_norm_of_rank_one() {
        let mut a = CMatrix::zeros(3, 3);
        a[(0, 2)] = C64::new(0.0, 2.0);
        assert!((operator_norm(&a) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn psd_projection_is_idempotent() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(2.0, 0.0), C64::new(-1.0, 0.0)],
        );
        let p = project_psd(&m).unwrap();
        let pp = project_psd(&p).unwrap();
        assert!(frobenius(&(p - pp)) < 1e-12);
    }
}
