use super::{CMatrix, C64};
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-8;

/// Spectral decomposition `M = V·diag(values)·V*` of a hermitian matrix.
///
/// Eigenvalues are sorted in descending order; column `k` of `vectors` is the
/// eigenvector for `values[k]`, with its first entry of modulus above 1e-12
/// rotated to be real and positive.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
    pub sweeps: usize,
}

impl Eigh {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> nalgebra::DVector<C64> {
        self.vectors.column(k).into_owned()
    }

    /// `V f(Λ) V*`.
    pub fn recompose_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for j in 0..n {
                let vj = v[j].conj() * w;
                if vj == C64::new(0.0, 0.0) {
                    continue;
                }
                for i in 0..n {
                    out[(i, j)] += v[i] * vj;
                }
            }
        }
        out
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

/// Cyclic complex Jacobi eigensolver for hermitian matrices.
///
/// Each rotation first removes the phase of the pivot `a_pq`, then applies the
/// real symmetric Jacobi rotation to the resulting 2×2 block. Sweeps visit
/// pivots in row-major order `(0,1), (0,2), …, (n−2,n−1)` and stop once the
/// off-diagonal Frobenius mass is at most `1e-12·‖M‖_F`.
pub fn eigh_hermitian(m: &CMatrix) -> Result<Eigh> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Shape(format!("eigh of non-square {}x{}", n, m.ncols())));
    }
    let scale = super::max_abs(m).max(1.0);
    let residual = super::hermitian_residual(m);
    if residual > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { residual });
    }

    // Row-major working copy of the hermitian part.
    let mut a = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
        }
    }
    let mut v = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = C64::new(1.0, 0.0);
    }

    let norm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let threshold = OFF_DIAGONAL_TOL * norm;
    let mut sweeps = 0;
    let mut converged = norm == 0.0;

    while !converged && sweeps < MAX_SWEEPS {
        let off = off_diagonal_mass(&a, n);
        if off <= threshold {
            converged = true;
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, n, p, q);
            }
        }
    }
    if !converged && off_diagonal_mass(&a, n) > threshold {
        return Err(Error::Numerical(format!("Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].re.total_cmp(&a[i * n + i].re).then(i.cmp(&j)));

    let values: Vec<f64> = order.iter().map(|&k| a[k * n + k].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let phase = (0..n)
            .map(|i| v[i * n + k])
            .find(|z| z.norm() > 1e-12)
            .map(|z| z.conj() / z.norm())
            .unwrap_or(C64::new(1.0, 0.0));
        for i in 0..n {
            vectors[(i, col)] = v[i * n + k] * phase;
        }
    }
    Ok(Eigh { values, vectors, sweeps })
}

fn off_diagonal_mass(a: &[C64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut [C64], v: &mut [C64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let alpha = a[p * n + p].re;
    let gamma = a[q * n + q].re;
    let e = apq / g;

    let theta = (gamma - alpha) / (2.0 * g);
    let t = if theta.is_finite() { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) } else { 0.0 };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // G = diag(1, ē)·[[c, s], [−s, c]]
    let g_pp = C64::new(c, 0.0);
    let g_pq = C64::new(s, 0.0);
    let g_qp = -e.conj() * s;
    let g_qq = e.conj() * c;

    // A ← A·G
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = akp * g_pp + akq * g_qp;
        a[k * n + q] = akp * g_pq + akq * g_qq;
    }
    // A ← G*·A
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = g_pp.conj() * apk + g_qp.conj() * aqk;
        a[q * n + k] = g_pq.conj() * apk + g_qq.conj() * aqk;
    }
    a[p * n + q] = C64::new(0.0, 0.0);
    a[q * n + p] = C64::new(0.0, 0.0);
    a[p * n + p] = C64::new(a[p * n + p].re, 0.0);
    a[q * n + q] = C64::new(a[q * n + q].re, 0.0);

    // V ← V·G
    for k in 0..n {
        let vkp = v[k * n + p];
        let vkq = v[k * n + q];
        v[k * n + p] = vkp * g_pp + vkq * g_qp;
        v[k * n + q] = vkp * g_pq + vkq * g_qq;
    }
}
