//! Dense kernels shared by the filters: SVD of rectangular pre-arrays, the
//! spectral covariance representation `P = Q D Q^T`, and a thresholded
//! diagonal inverse.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FilterError, Result};
use crate::scalar::Scalar;

/// Iteration cap handed to the nalgebra eigen solver.
const MAX_SOLVER_ITERATIONS: usize = 10_000;

const MAX_JACOBI_SWEEPS: usize = 60;

/// Covariance held as an orthogonal factor and the square roots of its
/// eigenvalues: `P = Q diag(d)^2 Q^T`.
///
/// `d_sqrt` is non-negative and sorted in non-increasing order; rank
/// deficiency shows up as trailing zeros, never as a smaller matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactors<T: Scalar> {
    q_factor: DMatrix<T>,
    d_sqrt: DVector<T>,
}

impl<T: Scalar> SpectralFactors<T> {
    /// Builds factors from an orthogonal matrix and a diagonal square root.
    pub fn new(q_factor: DMatrix<T>, d_sqrt: DVector<T>) -> Result<Self> {
        let n = d_sqrt.len();
        if q_factor.nrows() != n || q_factor.ncols() != n {
            return Err(FilterError::InvalidInput(format!(
                "orthogonal factor is {}x{}, expected {n}x{n}",
                q_factor.nrows(),
                q_factor.ncols()
            )));
        }
        if d_sqrt.iter().any(|d| !d.is_finite() || *d < T::zero()) {
            return Err(FilterError::InvalidInput(
                "diagonal factor must be finite and non-negative".into(),
            ));
        }
        if d_sqrt.as_slice().windows(2).any(|w| w[1] > w[0]) {
            return Err(FilterError::InvalidInput(
                "diagonal factor must be sorted in non-increasing order".into(),
            ));
        }
        let tol = T::lit(1e-12).max(T::lit(1e3) * T::from_count(n.max(1)) * T::ulp());
        let defect = orthogonality_defect(&q_factor);
        if !(defect <= tol) {
            return Err(FilterError::InvalidInput(format!(
                "factor is not orthogonal (defect {:e})",
                defect.as_f64()
            )));
        }
        Ok(Self { q_factor, d_sqrt })
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts(q_factor: DMatrix<T>, d_sqrt: DVector<T>) -> Self {
        Self { q_factor, d_sqrt }
    }

    /// Factors of `scale^2 * I_n`.
    pub fn scaled_identity(n: usize, scale: T) -> Self {
        Self {
            q_factor: DMatrix::identity(n, n),
            d_sqrt: DVector::from_element(n, scale.abs()),
        }
    }

    pub fn dim(&self) -> usize {
        self.d_sqrt.len()
    }

    pub fn q_factor(&self) -> &DMatrix<T> {
        &self.q_factor
    }

    pub fn d_sqrt(&self) -> &DVector<T> {
        &self.d_sqrt
    }

    /// The square root `S = Q diag(d)`, so that `P = S S^T`.
    pub fn sqrt_factor(&self) -> DMatrix<T> {
        let mut s = self.q_factor.clone();
        for (j, d) in self.d_sqrt.iter().enumerate() {
            s.column_mut(j).scale_mut(*d);
        }
        s
    }

    /// The symmetric square root `Q diag(d) Q^T`. Unlike
    /// [`sqrt_factor`](Self::sqrt_factor) it does not depend on how
    /// eigenvectors of repeated eigenvalues were chosen.
    pub fn symmetric_sqrt(&self) -> DMatrix<T> {
        let mut s = self.sqrt_factor() * self.q_factor.transpose();
        symmetrize(&mut s);
        s
    }

    /// `Q diag(d)^2 Q^T`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let s = self.sqrt_factor();
        let mut p = &s * s.transpose();
        symmetrize(&mut p);
        p
    }
}

/// Rectangular matrix `r x c` (`r <= c`) whose Gram matrix is the covariance
/// being factored.
#[derive(Debug, Clone, PartialEq)]
pub struct PreArray<T: Scalar>(DMatrix<T>);

impl<T: Scalar> PreArray<T> {
    pub fn new(data: DMatrix<T>) -> Result<Self> {
        if data.nrows() == 0 || data.nrows() > data.ncols() {
            return Err(FilterError::InvalidInput(format!(
                "pre-array must have 0 < rows <= cols, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !all_finite(&data) {
            return Err(FilterError::InvalidInput("pre-array has non-finite entries".into()));
        }
        Ok(Self(data))
    }

    /// Horizontal concatenation `[left, right]`.
    pub fn from_blocks(left: &DMatrix<T>, right: &DMatrix<T>) -> Result<Self> {
        if left.nrows() != right.nrows() {
            return Err(FilterError::InvalidInput(format!(
                "pre-array blocks have {} and {} rows",
                left.nrows(),
                right.nrows()
            )));
        }
        let r = left.nrows();
        let mut data = DMatrix::zeros(r, left.ncols() + right.ncols());
        data.columns_mut(0, left.ncols()).copy_from(left);
        data.columns_mut(left.ncols(), right.ncols()).copy_from(right);
        Self::new(data)
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.0
    }

    /// `A A^T`.
    pub fn gram(&self) -> DMatrix<T> {
        &self.0 * self.0.transpose()
    }

    /// Decomposes the pre-array; the left factor and singular values are the
    /// spectral factors of its Gram matrix.
    pub fn factor(&self) -> Result<SpectralFactors<T>> {
        let (w, s) = svd_post_arrays(self)?;
        Ok(SpectralFactors::from_parts(w, s))
    }
}

/// Left singular vectors `W` (`r x r`) and singular values `s` (length `r`) of
/// `pre = W [diag(s) 0] V^T`. `V` is not formed.
///
/// Singular values come back in non-increasing order and each column of `W`
/// has its largest-magnitude entry positive.
pub fn svd_post_arrays<T: Scalar>(pre: &PreArray<T>) -> Result<(DMatrix<T>, DVector<T>)> {
    let data = pre.data();
    let r = data.nrows();
    if !all_finite(data) {
        return Err(FilterError::InvalidInput("pre-array has non-finite entries".into()));
    }
    // Householder QR of the transpose reduces to a square triangle with the
    // same Gram matrix; one-sided Jacobi on that triangle gives the factors
    // to full relative accuracy.
    let tri = data.transpose().qr().r();
    let (v, norms) = one_sided_jacobi(tri)?;
    let (w, s) = ordered_columns(&v, norms.as_slice(), r);
    if !all_finite(&w) || s.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::NumericalFailure("SVD produced non-finite factors".into()));
    }
    Ok((w, s))
}

/// Orthogonal `V` and column norms of `A V`, where the columns of `A V` are
/// mutually orthogonal. `A^T A = V diag(norms)^2 V^T`.
fn one_sided_jacobi<T: Scalar>(mut a: DMatrix<T>) -> Result<(DMatrix<T>, DVector<T>)> {
    let n = a.ncols();
    let mut v = DMatrix::<T>::identity(n, n);
    let tol = T::ulp() * T::from_count(a.nrows().max(1));
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let t = if zeta == T::zero() { T::one() } else { t };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            let norms = DVector::from_iterator(n, a.column_iter().map(|col| col.norm()));
            return Ok((v, norms));
        }
    }
    Err(FilterError::NumericalFailure("Jacobi SVD did not converge".into()))
}

fn rotate_columns<T: Scalar>(m: &mut DMatrix<T>, p: usize, q: usize, c: T, s: T) {
    for i in 0..m.nrows() {
        let x = m[(i, p)];
        let y = m[(i, q)];
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Spectral factors of a symmetric positive semi-definite matrix.
///
/// Eigenvalues that are negative but within `1e-12 * ||p||` of zero are
/// clamped; anything more negative is an error.
pub fn spectral_from_dense<T: Scalar>(p: &DMatrix<T>) -> Result<SpectralFactors<T>> {
    let n = p.nrows();
    if n == 0 || p.ncols() != n {
        return Err(FilterError::InvalidInput(format!(
            "expected a non-empty square matrix, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    if !all_finite(p) {
        return Err(FilterError::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = p.amax();
    let asym = (p - p.transpose()).amax();
    if asym > T::lit(1e-10).max(T::lit(100.0) * T::ulp()) * scale {
        return Err(FilterError::InvalidInput(format!(
            "matrix is not symmetric (asymmetry {:e})",
            asym.as_f64()
        )));
    }
    let mut sym = p.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::try_new(sym, T::ulp(), MAX_SOLVER_ITERATIONS)
        .ok_or_else(|| FilterError::NumericalFailure("eigendecomposition did not converge".into()))?;
    let norm = eig.eigenvalues.amax();
    let floor = -(T::lit(1e-12).max(T::lit(10.0) * T::from_count(n) * T::ulp())) * norm;
    let min_eig = eig.eigenvalues.min();
    if min_eig < floor {
        return Err(FilterError::NotPositiveSemiDefinite {
            min_eigenvalue: min_eig.as_f64(),
        });
    }
    let roots: Vec<T> = eig
        .eigenvalues
        .iter()
        .map(|&l| l.max(T::zero()).sqrt())
        .collect();
    let (q, d) = ordered_columns(&eig.eigenvectors, &roots, n);
    Ok(SpectralFactors::from_parts(q, d))
}

/// Pseudo-inverse of a non-increasing, non-negative diagonal: entries at or
/// below `rows * ulp * s[0]` map to zero.
pub fn thresholded_reciprocal<T: Scalar>(s: &DVector<T>, rows: usize) -> DVector<T> {
    let largest = s.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let threshold = T::from_count(rows.max(1)) * T::ulp() * largest;
    s.map(|v| if v > threshold { T::one() / v } else { T::zero() })
}

/// Replaces `p` with `(p + p^T) / 2`.
pub fn symmetrize<T: Scalar>(p: &mut DMatrix<T>) {
    let n = p.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (p[(i, j)] + p[(j, i)]) * half;
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// `max |Q^T Q - I|`.
pub fn orthogonality_defect<T: Scalar>(q: &DMatrix<T>) -> T {
    let n = q.ncols();
    (q.transpose() * q - DMatrix::<T>::identity(n, n)).amax()
}

pub fn all_finite<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Largest absolute difference relative to the larger of the two magnitudes.
pub fn relative_discrepancy<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let scale = a.amax().max(b.amax());
    let diff = (a - b).amax();
    if scale > T::zero() {
        diff / scale
    } else {
        diff
    }
}

/// Sorts `values` descending, permutes the first `k` columns of `vectors` to
/// match, and fixes each column's sign.
fn ordered_columns<T: Scalar>(vectors: &DMatrix<T>, values: &[T], k: usize) -> (DMatrix<T>, DVector<T>) {
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rows = vectors.nrows();
    let mut w = DMatrix::zeros(rows, k);
    let mut s = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vectors.column(src).clone_owned();
        let pivot = col.iter().fold((T::zero(), T::zero()), |(best_abs, best), &v| {
            if v.abs() > best_abs {
                (v.abs(), v)
            } else {
                (best_abs, best)
            }
        });
        if pivot.1 < T::zero() {
            col.neg_mut();
        }
        w.set_column(dst, &col);
        s[dst] = values[src].abs();
    }
    (w, s)
}
