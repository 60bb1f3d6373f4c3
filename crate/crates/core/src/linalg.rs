//! Dense linear-algebra helpers shared by the design and certification code.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Matrices in this
//! toolkit are small (a few dozen rows at most), so Kronecker-vectorised
//! solves are used for Lyapunov and Sylvester equations.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative tolerance for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-9;

/// Singular values of `m` (empty for degenerate shapes).
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Numerical rank: singular values below `rel_tol * sigma_max` count as zero.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Orthonormal basis (as rows) of the row space of `m`.
///
/// `scale` sets the reference magnitude for the rank cut; pass `None` to use
/// the largest singular value of `m` itself.
pub fn row_basis(m: &Mat, rel_tol: f64, scale: Option<f64>) -> Mat {
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        return Mat::zeros(0, n);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let max = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let reference = scale.unwrap_or(max);
    if reference == 0.0 {
        return Mat::zeros(0, n);
    }
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * reference)
        .map(|(k, _)| k)
        .collect();
    let mut out = Mat::zeros(keep.len(), n);
    for (r, &k) in keep.iter().enumerate() {
        out.set_row(r, &v_t.row(k));
    }
    out
}

/// Orthonormal basis (rows) of the orthogonal complement of the row space
/// of `rows`, which must already be orthonormal.
pub fn orth_complement(rows: &Mat, n: usize) -> Mat {
    if rows.nrows() == 0 {
        return Mat::identity(n, n);
    }
    let proj = Mat::identity(n, n) - rows.transpose() * rows;
    row_basis(&proj, 1e-8, Some(1.0))
}

/// Stack two row blocks vertically.
pub fn vstack(top: &Mat, bottom: &Mat) -> Mat {
    let cols = top.ncols().max(bottom.ncols());
    let mut out = Mat::zeros(top.nrows() + bottom.nrows(), cols);
    if top.nrows() > 0 {
        out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    }
    if bottom.nrows() > 0 {
        out.view_mut((top.nrows(), 0), (bottom.nrows(), bottom.ncols()))
            .copy_from(bottom);
    }
    out
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Symmetric part `(m + mᵀ) / 2`.
pub fn sym_part(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix. `None` when empty.
pub fn sym_eig_range(m: &Mat) -> Option<(f64, f64)> {
    if m.nrows() == 0 {
        return None;
    }
    let eig = m.clone().symmetric_eigen();
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

/// Largest eigenvalue of the symmetric part of `m` (the quadratic-form bound
/// `xᵀ m x <= λ̄ |x|²`). Returns `-inf` for empty matrices.
pub fn lambda_max_sym(m: &Mat) -> f64 {
    sym_eig_range(&sym_part(m)).map_or(f64::NEG_INFINITY, |(_, hi)| hi)
}

/// Smallest eigenvalue of the symmetric part of `m`. `+inf` for empty matrices.
pub fn lambda_min_sym(m: &Mat) -> f64 {
    sym_eig_range(&sym_part(m)).map_or(f64::INFINITY, |(lo, _)| lo)
}

/// Eigenvalues of a general square matrix, sorted by real part then
/// imaginary part.
pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev = schur_eigenvalues(m);
    sort_spectrum(&mut ev);
    ev
}

// nalgebra's default Schur iteration is unbounded and can cycle on small
// integer matrices, so bound it and loosen the deflation tolerance stepwise.
// As a last resort, retry on an orthogonally similar matrix.
fn schur_eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    use nalgebra::linalg::Schur;
    const EPS: [f64; 4] = [f64::EPSILON, 1e-15, 1e-14, 1e-12];
    let n = m.nrows();
    let mut work = m.clone();
    // diagonal similarity first; graded closed loops lose digits otherwise
    nalgebra::linalg::balancing::balance_parlett_reinsch(&mut work);
    for attempt in 0..8 {
        for eps in EPS {
            if let Some(s) = Schur::try_new(work.clone(), eps, 10_000) {
                return s.complex_eigenvalues().iter().copied().collect();
            }
        }
        // Householder reflection about a fixed, attempt-dependent direction
        let v = Vector::from_fn(n, |i, _| 1.0 + ((i + 1) * (attempt + 3)) as f64 % 7.0);
        let v = &v / v.norm();
        let q = Mat::identity(n, n) - &v * v.transpose() * 2.0;
        work = &q * work * &q;
    }
    panic!("eigenvalue iteration failed to converge on a {n}x{n} matrix");
}

/// Sort complex numbers by real part, then imaginary part.
pub fn sort_spectrum(ev: &mut [Complex<f64>]) {
    ev.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Largest real part over the spectrum; `-inf` for empty matrices.
pub fn spectral_abscissa(m: &Mat) -> f64 {
    eigenvalues(m).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Max-abs entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Solve the Lyapunov equation `Aᵀ P + P A = -Q` by Kronecker vectorisation.
pub fn lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "lyapunov: A is {}x{}, Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let eye = Mat::identity(n, n);
    // vec(Aᵀ P) = (I ⊗ Aᵀ) vec(P); vec(P A) = (Aᵀ ⊗ I) vec(P)
    let at = a.transpose();
    let system = kron(&eye, &at) + kron(&at, &eye);
    let rhs = Vector::from_iterator(n * n, q.iter().map(|x| -x));
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov operator".into()))?;
    let p = Mat::from_column_slice(n, n, sol.as_slice());
    Ok(sym_part(&p))
}

/// Solve the Sylvester equation `A X - X L = R`.
pub fn sylvester(a: &Mat, l: &Mat, r: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let m = l.nrows();
    if r.nrows() != n || r.ncols() != m {
        return Err(Error::Dimension("sylvester: rhs shape".into()));
    }
    let system = kron(&Mat::identity(m, m), a) - kron(&l.transpose(), &Mat::identity(n, n));
    let rhs = Vector::from_column_slice(r.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Sylvester operator".into()))?;
    Ok(Mat::from_column_slice(n, m, sol.as_slice()))
}

/// Inverse via LU; errors when singular.
pub fn inverse(m: &Mat) -> Result<Mat> {
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// Real monic polynomial coefficients (highest degree first, leading 1)
/// with the given conjugate-closed roots.
pub fn poly_from_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut coeffs = vec![Complex::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (k, &c) in coeffs.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs.iter().map(|c| c.re).collect()
}

/// Companion matrix whose characteristic polynomial has the given roots.
pub fn companion(roots: &[Complex<f64>]) -> Mat {
    let n = roots.len();
    let coeffs = poly_from_roots(roots);
    let mut m = Mat::zeros(n, n);
    for k in 1..n {
        m[(k, k - 1)] = 1.0;
    }
    for k in 0..n {
        // last column carries -a_0 .. -a_{n-1}
        m[(k, n - 1)] = -coeffs[n - k];
    }
    m
}
