//! Small dense linear algebra on top of nalgebra.
//!
//! Input matrices of the built-in plants are at most 3x2, so everything here
//! favours clarity over speed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative rank tolerance: smallest singular value must exceed this times the largest.
pub const RANK_TOL: f64 = 1e-10;

/// Builds a matrix from row-major data, rejecting NaN/Inf entries.
pub fn matrix(rows: usize, cols: usize, row_major: &[f64]) -> Result<Matrix> {
    if row_major.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            row_major.len()
        )));
    }
    if row_major.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix", "non-finite entry"));
    }
    Ok(Matrix::from_row_slice(rows, cols, row_major))
}

/// Builds a vector, rejecting NaN/Inf entries.
pub fn vector(data: &[f64]) -> Result<Vector> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("vector", "non-finite entry"));
    }
    Ok(Vector::from_column_slice(data))
}

pub fn is_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Checks full column rank of `g` against [`RANK_TOL`].
pub fn check_full_column_rank(g: &Matrix) -> Result<()> {
    let (n, m) = g.shape();
    if m == 0 {
        return Ok(());
    }
    if n < m {
        return Err(Error::Dimension(format!(
            "{n}x{m} matrix cannot have full column rank"
        )));
    }
    let sv = g.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= RANK_TOL * max {
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        return Err(Error::RankDeficient { ratio });
    }
    Ok(())
}

/// Generalized inverse `(gᵀg)⁻¹gᵀ` of a full column rank matrix.
pub fn pseudo_inverse(g: &Matrix) -> Result<Matrix> {
    check_full_column_rank(g)?;
    let gram = g.transpose() * g;
    let chol = gram
        .cholesky()
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    Ok(chol.solve(&g.transpose()))
}

/// Orthonormal basis of the left null space of `g`, stacked as rows.
///
/// The rows are the unit eigenvectors of the projector `I - g g†`; each row is
/// sign-normalized so that its largest-magnitude entry is positive.
pub fn left_annihilator(g: &Matrix) -> Result<Matrix> {
    let (n, m) = g.shape();
    if n <= m {
        return Err(Error::Dimension(format!(
            "left annihilator needs n > m, got {n}x{m}"
        )));
    }
    let pinv = pseudo_inverse(g)?;
    let mut proj = Matrix::identity(n, n) - g * &pinv;
    // symmetrize away rounding so the eigensolver sees an exactly symmetric matrix
    proj = (&proj + proj.transpose()) * 0.5;
    let eig = SymmetricEigen::new(proj);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut out = Matrix::zeros(n - m, n);
    for (row, &idx) in order.iter().take(n - m).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // one re-orthogonalization pass against range(g) tightens g⊥·g to ~1e-16
        v -= g * (&pinv * &v);
        for prev in 0..row {
            let p = out.row(prev).transpose();
            v -= &p * p.dot(&v);
        }
        v /= v.norm();
        let pivot = v.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v = -v;
        }
        out.set_row(row, &v.transpose());
    }
    Ok(out)
}

/// Frobenius norm of `a + aᵀ`.
pub fn skew_defect(a: &Matrix) -> f64 {
    (a + a.transpose()).norm()
}

/// Frobenius norm of `a - aᵀ`.
pub fn symmetry_defect(a: &Matrix) -> f64 {
    (a - a.transpose()).norm()
}

/// Rotation matrix `e^{𝕁θ}` with `𝕁 = [[0, -1], [1, 0]]`.
pub fn rotation(theta: f64) -> nalgebra::Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    nalgebra::Matrix2::new(c, -s, s, c)
}

/// The planar skew matrix `𝕁 = [[0, -1], [1, 0]]`.
pub fn skew_j() -> nalgebra::Matrix2<f64> {
    nalgebra::Matrix2::new(0.0, -1.0, 1.0, 0.0)
}
