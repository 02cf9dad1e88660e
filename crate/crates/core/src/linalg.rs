//! Small complex linear-algebra helpers shared by the optimization blocks.

use nalgebra::SymmetricEigen;

use crate::{CMat, CVec, Complex64, Error, Result};

/// `‖AᴴA − I‖_F`, the orthonormal-columns residual.
pub fn orthonormality_residual(a: &CMat) -> f64 {
    let mut gram = a.adjoint() * a;
    for i in 0..gram.ncols() {
        gram[(i, i)] -= Complex64::new(1.0, 0.0);
    }
    gram.norm()
}

/// `‖A − Aᴴ‖_F` for a square matrix.
pub fn hermitian_defect(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

/// Hermitian part `(A + Aᴴ)/2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Factor a Hermitian positive semidefinite matrix as `F Fᴴ`, dropping
/// eigen-directions below `rel_tol · λ_max`.
pub fn psd_factor(a: &CMat, rel_tol: f64) -> CMat {
    let n = a.nrows();
    let eig = SymmetricEigen::new(hermitian_part(a));
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..n)
        .filter(|&i| lam_max > 0.0 && eig.eigenvalues[i] > rel_tol * lam_max)
        .collect();
    let mut f = CMat::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        f.set_column(c, &eig.eigenvectors.column(i).scale(s));
    }
    f
}

/// Polar factor `A (AᴴA)^{-1/2}` of a full-column-rank matrix.
pub fn polar_factor(a: &CMat) -> Result<CMat> {
    let gram = hermitian_part(&(a.adjoint() * a));
    let eig = SymmetricEigen::new(gram);
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let lam_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lam_max.is_finite() && lam_max > 0.0 && lam_min > 1e-14 * lam_max) {
        return Err(Error::Decomposition(format!(
            "matrix is not full column rank (gram eigenvalues in [{lam_min:e}, {lam_max:e}])"
        )));
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= Complex64::new(eig.eigenvalues[j].sqrt(), 0.0);
    }
    let inv_sqrt = scaled * u.adjoint();
    Ok(a * inv_sqrt)
}

/// A unitary `U` with `U·u/‖u‖ = v/‖v‖`: a phase times a Householder
/// reflection. Returns `None` if either vector is zero or not finite.
pub fn unitary_map(u: &CVec, v: &CVec) -> Option<CMat> {
    let (nu, nv) = (u.norm(), v.norm());
    if !(nu > 0.0 && nv > 0.0 && nu.is_finite() && nv.is_finite()) || u.len() != v.len() {
        return None;
    }
    let u = u / Complex64::new(nu, 0.0);
    let v = v / Complex64::new(nv, 0.0);
    let s = u.dotc(&v);
    let phase = if s.norm() > 0.0 { s / s.norm() } else { Complex64::new(1.0, 0.0) };
    // v' = v·conj(phase) has uᴴv' = |s| real, so the reflection maps u onto v'
    let w = &u - &v * phase.conj();
    let n = u.len();
    let mut h = CMat::identity(n, n);
    let ww = w.norm_squared();
    if ww > 1e-30 {
        h -= (&w * w.adjoint()) * Complex64::new(2.0 / ww, 0.0);
    }
    Some(h * phase)
}

/// `Re Tr(Aᴴ B)`, the real Frobenius inner product.
pub fn real_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
