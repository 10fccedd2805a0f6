use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-10;

/// Maximum entrywise deviation `|H - H^H|`.
pub fn hermitian_defect(h: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Real representation `[[Re H, -Im H], [Im H, Re H]]` of a Hermitian matrix.
///
/// The map is an algebra homomorphism: eigenvalues are preserved (each with
/// doubled multiplicity), `tr(embed(A) embed(B)) = 2 Re tr(AB)`, and PSD-ness
/// holds on one side iff it holds on the other.
pub fn hermitian_to_real_embedding(h: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch("embedding needs a square matrix".into()));
    }
    let scale = h.iter().map(|c| c.norm()).fold(1.0, f64::max);
    if hermitian_defect(h) > HERMITIAN_TOL * scale {
        return Err(Error::InvalidInput("matrix is not Hermitian".into()));
    }
    Ok(embed_unchecked(h))
}

pub(crate) fn embed_unchecked(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let c = h[(i, j)];
            out[(i, j)] = c.re;
            out[(i + n, j + n)] = c.re;
            out[(i, j + n)] = -c.im;
            out[(i + n, j)] = c.im;
        }
    }
    out
}

/// `embed(v v^H)` for a vector `v = a + ib`, i.e. `p p^T + q q^T` with
/// `p = [a; b]` and `q = [-b; a]`.
pub(crate) fn embed_outer(v: &DVector<Complex64>) -> DMatrix<f64> {
    let n = v.len();
    let p = DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im });
    let q = DVector::from_fn(2 * n, |i, _| if i < n { -v[i].im } else { v[i - n].re });
    &p * p.transpose() + &q * q.transpose()
}

/// Inverse of the embedding, averaging the redundant blocks.
pub(crate) fn realified_to_hermitian(x: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = x.nrows() / 2;
    let mut out = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
            let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
            out[(i, j)] = Complex64::new(re, im);
        }
    }
    // exact Hermitian symmetry
    for i in 0..n {
        out[(i, i)].im = 0.0;
        for j in 0..i {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)].conj());
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    out
}
