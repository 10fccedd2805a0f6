use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Ratio `λ₂/λ₁` above which a matrix is not treated as rank one.
pub const RANK_ONE_RATIO: f64 = 1e-3;

/// Leading eigenpair of a Hermitian PSD matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalEigenpair {
    pub value: f64,
    /// Unit norm; the first entry of largest magnitude is real and nonnegative.
    pub vector: DVector<Complex64>,
    /// Second largest eigenvalue (0 for 1x1 input).
    pub second_value: f64,
    /// Set when `second_value / value > RANK_ONE_RATIO`.
    pub degenerate: bool,
}

/// Eigenvalues of a Hermitian matrix in descending order.
pub fn hermitian_eigenvalues(w: &DMatrix<Complex64>) -> Vec<f64> {
    let mut vals: Vec<f64> = w.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Make the first largest-magnitude entry real and nonnegative.
pub fn normalize_phase(v: &mut DVector<Complex64>) {
    let mut idx = 0;
    let mut best = -1.0;
    for (i, c) in v.iter().enumerate() {
        if c.norm() > best * (1.0 + 1e-12) {
            best = c.norm();
            idx = i;
        }
    }
    if best > 0.0 {
        let rot = v[idx].conj() / v[idx].norm();
        v.iter_mut().for_each(|c| *c *= rot);
        v[idx] = Complex64::new(v[idx].norm(), 0.0);
    }
}

pub fn extract_principal_eigenpair(w: &DMatrix<Complex64>) -> PrincipalEigenpair {
    let eig = w.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let value = eig.eigenvalues[order[0]];
    let second_value = order.get(1).map_or(0.0, |&i| eig.eigenvalues[i]);
    let mut vector: DVector<Complex64> = eig.eigenvectors.column(order[0]).into_owned();
    let norm = vector.norm();
    vector.iter_mut().for_each(|c| *c /= norm);
    normalize_phase(&mut vector);
    let degenerate = value <= 0.0 || second_value / value > RANK_ONE_RATIO;
    PrincipalEigenpair {
        value,
        vector,
        second_value,
        degenerate,
    }
}
