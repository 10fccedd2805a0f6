//! Semidefinite relaxation of the receive-beamforming problem.
//!
//! The program solved here is
//!
//! ```text
//! min   Σ_k c_k e_k
//! s.t.  tr(W) = 1,  W ⪰ 0,
//!       e_k + tr(W H_j^k) ≥ 0   for every active (j, k),
//! ```
//!
//! with `H_j^k = ĥ_j^k (ĥ_j^k)^H`. Internally the problem is rewritten with
//! `u_k = -e_k ≥ 0` (the optimum always has `e_k ≤ 0` because every `H_j^k`
//! is PSD), each class is rescaled so its largest `‖ĥ‖²` is one, `W` is
//! realified to a `2N × 2N` real block, and the result is handed to a dense
//! interior-point method. Constraints are added lazily: the interior-point
//! solve runs on a working set and violated constraints are appended until
//! the full problem is feasible, which leaves the optimum unchanged because
//! each restricted problem is a relaxation of the full one.

mod dump;
mod eigen;
mod embed;
mod ipm;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{parse_dump, write_dump};
pub use eigen::{extract_principal_eigenpair, hermitian_eigenvalues, normalize_phase, PrincipalEigenpair, RANK_ONE_RATIO};
pub use embed::{hermitian_defect, hermitian_to_real_embedding};

/// One relaxed beamforming instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    dim: usize,
    class_weights: Vec<f64>,
    /// `factors[k][j] = Some(ĥ_j^k)` when device `j` takes part in class `k`.
    factors: Vec<Vec<Option<DVector<Complex64>>>>,
}

impl SdpProblem {
    pub fn new(dim: usize, class_weights: Vec<f64>, factors: Vec<Vec<Option<DVector<Complex64>>>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if class_weights.len() != factors.len() || factors.is_empty() {
            return Err(Error::DimensionMismatch("one weight and one constraint family per class".into()));
        }
        if let Some(k) = class_weights.iter().position(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidInput(format!("class weight {k} must be positive")));
        }
        for (k, family) in factors.iter().enumerate() {
            let mut any = false;
            for v in family.iter().flatten() {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch(format!("constraint vector of length {}", v.len())));
                }
                if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(Error::InvalidInput("non-finite constraint vector".into()));
                }
                any |= v.norm_squared() > 0.0;
            }
            if !any {
                return Err(Error::InvalidInput(format!("class {k} has no active nonzero constraint")));
            }
        }
        Ok(Self {
            dim,
            class_weights,
            factors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_weights.len()
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }

    pub fn factors(&self) -> &[Vec<Option<DVector<Complex64>>>] {
        &self.factors
    }

    pub fn is_active(&self, class: usize, wd: usize) -> bool {
        self.factors[class][wd].is_some()
    }

    /// `H_j^k`, or `None` for inactive pairs.
    pub fn constraint_matrix(&self, class: usize, wd: usize) -> Option<DMatrix<Complex64>> {
        self.factors[class][wd].as_ref().map(|v| v * v.adjoint())
    }

    fn active(&self) -> impl Iterator<Item = (usize, usize, &DVector<Complex64>)> {
        self.factors
            .iter()
            .enumerate()
            .flat_map(|(k, fam)| fam.iter().enumerate().filter_map(move |(j, v)| v.as_ref().map(|v| (k, j, v))))
    }

    /// `-Σ_k c_k min_j |w^H ĥ_j^k|²`, the objective restricted to `W = w w^H`.
    pub fn beamformer_objective(&self, w: &DVector<Complex64>) -> f64 {
        -self
            .factors
            .iter()
            .zip(&self.class_weights)
            .map(|(fam, c)| c * fam.iter().flatten().map(|v| w.dotc(v).norm_sqr()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
    }

    /// `Σ_k c_k e_k` with each `e_k` set to its smallest feasible value.
    pub fn matrix_objective(&self, w: &DMatrix<Complex64>) -> f64 {
        -self
            .factors
            .iter()
            .zip(&self.class_weights)
            .map(|(fam, c)| {
                c * fam
                    .iter()
                    .flatten()
                    .map(|v| (v.adjoint() * w * v)[(0, 0)].re)
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Solve on a growing working set instead of all constraints at once.
    pub constraint_generation: bool,
    /// Constraints per class in the first working set and per refill.
    pub batch: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            constraint_generation: true,
            batch: 4,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Interior-point iterations summed over working-set refills.
    pub iterations: usize,
    pub refills: usize,
    pub working_set: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub w: DMatrix<Complex64>,
    /// `e^k`, one per class.
    pub slacks: Vec<f64>,
    /// `Σ_k c_k e_k`.
    pub objective: f64,
    /// Dual objective in the same units; `objective - dual_bound` bounds the
    /// suboptimality.
    pub dual_bound: f64,
    pub diagnostics: SolverDiagnostics,
}

impl SdpSolution {
    /// Check trace, PSD and constraint feasibility at tolerance `tol`
    /// (constraints are measured relative to each class's largest `‖ĥ‖²`).
    pub fn check(&self, problem: &SdpProblem, tol: f64) -> Result<()> {
        let trace: f64 = (0..self.w.nrows()).map(|i| self.w[(i, i)].re).sum();
        if (trace - 1.0).abs() > tol {
            return Err(Error::Consistency(format!("trace {trace} differs from 1")));
        }
        let min_eig = hermitian_eigenvalues(&self.w).last().copied().unwrap_or(0.0);
        if min_eig < -tol {
            return Err(Error::Consistency(format!("minimum eigenvalue {min_eig:e}")));
        }
        for (k, fam) in problem.factors.iter().enumerate() {
            let scale = fam.iter().flatten().map(|v| v.norm_squared()).fold(0.0, f64::max);
            for v in fam.iter().flatten() {
                let t = (v.adjoint() * &self.w * v)[(0, 0)].re;
                if (self.slacks[k] + t) / scale < -tol {
                    return Err(Error::Consistency(format!("class {k} constraint violated by {:e}", self.slacks[k] + t)));
                }
            }
        }
        Ok(())
    }
}

struct Scaled {
    /// per-class multiplier applied to every `H_j^k`
    class_scale: Vec<f64>,
    /// scaled objective weights
    weights: Vec<f64>,
    /// objective multiplier back to original units
    omega: f64,
    /// (class, embedded constraint matrix / 2) for every active pair
    rows: Vec<(usize, DMatrix<f64>)>,
}

fn scale_problem(problem: &SdpProblem) -> Scaled {
    let k = problem.num_classes();
    let class_scale: Vec<f64> = problem
        .factors
        .iter()
        .map(|fam| 1.0 / fam.iter().flatten().map(|v| v.norm_squared()).fold(0.0, f64::max))
        .collect();
    let mut rows = Vec::new();
    for (c, _, v) in problem.active() {
        rows.push((c, embed::embed_outer(v) * (0.5 * class_scale[c])));
    }
    // the objective at W = I/N sets the unit, so the optimum is O(1)
    let n = problem.dim as f64;
    let mut floor = vec![f64::INFINITY; k];
    for (c, a) in &rows {
        floor[*c] = floor[*c].min(a.trace() / n);
    }
    let raw: Vec<f64> = (0..k).map(|c| problem.class_weights[c] / class_scale[c]).collect();
    let omega: f64 = raw.iter().zip(&floor).map(|(r, f)| r * f).sum();
    let weights = raw.iter().map(|r| r / omega).collect();
    Scaled {
        class_scale,
        weights,
        omega,
        rows,
    }
}

struct Restricted {
    w: DMatrix<f64>,
    u: Vec<f64>,
    outcome_residuals: ipm::Residuals,
    iterations: usize,
    converged: bool,
}

fn solve_restricted(s: &Scaled, n: usize, working: &[usize], tol: f64, max_iter: usize) -> Restricted {
    let k = s.weights.len();
    let dim = 2 * n;
    let m = working.len();
    // linear variables: u_0..u_{K-1}, then one slack per working row
    let mut rows = Vec::with_capacity(m + 1);
    rows.push(ipm::Row {
        dense: DMatrix::identity(dim, dim) * 0.5,
        linear: vec![],
    });
    for (r, &idx) in working.iter().enumerate() {
        let (c, ref a) = s.rows[idx];
        rows.push(ipm::Row {
            dense: a.clone(),
            linear: vec![(c, -1.0), (k + r, -1.0)],
        });
    }
    let mut b = DVector::zeros(m + 1);
    b[0] = 1.0;
    let mut c_linear = DVector::zeros(k + m);
    for c in 0..k {
        c_linear[c] = -s.weights[c];
    }
    let problem = ipm::BlockSdp {
        c_dense: DMatrix::zeros(dim, dim),
        c_linear,
        rows,
        b,
    };

    // strictly feasible primal start at W = I/N
    let x0 = DMatrix::identity(dim, dim) / n as f64;
    let t0: Vec<f64> = working.iter().map(|&i| s.rows[i].1.trace() / n as f64).collect();
    let mut u0 = vec![f64::INFINITY; k];
    let mut per_class = vec![0usize; k];
    for (r, &i) in working.iter().enumerate() {
        let c = s.rows[i].0;
        u0[c] = u0[c].min(t0[r]);
        per_class[c] += 1;
    }
    let u0: Vec<f64> = u0.iter().map(|u| 0.5 * u).collect();
    let mut xl = DVector::zeros(k + m);
    for c in 0..k {
        xl[c] = u0[c];
    }
    for (r, &i) in working.iter().enumerate() {
        xl[k + r] = t0[r] - u0[s.rows[i].0];
    }
    // strictly feasible dual start
    let mut y = DVector::zeros(m + 1);
    let mut agg = DMatrix::zeros(dim, dim);
    for (r, &i) in working.iter().enumerate() {
        let c = s.rows[i].0;
        y[r + 1] = 2.0 * s.weights[c] / per_class[c] as f64;
        agg += &s.rows[i].1 * y[r + 1];
    }
    let lmax = SymmetricEigen::new(agg.clone()).eigenvalues.max().max(0.0);
    y[0] = -2.0 * (lmax + 1.0);
    let z0 = DMatrix::identity(dim, dim) * (lmax + 1.0) - agg;
    let mut zl = DVector::zeros(k + m);
    for c in 0..k {
        zl[c] = s.weights[c];
    }
    for r in 0..m {
        zl[k + r] = y[r + 1];
    }
    let start = ipm::Point { x: x0, xl, y, z: z0, zl };
    let out = ipm::solve(&problem, start, tol, max_iter);
    Restricted {
        w: out.point.x,
        u: (0..k).map(|c| out.point.xl[c]).collect(),
        outcome_residuals: out.residuals,
        iterations: out.iterations,
        converged: out.converged,
    }
}

/// Solve the relaxed program. See the module docs for the method.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
    let n = problem.dim;
    let k = problem.num_classes();
    let s = scale_problem(problem);
    let total = s.rows.len();

    let mut working: Vec<usize> = if options.constraint_generation {
        let mut picked = Vec::new();
        for c in 0..k {
            let mut fam: Vec<usize> = (0..total).filter(|&i| s.rows[i].0 == c).collect();
            fam.sort_by(|&a, &b| s.rows[a].1.trace().total_cmp(&s.rows[b].1.trace()));
            picked.extend(fam.into_iter().take(options.batch.max(1)));
        }
        picked.sort_unstable();
        picked
    } else {
        (0..total).collect()
    };

    let mut iterations = 0;
    let mut refills = 0;
    loop {
        let r = solve_restricted(&s, n, &working, options.tol, options.max_iter.saturating_sub(iterations).max(1));
        iterations += r.iterations;

        // violated constraints outside the working set
        let mut added = Vec::new();
        if r.converged && working.len() < total {
            for c in 0..k {
                let mut viol: Vec<(f64, usize)> = (0..total)
                    .filter(|i| s.rows[*i].0 == c && working.binary_search(i).is_err())
                    .map(|i| (crate::sdp::inner(&s.rows[i].1, &r.w) - r.u[c], i))
                    .filter(|(gap, _)| *gap < -options.tol * (1.0 + r.u[c].abs()))
                    .collect();
                viol.sort_by(|a, b| a.0.total_cmp(&b.0));
                added.extend(viol.into_iter().take(options.batch.max(1)).map(|(_, i)| i));
            }
        }

        if !added.is_empty() && iterations < options.max_iter {
            working.extend(added);
            working.sort_unstable();
            refills += 1;
            continue;
        }

        let w = embed::realified_to_hermitian(&r.w);
        let slacks: Vec<f64> = (0..k).map(|c| -r.u[c] / s.class_scale[c]).collect();
        let objective = problem.class_weights.iter().zip(&slacks).map(|(c, e)| c * e).sum();
        let res = r.outcome_residuals;
        log::debug!(
            "sdp: {iterations} iterations, {refills} refills, scaled objectives {:.3e} / {:.3e}",
            res.primal_objective,
            res.dual_objective
        );
        let solution = SdpSolution {
            w,
            slacks,
            objective,
            dual_bound: s.omega * res.dual_objective,
            diagnostics: SolverDiagnostics {
                iterations,
                refills,
                working_set: working.len(),
                primal_residual: res.primal,
                dual_residual: res.dual,
                gap: res.gap,
                converged: r.converged && added.is_empty(),
            },
        };
        if !solution.diagnostics.converged {
            return Err(Error::Convergence {
                iterations,
                residual: res.worst(),
                best: Some(Box::new(solution)),
            });
        }
        return Ok(solution);
    }
}

pub(crate) fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_constraint_gives_matched_filter() {
        let h = DVector::from_vec(vec![c(0.4, -0.3), c(1.1, 0.2), c(-0.5, 0.9)]);
        let p = SdpProblem::new(3, vec![0.7], vec![vec![Some(h.clone())]]).unwrap();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        let expect = &h * h.adjoint() / Complex64::from(h.norm_squared());
        assert!((&sol.w - expect).camax() < 1e-7, "{}", sol.w);
        assert!((sol.slacks[0] + h.norm_squared()).abs() < 1e-7 * h.norm_squared());
        sol.check(&p, 1e-7).unwrap();
    }

    #[test]
    fn empty_class_is_rejected() {
        let r = SdpProblem::new(2, vec![1.0, 1.0], vec![vec![Some(DVector::from_element(2, c(1.0, 0.0)))], vec![None]]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn tiny_magnitudes_are_handled_by_scaling() {
        let h1 = DVector::from_vec(vec![c(1e-9, 2e-9), c(-3e-9, 0.5e-9)]);
        let h2 = DVector::from_vec(vec![c(2e-10, 0.0), c(1e-10, 1e-10)]);
        let p = SdpProblem::new(2, vec![3e-4], vec![vec![Some(h1), Some(h2)]]).unwrap();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        sol.check(&p, 1e-7).unwrap();
        assert!(sol.objective < 0.0);
    }
}
