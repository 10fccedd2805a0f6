//! Dense primal-dual interior-point method for real SDPs with one dense
//! semidefinite block and one nonnegative (diagonal) block.
//!
//! Primal: `min ⟨C,X⟩ + c·x  s.t.  ⟨A_i,X⟩ + a_i·x = b_i,  X ⪰ 0, x ≥ 0`.
//! Dual:   `max b·y  s.t.  Σ y_i A_i + Z = C,  Σ y_i a_i + z = c,  Z ⪰ 0, z ≥ 0`.
//!
//! Search directions are HKM with a Mehrotra predictor-corrector. The Schur
//! complement is formed densely; problem sizes here are tiny.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

pub(crate) struct Row {
    pub dense: DMatrix<f64>,
    pub linear: Vec<(usize, f64)>,
}

pub(crate) struct BlockSdp {
    pub c_dense: DMatrix<f64>,
    pub c_linear: DVector<f64>,
    pub rows: Vec<Row>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub x: DMatrix<f64>,
    pub xl: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub zl: DVector<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl Residuals {
    pub fn worst(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

pub(crate) struct Outcome {
    pub point: Point,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl BlockSdp {
    fn apply(&self, x: &DMatrix<f64>, xl: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|r| inner(&r.dense, x) + r.linear.iter().map(|&(v, a)| a * xl[v]).sum::<f64>()),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.c_dense.nrows();
        let mut dense = DMatrix::zeros(n, n);
        let mut lin = DVector::zeros(self.c_linear.len());
        for (r, &yi) in self.rows.iter().zip(y.iter()) {
            dense += &r.dense * yi;
            for &(v, a) in &r.linear {
                lin[v] += yi * a;
            }
        }
        (dense, lin)
    }

    fn residuals(&self, p: &Point) -> (DVector<f64>, DMatrix<f64>, DVector<f64>, Residuals) {
        let rp = &self.b - self.apply(&p.x, &p.xl);
        let (ay, ayl) = self.adjoint(&p.y);
        let rd = &self.c_dense - &p.z - ay;
        let rdl = &self.c_linear - &p.zl - ayl;
        let pobj = inner(&self.c_dense, &p.x) + self.c_linear.dot(&p.xl);
        let dobj = self.b.dot(&p.y);
        let comp = inner(&p.x, &p.z) + p.xl.dot(&p.zl);
        let c_norm = (self.c_dense.norm_squared() + self.c_linear.norm_squared()).sqrt();
        let res = Residuals {
            primal: rp.norm() / (1.0 + self.b.norm()),
            dual: (rd.norm_squared() + rdl.norm_squared()).sqrt() / (1.0 + c_norm),
            gap: comp.abs() / (1.0 + pobj.abs() + dobj.abs()),
            primal_objective: pobj,
            dual_objective: dobj,
        };
        (rp, rd, rdl, res)
    }
}

/// Largest step in `[0, ∞)` keeping `x + α dx ⪰ 0` given `chol(x)`.
fn max_step_dense(chol: &Cholesky<f64, nalgebra::Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let s = sym(&(&linv * dx * linv.transpose()));
    let min = SymmetricEigen::new(s).eigenvalues.min();
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

fn max_step_linear(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: DMatrix<f64>,
    dxl: DVector<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    dzl: DVector<f64>,
}

struct Linearization<'a> {
    problem: &'a BlockSdp,
    point: &'a Point,
    zinv: DMatrix<f64>,
    /// `X A_j Z^{-1}` for every row.
    xaz: Vec<DMatrix<f64>>,
    schur: Cholesky<f64, nalgebra::Dyn>,
    rp: DVector<f64>,
    rd: DMatrix<f64>,
    rdl: DVector<f64>,
}

impl<'a> Linearization<'a> {
    fn new(
        problem: &'a BlockSdp,
        point: &'a Point,
        rp: DVector<f64>,
        rd: DMatrix<f64>,
        rdl: DVector<f64>,
    ) -> Option<Self> {
        let zinv = Cholesky::new(point.z.clone())?.inverse();
        let xaz: Vec<DMatrix<f64>> = problem.rows.iter().map(|r| &point.x * &r.dense * &zinv).collect();
        let m = problem.rows.len();
        let ratio = point.xl.component_div(&point.zl);
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut v = inner(&problem.rows[i].dense, &xaz[j]);
                for &(vi, ai) in &problem.rows[i].linear {
                    for &(vj, aj) in &problem.rows[j].linear {
                        if vi == vj {
                            v += ai * aj * ratio[vi];
                        }
                    }
                }
                schur[(i, j)] = v;
            }
        }
        for i in 0..m {
            for j in 0..i {
                schur[(i, j)] = schur[(j, i)];
            }
        }
        let schur = match Cholesky::new(schur.clone()) {
            Some(c) => c,
            None => {
                let scale = schur.diagonal().amax().max(1e-300);
                let mut reg = schur;
                for i in 0..m {
                    reg[(i, i)] += 1e-13 * scale;
                }
                Cholesky::new(reg)?
            }
        };
        Some(Self {
            problem,
            point,
            zinv,
            xaz,
            schur,
            rp,
            rd,
            rdl,
        })
    }

    /// Solve for the direction given `Rc Z^{-1}` (dense) and `rc / z` (linear).
    fn direction(&self, rcz: &DMatrix<f64>, rcl: &DVector<f64>) -> Direction {
        let p = self.point;
        let xrdz = &p.x * &self.rd * &self.zinv;
        let dense_part = rcz - &xrdz;
        let lin_part = rcl - p.xl.component_mul(&self.rdl).component_div(&p.zl);
        let rhs = DVector::from_iterator(
            self.problem.rows.len(),
            self.problem.rows.iter().enumerate().map(|(i, r)| {
                self.rp[i]
                    - inner(&r.dense, &dense_part)
                    - r.linear.iter().map(|&(v, a)| a * lin_part[v]).sum::<f64>()
            }),
        );
        let dy = self.schur.solve(&rhs);
        let (ady, adyl) = self.problem.adjoint(&dy);
        let dz = &self.rd - ady;
        let dzl = &self.rdl - adyl;
        let mut dx = dense_part;
        for (j, g) in self.xaz.iter().enumerate() {
            dx += g * dy[j];
        }
        let dx = sym(&dx);
        let dxl = rcl - p.xl.component_mul(&dzl).component_div(&p.zl);
        Direction { dx, dxl, dy, dz, dzl }
    }
}

fn step_lengths(p: &Point, d: &Direction) -> Option<(f64, f64)> {
    let cx = Cholesky::new(p.x.clone())?;
    let cz = Cholesky::new(p.z.clone())?;
    let ap = max_step_dense(&cx, &d.dx).min(max_step_linear(&p.xl, &d.dxl));
    let ad = max_step_dense(&cz, &d.dz).min(max_step_linear(&p.zl, &d.dzl));
    Some((ap, ad))
}

pub(crate) fn solve(problem: &BlockSdp, start: Point, tol: f64, max_iter: usize) -> Outcome {
    let n = problem.c_dense.nrows();
    let nu = (n + problem.c_linear.len()) as f64;
    let mut point = start;
    let mut best: Option<(Point, Residuals)> = None;
    let mut iterations = 0;

    loop {
        let (rp, rd, rdl, res) = problem.residuals(&point);
        if best.as_ref().is_none_or(|(_, r)| res.worst() <= r.worst()) {
            best = Some((point.clone(), res));
        }
        if res.worst() <= tol {
            return Outcome {
                point,
                residuals: res,
                iterations,
                converged: true,
            };
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mu = (inner(&point.x, &point.z) + point.xl.dot(&point.zl)) / nu;
        let Some(lin) = Linearization::new(problem, &point, rp, rd, rdl) else {
            break;
        };

        // predictor
        let aff = lin.direction(&(-&point.x), &(-&point.xl));
        let Some((ap, ad)) = step_lengths(&point, &aff) else {
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let xa = &point.x + &aff.dx * ap;
        let za = &point.z + &aff.dz * ad;
        let xla = &point.xl + &aff.dxl * ap;
        let zla = &point.zl + &aff.dzl * ad;
        let mu_aff = (inner(&xa, &za) + xla.dot(&zla)) / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let target = sigma * mu;
        let rcz = &lin.zinv * target - &point.x - &aff.dx * &aff.dz * &lin.zinv;
        let rcl = (DVector::from_element(point.xl.len(), target) - aff.dxl.component_mul(&aff.dzl))
            .component_div(&point.zl)
            - &point.xl;
        let dir = lin.direction(&rcz, &rcl);
        let Some((ap, ad)) = step_lengths(&point, &dir) else {
            break;
        };
        let tau = (1.0 - mu.min(0.05)).max(0.95).min(0.995);
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);

        let next = Point {
            x: sym(&(&point.x + &dir.dx * ap)),
            xl: &point.xl + &dir.dxl * ap,
            y: &point.y + &dir.dy * ad,
            z: sym(&(&point.z + &dir.dz * ad)),
            zl: &point.zl + &dir.dzl * ad,
        };
        if next.x.iter().chain(next.z.iter()).any(|v| !v.is_finite()) {
            break;
        }
        point = next;
    }

    let (point, residuals) = best.expect("at least one iterate evaluated");
    Outcome {
        point,
        residuals,
        iterations,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min x1 + x2 s.t. x1 + 2 x2 = 2 over x ≥ 0 (pure LP, empty dense block
    /// replaced by a 1x1 block fixed by an extra row).
    #[test]
    fn tiny_lp_with_dense_block() {
        // dense block: 1x1 X with constraint X = 1 and cost 0
        let problem = BlockSdp {
            c_dense: DMatrix::zeros(1, 1),
            c_linear: DVector::from_vec(vec![1.0, 1.0]),
            rows: vec![
                Row {
                    dense: DMatrix::from_element(1, 1, 1.0),
                    linear: vec![],
                },
                Row {
                    dense: DMatrix::zeros(1, 1),
                    linear: vec![(0, 1.0), (1, 2.0)],
                },
            ],
            b: DVector::from_vec(vec![1.0, 2.0]),
        };
        let start = Point {
            x: DMatrix::identity(1, 1),
            xl: DVector::from_element(2, 1.0),
            y: DVector::zeros(2),
            z: DMatrix::identity(1, 1),
            zl: DVector::from_element(2, 1.0),
        };
        let out = solve(&problem, start, 1e-9, 100);
        assert!(out.converged);
        assert!((out.point.xl[1] - 1.0).abs() < 1e-7);
        assert!(out.point.xl[0].abs() < 1e-7);
        assert!((out.residuals.primal_objective - 1.0).abs() < 1e-7);
    }

    /// max-eigenvalue SDP: min ⟨-C, X⟩ s.t. tr X = 1 has value -λ_max(C).
    #[test]
    fn largest_eigenvalue_program() {
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let lmax = SymmetricEigen::new(c.clone()).eigenvalues.max();
        let problem = BlockSdp {
            c_dense: -c,
            c_linear: DVector::zeros(0),
            rows: vec![Row {
                dense: DMatrix::identity(3, 3),
                linear: vec![],
            }],
            b: DVector::from_element(1, 1.0),
        };
        let start = Point {
            x: DMatrix::identity(3, 3) / 3.0,
            xl: DVector::zeros(0),
            y: DVector::from_element(1, -5.0),
            z: DMatrix::identity(3, 3),
            zl: DVector::zeros(0),
        };
        let out = solve(&problem, start, 1e-10, 100);
        assert!(out.converged, "{:?}", out.residuals);
        assert!((out.residuals.primal_objective + lmax).abs() < 1e-8);
    }
}
