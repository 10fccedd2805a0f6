//! Plain-text dump of an instance for cross-checking with external solvers.
//!
//! ```text
//! sdp-instance v1
//! dim <N> classes <K> wds <M>
//! weights <c_1> ... <c_K>
//! matrix <k> <j> <active 0|1>
//! <re> <im> <re> <im> ...        (N*N entries, row-major)
//! ```

use nalgebra::DVector;
use num_complex::Complex64;

use super::SdpProblem;
use crate::error::{Error, Result};

pub fn write_dump(problem: &SdpProblem) -> String {
    let n = problem.dim();
    let k = problem.num_classes();
    let m = problem.factors().first().map_or(0, Vec::len);
    let mut out = String::from("sdp-instance v1\n");
    out.push_str(&format!("dim {n} classes {k} wds {m}\n"));
    let weights: Vec<String> = problem.class_weights().iter().map(|c| format!("{c:e}")).collect();
    out.push_str(&format!("weights {}\n", weights.join(" ")));
    for c in 0..k {
        for j in 0..m {
            match problem.constraint_matrix(c, j) {
                Some(h) => {
                    out.push_str(&format!("matrix {c} {j} 1\n"));
                    let mut vals = Vec::with_capacity(2 * n * n);
                    for r in 0..n {
                        for col in 0..n {
                            let v = h[(r, col)];
                            vals.push(format!("{:e} {:e}", v.re, v.im));
                        }
                    }
                    out.push_str(&vals.join(" "));
                    out.push('\n');
                }
                None => out.push_str(&format!("matrix {c} {j} 0\n")),
            }
        }
    }
    out
}

/// Parse a dump back into an instance. Constraint matrices are refactored
/// as rank-one outer products, which every dumped matrix is.
pub fn parse_dump(text: &str) -> Result<SdpProblem> {
    let bad = |m: &str| Error::InvalidInput(format!("malformed dump: {m}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("sdp-instance v1") {
        return Err(bad("missing header"));
    }
    let dims: Vec<&str> = lines.next().ok_or_else(|| bad("missing dims"))?.split_whitespace().collect();
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
    if dims.len() != 6 {
        return Err(bad("dims line"));
    }
    let (n, k, m) = (num(dims[1])?, num(dims[3])?, num(dims[5])?);
    let weights: Vec<f64> = lines
        .next()
        .ok_or_else(|| bad("missing weights"))?
        .split_whitespace()
        .skip(1)
        .map(|s| s.parse::<f64>().map_err(|_| bad("bad weight")))
        .collect::<Result<_>>()?;
    let mut factors = vec![vec![None; m]; k];
    for _ in 0..k * m {
        let head: Vec<&str> = lines.next().ok_or_else(|| bad("missing matrix"))?.split_whitespace().collect();
        if head.len() != 4 || head[0] != "matrix" {
            return Err(bad("matrix header"));
        }
        let (c, j) = (num(head[1])?, num(head[2])?);
        if c >= k || j >= m {
            return Err(bad("matrix index"));
        }
        if head[3] == "1" {
            let vals: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("missing entries"))?
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| bad("bad entry")))
                .collect::<Result<_>>()?;
            if vals.len() != 2 * n * n {
                return Err(bad("entry count"));
            }
            let entry = |r: usize, col: usize| Complex64::new(vals[2 * (r * n + col)], vals[2 * (r * n + col) + 1]);
            // H = v v^H: pick the column with the largest diagonal
            let p = (0..n).max_by(|&a, &b| entry(a, a).re.total_cmp(&entry(b, b).re)).unwrap_or(0);
            let d = entry(p, p).re;
            let v = if d > 0.0 {
                DVector::from_fn(n, |r, _| entry(r, p) / d.sqrt())
            } else {
                DVector::zeros(n)
            };
            factors[c][j] = Some(v);
        }
    }
    SdpProblem::new(n, weights, factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip_preserves_matrices() {
        let v = DVector::from_vec(vec![Complex64::new(0.3, -1.0), Complex64::new(2.0, 0.25)]);
        let p = SdpProblem::new(2, vec![0.5, 2.0], vec![vec![Some(v.clone()), None], vec![Some(v * Complex64::new(0.0, 3.0)), Some(DVector::from_element(2, Complex64::new(1.0, 0.0)))]]).unwrap();
        let q = parse_dump(&write_dump(&p)).unwrap();
        assert_eq!(q.class_weights(), p.class_weights());
        for c in 0..2 {
            for j in 0..2 {
                match (p.constraint_matrix(c, j), q.constraint_matrix(c, j)) {
                    (Some(a), Some(b)) => assert!((a - b).camax() < 1e-12),
                    (None, None) => {}
                    _ => panic!("mask mismatch"),
                }
            }
        }
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_dump("hello").is_err());
    }
}
