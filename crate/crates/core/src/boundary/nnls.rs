//! Euclidean projection onto a polyhedral cone `K = {y : A y ≥ 0}`.
//!
//! By Moreau's decomposition `Π_K(c) = c + Aᵀλ*` with
//! `λ* = argmin_{λ ≥ 0} ‖c + Aᵀλ‖`, a nonnegative least-squares problem.
//! It is solved with the Lawson–Hanson active-set method in Gram form, the
//! passive-set systems being kept as an incrementally grown Cholesky factor.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ConeProjection {
    pub lambda: DVector<f64>,
    pub projection: DVector<f64>,
}

/// Lower-triangular factor of `M[P, P]` grown one index at a time.
struct GrowingCholesky {
    idx: Vec<usize>,
    l: Vec<Vec<f64>>,
}

impl GrowingCholesky {
    fn new() -> Self {
        GrowingCholesky { idx: Vec::new(), l: Vec::new() }
    }

    /// Appends `j`; returns false (and leaves the factor alone) when `j`'s
    /// column is numerically dependent on the current set.
    fn push(&mut self, m: &DMatrix<f64>, j: usize) -> bool {
        let p = self.idx.len();
        let mut row = vec![0.0; p + 1];
        for c in 0..p {
            let mut s = m[(j, self.idx[c])];
            s -= row[..c].iter().zip(&self.l[c]).map(|(r, l)| r * l).sum::<f64>();
            row[c] = s / self.l[c][c];
        }
        let d = m[(j, j)] - row[..p].iter().map(|x| x * x).sum::<f64>();
        if d <= 1e-12 * m[(j, j)].max(1e-300) {
            return false;
        }
        row[p] = d.sqrt();
        self.idx.push(j);
        self.l.push(row);
        true
    }

    fn rebuild(&mut self, m: &DMatrix<f64>, keep: Vec<usize>) -> Vec<usize> {
        self.idx.clear();
        self.l.clear();
        let mut dropped = Vec::new();
        for j in keep {
            if !self.push(m, j) {
                dropped.push(j);
            }
        }
        dropped
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let p = self.idx.len();
        let mut z = rhs.to_vec();
        for i in 0..p {
            let s = z[i] - self.l[i][..i].iter().zip(&z[..i]).map(|(l, z)| l * z).sum::<f64>();
            z[i] = s / self.l[i][i];
        }
        for i in (0..p).rev() {
            let s = z[i] - (i + 1..p).map(|t| self.l[t][i] * z[t]).sum::<f64>();
            z[i] = s / self.l[i][i];
        }
        z
    }
}

/// Projects `c` onto `{y : A y ≥ 0}` (rows of `a` are constraint normals).
pub fn project_onto_cone(a: &DMatrix<f64>, c: &DVector<f64>) -> Result<ConeProjection> {
    let (m, k) = a.shape();
    assert_eq!(c.len(), k);
    if m == 0 {
        return Ok(ConeProjection { lambda: DVector::zeros(0), projection: c.clone() });
    }

    let gram = a * a.transpose();
    let ac = a * c;
    let tol = 1e-12 * (1.0 + c.norm()) * (1.0 + gram.diagonal().amax()).sqrt();

    let mut lambda = DVector::<f64>::zeros(m);
    let mut passive = vec![false; m];
    let mut chol = GrowingCholesky::new();
    let mut w = -&ac;
    let mut skipped = vec![false; m];

    let max_outer = 5 * m + 20;
    let mut outer = 0;
    loop {
        outer += 1;
        if outer > max_outer {
            return Err(Error::SolverFailure(format!(
                "cone projection did not settle within {max_outer} active-set changes"
            )));
        }
        let cand = (0..m)
            .filter(|&j| !passive[j] && !skipped[j] && w[j] > tol)
            .max_by(|&x, &y| w[x].total_cmp(&w[y]));
        let Some(j) = cand else { break };
        if !chol.push(&gram, j) {
            skipped[j] = true;
            continue;
        }
        passive[j] = true;
        skipped.iter_mut().for_each(|s| *s = false);

        loop {
            let rhs: Vec<f64> = chol.idx.iter().map(|&i| -ac[i]).collect();
            let z = chol.solve(&rhs);
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in chol.idx.iter().zip(&z) {
                    lambda[i] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &v) in chol.idx.iter().zip(&z) {
                if v <= 0.0 {
                    alpha = alpha.min(lambda[i] / (lambda[i] - v));
                }
            }
            for (&i, &v) in chol.idx.iter().zip(&z) {
                lambda[i] += alpha * (v - lambda[i]);
            }
            let keep: Vec<usize> = chol
                .idx
                .iter()
                .copied()
                .filter(|&i| lambda[i] > 1e-15 * (1.0 + lambda.amax()))
                .collect();
            for &i in &chol.idx {
                if !keep.contains(&i) {
                    lambda[i] = 0.0;
                    passive[i] = false;
                }
            }
            for d in chol.rebuild(&gram, keep) {
                lambda[d] = 0.0;
                passive[d] = false;
            }
            if chol.idx.is_empty() {
                break;
            }
        }
        w = -(&gram * &lambda + &ac);
    }

    // refine on the final passive set with a QR least-squares solve, which
    // avoids the squared conditioning of the Gram system
    if !chol.idx.is_empty() {
        let cols = &chol.idx;
        let e = DMatrix::from_fn(k, cols.len(), |r, cidx| a[(cols[cidx], r)]);
        let qr = e.clone().qr();
        let rhs = qr.q().transpose() * (-c);
        if let Some(z) = qr.r().solve_upper_triangular(&rhs) {
            if z.iter().all(|&v| v > 0.0) {
                let before = (c + a.transpose() * &lambda).norm();
                let mut refined = lambda.clone();
                for (&i, &v) in cols.iter().zip(z.iter()) {
                    refined[i] = v;
                }
                if (c + a.transpose() * &refined).norm() <= before + 1e-12 {
                    lambda = refined;
                }
            }
        }
    }

    let projection = c + a.transpose() * &lambda;
    Ok(ConeProjection { lambda, projection })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inactive_cone_returns_input() {
        let a = DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.25, 0.25]);
        let c = DVector::from_vec(vec![0.5, 0.5]);
        let p = project_onto_cone(&a, &c).unwrap();
        assert_eq!(p.projection, c);
    }

    #[test]
    fn projects_onto_half_plane() {
        // K = {y : y1 ≥ 0}, c = (−1, 2) → (0, 2)
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = project_onto_cone(&a, &DVector::from_vec(vec![-1.0, 2.0])).unwrap();
        assert!((p.projection - DVector::from_vec(vec![0.0, 2.0])).norm() < 1e-14);
        assert!((p.lambda[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dependent_rows_do_not_break_the_factor() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, -1.0, 1.0]);
        let c = DVector::from_vec(vec![-3.0, -1.0]);
        let p = project_onto_cone(&a, &c).unwrap();
        assert!((a * &p.projection).iter().all(|&v| v >= -1e-12));
        // K is {y1 ≥ 0, y2 ≥ y1}; the projection of (−3, −1) is the apex
        assert!(p.projection.norm() < 1e-12);
    }
}
