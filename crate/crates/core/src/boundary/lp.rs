//! Certified linear feasibility via a dense phase-1 simplex.
//!
//! The system is `G y ≥ b, a·y = r` with `y` free. A feasible `y` is
//! returned as-is; otherwise a Farkas pair `λ ≥ 0, μ` with
//! `Gᵀλ + μ a = 0` and `λ·b + μ r = 1` is found by running the same phase 1
//! on the alternative system. Both are re-verified on the original data.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Farkas-type proof that `G y ≥ b, a·y = r` has no solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// One multiplier per inequality row, all nonnegative.
    pub lambda: DVector<f64>,
    /// Multiplier of the equality row.
    pub mu: f64,
}

impl Certificate {
    /// Largest violation of `Gᵀλ + μ a = 0`, `λ ≥ 0` and `λ·b + μ r = 1`.
    pub fn defect(&self, g: &DMatrix<f64>, b: &DVector<f64>, a: &DVector<f64>, r: f64) -> f64 {
        let station = (g.transpose() * &self.lambda + a * self.mu).amax();
        let sign = self.lambda.iter().fold(0.0f64, |acc, &l| acc.max(-l));
        let gap = (self.lambda.dot(b) + self.mu * r - 1.0).abs();
        station.max(sign).max(gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Feasible(DVector<f64>),
    Infeasible(Certificate),
}

/// Largest violation of `G y ≥ b` and `a·y = r` at `y`.
pub fn violation(g: &DMatrix<f64>, b: &DVector<f64>, a: &DVector<f64>, r: f64, y: &DVector<f64>) -> f64 {
    let gy = g * y;
    let ineq = gy.iter().zip(b.iter()).fold(0.0f64, |acc, (v, lo)| acc.max(lo - v));
    ineq.max((a.dot(y) - r).abs())
}

/// Decides `G y ≥ b, a·y = r`. `tol` bounds the residuals accepted when the
/// answer is re-checked.
pub fn lp_feasibility(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    a: &DVector<f64>,
    r: f64,
    tol: f64,
) -> Result<LpOutcome> {
    let (m, k) = g.shape();
    assert_eq!(b.len(), m);
    assert_eq!(a.len(), k);

    // rows scaled to unit norm; the feasible set is unchanged
    let mut gs = g.clone();
    let mut bs = b.clone();
    let mut scale = DVector::from_element(m, 1.0);
    for i in 0..m {
        let nrm = g.row(i).norm();
        if nrm > 0.0 {
            gs.row_mut(i).scale_mut(1.0 / nrm);
            bs[i] /= nrm;
            scale[i] = nrm;
        }
    }
    let a_nrm = a.norm();
    let (as_, rs) = if a_nrm > 0.0 { (a / a_nrm, r / a_nrm) } else { (a.clone(), r) };

    // primal: vars [y (free, k), s (≥ 0, m)]; rows [G −I][y; s] = b, [a 0] = r
    let mut pa = DMatrix::zeros(m + 1, k + m);
    pa.view_mut((0, 0), (m, k)).copy_from(&gs);
    for i in 0..m {
        pa[(i, k + i)] = -1.0;
    }
    pa.view_mut((m, 0), (1, k)).copy_from(&as_.transpose());
    let mut pb = DVector::zeros(m + 1);
    pb.rows_mut(0, m).copy_from(&bs);
    pb[m] = rs;
    let mut free = vec![true; k];
    free.extend(std::iter::repeat_n(false, m));

    if let Some(x) = phase_one(&pa, &pb, &free)? {
        let y = x.rows(0, k).into_owned();
        if violation(g, b, a, r, &y) <= tol {
            return Ok(LpOutcome::Feasible(y));
        }
    }

    // alternative: vars [λ (≥ 0, m), μ (free)]; rows [Gᵀ a][λ; μ] = 0, [bᵀ r] = 1
    let mut fa = DMatrix::zeros(k + 1, m + 1);
    fa.view_mut((0, 0), (k, m)).copy_from(&gs.transpose());
    fa.view_mut((0, m), (k, 1)).copy_from(&as_);
    fa.view_mut((k, 0), (1, m)).copy_from(&bs.transpose());
    fa[(k, m)] = rs;
    let mut fb = DVector::zeros(k + 1);
    fb[k] = 1.0;
    let mut ffree = vec![false; m];
    ffree.push(true);

    if let Some(x) = phase_one(&fa, &fb, &ffree)? {
        // undo the row scaling: λ_i multiplies the scaled row, i.e. λ_i / ‖g_i‖
        let lambda = DVector::from_fn(m, |i, _| x[i].max(0.0) / scale[i]);
        let mu = if a_nrm > 0.0 { x[m] / a_nrm } else { x[m] };
        let cert = Certificate { lambda, mu };
        if cert.defect(g, b, a, r) <= tol {
            return Ok(LpOutcome::Infeasible(cert));
        }
    }

    Err(Error::SolverFailure(
        "neither a feasible point nor an infeasibility certificate verified".into(),
    ))
}

const PIVOT_TOL: f64 = 1e-9;

/// Rebuilds the tableau as `B⁻¹ [A | I]` from the original rows, discarding
/// accumulated pivoting error.
fn refactor(
    t0: &[Vec<f64>],
    rhs0: &[f64],
    basis: &[usize],
    t: &mut [Vec<f64>],
    rhs: &mut [f64],
) -> Result<()> {
    let m = t0.len();
    let width = t0.first().map_or(0, |r| r.len());
    let bm = DMatrix::from_fn(m, m, |i, j| t0[i][basis[j]]);
    let lu = bm.lu();
    let full = DMatrix::from_fn(m, width + 1, |i, j| if j < width { t0[i][j] } else { rhs0[i] });
    let sol = lu
        .solve(&full)
        .ok_or_else(|| Error::SolverFailure("simplex basis became singular".into()))?;
    for i in 0..m {
        for j in 0..width {
            t[i][j] = sol[(i, j)];
        }
        rhs[i] = sol[(i, width)].max(0.0);
    }
    for (i, &bv) in basis.iter().enumerate() {
        for (r, row) in t.iter_mut().enumerate() {
            row[bv] = if r == i { 1.0 } else { 0.0 };
        }
    }
    Ok(())
}

/// Recomputes the phase-1 reduced costs and objective from the tableau.
fn refresh_costs(
    t: &[Vec<f64>],
    rhs: &[f64],
    basis: &[usize],
    n: usize,
    cost: &mut [f64],
    obj: &mut f64,
) {
    for (c, v) in cost.iter_mut().enumerate() {
        *v = if c >= n { 1.0 } else { 0.0 };
    }
    *obj = 0.0;
    for (i, &bv) in basis.iter().enumerate() {
        if bv >= n {
            for (v, x) in cost.iter_mut().zip(&t[i]) {
                *v -= x;
            }
            *obj += rhs[i];
        }
    }
    for &bv in basis {
        cost[bv] = 0.0;
    }
}

/// Finds `x` with `A x = b`, `x_j ≥ 0` unless `free[j]`. Returns `None`
/// when the phase-1 optimum is positive.
fn phase_one(a: &DMatrix<f64>, b: &DVector<f64>, free: &[bool]) -> Result<Option<DVector<f64>>> {
    let (m, n0) = a.shape();
    // free variables split into a positive and a negative part
    let cols: Vec<(usize, f64)> = (0..n0)
        .flat_map(|j| {
            let pos = std::iter::once((j, 1.0));
            let neg = free[j].then_some((j, -1.0));
            pos.chain(neg)
        })
        .collect();
    let n = cols.len();
    let width = n + m;

    // tableau rows: [A_split | I] with nonnegative right-hand sides
    let mut t: Vec<Vec<f64>> = vec![vec![0.0; width]; m];
    let mut rhs: Vec<f64> = b.iter().copied().collect();
    for i in 0..m {
        let sgn = if b[i] < 0.0 { -1.0 } else { 1.0 };
        rhs[i] *= sgn;
        for (c, &(j, s)) in cols.iter().enumerate() {
            t[i][c] = sgn * s * a[(i, j)];
        }
        t[i][n + i] = 1.0;
    }
    let mut basis: Vec<usize> = (n..width).collect();
    let t0 = t.clone();
    let rhs0 = rhs.clone();

    // reduced costs of the phase-1 objective Σ artificials
    let mut cost = vec![0.0; width];
    for row in &t {
        for c in 0..n {
            cost[c] -= row[c];
        }
    }
    let mut obj: f64 = rhs.iter().sum();

    let max_iter = 50 * (m + width) + 1000;
    let mut degenerate_run = 0usize;
    let mut banned = vec![false; width];
    let mut refreshed = false;
    for iter in 0..max_iter {
        if iter % 50 == 49 {
            refactor(&t0, &rhs0, &basis, &mut t, &mut rhs)?;
            refresh_costs(&t, &rhs, &basis, n, &mut cost, &mut obj);
        }
        let bland = degenerate_run > 50;
        let eligible = |c: &usize| cost[*c] < -1e-10 && !banned[*c];
        let enter = if bland {
            (0..width).find(eligible)
        } else {
            (0..width)
                .filter(eligible)
                .min_by(|&x, &y| cost[x].total_cmp(&cost[y]))
        };
        let Some(e) = enter else {
            if !refreshed {
                // confirm optimality on a freshly factored tableau
                refactor(&t0, &rhs0, &basis, &mut t, &mut rhs)?;
                refresh_costs(&t, &rhs, &basis, n, &mut cost, &mut obj);
                banned.iter_mut().for_each(|b| *b = false);
                refreshed = true;
                continue;
            }
            if obj > 1e-9 * (1.0 + b.amax()) {
                return Ok(None);
            }
            let mut x = DVector::zeros(n0);
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    let (j, s) = cols[bv];
                    x[j] += s * rhs[i];
                }
            }
            return Ok(Some(x));
        };

        // ratio test; among (near-)ties prefer the largest pivot for
        // stability, or the smallest basic index under Bland's rule
        let mut best = f64::INFINITY;
        for row in 0..m {
            let p = t[row][e];
            if p > PIVOT_TOL {
                best = best.min(rhs[row] / p);
            }
        }
        let mut leave: Option<usize> = None;
        for row in 0..m {
            let p = t[row][e];
            if p > PIVOT_TOL && rhs[row] / p <= best + 1e-12 {
                let better = match leave {
                    None => true,
                    Some(l) if bland => basis[row] < basis[l],
                    Some(l) => p > t[l][e],
                };
                if better {
                    leave = Some(row);
                }
            }
        }
        let Some(l) = leave else {
            // a phase-1 objective is bounded below, so a column without a
            // pivot only has a drifted reduced cost
            refresh_costs(&t, &rhs, &basis, n, &mut cost, &mut obj);
            banned[e] = true;
            continue;
        };
        banned.iter_mut().for_each(|b| *b = false);
        refreshed = false;
        degenerate_run = if best.abs() < 1e-14 { degenerate_run + 1 } else { 0 };

        let piv = t[l][e];
        t[l].iter_mut().for_each(|v| *v /= piv);
        rhs[l] /= piv;
        let prow = std::mem::take(&mut t[l]);
        for i in 0..m {
            if i == l {
                continue;
            }
            let f = t[i][e];
            if f != 0.0 {
                for (v, p) in t[i].iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                rhs[i] -= f * rhs[l];
                if rhs[i] < 0.0 && rhs[i] > -1e-13 {
                    rhs[i] = 0.0;
                }
            }
        }
        let f = cost[e];
        for (v, p) in cost.iter_mut().zip(&prow) {
            *v -= f * p;
        }
        obj += f * rhs[l];
        t[l] = prow;
        basis[l] = e;
    }
    Err(Error::SolverFailure(format!(
        "phase-1 simplex exceeded {max_iter} iterations"
    )))
}
