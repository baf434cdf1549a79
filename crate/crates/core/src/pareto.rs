//! Boundary points that maximize a weighted load growth `z·p`.
//!
//! Because every power is quadratic in the rectangular voltages, `z·p` is a
//! quadratic form `½ xᵀH(z)x + c(z)·x + const` in the PQ state `x`, and its
//! stationarity condition `J_pᵀ(x)·z = 0` is the linear system
//! `H(z)·x = −c(z)`. When `H(z)` is negative semidefinite the solution is
//! the global maximizer of `z·p`, hence a point of the loadability boundary.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{check_on_boundary, margin, ConstraintSet, FEASIBILITY_TOL};
use crate::error::NotParetoReason;
use crate::powerflow::{injections, jacobian, t_coefficients};
use crate::{Error, Network, Result, VoltageState};

/// Relative eigenvalue / singular value threshold for rank decisions.
const RANK_TOL: f64 = 1e-10;

/// Non-negative, nonzero weights over the PQ buses (state order).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct GrowthDirection(Vec<f64>);

impl GrowthDirection {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "growth direction weights must be finite and non-negative".into(),
            ));
        }
        if z.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidInput("growth direction is all zero".into()));
        }
        Ok(GrowthDirection(z))
    }

    /// `count` directions `(cos α, sin α)` with α evenly spread over the
    /// open quarter circle, midpoints of equal sub-intervals.
    pub fn angular(count: usize) -> Vec<GrowthDirection> {
        (0..count)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * (i as f64 + 0.5) / count as f64;
                GrowthDirection(vec![a.cos(), a.sin()])
            })
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which linear system to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StationarityForm {
    /// `J_pᵀ z = 0`, the chain-rule stationarity of `z·p`.
    #[default]
    Gradient,
    /// Cross terms `(g·v_d,r + b·v_d,i)·z_k` evaluated at the bus's own
    /// voltage instead of the neighbor's. Kept for comparison only; it agrees
    /// with the gradient form only at symmetric solutions.
    Printed,
}

#[derive(Debug, Clone, Default)]
pub struct LocateOptions {
    pub form: StationarityForm,
    /// Reference state for rank-deficient systems: the minimum-distance
    /// solution to it is returned. Defaults to the flat state.
    pub anchor: Option<VoltageState>,
    /// Skip the concavity and boundary checks and report any stationary
    /// point.
    pub skip_verification: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub z: GrowthDirection,
    pub v: VoltageState,
    /// Active consumption at the PQ buses, state order.
    pub p: DVector<f64>,
    /// ∞-norm of the stationarity residual at `v`.
    pub residual_norm: f64,
    /// Null-space dimension of the system; nonzero means the point is one
    /// of a family of solutions.
    pub null_dim: usize,
    /// Outcome of the boundary check (`false` only when verification was
    /// skipped and it failed).
    pub on_boundary: bool,
}

/// `H(z)` and `c(z)` of the gradient form, assembled line by line.
pub fn stationarity_system(net: &Network, z: &GrowthDirection) -> (DMatrix<f64>, DVector<f64>) {
    let n = net.pq_count();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    let mut c = DVector::zeros(2 * n);
    let zs = z.as_slice();
    let weight = |bus: usize| net.state_position(bus).map_or(0.0, |i| zs[i]);
    for line in net.lines() {
        for (d, k) in [(line.from, line.to), (line.to, line.from)] {
            let Some(i) = net.state_position(d) else { continue };
            let zd = weight(d);
            if zd == 0.0 {
                continue;
            }
            let (g, b) = (line.g, line.b);
            let (dr, di) = (i, n + i);
            h[(dr, dr)] -= 2.0 * g * zd;
            h[(di, di)] -= 2.0 * g * zd;
            match net.state_position(k) {
                Some(j) => {
                    let (kr, ki) = (j, n + j);
                    // z_d·(g·v_dr·v_kr − b·v_dr·v_ki + b·v_di·v_kr + g·v_di·v_ki)
                    for (r, s, val) in [(dr, kr, g), (dr, ki, -b), (di, kr, b), (di, ki, g)] {
                        h[(r, s)] += val * zd;
                        h[(s, r)] += val * zd;
                    }
                }
                None => {
                    let vk = net.slack_voltage();
                    c[dr] += zd * (g * vk.re - b * vk.im);
                    c[di] += zd * (g * vk.im + b * vk.re);
                }
            }
        }
    }
    (h, c)
}

/// Stationarity residual at `v` in the requested form.
pub fn stationarity_residual(
    net: &Network,
    v: &VoltageState,
    z: &GrowthDirection,
    form: StationarityForm,
) -> DVector<f64> {
    let n = net.pq_count();
    match form {
        StationarityForm::Gradient => jacobian(net, v).p_block().transpose() * DVector::from_column_slice(z.as_slice()),
        StationarityForm::Printed => {
            let zs = z.as_slice();
            let mut r = DVector::zeros(2 * n);
            for (i, d) in net.pq_buses().enumerate() {
                let t = t_coefficients(net, v, d);
                let vd = v.voltage(d);
                let mut re = (2.0 * t.t1 * vd.re + t.t2) * zs[i];
                let mut im = (2.0 * t.t1 * vd.im + t.t3) * zs[i];
                for nb in net.neighbors(d) {
                    if let Some(j) = net.state_position(nb.bus) {
                        re += (nb.g * vd.re + nb.b * vd.im) * zs[j];
                        im += (nb.g * vd.im - nb.b * vd.re) * zs[j];
                    }
                }
                r[i] = re;
                r[n + i] = im;
            }
            r
        }
    }
}

/// `A x = rhs` for an affine residual, recovered column by column.
fn affine_system(f: impl Fn(&DVector<f64>) -> DVector<f64>, dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    let f0 = f(&DVector::zeros(dim));
    let mut a = DMatrix::zeros(f0.len(), dim);
    for j in 0..dim {
        let mut e = DVector::zeros(dim);
        e[j] = 1.0;
        a.set_column(j, &(f(&e) - &f0));
    }
    (a, -f0)
}

/// Solves `a x = rhs`, falling back to the least-squares solution closest to
/// `anchor` when `a` is rank deficient. Returns `(x, null_dim)`.
fn solve_anchored(a: &DMatrix<f64>, rhs: &DVector<f64>, anchor: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let null_dim = svd.singular_values.iter().filter(|s| **s <= cut).count();
    if null_dim == 0 {
        if let Some(x) = a.clone().lu().solve(rhs) {
            return Ok((x, 0));
        }
    }
    let dx = svd
        .solve(&(rhs - a * anchor), cut)
        .map_err(|e| Error::SolverFailure(e.to_string()))?;
    let x = anchor + dx;
    let defect = (a * &x - rhs).amax();
    if defect > 1e-9 * (1.0 + rhs.amax()) {
        return Err(Error::SingularSystem { null_dim });
    }
    Ok((x, null_dim))
}

/// Boundary point maximizing `z·p`, with default options.
pub fn locate_boundary_point(net: &Network, z: &GrowthDirection) -> Result<ParetoPoint> {
    locate_with(net, z, &LocateOptions::default())
}

pub fn locate_with(net: &Network, z: &GrowthDirection, opts: &LocateOptions) -> Result<ParetoPoint> {
    let n = net.pq_count();
    if z.len() != n {
        return Err(Error::InvalidInput(format!(
            "growth direction has {} weights, network has {n} PQ buses",
            z.len()
        )));
    }
    if !net.is_connected() {
        return Err(Error::InvalidInput("network is not connected to the slack bus".into()));
    }
    let anchor = match &opts.anchor {
        Some(v) => v.state_vector(),
        None => VoltageState::flat(net).state_vector(),
    };

    let (a, rhs) = match opts.form {
        StationarityForm::Gradient => {
            let (h, c) = stationarity_system(net, z);
            if !opts.skip_verification {
                let eig = SymmetricEigen::new(h.clone()).eigenvalues;
                let scale = eig.amax().max(f64::MIN_POSITIVE);
                if eig.max() > RANK_TOL * scale {
                    return Err(Error::NotPareto {
                        reason: NotParetoReason::IndefiniteObjective,
                    });
                }
            }
            (h, -c)
        }
        StationarityForm::Printed => affine_system(
            |x| stationarity_residual(net, &VoltageState::from_state_vector(net, x), z, StationarityForm::Printed),
            2 * n,
        ),
    };
    let (x, null_dim) = solve_anchored(&a, &rhs, &anchor)?;
    let v = VoltageState::from_state_vector(net, &x);
    let residual_norm = stationarity_residual(net, &v, z, opts.form).amax();

    let verdict = check_on_boundary(&jacobian(net, &v), &ConstraintSet::default(), FEASIBILITY_TOL)?;
    if !verdict.on_boundary && !opts.skip_verification {
        return Err(Error::NotPareto {
            reason: NotParetoReason::ImprovingDirectionExists,
        });
    }
    Ok(ParetoPoint {
        z: z.clone(),
        p: injections(net, &v).0,
        v,
        residual_norm,
        null_dim,
        on_boundary: verdict.on_boundary,
    })
}

#[derive(Debug)]
pub struct SweepEntry {
    pub z: GrowthDirection,
    pub outcome: Result<ParetoPoint>,
}

/// Locates the boundary point of every direction, in parallel.
///
/// Failures are kept per direction. For two-load networks the located points
/// come first, ordered by their angle in the `p` plane, followed by the
/// failures in input order; otherwise input order is kept.
pub fn sweep_front(net: &Network, zs: &[GrowthDirection], opts: &LocateOptions) -> Vec<SweepEntry> {
    let mut entries: Vec<SweepEntry> = zs
        .par_iter()
        .map(|z| SweepEntry {
            z: z.clone(),
            outcome: locate_with(net, z, opts),
        })
        .collect();
    if net.pq_count() == 2 {
        let angle = |e: &SweepEntry| match &e.outcome {
            Ok(pt) => pt.p[1].atan2(pt.p[0]),
            Err(_) => f64::INFINITY,
        };
        // stable: failures keep their input order
        entries.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
    }
    entries
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    /// Interpolation parameter, 0 at the start state and 1 at the end.
    pub t: f64,
    /// Σp relative to its value at the end state.
    pub scale: f64,
    pub sum_p: f64,
    pub margin: f64,
}

/// Margins along the straight voltage path from `v_start` to `v_end`.
pub fn ray_margin_trace(
    net: &Network,
    v_start: &VoltageState,
    v_end: &VoltageState,
    steps: usize,
) -> Result<Vec<TracePoint>> {
    if steps < 2 {
        return Err(Error::InvalidInput("a trace needs at least 2 steps".into()));
    }
    let end_sum = injections(net, v_end).0.sum();
    (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            let v = v_start.lerp(v_end, t);
            let sum_p = injections(net, &v).0.sum();
            let m = margin(&jacobian(net, &v), &ConstraintSet::default())?;
            Ok(TracePoint {
                t,
                scale: if end_sum != 0.0 { sum_p / end_sum } else { t },
                sum_p,
                margin: m.m,
            })
        })
        .collect()
}
