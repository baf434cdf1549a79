//! Brute-force ground truth for small networks: grid sampling of the
//! voltage space, nondominated filtering of the sampled powers, and the
//! locus where the Jacobian turns singular.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::powerflow::{injections, jacobian};
use crate::{Error, Network, Result, VoltageState};

/// Default cap on the number of grid points.
pub const MAX_GRID_POINTS: u64 = 10_000_000;
/// Default cap on the number of sampled state variables.
pub const MAX_STATE_VARIABLES: usize = 4;

/// Evenly spaced values `lo, lo + step, …` up to `hi` (inclusive, within
/// half a step).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Axis> {
        if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0) {
            return Err(Error::InvalidInput(format!("bad grid axis {lo}:{step}:{hi}")));
        }
        Ok(Axis { lo, hi, step })
    }

    pub fn len(&self) -> usize {
        if self.hi < self.lo {
            0
        } else {
            ((self.hi - self.lo) / self.step + 0.5).floor() as usize + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }
}

/// A tensor grid over the PQ state.
///
/// In real-only mode there is one axis per PQ bus (real parts; imaginary
/// parts are held at zero), which is exact for purely resistive networks
/// with a real slack voltage. Otherwise the axes follow the state vector:
/// real parts of every PQ bus, then imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub real_only: bool,
}

impl GridSpec {
    pub fn point_count(&self) -> u64 {
        self.axes.iter().map(|a| a.len() as u64).product()
    }

    fn coordinates(&self, mut index: usize, out: &mut [f64]) {
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let len = axis.len();
            out[k] = axis.value(index % len);
            index /= len;
        }
    }

    /// Full `[v_re; v_im]` state vector for grid coordinates.
    fn state_vector(&self, coords: &[f64]) -> DVector<f64> {
        if self.real_only {
            let n = coords.len();
            DVector::from_fn(2 * n, |i, _| if i < n { coords[i] } else { 0.0 })
        } else {
            DVector::from_column_slice(coords)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLimits {
    pub max_points: u64,
    pub max_state_variables: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_points: MAX_GRID_POINTS,
            max_state_variables: MAX_STATE_VARIABLES,
        }
    }
}

/// Sampled grid: coordinates, active powers and Jacobian determinant of every
/// grid point, stored row-major in grid index order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    pub grid: GridSpec,
    /// Coordinates per point (`grid.axes.len()` values each).
    pub coords: Vec<f64>,
    /// PQ active powers per point (`n` values each).
    pub p: Vec<f64>,
    pub det_j: Vec<f64>,
    n: usize,
}

impl RegionSample {
    pub fn len(&self) -> usize {
        self.det_j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.det_j.is_empty()
    }

    /// Number of load buses (length of each `p` row).
    pub fn loads(&self) -> usize {
        self.n
    }

    pub fn coords_of(&self, i: usize) -> &[f64] {
        let d = self.grid.axes.len();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn p_of(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    pub fn p_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.p.chunks_exact(self.n.max(1)).take(self.len())
    }

    pub fn state_of(&self, net: &Network, i: usize) -> VoltageState {
        VoltageState::from_state_vector(net, &self.grid.state_vector(self.coords_of(i)))
    }
}

/// Determinant used by the oracle: the `∂p/∂v_re` block in real-only mode,
/// the full Jacobian otherwise.
pub fn oracle_determinant(net: &Network, v: &VoltageState, real_only: bool) -> f64 {
    let j = jacobian(net, v);
    if real_only {
        j.real_block_determinant()
    } else {
        j.determinant()
    }
}

/// Evaluates powers and the Jacobian determinant over the grid.
pub fn sample_region(net: &Network, grid: &GridSpec) -> Result<RegionSample> {
    sample_region_with(net, grid, &OracleLimits::default())
}

pub fn sample_region_with(net: &Network, grid: &GridSpec, limits: &OracleLimits) -> Result<RegionSample> {
    let n = net.pq_count();
    let expected = if grid.real_only { n } else { 2 * n };
    if grid.axes.len() != expected {
        return Err(Error::InvalidInput(format!(
            "grid has {} axes, the {} state needs {expected}",
            grid.axes.len(),
            if grid.real_only { "real-only" } else { "full" }
        )));
    }
    if expected > limits.max_state_variables {
        return Err(Error::InvalidInput(format!(
            "oracle sampling of {expected} state variables exceeds the limit of {}",
            limits.max_state_variables
        )));
    }
    let points = grid.point_count();
    if points > limits.max_points {
        return Err(Error::GridTooLarge {
            points,
            limit: limits.max_points,
        });
    }

    let dim = grid.axes.len();
    let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..points as usize)
        .into_par_iter()
        .map(|i| {
            let mut c = vec![0.0; dim];
            grid.coordinates(i, &mut c);
            let v = VoltageState::from_state_vector(net, &grid.state_vector(&c));
            let p = injections(net, &v).0;
            let det = oracle_determinant(net, &v, grid.real_only);
            (c, p.as_slice().to_vec(), det)
        })
        .collect();

    let mut sample = RegionSample {
        grid: grid.clone(),
        coords: Vec::with_capacity(rows.len() * dim),
        p: Vec::with_capacity(rows.len() * n),
        det_j: Vec::with_capacity(rows.len()),
        n,
    };
    for (c, p, det) in rows {
        sample.coords.extend(c);
        sample.p.extend(p);
        sample.det_j.push(det);
    }
    Ok(sample)
}

/// `a` dominates `b`: no component smaller, at least one larger.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        strict |= x > y;
    }
    strict
}

/// Indices of the nondominated rows. Exact duplicates of a nondominated
/// row are all kept.
pub fn front_indices<R: AsRef<[f64]> + Sync>(rows: &[R]) -> Vec<usize> {
    if rows.is_empty() {
        return Vec::new();
    }
    if rows[0].as_ref().len() == 2 {
        // sweep by decreasing p0; a row survives when its p1 beats every
        // row with larger (or equal and better) p0
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (rows[a].as_ref(), rows[b].as_ref());
            rb[0].total_cmp(&ra[0]).then(rb[1].total_cmp(&ra[1]))
        });
        let mut keep = Vec::new();
        let mut best = f64::NEG_INFINITY;
        let mut last: Option<&[f64]> = None;
        for i in order {
            let r = rows[i].as_ref();
            if r[1] > best || last == Some(r) {
                keep.push(i);
                best = best.max(r[1]);
                last = Some(r);
            }
        }
        keep.sort_unstable();
        return keep;
    }
    (0..rows.len())
        .into_par_iter()
        .filter(|&i| !rows.iter().any(|other| dominates(other.as_ref(), rows[i].as_ref())))
        .collect()
}

/// The nondominated subset, in input order.
pub fn pareto_front(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    front_indices(points).into_iter().map(|i| points[i].clone()).collect()
}

/// Euclidean distance from `p` to the nearest of `front`.
pub fn distance_to_front<R: AsRef<[f64]>>(p: &[f64], front: &[R]) -> f64 {
    front
        .iter()
        .map(|f| {
            f.as_ref()
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LocusClass {
    Boundary,
    Interior,
}

impl LocusClass {
    pub fn as_str(self) -> &'static str {
        match self {
            LocusClass::Boundary => "boundary",
            LocusClass::Interior => "interior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularPoint {
    /// Refined state.
    pub v: VoltageState,
    pub p: Vec<f64>,
    pub det_j: f64,
    /// Distance from `p` to the sampled front.
    pub front_distance: f64,
    pub class: LocusClass,
    /// Found by a local minimum of `|det|` rather than a sign change.
    pub touching: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocusOptions {
    /// Front distance in p-space up to which a point counts as boundary.
    pub tol: f64,
    /// Only every `stride`-th grid line along each axis is scanned.
    pub stride: usize,
    /// `|det|` threshold for touching zeros without a sign change.
    pub touch_threshold: f64,
}

impl Default for LocusOptions {
    fn default() -> Self {
        LocusOptions {
            tol: 3e-3,
            stride: 1,
            touch_threshold: 1e-6,
        }
    }
}

/// Bisection on the determinant between two states with opposite signs,
/// until the bracket is shorter than `tol` in the ∞-norm.
pub fn bisect_singular(
    net: &Network,
    a: &DVector<f64>,
    b: &DVector<f64>,
    real_only: bool,
    tol: f64,
) -> DVector<f64> {
    let det = |x: &DVector<f64>| oracle_determinant(net, &VoltageState::from_state_vector(net, x), real_only);
    let (mut lo, mut hi) = (a.clone(), b.clone());
    let lo_sign = det(&lo).signum();
    for _ in 0..200 {
        if (&hi - &lo).amax() <= tol {
            break;
        }
        let mid = (&lo + &hi) * 0.5;
        let d = det(&mid);
        if d == 0.0 {
            return mid;
        }
        if d.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * 0.5
}

/// Singular points of the sampled grid, classified against the sampled
/// front.
///
/// Zeros are bracketed by sign changes of `det J` between neighbors along
/// every grid axis and refined by bisection to 1e−10; zeros where `det J`
/// only touches zero are caught as local minima of `|det J|` below the touch
/// threshold.
pub fn singular_locus(net: &Network, sample: &RegionSample, opts: &LocusOptions) -> Vec<SingularPoint> {
    let grid = &sample.grid;
    let dims: Vec<usize> = grid.axes.iter().map(|a| a.len()).collect();
    if sample.is_empty() {
        return Vec::new();
    }
    let stride = opts.stride.max(1);
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let multi_index = |mut i: usize| -> Vec<usize> {
        let mut out = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            out[k] = i % dims[k];
            i /= dims[k];
        }
        out
    };
    let on_scanned_line = |idx: &[usize], axis: usize| {
        idx.iter().enumerate().all(|(k, &c)| k == axis || c % stride == 0)
    };

    enum Hit {
        Bracket(usize, usize),
        Touch(usize),
    }
    let hits: Vec<Hit> = (0..sample.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let idx = multi_index(i);
            let mut out = Vec::new();
            for axis in 0..dims.len() {
                if !on_scanned_line(&idx, axis) || idx[axis] + 1 >= dims[axis] {
                    continue;
                }
                let j = i + strides[axis];
                let (di, dj) = (sample.det_j[i], sample.det_j[j]);
                if di != 0.0 && dj != 0.0 && di.signum() != dj.signum() {
                    out.push(Hit::Bracket(i, j));
                } else if idx[axis] > 0 {
                    let h = i - strides[axis];
                    let dh = sample.det_j[h];
                    let touching = di.abs() < opts.touch_threshold
                        && di.abs() <= dh.abs()
                        && di.abs() <= dj.abs()
                        && (di == 0.0 || (dh.signum() == di.signum() && dj.signum() == di.signum()));
                    if touching {
                        out.push(Hit::Touch(i));
                    }
                }
            }
            out
        })
        .collect();

    let rows: Vec<&[f64]> = sample.p_rows().collect();
    let front: Vec<&[f64]> = front_indices(&rows).into_iter().map(|i| rows[i]).collect();

    hits.par_iter()
        .map(|hit| {
            let (x, touching) = match *hit {
                Hit::Bracket(i, j) => {
                    let a = grid.state_vector(sample.coords_of(i));
                    let b = grid.state_vector(sample.coords_of(j));
                    (bisect_singular(net, &a, &b, grid.real_only, 1e-10), false)
                }
                Hit::Touch(i) => (grid.state_vector(sample.coords_of(i)), true),
            };
            let v = VoltageState::from_state_vector(net, &x);
            let p = injections(net, &v).0.as_slice().to_vec();
            let front_distance = distance_to_front(&p, &front);
            SingularPoint {
                det_j: oracle_determinant(net, &v, grid.real_only),
                class: if front_distance <= opts.tol {
                    LocusClass::Boundary
                } else {
                    LocusClass::Interior
                },
                v,
                p,
                front_distance,
                touching,
            }
        })
        .collect()
}
