//! Monotone explicit finite-difference solver, residual certification,
//! closed-form oracles and the terminal-time subsolution check.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::{time_steps, Boundary, GridFunction, SpatialGrid, SpatialLattice};
use crate::jets::{fit_jet, Jet};
use crate::linalg::{Mat, Vector};
use crate::operators::OperatorSpec;
use crate::scalar::{smax, smin, Scalar};

/// Default tolerance on discrete residuals. Solver output satisfies its own
/// scheme up to rounding, which is many orders of magnitude below this.
pub const SCHEME_TOL: f64 = 1e-8;

/// Lattices larger than this are updated in parallel.
const PAR_THRESHOLD: usize = 4096;

#[derive(Clone, Copy, Debug)]
pub struct SolveParams<S> {
    pub horizon: S,
    /// Requested time step; `None` uses `cfl_fraction` times the stable bound.
    pub dt: Option<S>,
    pub cfl_fraction: S,
    /// Store every `k`-th step (the step count is rounded up to a multiple).
    pub store_every: usize,
    pub check_monotone: bool,
}

impl<S: Scalar> SolveParams<S> {
    pub fn new(horizon: S) -> Self {
        Self {
            horizon,
            dt: None,
            cfl_fraction: S::lit(0.9),
            store_every: 1,
            check_monotone: true,
        }
    }

    pub fn with_dt(mut self, dt: S) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_store_every(mut self, k: usize) -> Self {
        self.store_every = k.max(1);
        self
    }
}

/// Resolved time stepping.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepPlan<S> {
    pub dt: S,
    pub steps: usize,
    pub cfl_bound: S,
    /// Cells next to a clamped boundary excluded from assertions.
    pub pollution_width: usize,
}

/// Largest stable step: `1 / (2nΛ_diff/Δx² + nΛ_grad/Δx + Λ_r)`.
pub fn cfl_bound<S: Scalar>(op: &OperatorSpec<S>, lattice: &SpatialLattice<S>) -> S {
    let n = S::from_usize_lossy(lattice.dim());
    let dx = lattice.dx();
    let m = op.meta();
    let rate = S::two() * n * m.diffusion / (dx * dx) + n * m.gradient / dx + m.reaction;
    if rate > S::zero() {
        S::one() / rate
    } else {
        S::infinity()
    }
}

/// `⌈T/Δx⌉` cells for clamped lattices, zero for periodic ones.
pub fn pollution_width<S: Scalar>(lattice: &SpatialLattice<S>, horizon: S) -> usize {
    match lattice.boundary() {
        Boundary::Periodic => 0,
        Boundary::Clamped => (horizon / lattice.dx() - S::lit(1e-9)).ceil().to_usize().unwrap_or(0),
    }
}

pub fn plan<S: Scalar>(
    op: &OperatorSpec<S>,
    lattice: &SpatialLattice<S>,
    params: &SolveParams<S>,
) -> Result<StepPlan<S>> {
    if op.dim() != lattice.dim() {
        return Err(LabError::LatticeMismatch(format!(
            "operator `{}` has dimension {}, lattice {}",
            op.name(),
            op.dim(),
            lattice.dim()
        )));
    }
    if !(params.horizon > S::zero()) {
        return Err(LabError::PreconditionFailed(format!(
            "horizon must be positive, got {}",
            params.horizon
        )));
    }
    let bound = cfl_bound(op, lattice);
    let requested = params.dt.unwrap_or_else(|| {
        if bound.is_finite() {
            params.cfl_fraction * bound
        } else {
            params.horizon / S::lit(100.0)
        }
    });
    if !(requested > S::zero()) || requested > bound * (S::one() + S::lit(1e-12)) {
        return Err(LabError::CflViolation {
            dt: requested.as_f64(),
            bound: bound.as_f64(),
        });
    }
    let every = params.store_every.max(1);
    let raw = time_steps(params.horizon, requested);
    let steps = raw.div_ceil(every) * every;
    Ok(StepPlan {
        dt: params.horizon / S::from_usize_lossy(steps),
        steps,
        cfl_bound: bound,
        pollution_width: pollution_width(lattice, params.horizon),
    })
}

/// Central first and second differences at one cell (ghost values replicate
/// the edge on clamped lattices).
pub fn central_derivatives<S: Scalar>(lat: &SpatialLattice<S>, vals: &[S], i: usize) -> (Vector<S>, Mat<S>) {
    let n = lat.dim();
    let dx = lat.dx();
    let inv2 = S::one() / (dx * dx);
    let u = vals[i];
    let mut p = Vector::zeros(n);
    let mut x = Mat::zeros(n);
    for a in 0..n {
        let mut e = [0isize; 2];
        e[a] = 1;
        let up = vals[lat.shift_ghost(i, e)];
        e[a] = -1;
        let dn = vals[lat.shift_ghost(i, e)];
        p[a] = (up - dn) / (S::two() * dx);
        x.set(a, a, (up - S::two() * u + dn) * inv2);
    }
    if n == 2 {
        let pp = vals[lat.shift_ghost(i, [1, 1])];
        let pm = vals[lat.shift_ghost(i, [1, -1])];
        let mp = vals[lat.shift_ghost(i, [-1, 1])];
        let mm = vals[lat.shift_ghost(i, [-1, -1])];
        let xy = (pp - pm - mp + mm) * S::lit(0.25) * inv2;
        x.set(0, 1, xy);
        x.set(1, 0, xy);
    }
    (p, x)
}

/// One-sided differences `(D⁻u, D⁺u)` per axis.
fn one_sided<S: Scalar>(lat: &SpatialLattice<S>, vals: &[S], i: usize) -> ([S; 2], [S; 2]) {
    let dx = lat.dx();
    let u = vals[i];
    let mut dm = [S::zero(); 2];
    let mut dp = [S::zero(); 2];
    for a in 0..lat.dim() {
        let mut e = [0isize; 2];
        e[a] = 1;
        dp[a] = (vals[lat.shift_ghost(i, e)] - u) / dx;
        e[a] = -1;
        dm[a] = (u - vals[lat.shift_ghost(i, e)]) / dx;
    }
    (dm, dp)
}

/// Godunov extremization: along each axis, maximize `F` over `[D⁻, D⁺]` when
/// `D⁻ ≤ D⁺` and minimize over `[D⁺, D⁻]` otherwise. Candidates are the
/// endpoints and `0` when it lies between them, which is exact for
/// nonlinearities depending on `p` through `|p_a|`-monotone expressions.
#[allow(clippy::too_many_arguments)]
fn godunov<S: Scalar>(
    op: &OperatorSpec<S>,
    t: S,
    x: &Vector<S>,
    r: S,
    hess: &Mat<S>,
    dm: &[S; 2],
    dp: &[S; 2],
    axis: usize,
    p: &mut Vector<S>,
) -> S {
    if axis == x.dim() {
        return op.eval_sym(t, x, r, p, hess);
    }
    let (lo, hi, maximize) = if dm[axis] <= dp[axis] {
        (dm[axis], dp[axis], true)
    } else {
        (dp[axis], dm[axis], false)
    };
    let mut cands = [lo, hi, S::zero()];
    let count = if lo < S::zero() && S::zero() < hi { 3 } else { 2 };
    let mut best = if maximize { -S::infinity() } else { S::infinity() };
    for c in cands.iter_mut().take(count) {
        p[axis] = *c;
        let v = godunov(op, t, x, r, hess, dm, dp, axis + 1, p);
        best = if maximize { smax(best, v) } else { smin(best, v) };
    }
    best
}

/// Discrete `F(t, x_i, u_i, Du_i, D²u_i)` at one cell.
#[inline]
pub fn discrete_operator_at<S: Scalar>(op: &OperatorSpec<S>, lat: &SpatialLattice<S>, vals: &[S], t: S, i: usize) -> S {
    let x = lat.point(i);
    let (pc, hess) = central_derivatives(lat, vals, i);
    if op.meta().upwind {
        let (dm, dp) = one_sided(lat, vals, i);
        let mut p = Vector::zeros(lat.dim());
        godunov(op, t, &x, vals[i], &hess, &dm, &dp, 0, &mut p)
    } else {
        op.eval_sym(t, &x, vals[i], &pc, &hess)
    }
}

/// Discrete operator on a whole slice.
pub fn discrete_operator<S: Scalar>(op: &OperatorSpec<S>, lat: &SpatialLattice<S>, vals: &[S], t: S) -> Vec<S> {
    if lat.len() >= PAR_THRESHOLD {
        (0..lat.len())
            .into_par_iter()
            .map(|i| discrete_operator_at(op, lat, vals, t, i))
            .collect()
    } else {
        (0..lat.len())
            .map(|i| discrete_operator_at(op, lat, vals, t, i))
            .collect()
    }
}

/// Verifies by finite perturbation that the explicit update at a few sample
/// cells is nondecreasing in every stencil value.
pub fn check_monotone_update<S: Scalar>(
    op: &OperatorSpec<S>,
    lat: &SpatialLattice<S>,
    vals: &[S],
    t: S,
    dt: S,
) -> Result<()> {
    let n = lat.len();
    let samples = 9usize.min(n);
    let scale = smax(S::one(), vals.iter().fold(S::zero(), |m, v| smax(m, v.abs())));
    let h = S::lit(1e-6) * scale;
    let offsets: Vec<[isize; 2]> = if lat.dim() == 1 {
        vec![[-1, 0], [0, 0], [1, 0]]
    } else {
        let mut v = Vec::new();
        for a in -1..=1 {
            for b in -1..=1 {
                v.push([a, b]);
            }
        }
        v
    };
    let mut work = vals.to_vec();
    for s in 0..samples {
        let i = if samples > 1 { s * (n - 1) / (samples - 1) } else { 0 };
        let base = vals[i] + dt * discrete_operator_at(op, lat, vals, t, i);
        for off in &offsets {
            let Some(j) = lat.shift(i, *off) else { continue };
            work[j] += h;
            let bumped = work[i] + dt * discrete_operator_at(op, lat, &work, t, i);
            work[j] = vals[j];
            let drop = base - bumped;
            if drop > S::lit(1e-6) * h {
                return Err(LabError::MonotonicityViolation {
                    cell: i,
                    neighbour: format!("offset {:?}", &off[..lat.dim()]),
                    drop: drop.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// Forward-Euler solve of `∂t u = F(t, x, u, Du, D²u)` from `u₀`.
pub fn solve<S: Scalar>(op: &OperatorSpec<S>, u0: &SpatialGrid<S>, params: &SolveParams<S>) -> Result<GridFunction<S>> {
    let lat = *u0.lattice();
    let plan = plan(op, &lat, params)?;
    let mut cur = u0.values().to_vec();
    lat.sync_periodic(&mut cur);
    if params.check_monotone {
        check_monotone_update(op, &lat, &cur, S::zero(), plan.dt)?;
    }
    let every = params.store_every.max(1);
    let mut slices = Vec::with_capacity(plan.steps / every + 1);
    slices.push(cur.clone());
    for k in 0..plan.steps {
        let t = plan.dt * S::from_usize_lossy(k);
        let f = discrete_operator(op, &lat, &cur, t);
        for (u, fv) in cur.iter_mut().zip(&f) {
            *u += plan.dt * *fv;
        }
        lat.sync_periodic(&mut cur);
        if let Some(bad) = cur.iter().position(|v| !v.is_finite()) {
            return Err(LabError::OperatorEvaluation {
                operator: op.name().to_string(),
                tuple: format!("non-finite update at step {k}, cell {bad}"),
            });
        }
        if (k + 1) % every == 0 {
            slices.push(cur.clone());
        }
    }
    GridFunction::from_slices(lat, plan.dt * S::from_usize_lossy(every), slices)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualClass {
    Subsolution,
    Supersolution,
    Solution,
    Neither,
}

impl ResidualClass {
    pub fn is_sub(self) -> bool {
        matches!(self, ResidualClass::Subsolution | ResidualClass::Solution)
    }

    pub fn is_super(self) -> bool {
        matches!(self, ResidualClass::Supersolution | ResidualClass::Solution)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport<S> {
    pub class: ResidualClass,
    pub max_residual: S,
    pub min_residual: S,
    /// `(slice, cell)` of the largest and smallest residual.
    pub argmax: (usize, usize),
    pub argmin: (usize, usize),
    pub tol: S,
    pub excluded_width: usize,
}

/// Discrete residual `r = (u^{k+1} − u^k)/Δt − F_h(t_k, u^k)` with the
/// solver's own stencil, on cells at least `exclude_width` cells from a
/// clamped boundary.
pub fn residual_check<S: Scalar>(
    u: &GridFunction<S>,
    op: &OperatorSpec<S>,
    tol: S,
    exclude_width: usize,
) -> ResidualReport<S> {
    let lat = *u.lattice();
    let width = if lat.boundary() == Boundary::Clamped {
        exclude_width
    } else {
        0
    };
    let mut max_r = (-S::infinity(), (0, 0));
    let mut min_r = (S::infinity(), (0, 0));
    for k in 0..u.n_slices().saturating_sub(1) {
        let t = u.time(k);
        let cur = u.slice(k);
        let next = u.slice(k + 1);
        let f = discrete_operator(op, &lat, cur, t);
        for i in 0..lat.len() {
            if lat.cells_to_boundary(i) < width {
                continue;
            }
            let r = (next[i] - cur[i]) / u.dt() - f[i];
            if r > max_r.0 {
                max_r = (r, (k, i));
            }
            if r < min_r.0 {
                min_r = (r, (k, i));
            }
        }
    }
    if !max_r.0.is_finite() {
        max_r.0 = S::zero();
        min_r.0 = S::zero();
    }
    let sub = max_r.0 <= tol;
    let sup = min_r.0 >= -tol;
    let class = match (sub, sup) {
        (true, true) => ResidualClass::Solution,
        (true, false) => ResidualClass::Subsolution,
        (false, true) => ResidualClass::Supersolution,
        (false, false) => ResidualClass::Neither,
    };
    ResidualReport {
        class,
        max_residual: max_r.0,
        min_residual: min_r.0,
        argmax: max_r.1,
        argmin: min_r.1,
        tol,
        excluded_width: width,
    }
}

/// Quadratic test function
/// `φ(t, x) = c + b(t − T) + ⟨p, x − x̄⟩ + ½⟨X(x − x̄), x − x̄⟩`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TestFunction<S> {
    pub center: Vector<S>,
    pub base: S,
    pub jet: Jet<S>,
}

impl<S: Scalar> TestFunction<S> {
    pub fn eval(&self, t: S, horizon: S, x: &Vector<S>) -> S {
        self.base + self.jet.expansion(t - horizon, &(*x - self.center))
    }

    pub fn gradient(&self, x: &Vector<S>) -> Vector<S> {
        self.jet.p + self.jet.x.mul_vec(&(*x - self.center))
    }
}

/// Test functions built from one-sided jet fits at `(T, x̄)`, tilted to
/// `(b − κ, p, X + κI)` so that `u − φ` has a strict local max at the centre.
pub fn fitted_test_family<S: Scalar>(u: &GridFunction<S>, centers: &[usize], kappa: S) -> Result<Vec<TestFunction<S>>> {
    let last = u.n_slices() - 1;
    let n = u.dim();
    centers
        .iter()
        .map(|&c| {
            let jet = fit_jet(u, last, c, 3, 3)?;
            Ok(TestFunction {
                center: u.lattice().point(c),
                base: u.get(last, c),
                jet: Jet::new(jet.b - kappa, jet.p, jet.x + Mat::scalar(n, kappa)),
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TestOutcome<S> {
    pub phi: TestFunction<S>,
    pub argmax_slice: usize,
    pub argmax_point: Vec<f64>,
    pub terminal: bool,
    /// `∂tφ − F(T, x̂, u, Dφ, D²φ)` when the max is terminal.
    pub margin: Option<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Checked,
    NoTerminalMaximizer,
}

#[derive(Clone, Debug, Serialize)]
pub struct TerminalReport<S> {
    pub status: TerminalStatus,
    pub pass: bool,
    pub tol: S,
    pub outcomes: Vec<TestOutcome<S>>,
}

/// Evaluates the subsolution inequality at `t = T` for every test function
/// whose `u − φ` lattice max (over the whole grid, or over `window` =
/// `(spatial radius, slices)` around `(T, x̄)`) sits on the final slice.
pub fn terminal_subsolution_check<S: Scalar>(
    u: &GridFunction<S>,
    op: &OperatorSpec<S>,
    family: &[TestFunction<S>],
    tol: S,
    window: Option<(S, usize)>,
) -> Result<TerminalReport<S>> {
    let lat = *u.lattice();
    let last = u.n_slices() - 1;
    let horizon = u.horizon();
    let mut outcomes = Vec::with_capacity(family.len());
    let mut pass = true;
    let mut any = false;
    for phi in family {
        let (k_lo, cells): (usize, Vec<usize>) = match window {
            None => (0, (0..lat.len()).collect()),
            Some((radius, slices)) => {
                let c = lat.index_of(&phi.center)?;
                let cells = lat
                    .offsets_within(radius)
                    .iter()
                    .filter_map(|o| lat.shift(c, *o))
                    .collect();
                ((last + 1).saturating_sub(slices.max(1)), cells)
            }
        };
        let mut best = (-S::infinity(), 0usize, 0usize);
        for k in k_lo..=last {
            let t = u.time(k);
            for &i in &cells {
                let v = u.get(k, i) - phi.eval(t, horizon, &lat.point(i));
                // Ties resolve towards later slices so flat-in-time maxima
                // count as terminal.
                if v >= best.0 {
                    best = (v, k, i);
                }
            }
        }
        let (_, k, i) = best;
        let terminal = k == last;
        let margin = if terminal {
            any = true;
            let x = lat.point(i);
            let m = phi.jet.b - op.eval(horizon, &x, u.get(last, i), &phi.gradient(&x), &phi.jet.x)?;
            pass &= m <= tol;
            Some(m)
        } else {
            None
        };
        outcomes.push(TestOutcome {
            phi: *phi,
            argmax_slice: k,
            argmax_point: lat.point(i).to_f64_vec(),
            terminal,
            margin,
        });
    }
    Ok(TerminalReport {
        status: if any {
            TerminalStatus::Checked
        } else {
            TerminalStatus::NoTerminalMaximizer
        },
        pass: pass && any,
        tol,
        outcomes,
    })
}

/// Names accepted by [`oracle`].
pub const ORACLES: [&str; 5] = ["heat-cos", "proper-heat-cos", "hopf-lax-abs", "hopf-lax-cos", "zero"];

/// Closed-form reference solutions.
///
/// * `heat-cos`: `e^{−nt} Π cos x_i` for `∂t u = Δu`;
/// * `proper-heat-cos`: `e^{−(n+1)t} Π cos x_i` for `∂t u = Δu − u`;
/// * `hopf-lax-abs`: `max(|x| − t, 0)` for `∂t u + |Du| = 0`, `u₀ = |x|`;
/// * `hopf-lax-cos`: `min_{|y−x|≤t} cos y` (one dimension);
/// * `zero`.
pub fn oracle<S: Scalar>(name: &str, t: S, x: &Vector<S>) -> Result<S> {
    let n = S::from_usize_lossy(x.dim());
    let prod_cos = || x.as_slice().iter().map(|v| v.cos()).fold(S::one(), |a, b| a * b);
    match name {
        "heat-cos" => Ok((-n * t).exp() * prod_cos()),
        "proper-heat-cos" => Ok((-(n + S::one()) * t).exp() * prod_cos()),
        "hopf-lax-abs" => Ok(smax(x.norm() - t, S::zero())),
        "hopf-lax-cos" => {
            if x.dim() != 1 {
                return Err(LabError::UnknownOracle(format!("{name} in dimension {}", x.dim())));
            }
            let (lo, hi) = (x[0] - t, x[0] + t);
            let pi = S::PI();
            let two_pi = S::two() * pi;
            // An odd multiple of π inside [lo, hi] gives the minimum −1.
            let k = ((lo - pi) / two_pi).ceil();
            if pi + k * two_pi <= hi {
                Ok(-S::one())
            } else {
                Ok(smin(lo.cos(), hi.cos()))
            }
        }
        "zero" => Ok(S::zero()),
        other => Err(LabError::UnknownOracle(other.to_string())),
    }
}

/// Samples an oracle on the lattice of `like`.
pub fn oracle_grid<S: Scalar>(name: &str, like: &GridFunction<S>) -> Result<GridFunction<S>> {
    oracle(name, S::zero(), &like.lattice().point(0))?;
    let lat = *like.lattice();
    Ok(GridFunction::from_fn_slices(lat, like.dt(), like.n_slices(), |t, x| {
        oracle(name, t, x).unwrap_or(S::nan())
    }))
}

/// Exact lattice Hopf–Lax value `min {u₀(y) : |y − x| ≤ t}`.
pub fn hopf_lax_lattice<S: Scalar>(u0: &SpatialGrid<S>, t: S) -> SpatialGrid<S> {
    let lat = *u0.lattice();
    let pts: Vec<Vector<S>> = (0..lat.len()).map(|i| lat.point(i)).collect();
    let slack = S::lit(1e-12);
    SpatialGrid::from_fn(lat, |x| {
        pts.iter()
            .zip(u0.values())
            .filter(|(y, _)| (*x - **y).norm() <= t + slack)
            .map(|(_, &v)| v)
            .fold(S::infinity(), smin)
    })
}
