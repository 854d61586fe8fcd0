//! Doubling of variables: penalized maximization of
//! `φ(t, x, y) = u(t, x) − v(t, y) − (α/2)|x − y|² − ε(|x|² + |y|²)`,
//! the penalty-limit diagnostics and the key estimate `l(α)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{estimate_modulus, sliding_sup, Boundary, GridFunction, ModulusCurve, SpatialGrid, SpatialLattice};
use crate::jets::{fit_jet, validate_matrix_pair};
use crate::linalg::{Mat, Vector};
use crate::operators::{exp_transform, OperatorSpec};
use crate::scalar::{smax, smin, Scalar};
use crate::scheme::{pollution_width, residual_check};

/// Ordered penalty parameters: ascending `α` and, for each `α`, the inner
/// sequence `ε(α, j) = c·α⁻²·2⁻ʲ`, `j = 0..=inner`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule<S> {
    alphas: Vec<S>,
    c: S,
    inner: usize,
}

impl<S: Scalar> Default for PenaltySchedule<S> {
    fn default() -> Self {
        Self {
            alphas: [1.0, 4.0, 16.0, 64.0, 256.0].iter().map(|&a| S::lit(a)).collect(),
            c: S::one(),
            inner: 6,
        }
    }
}

impl<S: Scalar> PenaltySchedule<S> {
    pub fn new(alphas: Vec<S>, c: S, inner: usize) -> Result<Self> {
        if alphas.is_empty() {
            return Err(LabError::PreconditionFailed(
                "penalty schedule needs at least one α".into(),
            ));
        }
        if alphas.first().is_some_and(|a| !(*a > S::zero())) || alphas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LabError::PreconditionFailed(
                "α values must be positive and strictly increasing".into(),
            ));
        }
        if !(c > S::zero()) || !c.is_finite() {
            return Err(LabError::PreconditionFailed(format!(
                "ε constant must be positive, got {c}"
            )));
        }
        Ok(Self { alphas, c, inner })
    }

    pub fn alphas(&self) -> &[S] {
        &self.alphas
    }

    pub fn c(&self) -> S {
        self.c
    }

    pub fn inner(&self) -> usize {
        self.inner
    }

    pub fn eps(&self, alpha: S, j: usize) -> S {
        self.c / (alpha * alpha) / S::two().powi(j as i32)
    }

    /// Smallest `ε` used for `alpha`.
    pub fn eps_min(&self, alpha: S) -> S {
        self.eps(alpha, self.inner)
    }

    /// `(α index, j, α, ε)` in schedule order.
    pub fn cells(&self) -> Vec<(usize, usize, S, S)> {
        self.alphas
            .iter()
            .enumerate()
            .flat_map(|(a, &alpha)| (0..=self.inner).map(move |j| (a, j, alpha, self.eps(alpha, j))))
            .collect()
    }
}

/// Lattice maximizer of `φ`.
#[derive(Clone, Debug, Serialize)]
pub struct PhiMax<S> {
    pub slice: usize,
    pub x_index: usize,
    pub y_index: usize,
    pub t_hat: S,
    pub x_hat: Vector<S>,
    pub y_hat: Vector<S>,
    pub value: S,
    /// Set when `x̂` or `ŷ` lies on a clamped boundary.
    pub boundary_warning: bool,
}

impl<S: Scalar> PhiMax<S> {
    pub fn separation(&self) -> S {
        (self.x_hat - self.y_hat).norm()
    }
}

struct Scanner<S> {
    pts: Vec<Vector<S>>,
    sq: Vec<S>,
}

impl<S: Scalar> Scanner<S> {
    fn new(lat: &SpatialLattice<S>) -> Self {
        let pts: Vec<Vector<S>> = (0..lat.len()).map(|i| lat.point(i)).collect();
        let sq = pts.iter().map(|p| p.norm_sq()).collect();
        Self { pts, sq }
    }

    /// `(value, i, j)` of the first-found strict maximum over one slice.
    fn scan(&self, us: &[S], vs: &[S], alpha: S, eps: S) -> (S, usize, usize) {
        let half_a = S::half() * alpha;
        let dim = self.pts.first().map_or(1, |p| p.dim());
        let mut best = (-S::infinity(), 0, 0);
        for (i, pi) in self.pts.iter().enumerate() {
            let a = us[i] - eps * self.sq[i];
            for (j, pj) in self.pts.iter().enumerate() {
                let mut d2 = S::zero();
                for c in 0..dim {
                    let d = pi[c] - pj[c];
                    d2 += d * d;
                }
                let val = a - vs[j] - eps * self.sq[j] - half_a * d2;
                if val > best.0 {
                    best = (val, i, j);
                }
            }
        }
        best
    }
}

fn check_penalties<S: Scalar>(alpha: S, eps: S) -> Result<()> {
    if !(alpha > S::zero()) || !(eps >= S::zero()) {
        return Err(LabError::PreconditionFailed(format!(
            "need α > 0 and ε ≥ 0, got α = {alpha}, ε = {eps}"
        )));
    }
    Ok(())
}

/// Exhaustive lattice maximization of `φ` with lexicographic `(t, x, y)`
/// tie-break (the first strict maximum wins).
pub fn maximize_phi<S: Scalar>(u: &GridFunction<S>, v: &GridFunction<S>, alpha: S, eps: S) -> Result<PhiMax<S>> {
    u.check_compatible(v)?;
    check_penalties(alpha, eps)?;
    let lat = *u.lattice();
    let scanner = Scanner::new(&lat);
    let mut best = (-S::infinity(), 0, 0, 0);
    for k in 0..u.n_slices() {
        let (val, i, j) = scanner.scan(u.slice(k), v.slice(k), alpha, eps);
        if val > best.0 {
            best = (val, k, i, j);
        }
    }
    let (value, slice, i, j) = best;
    let boundary_warning =
        lat.boundary() == Boundary::Clamped && (lat.cells_to_boundary(i) == 0 || lat.cells_to_boundary(j) == 0);
    Ok(PhiMax {
        slice,
        x_index: i,
        y_index: j,
        t_hat: u.time(slice),
        x_hat: scanner.pts[i],
        y_hat: scanner.pts[j],
        value,
        boundary_warning,
    })
}

fn check_slices_compatible<S: Scalar>(u0: &SpatialGrid<S>, v0: &SpatialGrid<S>) -> Result<()> {
    if u0.lattice() != v0.lattice() {
        return Err(LabError::LatticeMismatch(
            "initial data live on different lattices".into(),
        ));
    }
    Ok(())
}

/// `A_{α,ε} = max_{x,y} [u₀(x) − v₀(y) − (α/2)|x − y|² − ε(|x|² + |y|²)]`.
pub fn compute_a<S: Scalar>(u0: &SpatialGrid<S>, v0: &SpatialGrid<S>, alpha: S, eps: S) -> Result<S> {
    check_slices_compatible(u0, v0)?;
    check_penalties(alpha, eps)?;
    let scanner = Scanner::new(u0.lattice());
    Ok(scanner.scan(u0.values(), v0.values(), alpha, eps).0)
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma1Row<S> {
    pub alpha: S,
    pub eps: S,
    pub a: S,
    pub residual: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma1Alpha<S> {
    pub alpha: S,
    /// `A` at the smallest `ε` for this `α`.
    pub a: S,
    pub residual: S,
    /// Separation radius `δ` bounding `|x̂ − ŷ|`.
    pub radius: S,
    /// `σ_{v₀}(δ) + 2Δx·Lip`.
    pub bound: S,
    pub within_bound: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma1Report<S> {
    /// `max (u₀ − v₀)` over the lattice.
    pub target: S,
    pub sup_norm: S,
    pub lipschitz: S,
    pub rows: Vec<Lemma1Row<S>>,
    pub per_alpha: Vec<Lemma1Alpha<S>>,
    pub all_within_bound: bool,
    /// Residual strictly decreasing over the last three `α`.
    pub tail_strictly_decreasing: bool,
    /// `A` nonincreasing in `ε` and in `α` along the schedule.
    pub monotone: bool,
}

/// Convergence table of `A_{α,ε}` toward `max (u₀ − v₀)`.
///
/// The separation radius comes from `(α/2)|x̂ − ŷ|² ≤ 2R − A`, which is
/// `√(4R/α)` whenever `A ≥ 0`.
pub fn lemma1_diagnostics<S: Scalar>(
    u0: &SpatialGrid<S>,
    v0: &SpatialGrid<S>,
    schedule: &PenaltySchedule<S>,
) -> Result<Lemma1Report<S>> {
    check_slices_compatible(u0, v0)?;
    let diff = u0.zip_map(v0, |a, b| a - b)?;
    let target = diff.max();
    let r = smax(u0.sup_norm(), v0.sup_norm());
    let lip = smax(u0.lipschitz_constant(), v0.lipschitz_constant());
    let sigma = estimate_modulus(v0);
    let dx = u0.lattice().dx();
    let cells = schedule.cells();
    let values: Vec<S> = cells
        .par_iter()
        .map(|&(_, _, alpha, eps)| compute_a(u0, v0, alpha, eps))
        .collect::<Result<_>>()?;
    let rows: Vec<Lemma1Row<S>> = cells
        .iter()
        .zip(&values)
        .map(|(&(_, _, alpha, eps), &a)| Lemma1Row {
            alpha,
            eps,
            a,
            residual: (a - target).abs(),
        })
        .collect();
    let slack = S::check_tol();
    let mut monotone = true;
    for w in rows.windows(2) {
        if w[0].alpha == w[1].alpha && w[1].a < w[0].a - slack {
            monotone = false;
        }
    }
    let stride = schedule.inner() + 1;
    let per_alpha: Vec<Lemma1Alpha<S>> = schedule
        .alphas()
        .iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let row = &rows[ai * stride + schedule.inner()];
            let radius = smax(
                (S::lit(4.0) * r / alpha).sqrt(),
                (S::two() * smax(S::two() * r - row.a, S::zero()) / alpha).sqrt(),
            );
            let bound = sigma.eval(radius) + S::two() * dx * lip;
            Lemma1Alpha {
                alpha,
                a: row.a,
                residual: row.residual,
                radius,
                bound,
                within_bound: row.residual <= bound + slack,
            }
        })
        .collect();
    // Monotonicity in α at a common ε.
    for w in per_alpha.windows(2) {
        let eps = schedule.eps_min(w[0].alpha);
        if compute_a(u0, v0, w[1].alpha, eps)? > w[0].a + slack {
            monotone = false;
        }
    }
    let tail = &per_alpha[per_alpha.len().saturating_sub(3)..];
    let tail_strictly_decreasing = tail.len() == 3 && tail.windows(2).all(|w| w[1].residual < w[0].residual);
    Ok(Lemma1Report {
        target,
        sup_norm: r,
        lipschitz: lip,
        all_within_bound: per_alpha.iter().all(|p| p.within_bound),
        rows,
        per_alpha,
        tail_strictly_decreasing,
        monotone,
    })
}

/// The three terms of `B_{α,ε} = ((i) + (ii) + (iii))/γ`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BTerms<S> {
    pub i: S,
    pub ii: S,
    pub iii: S,
    pub value: S,
}

/// `B_{α,ε}` at a maximizer with `t̂ > 0` and an admissible pair `(X, Y)`.
#[allow(clippy::too_many_arguments)]
pub fn compute_b<S: Scalar>(
    u: &GridFunction<S>,
    v: &GridFunction<S>,
    op: &OperatorSpec<S>,
    alpha: S,
    eps: S,
    argmax: &PhiMax<S>,
    x: &Mat<S>,
    y: &Mat<S>,
) -> Result<BTerms<S>> {
    let gamma = op.gamma();
    if !(gamma > S::zero()) {
        return Err(LabError::NonPositiveGamma(gamma.as_f64()));
    }
    u.check_compatible(v)?;
    check_penalties(alpha, eps)?;
    if argmax.slice == 0 {
        return Err(LabError::PreconditionFailed(
            "B is only defined at maximizers with t̂ > 0".into(),
        ));
    }
    let pair = validate_matrix_pair(x, y, alpha);
    if !pair.pass {
        return Err(LabError::InvalidMatrixPair {
            left: pair.left_margin.as_f64(),
            right: pair.right_margin.as_f64(),
        });
    }
    let n = op.dim();
    let t = argmax.t_hat;
    let (xh, yh) = (argmax.x_hat, argmax.y_hat);
    let r = u.get(argmax.slice, argmax.x_index);
    let p = (xh - yh).scale(alpha);
    let two_eps = S::two() * eps;
    let shift = Mat::scalar(n, two_eps);
    let term_i = (op.eval(t, &xh, r, &(p + xh.scale(two_eps)), &(*x + shift))? - op.eval(t, &xh, r, &p, x)?).abs();
    let term_ii = (op.eval(t, &yh, r, &(p - yh.scale(two_eps)), &(*y - shift))? - op.eval(t, &yh, r, &p, y)?).abs();
    let radius = smax(u.sup_norm(), v.sup_norm());
    let d = (xh - yh).norm();
    let term_iii = op.theta(radius, alpha * d * d + d);
    Ok(BTerms {
        i: term_i,
        ii: term_ii,
        iii: term_iii,
        value: (term_i + term_ii + term_iii) / gamma,
    })
}

/// Halves `(X, Y)` toward `(0, 0)` until the 3α inequality holds; returns
/// the admissible pair and the number of halvings.
pub fn project_matrix_pair<S: Scalar>(x: &Mat<S>, y: &Mat<S>, alpha: S) -> (Mat<S>, Mat<S>, usize) {
    let mut scale = S::one();
    for step in 0..64 {
        let (xs, ys) = (x.scale(scale), y.scale(scale));
        if validate_matrix_pair(&xs, &ys, alpha).pass {
            return (xs, ys, step);
        }
        scale *= S::half();
    }
    let n = x.dim();
    (Mat::zeros(n), Mat::zeros(n), 64)
}

/// Spatial modulus `m(δ) = min_α [(α/2)δ² + l(α)]` sampled at `deltas`.
pub fn modulus_from_key_estimate<S: Scalar>(alphas: &[S], l: &[S], deltas: &[S]) -> Result<ModulusCurve<S>> {
    if alphas.len() != l.len() || alphas.is_empty() {
        return Err(LabError::PreconditionFailed(
            "l must be given on a nonempty α list".into(),
        ));
    }
    let m = deltas
        .iter()
        .map(|&d| {
            alphas
                .iter()
                .zip(l)
                .map(|(&a, &la)| S::half() * a * d * d + la)
                .fold(S::infinity(), smin)
        })
        .collect();
    ModulusCurve::new(deltas.to_vec(), m)
}

/// One `(α, ε)` record of the diagnostics table.
#[derive(Clone, Debug, Serialize)]
pub struct CellRecord<S> {
    pub alpha: S,
    pub eps: S,
    pub argmax: PhiMax<S>,
    pub a: S,
    /// `None` when `t̂ = 0`, where `φ̂ = A` and no jets are needed.
    pub b: Option<BTerms<S>>,
    /// Halvings applied to the fitted `(X, Y)` to make them admissible.
    pub pair_shrink: usize,
    /// `α|x̂ − ŷ|`.
    pub grad_mag: S,
    /// `ε(|x̂|² + |ŷ|²)`.
    pub penalty_mass: S,
    /// `(α/2)|x̂ − ŷ|² + |x̂ − ŷ|`.
    pub quad_gap: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaRecord<S> {
    pub alpha: S,
    pub eps_min: S,
    pub l: S,
    /// `l(α) + tol − φ̂(α, ε_min)`; nonnegative iff the key estimate holds
    /// at every lattice triple for this `α`.
    pub margin: S,
    /// `l(α) − max (u(t,x) − v(t,y) − (α/2)|x − y|²)`: the same bound
    /// without the localization term.
    pub limit_margin: S,
}

#[derive(Clone, Debug)]
pub struct KeyEstimateOptions<S> {
    pub schedule: PenaltySchedule<S>,
    pub tol: S,
    /// Skip the sub/supersolution residual preconditions.
    pub skip_preconditions: bool,
}

impl<S: Scalar> Default for KeyEstimateOptions<S> {
    fn default() -> Self {
        Self {
            schedule: PenaltySchedule::default(),
            tol: S::lit(crate::scheme::SCHEME_TOL),
            skip_preconditions: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyEstimateReport<S> {
    /// `γ` added by the exponential change of unknown (0 when none).
    pub transform_gamma: S,
    pub cells: Vec<CellRecord<S>>,
    pub per_alpha: Vec<AlphaRecord<S>>,
    pub verdict: bool,
    /// `l` nonincreasing along the `α` list (up to `tol`).
    pub l_decays: bool,
    /// `min (v − u)` over the lattice for the original pair.
    pub diagonal_margin: S,
    pub comparison_holds: bool,
    pub boundary_warning: bool,
    pub all_finite: bool,
    pub modulus: ModulusCurve<S>,
}

/// Maximizers for every schedule cell, evaluated in parallel and returned
/// in schedule order.
pub fn scan_schedule<S: Scalar>(
    u: &GridFunction<S>,
    v: &GridFunction<S>,
    schedule: &PenaltySchedule<S>,
) -> Result<Vec<PhiMax<S>>> {
    u.check_compatible(v)?;
    schedule
        .cells()
        .par_iter()
        .map(|&(_, _, alpha, eps)| maximize_phi(u, v, alpha, eps))
        .collect()
}

fn cell_record<S: Scalar>(
    u: &GridFunction<S>,
    v: &GridFunction<S>,
    op: &OperatorSpec<S>,
    alpha: S,
    eps: S,
    argmax: PhiMax<S>,
) -> Result<CellRecord<S>> {
    let a = compute_a(&u.slice_grid(0), &v.slice_grid(0), alpha, eps)?;
    let (b, pair_shrink) = if argmax.slice > 0 {
        let jx = fit_jet(u, argmax.slice, argmax.x_index, 2, 2)?;
        let jy = fit_jet(v, argmax.slice, argmax.y_index, 2, 2)?;
        let (x, y, shrink) = project_matrix_pair(&jx.x, &jy.x, alpha);
        (Some(compute_b(u, v, op, alpha, eps, &argmax, &x, &y)?), shrink)
    } else {
        (None, 0)
    };
    let d = argmax.separation();
    Ok(CellRecord {
        alpha,
        eps,
        a,
        b,
        pair_shrink,
        grad_mag: alpha * d,
        penalty_mass: eps * (argmax.x_hat.norm_sq() + argmax.y_hat.norm_sq()),
        quad_gap: S::half() * alpha * d * d + d,
        argmax,
    })
}

fn is_finite_record<S: Scalar>(c: &CellRecord<S>) -> bool {
    let b_ok =
        c.b.is_none_or(|b| b.i.is_finite() && b.ii.is_finite() && b.iii.is_finite() && b.value.is_finite());
    c.a.is_finite() && c.argmax.value.is_finite() && c.grad_mag.is_finite() && c.penalty_mass.is_finite() && b_ok
}

/// Key estimate `u(t,x) − v(t,y) ≤ (α/2)|x − y|² + ε(|x|² + |y|²) + l(α)`
/// with `l(α) = max(A, B)` at the smallest `ε` of the schedule.
///
/// When `γ ≤ 0` the estimate is run on `ũ = e^{−λt}u`, `ṽ = e^{−λt}v` for
/// the transformed operator with `γ + λ = 1`. Pointwise comparison is
/// re-checked on the original pair.
pub fn key_estimate<S: Scalar>(
    u: &GridFunction<S>,
    v: &GridFunction<S>,
    op: &OperatorSpec<S>,
    opts: &KeyEstimateOptions<S>,
) -> Result<KeyEstimateReport<S>> {
    u.check_compatible(v)?;
    let tol = opts.tol;
    if !opts.skip_preconditions {
        let width = pollution_width(u.lattice(), u.horizon());
        let ru = residual_check(u, op, tol, width);
        if !ru.class.is_sub() {
            return Err(LabError::PreconditionFailed(format!(
                "u is not a subsolution (max residual {:.3e})",
                ru.max_residual.as_f64()
            )));
        }
        let rv = residual_check(v, op, tol, width);
        if !rv.class.is_super() {
            return Err(LabError::PreconditionFailed(format!(
                "v is not a supersolution (min residual {:.3e})",
                rv.min_residual.as_f64()
            )));
        }
        let gap = u.slice_grid(0).zip_map(&v.slice_grid(0), |a, b| a - b)?.max();
        if gap > tol {
            return Err(LabError::PreconditionFailed(format!(
                "initial data are not ordered: max (u₀ − v₀) = {:.3e}",
                gap.as_f64()
            )));
        }
    }

    let gamma = op.gamma();
    let lambda = if gamma > S::zero() { S::zero() } else { S::one() - gamma };
    let (wu, wv, wop) = if lambda > S::zero() {
        let damp = |g: &GridFunction<S>| g.map_with_coords(|t, _, val| (-lambda * t).exp() * val);
        (damp(u), damp(v), exp_transform(op, lambda, u.horizon()))
    } else {
        (u.clone(), v.clone(), op.clone())
    };

    let schedule = &opts.schedule;
    let maxima = scan_schedule(&wu, &wv, schedule)?;
    let cells: Vec<CellRecord<S>> = schedule
        .cells()
        .into_par_iter()
        .zip(maxima.into_par_iter())
        .map(|((_, _, alpha, eps), m)| cell_record(&wu, &wv, &wop, alpha, eps, m))
        .collect::<Result<_>>()?;

    let stride = schedule.inner() + 1;
    let per_alpha: Vec<AlphaRecord<S>> = schedule
        .alphas()
        .par_iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let cell = &cells[ai * stride + schedule.inner()];
            let l = cell.b.map_or(cell.a, |b| smax(cell.a, b.value));
            let unlocalized = maximize_phi(&wu, &wv, alpha, S::zero())?;
            Ok(AlphaRecord {
                alpha,
                eps_min: cell.eps,
                l,
                margin: l + tol - cell.argmax.value,
                limit_margin: l - unlocalized.value,
            })
        })
        .collect::<Result<_>>()?;

    let verdict = per_alpha.iter().all(|a| a.margin >= S::zero());
    let l_decays = per_alpha.windows(2).all(|w| w[1].l <= w[0].l + tol);
    let diagonal_margin = v
        .values()
        .iter()
        .zip(u.values())
        .map(|(&b, &a)| b - a)
        .fold(S::infinity(), smin);
    let lat = u.lattice();
    let deltas: Vec<S> = (1..=lat.cells()).map(|k| lat.dx() * S::from_usize_lossy(k)).collect();
    let l_curve: Vec<S> = per_alpha.iter().map(|a| a.l).collect();
    let modulus = modulus_from_key_estimate(schedule.alphas(), &l_curve, &deltas)?;
    Ok(KeyEstimateReport {
        transform_gamma: lambda,
        boundary_warning: cells.iter().any(|c| c.argmax.boundary_warning),
        all_finite: cells.iter().all(is_finite_record),
        cells,
        per_alpha,
        verdict,
        l_decays,
        comparison_holds: diagonal_margin >= -tol,
        diagonal_margin,
        modulus,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma2Cell<S> {
    pub alpha: S,
    pub eps: S,
    pub grad_mag: S,
    pub penalty_mass: S,
    pub quad_gap: S,
    /// `u(t̂, x̂) − v(t̂, ŷ)`.
    pub value_gap: S,
    /// Step-1 constant `C` with `α|x̂ − ŷ| ≤ √(2α)·C`.
    pub c: S,
    pub step1_bound: S,
    pub step1_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma2Alpha<S> {
    pub alpha: S,
    /// Inner tails: averages over the last two `ε`.
    pub grad_mag_tail: S,
    pub penalty_mass_tail: S,
    pub quad_gap_tail: S,
    pub value_gap_tail: S,
    /// `M(C√(2/α))` from the sliding supremum.
    pub sliding_sup: S,
    pub sliding_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma2Report<S> {
    pub cells: Vec<Lemma2Cell<S>>,
    pub per_alpha: Vec<Lemma2Alpha<S>>,
    /// Outer tails: averages of the inner tails over the last two `α`.
    pub grad_mag_limit: S,
    pub penalty_mass_limit: S,
    pub quad_gap_limit: S,
    pub step1_all: bool,
    pub sliding_all: bool,
}

fn tail_mean<S: Scalar>(values: &[S]) -> S {
    let tail = &values[values.len().saturating_sub(2)..];
    tail.iter().copied().sum::<S>() / S::from_usize_lossy(tail.len().max(1))
}

/// Penalty-limit curves `α|x̂ − ŷ|`, `ε(|x̂|² + |ŷ|²)`,
/// `(α/2)|x̂ − ŷ|² + |x̂ − ŷ|` with iterated tails, and the Step-1 bounds.
///
/// `C² = sup u + sup(−v) − c` with `c = u(0, z) − v(0, z) − 2ε|z|²` at the
/// lattice point `z` nearest the origin, so that `(α/2)|x̂ − ŷ|² ≤ C²`.
pub fn lemma2_diagnostics<S: Scalar>(
    u: &GridFunction<S>,
    v: &GridFunction<S>,
    schedule: &PenaltySchedule<S>,
) -> Result<Lemma2Report<S>> {
    let maxima = scan_schedule(u, v, schedule)?;
    let lat = u.lattice();
    let z = (0..lat.len())
        .min_by(|&a, &b| {
            lat.point(a)
                .norm_sq()
                .partial_cmp(&lat.point(b).norm_sq())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let z_sq = lat.point(z).norm_sq();
    let base = u.max() - v.min();
    let slack = S::check_tol();
    let cells: Vec<Lemma2Cell<S>> = schedule
        .cells()
        .iter()
        .zip(&maxima)
        .map(|(&(_, _, alpha, eps), m)| {
            let d = m.separation();
            let c0 = u.get(0, z) - v.get(0, z) - S::two() * eps * z_sq;
            let c = smax(base - c0, S::zero()).sqrt();
            let grad_mag = alpha * d;
            let step1_bound = (S::two() * alpha).sqrt() * c;
            Lemma2Cell {
                alpha,
                eps,
                grad_mag,
                penalty_mass: eps * (m.x_hat.norm_sq() + m.y_hat.norm_sq()),
                quad_gap: S::half() * alpha * d * d + d,
                value_gap: u.get(m.slice, m.x_index) - v.get(m.slice, m.y_index),
                c,
                step1_bound,
                step1_holds: grad_mag <= step1_bound + slack,
            }
        })
        .collect();
    let stride = schedule.inner() + 1;
    let per_alpha: Vec<Lemma2Alpha<S>> = schedule
        .alphas()
        .par_iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let block = &cells[ai * stride..(ai + 1) * stride];
            let col = |f: fn(&Lemma2Cell<S>) -> S| tail_mean(&block.iter().map(f).collect::<Vec<_>>());
            let c = block.iter().map(|c| c.c).fold(S::zero(), smax);
            let h = c * (S::two() / alpha).sqrt();
            let m_h = sliding_sup(u, v, h)?;
            let value_gap_tail = col(|c| c.value_gap);
            Ok(Lemma2Alpha {
                alpha,
                grad_mag_tail: col(|c| c.grad_mag),
                penalty_mass_tail: col(|c| c.penalty_mass),
                quad_gap_tail: col(|c| c.quad_gap),
                value_gap_tail,
                sliding_sup: m_h,
                sliding_holds: value_gap_tail <= m_h + slack,
            })
        })
        .collect::<Result<_>>()?;
    let outer = |f: fn(&Lemma2Alpha<S>) -> S| tail_mean(&per_alpha.iter().map(f).collect::<Vec<_>>());
    Ok(Lemma2Report {
        grad_mag_limit: outer(|a| a.grad_mag_tail),
        penalty_mass_limit: outer(|a| a.penalty_mass_tail),
        quad_gap_limit: outer(|a| a.quad_gap_tail),
        step1_all: cells.iter().all(|c| c.step1_holds),
        sliding_all: per_alpha.iter().all(|a| a.sliding_holds),
        cells,
        per_alpha,
    })
}

fn join_vector<S: Scalar>(v: &Vector<S>) -> String {
    v.as_slice().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes the per-cell table; vectors are joined with `;`.
pub fn write_cells_csv<S: Scalar, W: Write>(cells: &[CellRecord<S>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| LabError::Io(std::io::Error::other(e.to_string()));
    w.write_record([
        "alpha",
        "eps",
        "t_hat",
        "x_hat",
        "y_hat",
        "phi_max",
        "A",
        "B_i",
        "B_ii",
        "B_iii",
        "grad_mag",
        "penalty_mass",
        "quad_gap",
    ])
    .map_err(io)?;
    for c in cells {
        let b = |f: fn(&BTerms<S>) -> S| c.b.as_ref().map_or(String::new(), |b| f(b).to_string());
        w.write_record([
            c.alpha.to_string(),
            c.eps.to_string(),
            c.argmax.t_hat.to_string(),
            join_vector(&c.argmax.x_hat),
            join_vector(&c.argmax.y_hat),
            c.argmax.value.to_string(),
            c.a.to_string(),
            b(|b| b.i),
            b(|b| b.ii),
            b(|b| b.iii),
            c.grad_mag.to_string(),
            c.penalty_mass.to_string(),
            c.quad_gap.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::SpatialLattice;
    use crate::operators::{heat, proper_heat, OperatorSpec};
    use crate::scheme::{solve, SolveParams};
    use std::f64::consts::PI;

    fn lattice(x_max: f64, dx: f64) -> SpatialLattice<f64> {
        SpatialLattice::new(1, x_max, dx, Boundary::Periodic).unwrap()
    }

    fn constant(lat: SpatialLattice<f64>, c: f64, slices: usize) -> GridFunction<f64> {
        GridFunction::from_fn_slices(lat, 0.1, slices, move |_, _| c)
    }

    #[test]
    fn schedule_defaults_and_validation() {
        let s = PenaltySchedule::<f64>::default();
        assert_eq!(s.cells().len(), 35);
        assert_eq!(s.eps(4.0, 0), 1.0 / 16.0);
        assert_eq!(s.eps_min(1.0), 1.0 / 64.0);
        assert!(PenaltySchedule::new(vec![1.0, 1.0], 1.0, 2).is_err());
        assert!(PenaltySchedule::new(vec![2.0, 1.0], 1.0, 2).is_err());
    }

    #[test]
    fn maximize_zero_data() {
        let lat = lattice(1.0, 0.25);
        let u = constant(lat, 0.0, 3);
        let m = maximize_phi(&u, &u, 1.0, 0.01).unwrap();
        assert_eq!(m.slice, 0);
        assert_eq!(m.value, 0.0);
        assert_eq!(m.x_hat[0], 0.0);
        assert_eq!(m.y_hat[0], 0.0);
    }

    #[test]
    fn maximize_constant_gap() {
        let lat = lattice(1.0, 0.25);
        let u = constant(lat, 1.0, 2);
        let v = constant(lat, 0.0, 2);
        let m = maximize_phi(&u, &v, 1.0, 0.01).unwrap();
        assert_eq!((m.x_hat[0], m.y_hat[0], m.value), (0.0, 0.0, 1.0));
    }

    #[test]
    fn maximize_matches_smooth_critical_point() {
        // φ = −(x − ½)² − (α/2)(x − y)² − ε(x² + y²) is concave with
        // critical point solving a 2×2 linear system.
        let (alpha, eps) = (10.0, 1e-4);
        let lat = lattice(1.0, 0.01);
        let u = GridFunction::from_fn_slices(lat, 0.1, 1, |_, x| -(x[0] - 0.5).powi(2));
        let v = constant(lat, 0.0, 1);
        let m = maximize_phi(&u, &v, alpha, eps).unwrap();
        let a = [[2.0 + alpha + 2.0 * eps, -alpha], [-alpha, alpha + 2.0 * eps]];
        let rhs = [1.0, 0.0];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let x = (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det;
        let y = (a[0][0] * rhs[1] - a[1][0] * rhs[0]) / det;
        assert!((m.x_hat[0] - x).abs() <= 0.01 + 1e-12);
        assert!((m.y_hat[0] - y).abs() <= 0.01 + 1e-12);
        let brute = (0..lat.len())
            .flat_map(|i| (0..lat.len()).map(move |j| (i, j)))
            .map(|(i, j)| {
                let (xi, yj) = (lat.coord(i), lat.coord(j));
                -(xi - 0.5f64).powi(2) - alpha / 2.0 * (xi - yj).powi(2) - eps * (xi * xi + yj * yj)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(m.value, brute);
    }

    #[test]
    fn maximize_rejects_mismatch() {
        let u = constant(lattice(1.0, 0.25), 0.0, 2);
        let v = constant(lattice(1.0, 0.5), 0.0, 2);
        assert!(matches!(
            maximize_phi(&u, &v, 1.0, 0.1),
            Err(LabError::LatticeMismatch(_))
        ));
    }

    #[test]
    fn clamped_boundary_argmax_warns() {
        let lat = SpatialLattice::<f64>::new(1, 1.0, 0.25, Boundary::Clamped).unwrap();
        let u = GridFunction::from_fn_slices(lat, 0.1, 1, |_, x| 10.0 * x[0]);
        let v = constant(lat, 0.0, 1);
        let m = maximize_phi(&u, &v, 1.0, 0.01).unwrap();
        assert!(m.boundary_warning);
    }

    #[test]
    fn a_examples() {
        let lat = lattice(PI, 0.05);
        let zero = SpatialGrid::constant(lat, 0.0);
        let one = SpatialGrid::constant(lat, 1.0);
        assert_eq!(compute_a(&zero, &zero, 3.0, 0.1).unwrap(), 0.0);
        assert_eq!(compute_a(&one, &zero, 3.0, 0.1).unwrap(), 1.0);
        let cos = SpatialGrid::from_fn(lat, |x| x[0].cos());
        let a = compute_a(&cos, &zero, 100.0, 1e-4).unwrap();
        let delta: f64 = (4.0f64 / 100.0).sqrt();
        assert!(a <= 1.0 && a >= 1.0 - (1.0 - delta.cos()) - 1e-9);
    }

    #[test]
    fn lemma1_cos_pair() {
        let lat = lattice(PI, 0.05);
        let zero = SpatialGrid::constant(lat, 0.0);
        let cos = SpatialGrid::from_fn(lat, |x| x[0].cos());
        let rep = lemma1_diagnostics(&zero, &cos, &PenaltySchedule::default()).unwrap();
        assert!((rep.target - 1.0).abs() < 1e-12);
        assert!(rep.all_within_bound);
        assert!(rep.monotone);
        assert!(rep.tail_strictly_decreasing);
        for p in &rep.per_alpha {
            let simple: f64 = (4.0 / p.alpha).sqrt();
            assert!(p.residual <= simple.min(2.0) + 2.0 * 0.05 + 1e-9);
        }
    }

    #[test]
    fn lemma1_identical_data_targets_zero() {
        let lat = lattice(PI, PI / 30.0);
        let g = SpatialGrid::from_fn(lat, |x| (2.0 * x[0]).sin());
        let rep = lemma1_diagnostics(&g, &g, &PenaltySchedule::default()).unwrap();
        assert_eq!(rep.target, 0.0);
        assert!(rep.rows.iter().all(|r| r.a >= 0.0));
    }

    fn trace_minus_r() -> OperatorSpec<f64> {
        proper_heat(1, 1.0)
    }

    #[test]
    fn b_for_trace_minus_r() {
        let lat = lattice(1.0, 0.25);
        let u = constant(lat, 0.0, 3);
        let eps = 0.01;
        let m = PhiMax {
            slice: 1,
            x_index: 4,
            y_index: 5,
            t_hat: 0.1,
            x_hat: Vector::from_slice(&[0.0]),
            y_hat: Vector::from_slice(&[0.25]),
            value: 0.0,
            boundary_warning: false,
        };
        let z = Mat::zeros(1);
        let b = compute_b(&u, &u, &trace_minus_r(), 2.0, eps, &m, &z, &z).unwrap();
        assert!((b.i - 2.0 * eps).abs() < 1e-15);
        assert!((b.ii - 2.0 * eps).abs() < 1e-15);
        assert_eq!(b.iii, 0.0);
        assert!((b.value - 4.0 * eps).abs() < 1e-15);
        let b0 = compute_b(&u, &u, &trace_minus_r(), 2.0, 0.0, &m, &z, &z).unwrap();
        assert_eq!((b0.i, b0.ii, b0.value), (0.0, 0.0, 0.0));
    }

    #[test]
    fn b_errors() {
        let lat = lattice(1.0, 0.25);
        let u = constant(lat, 0.0, 3);
        let m = PhiMax {
            slice: 1,
            x_index: 4,
            y_index: 4,
            t_hat: 0.1,
            x_hat: Vector::from_slice(&[0.0]),
            y_hat: Vector::from_slice(&[0.0]),
            value: 0.0,
            boundary_warning: false,
        };
        let z = Mat::zeros(1);
        assert!(matches!(
            compute_b(&u, &u, &heat(1), 1.0, 0.1, &m, &z, &z),
            Err(LabError::NonPositiveGamma(_))
        ));
        let big = Mat::scalar(1, 10.0);
        assert!(matches!(
            compute_b(&u, &u, &trace_minus_r(), 1.0, 0.1, &m, &big, &z),
            Err(LabError::InvalidMatrixPair { .. })
        ));
    }

    #[test]
    fn projection_reaches_valid_pair() {
        let x = Mat::scalar(1, 50.0);
        let y = Mat::scalar(1, -50.0);
        let (xp, yp, steps) = project_matrix_pair(&x, &y, 1.0);
        assert!(steps > 0);
        assert!(validate_matrix_pair(&xp, &yp, 1.0).pass);
    }

    #[test]
    fn modulus_examples() {
        let deltas: Vec<f64> = (1..=20).map(|k| 0.01 * k as f64).collect();
        let alphas = [1.0, 4.0, 16.0];
        let m = modulus_from_key_estimate(&alphas, &[0.0; 3], &deltas).unwrap();
        for (d, v) in m.samples() {
            assert!((v - 0.5 * d * d).abs() < 1e-15);
        }
        let m = modulus_from_key_estimate(&alphas, &[0.3; 3], &deltas).unwrap();
        for (d, v) in m.samples() {
            assert!((v - (0.5 * d * d + 0.3)).abs() < 1e-15);
        }
        let dense: Vec<f64> = (1..=20000).map(|k| 0.1 * k as f64).collect();
        let l: Vec<f64> = dense.iter().map(|a| 1.0 / a).collect();
        let m = modulus_from_key_estimate(&dense, &l, &deltas).unwrap();
        for (d, v) in m.samples() {
            assert!((v - 2f64.sqrt() * d).abs() < 1e-3 * d);
        }
    }

    fn heat_pair(shift: f64) -> (GridFunction<f64>, GridFunction<f64>, OperatorSpec<f64>) {
        // An even cell count puts the origin on the lattice.
        let lat = lattice(PI, PI / 30.0);
        let op = heat(1);
        let u0 = SpatialGrid::from_fn(lat, |x| x[0].cos());
        let u = solve(&op, &u0, &SolveParams::new(0.25)).unwrap();
        let v = u.shifted(shift);
        (u, v, op)
    }

    #[test]
    fn key_estimate_identical_pair() {
        let (u, _, op) = heat_pair(0.0);
        let rep = key_estimate(&u, &u, &op, &KeyEstimateOptions::default()).unwrap();
        assert!(rep.verdict);
        assert!(rep.per_alpha.iter().all(|a| a.l >= 0.0));
        assert!(rep.diagonal_margin >= -1e-8);
        assert!(rep.all_finite);
    }

    #[test]
    fn key_estimate_heat_shift() {
        let (u, v, op) = heat_pair(0.2);
        let rep = key_estimate(&u, &v, &op, &KeyEstimateOptions::default()).unwrap();
        assert!(rep.verdict);
        assert!(rep.comparison_holds);
        assert!(rep.transform_gamma > 0.0);
    }

    #[test]
    fn key_estimate_proper_heat_shift() {
        let lat = lattice(PI, 0.1);
        let op = proper_heat(1, 1.0);
        let v0 = SpatialGrid::from_fn(lat, |x| x[0].cos());
        let v = solve(&op, &v0, &SolveParams::new(0.25)).unwrap();
        let u = v.shifted(-0.3);
        let rep = key_estimate(&u, &v, &op, &KeyEstimateOptions::default()).unwrap();
        assert!(rep.verdict);
        assert_eq!(rep.transform_gamma, 0.0);
        assert!((rep.diagonal_margin - 0.3).abs() < 1e-9);
    }

    #[test]
    fn key_estimate_rejects_reversed_pair() {
        let (u, v, op) = heat_pair(0.2);
        assert!(matches!(
            key_estimate(&v, &u, &op, &KeyEstimateOptions::default()),
            Err(LabError::PreconditionFailed(_))
        ));
    }

    #[test]
    fn lemma2_zero_data() {
        let u = constant(lattice(1.0, 0.25), 0.0, 3);
        let rep = lemma2_diagnostics(&u, &u, &PenaltySchedule::default()).unwrap();
        assert!(rep
            .cells
            .iter()
            .all(|c| c.grad_mag == 0.0 && c.penalty_mass == 0.0 && c.quad_gap == 0.0));
        assert!(rep.step1_all && rep.sliding_all);
    }

    #[test]
    fn lemma2_heat_shift() {
        let (u, v, _) = heat_pair(0.2);
        let rep = lemma2_diagnostics(&u, &v, &PenaltySchedule::default()).unwrap();
        assert!(rep.step1_all);
        assert!(rep.sliding_all);
        let last = rep.per_alpha.last().unwrap();
        assert!(last.penalty_mass_tail <= 1e-3);
        assert!(last.quad_gap_tail <= 1e-2);
    }

    #[test]
    fn csv_has_expected_header() {
        let (u, v, op) = heat_pair(0.2);
        let opts = KeyEstimateOptions {
            schedule: PenaltySchedule::new(vec![1.0, 4.0], 1.0, 1).unwrap(),
            ..KeyEstimateOptions::default()
        };
        let rep = key_estimate(&u, &v, &op, &opts).unwrap();
        let mut buf = Vec::new();
        write_cells_csv(&rep.cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("alpha,eps,t_hat,x_hat,y_hat,phi_max,A,B_i,B_ii,B_iii,grad_mag,penalty_mass,quad_gap\n")
        );
        assert_eq!(text.lines().count(), 5);
    }
}
