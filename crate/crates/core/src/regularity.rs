//! Space-time regularity barriers
//! `χ(t, y) = u(t₀, x) + η + C|y − x|² + K(t − t₀)`, the constants `C(η)`
//! and `K(η)`, and the resulting time modulus.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::{estimate_modulus, GridFunction, ModulusCurve, SpatialLattice};
use crate::linalg::{Mat, Vector};
use crate::operators::OperatorSpec;
use crate::perron::sample_times;
use crate::scalar::{smax, smin, Scalar};
use crate::scheme::SCHEME_TOL;

/// Barrier parameters for one cylinder `[t₀, T] × B_R(x₀)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BarrierParams<S> {
    pub eta: S,
    pub c: S,
    /// Time slope of the upper barrier.
    pub k: S,
    /// Time slope of the mirrored lower barrier.
    pub k_lower: S,
    pub r: S,
    pub x0: Vector<S>,
    pub t0_slice: usize,
}

/// Spatial modulus uniform over all time slices.
pub fn uniform_modulus<S: Scalar>(u: &GridFunction<S>) -> ModulusCurve<S> {
    let curves: Vec<ModulusCurve<S>> = (0..u.n_slices())
        .into_par_iter()
        .map(|k| estimate_modulus(&u.slice_grid(k)))
        .collect();
    let deltas = curves[0].deltas().to_vec();
    let m = (0..deltas.len())
        .map(|i| curves.iter().map(|c| c.values()[i]).fold(S::zero(), smax))
        .collect();
    ModulusCurve::new(deltas, m).expect("lattice distances ascend")
}

/// `C = max(8·u_sup/R², max {(m(δ) − η)/δ² : m(δ) > η}, 0)` over the
/// samples of `m`.
pub fn choose_c<S: Scalar>(eta: S, u_sup: S, r: S, m: &ModulusCurve<S>) -> Result<S> {
    if m.is_empty() {
        return Err(LabError::EmptyModulus);
    }
    if !(eta > S::zero()) || !(r > S::zero()) {
        return Err(LabError::InvariantViolation(format!(
            "need η > 0 and R > 0, got η = {eta}, R = {r}"
        )));
    }
    let lateral = S::lit(8.0) * u_sup / (r * r);
    let initial = m
        .samples()
        .filter(|&(_, v)| v > eta)
        .map(|(d, v)| (v - eta) / (d * d))
        .fold(S::zero(), smax);
    Ok(smax(smax(lateral, initial), S::zero()))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KChoice<S> {
    /// `max F(t, y, −u_sup, 2C(y − x), 2CI) + 1`.
    pub upper: S,
    /// `max −F(t, y, u_sup, −2C(y − x), −2CI) + 1`.
    pub lower: S,
}

impl<S: Scalar> KChoice<S> {
    pub fn max(&self) -> S {
        smax(self.upper, self.lower)
    }
}

/// Time slopes making `χ` a strict supersolution (and its mirror a strict
/// subsolution) at every `t ∈ times` and lattice `y` with `|y − x| ≤ 2R`.
pub fn choose_k<S: Scalar>(
    op: &OperatorSpec<S>,
    c: S,
    r: S,
    u_sup: S,
    x: &Vector<S>,
    lattice: &SpatialLattice<S>,
    times: &[S],
) -> Result<KChoice<S>> {
    let n = lattice.dim();
    let hess = Mat::scalar(n, S::two() * c);
    let times = if times.is_empty() { &[S::zero()][..] } else { times };
    let mut upper = -S::infinity();
    let mut lower = -S::infinity();
    let reach = S::two() * r * (S::one() + S::lit(1e-12));
    for i in 0..lattice.len() {
        let y = lattice.point(i);
        let d = y - *x;
        if d.norm() > reach {
            continue;
        }
        let p = d.scale(S::two() * c);
        let radius = smax(u_sup, smax(p.norm(), hess.spectral_norm()));
        let bound = op.bound(radius);
        for &t in times {
            let fu = op.eval(t, &y, -u_sup, &p, &hess)?;
            let fl = op.eval(t, &y, u_sup, &(-p), &(-hess))?;
            for f in [fu, fl] {
                if f.abs() > bound * (S::one() + S::lit(1e-9)) + S::check_tol() {
                    return Err(LabError::UnboundedF {
                        operator: op.name().to_string(),
                        value: f.abs().as_f64(),
                        radius: radius.as_f64(),
                        bound: bound.as_f64(),
                    });
                }
            }
            upper = smax(upper, fu);
            lower = smax(lower, -fl);
        }
    }
    Ok(KChoice {
        upper: upper + S::one(),
        lower: lower + S::one(),
    })
}

/// [`choose_k`] maximized over every lattice centre `x`, so the slopes do
/// not depend on the cylinder.
pub fn choose_k_uniform<S: Scalar>(
    op: &OperatorSpec<S>,
    c: S,
    r: S,
    u_sup: S,
    lattice: &SpatialLattice<S>,
    times: &[S],
) -> Result<KChoice<S>> {
    let all: Vec<KChoice<S>> = (0..lattice.len())
        .into_par_iter()
        .map(|i| choose_k(op, c, r, u_sup, &lattice.point(i), lattice, times))
        .collect::<Result<_>>()?;
    Ok(all.into_iter().fold(
        KChoice {
            upper: -S::infinity(),
            lower: -S::infinity(),
        },
        |a, b| KChoice {
            upper: smax(a.upper, b.upper),
            lower: smax(a.lower, b.lower),
        },
    ))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BarrierReport<S> {
    pub pass: bool,
    /// Smallest `χ − u` over the cylinder.
    pub upper_margin: S,
    /// Smallest `u − χ₋` over the cylinder.
    pub lower_margin: S,
    /// `(slice, cell)` of each worst margin.
    pub upper_at: (usize, usize),
    pub lower_at: (usize, usize),
}

/// Checks `−η − C|y − x|² − K₋(t − t₀) ≤ u(t, y) − u(t₀, x) ≤ η + C|y − x|² + K(t − t₀)`
/// for lattice `y ∈ B_R(x₀)` and slices from `t₀` on; `x` must lie in
/// `B_{R/2}(x₀)`.
pub fn barrier_check<S: Scalar>(u: &GridFunction<S>, params: &BarrierParams<S>, x: usize) -> Result<BarrierReport<S>> {
    let lat = u.lattice();
    let p = params;
    let u_sup = u.sup_norm();
    let slack = S::lit(1e-12);
    if !(p.eta > S::zero()) || !(p.r > S::zero()) || !(p.k >= S::zero()) || !(p.k_lower >= S::zero()) {
        return Err(LabError::InvariantViolation(format!(
            "need η > 0, R > 0, K ≥ 0 (got η = {}, R = {}, K = {}, K₋ = {})",
            p.eta, p.r, p.k, p.k_lower
        )));
    }
    if p.c < S::lit(8.0) * u_sup / (p.r * p.r) * (S::one() - slack) {
        return Err(LabError::InvariantViolation(format!(
            "C = {} is below 8|u|∞/R² = {}",
            p.c,
            S::lit(8.0) * u_sup / (p.r * p.r)
        )));
    }
    if p.t0_slice >= u.n_slices() || x >= lat.len() {
        return Err(LabError::InvariantViolation("cylinder base outside the grid".into()));
    }
    let xc = lat.point(x);
    if (xc - p.x0).norm() > S::half() * p.r * (S::one() + slack) {
        return Err(LabError::InvariantViolation("x must lie in B_{R/2}(x₀)".into()));
    }
    let base = u.get(p.t0_slice, x);
    let t0 = u.time(p.t0_slice);
    let ball: Vec<(usize, S)> = (0..lat.len())
        .filter_map(|i| {
            let y = lat.point(i);
            ((y - p.x0).norm() <= p.r * (S::one() + slack)).then(|| (i, (y - xc).norm_sq()))
        })
        .collect();
    let mut up = (S::infinity(), (0, 0));
    let mut lo = (S::infinity(), (0, 0));
    for k in p.t0_slice..u.n_slices() {
        let dt = u.time(k) - t0;
        for &(i, d2) in &ball {
            let diff = u.get(k, i) - base;
            let upper = p.eta + p.c * d2 + p.k * dt - diff;
            let lower = diff + p.eta + p.c * d2 + p.k_lower * dt;
            if upper < up.0 {
                up = (upper, (k, i));
            }
            if lower < lo.0 {
                lo = (lower, (k, i));
            }
        }
    }
    let tol = S::lit(SCHEME_TOL);
    Ok(BarrierReport {
        pass: up.0 >= -tol && lo.0 >= -tol,
        upper_margin: up.0,
        lower_margin: lo.0,
        upper_at: up.1,
        lower_at: lo.1,
    })
}

/// Constants for one `η`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EtaConstants<S> {
    pub eta: S,
    pub c: S,
    pub k: KChoice<S>,
}

/// `C(η)` from the uniform spatial modulus and `K(η)` over every centre,
/// with times subsampled from the grid.
pub fn constants_for<S: Scalar>(u: &GridFunction<S>, op: &OperatorSpec<S>, eta: S, r: S) -> Result<EtaConstants<S>> {
    let m = uniform_modulus(u);
    constants_with_modulus(u, op, eta, r, &m)
}

fn constants_with_modulus<S: Scalar>(
    u: &GridFunction<S>,
    op: &OperatorSpec<S>,
    eta: S,
    r: S,
    m: &ModulusCurve<S>,
) -> Result<EtaConstants<S>> {
    let u_sup = u.sup_norm();
    let c = choose_c(eta, u_sup, r, m)?;
    let times = sample_times(u.horizon(), u.dt());
    let k = choose_k_uniform(op, c, r, u_sup, u.lattice(), &times)?;
    Ok(EtaConstants { eta, c, k })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport<S> {
    pub constants: EtaConstants<S>,
    pub cylinders: usize,
    pub failures: usize,
    pub worst_upper: S,
    pub worst_lower: S,
    /// `(x₀ cell, t₀ slice, x cell)` of the worst failing cylinder.
    pub worst_cylinder: Option<(usize, usize, usize)>,
    pub pass: bool,
}

/// Barrier checks over cylinders centred at every `x0_stride`-th cell, at
/// the given base slices, for every `x ∈ B_{R/2}(x₀)`.
pub fn barrier_sweep<S: Scalar>(
    u: &GridFunction<S>,
    op: &OperatorSpec<S>,
    eta: S,
    r: S,
    x0_stride: usize,
    t0_slices: &[usize],
) -> Result<SweepReport<S>> {
    let constants = constants_for(u, op, eta, r)?;
    let lat = u.lattice();
    let mut jobs = Vec::new();
    for x0 in (0..lat.len()).step_by(x0_stride.max(1)) {
        let c0 = lat.point(x0);
        for &t0 in t0_slices {
            for x in 0..lat.len() {
                if (lat.point(x) - c0).norm() <= S::half() * r {
                    jobs.push((x0, t0, x));
                }
            }
        }
    }
    let reports: Vec<((usize, usize, usize), BarrierReport<S>)> = jobs
        .par_iter()
        .map(|&(x0, t0, x)| {
            let params = BarrierParams {
                eta,
                c: constants.c,
                k: constants.k.upper,
                k_lower: constants.k.lower,
                r,
                x0: lat.point(x0),
                t0_slice: t0,
            };
            barrier_check(u, &params, x).map(|rep| ((x0, t0, x), rep))
        })
        .collect::<Result<_>>()?;
    let failures = reports.iter().filter(|(_, r)| !r.pass).count();
    let worst = reports
        .iter()
        .filter(|(_, r)| !r.pass)
        .min_by(|a, b| {
            let ma = smin(a.1.upper_margin, a.1.lower_margin);
            let mb = smin(b.1.upper_margin, b.1.lower_margin);
            ma.partial_cmp(&mb).unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(key, _)| *key);
    Ok(SweepReport {
        constants,
        cylinders: reports.len(),
        failures,
        worst_upper: reports.iter().map(|(_, r)| r.upper_margin).fold(S::infinity(), smin),
        worst_lower: reports.iter().map(|(_, r)| r.lower_margin).fold(S::infinity(), smin),
        worst_cylinder: worst,
        pass: failures == 0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeModulusRow<S> {
    pub tau: S,
    pub empirical: S,
    pub envelope: S,
    pub eta_star: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeModulus<S> {
    pub rows: Vec<TimeModulusRow<S>>,
    pub constants: Vec<EtaConstants<S>>,
    pub pass: bool,
    pub nondecreasing: bool,
}

/// Empirical `sup_{x, t₀} |u(t₀ + τ, x) − u(t₀, x)|` for every lattice lag
/// `τ`, against `min_η [η + K(η)τ]` with `K = max(K, K₋)`.
pub fn time_modulus<S: Scalar>(u: &GridFunction<S>, op: &OperatorSpec<S>, etas: &[S], r: S) -> Result<TimeModulus<S>> {
    if etas.is_empty() || etas.iter().any(|e| !(*e > S::zero())) {
        return Err(LabError::InvariantViolation(
            "η list must be nonempty and positive".into(),
        ));
    }
    let m = uniform_modulus(u);
    let constants: Vec<EtaConstants<S>> = etas
        .iter()
        .map(|&eta| constants_with_modulus(u, op, eta, r, &m))
        .collect::<Result<_>>()?;
    let n = u.n_slices();
    let rows: Vec<TimeModulusRow<S>> = (0..n)
        .into_par_iter()
        .map(|lag| {
            let empirical = (0..n - lag)
                .map(|k| {
                    u.slice(k + lag)
                        .iter()
                        .zip(u.slice(k))
                        .map(|(a, b)| (*a - *b).abs())
                        .fold(S::zero(), smax)
                })
                .fold(S::zero(), smax);
            let tau = u.dt() * S::from_usize_lossy(lag);
            let (envelope, eta_star) = if lag == 0 {
                (S::zero(), S::zero())
            } else {
                constants
                    .iter()
                    .map(|c| (c.eta + c.k.max() * tau, c.eta))
                    .fold((S::infinity(), S::zero()), |a, b| if b.0 < a.0 { b } else { a })
            };
            TimeModulusRow {
                tau,
                empirical,
                envelope,
                eta_star,
            }
        })
        .collect();
    let tol = S::lit(SCHEME_TOL);
    let pass = rows.iter().all(|r| r.empirical <= r.envelope + tol);
    let nondecreasing = rows.windows(2).all(|w| w[1].empirical >= w[0].empirical - tol);
    Ok(TimeModulus {
        rows,
        constants,
        pass,
        nondecreasing,
    })
}

pub fn write_time_modulus_csv<S: Scalar, W: Write>(rows: &[TimeModulusRow<S>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| LabError::Io(std::io::Error::other(e.to_string()));
    w.write_record(["tau", "empirical", "envelope", "eta_star"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.tau.to_string(),
            r.empirical.to_string(),
            r.envelope.to_string(),
            r.eta_star.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
