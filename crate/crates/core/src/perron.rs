//! Perron construction from explicit cone families
//! `ψ_{ε,z}(x) = u₀(z) ∓ L(|x − z|² + ε)^{1/2}` with time slopes `A_ε`,
//! finite envelopes, initial-trace continuity and sup-norm contraction.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::{lipschitz_approx, GridFunction, SpatialGrid, SpatialLattice};
use crate::linalg::{Mat, Vector};
use crate::operators::OperatorSpec;
use crate::scalar::{smax, smin, Scalar};
use crate::scheme::{plan, residual_check, solve, ResidualClass, SolveParams, SCHEME_TOL};

/// Strict margin added to the cone time slope.
pub const SAFETY_MARGIN: f64 = 1e-6;

/// Largest number of time samples used when scanning operator values.
pub const MAX_TIME_SAMPLES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeKind {
    /// `u₀(z) − L√(|x − z|² + ε)`, paired with `A_ε ≤ 0`.
    Sub,
    /// `u₀(z) + L√(|x − z|² + ε)`, paired with `A_ε ≥ 0`.
    Super,
}

impl ConeKind {
    fn sign<S: Scalar>(self) -> S {
        match self {
            ConeKind::Sub => -S::one(),
            ConeKind::Super => S::one(),
        }
    }
}

/// Cone family over lattice vertices.
#[derive(Clone, Debug)]
pub struct ConeFamily<S> {
    u0: SpatialGrid<S>,
    lip: S,
    eps: Vec<S>,
    z: Vec<usize>,
    kind: ConeKind,
}

/// `{1, 1/4, 1/16, …}` down to and including `eps_min`.
pub fn default_eps_list<S: Scalar>(eps_min: S) -> Vec<S> {
    let mut out = Vec::new();
    let mut e = S::one();
    let quarter = S::lit(0.25);
    while e > eps_min * (S::one() + S::lit(1e-12)) {
        out.push(e);
        e *= quarter;
    }
    out.push(eps_min);
    out
}

impl<S: Scalar> ConeFamily<S> {
    pub fn new(u0: SpatialGrid<S>, lip: S, eps: Vec<S>, z: Vec<usize>, kind: ConeKind) -> Result<Self> {
        let lat_lip = u0.lipschitz_constant();
        if !(lip >= lat_lip * (S::one() - S::lit(1e-12))) || !lip.is_finite() {
            return Err(LabError::PreconditionFailed(format!(
                "cone slope L = {lip} is below the lattice Lipschitz constant {lat_lip} of u₀"
            )));
        }
        if eps.is_empty() || eps.iter().any(|e| !(*e > S::zero())) || eps.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(LabError::PreconditionFailed(
                "ε list must be positive and strictly descending".into(),
            ));
        }
        if z.is_empty() {
            return Err(LabError::PreconditionFailed(
                "cone family needs at least one vertex".into(),
            ));
        }
        if let Some(bad) = z.iter().find(|&&i| i >= u0.lattice().len()) {
            return Err(LabError::OffLattice(format!("vertex index {bad} outside the lattice")));
        }
        Ok(Self { u0, lip, eps, z, kind })
    }

    /// Every lattice point as a vertex and the default ε list.
    pub fn full(u0: SpatialGrid<S>, lip: S, eps_min: S, kind: ConeKind) -> Result<Self> {
        let z = (0..u0.lattice().len()).collect();
        Self::new(u0, lip, default_eps_list(eps_min), z, kind)
    }

    pub fn u0(&self) -> &SpatialGrid<S> {
        &self.u0
    }

    pub fn lattice(&self) -> &SpatialLattice<S> {
        self.u0.lattice()
    }

    pub fn lip(&self) -> S {
        self.lip
    }

    pub fn eps(&self) -> &[S] {
        &self.eps
    }

    pub fn eps_min(&self) -> S {
        *self.eps.last().expect("nonempty ε list")
    }

    pub fn vertices(&self) -> &[usize] {
        &self.z
    }

    pub fn kind(&self) -> ConeKind {
        self.kind
    }

    /// `(Dψ, D²ψ)` at `x` for vertex `z`.
    pub fn derivatives(&self, eps: S, z: usize, x: &Vector<S>) -> (Vector<S>, Mat<S>) {
        let d = *x - self.lattice().point(z);
        let n = d.dim();
        let q = d.norm_sq() + eps;
        let root = q.sqrt();
        let s = self.kind.sign::<S>() * self.lip;
        let grad = d.scale(s / root);
        let hess = (Mat::scalar(n, q) - Mat::outer(&d, &d)).scale(s / (q * root));
        (grad, hess)
    }
}

/// `ψ_{ε,z}(x)`.
pub fn psi<S: Scalar>(family: &ConeFamily<S>, eps: S, z: usize, x: &Vector<S>) -> S {
    let zc = family.lattice().point(z);
    family.u0.get(z) + family.kind.sign::<S>() * family.lip * ((*x - zc).norm_sq() + eps).sqrt()
}

/// At most [`MAX_TIME_SAMPLES`] evenly strided times from `0..=horizon`
/// on the step `dt`.
pub fn sample_times<S: Scalar>(horizon: S, dt: S) -> Vec<S> {
    let steps = crate::fields::time_steps(horizon, dt);
    let stride = steps.div_ceil(MAX_TIME_SAMPLES - 1).max(1);
    let mut out: Vec<S> = (0..=steps)
        .step_by(stride)
        .map(|k| horizon * S::from_usize_lossy(k) / S::from_usize_lossy(steps))
        .collect();
    if out.last().is_some_and(|&t| t < horizon) {
        out.push(horizon);
    }
    out
}

/// Time slope making `A_ε t + ψ_{ε,z}` a classical sub- (super-) solution
/// for every vertex: `min(0, min F − Δ_s)` for the sub family and
/// `max(0, max F + Δ_s)` for the super family, with `F` evaluated at
/// `r = ±|u₀|∞` over lattice points, vertices and `times`.
pub fn choose_a_eps<S: Scalar>(op: &OperatorSpec<S>, family: &ConeFamily<S>, eps: S, times: &[S]) -> Result<S> {
    let lat = family.lattice();
    let u_sup = family.u0.sup_norm();
    let r = match family.kind {
        ConeKind::Sub => u_sup,
        ConeKind::Super => -u_sup,
    };
    let pts: Vec<Vector<S>> = (0..lat.len()).map(|i| lat.point(i)).collect();
    let times = if times.is_empty() { &[S::zero()][..] } else { times };
    let extreme = family
        .z
        .par_iter()
        .map(|&z| {
            let mut acc = match family.kind {
                ConeKind::Sub => S::infinity(),
                ConeKind::Super => -S::infinity(),
            };
            for x in &pts {
                let (p, m) = family.derivatives(eps, z, x);
                let radius = smax(u_sup, smax(p.norm(), m.spectral_norm()));
                for &t in times {
                    let f = op.eval(t, x, r, &p, &m)?;
                    let bound = op.bound(radius);
                    if f.abs() > bound * (S::one() + S::lit(1e-9)) + S::check_tol() {
                        return Err(LabError::UnboundedF {
                            operator: op.name().to_string(),
                            value: f.abs().as_f64(),
                            radius: radius.as_f64(),
                            bound: bound.as_f64(),
                        });
                    }
                    acc = match family.kind {
                        ConeKind::Sub => smin(acc, f),
                        ConeKind::Super => smax(acc, f),
                    };
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<S>>>()?;
    let margin = S::lit(SAFETY_MARGIN);
    Ok(match family.kind {
        ConeKind::Sub => smin(S::zero(), extreme.into_iter().fold(S::infinity(), smin) - margin),
        ConeKind::Super => smax(S::zero(), extreme.into_iter().fold(-S::infinity(), smax) + margin),
    })
}

/// `A_ε t + ψ_{ε,z}` sampled on `slices` levels of step `dt`.
pub fn member_grid<S: Scalar>(family: &ConeFamily<S>, eps: S, z: usize, a: S, dt: S, slices: usize) -> GridFunction<S> {
    GridFunction::from_fn_slices(*family.lattice(), dt, slices, |t, x| a * t + psi(family, eps, z, x))
}

fn time_grid<S: Scalar>(op: &OperatorSpec<S>, lat: &SpatialLattice<S>, params: &SolveParams<S>) -> Result<(S, usize)> {
    let p = plan(op, lat, params)?;
    Ok((p.dt, p.steps + 1))
}

/// Time slopes for every `ε` of the family, sampling times from the solver's
/// step plan.
pub fn slopes<S: Scalar>(op: &OperatorSpec<S>, family: &ConeFamily<S>, params: &SolveParams<S>) -> Result<Vec<S>> {
    let (dt, _) = time_grid(op, family.lattice(), params)?;
    let times = sample_times(params.horizon, dt);
    family
        .eps
        .iter()
        .map(|&e| choose_a_eps(op, family, e, &times))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MemberCertificate<S> {
    pub eps: S,
    pub z: usize,
    pub a: S,
    pub class: ResidualClass,
    pub worst_residual: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyCertificate<S> {
    pub kind: ConeKind,
    pub lip: S,
    /// `(ε, A_ε)` pairs.
    pub slopes: Vec<(S, S)>,
    /// Closed-form derivative bounds `|Dψ| ≤ L`, `|D²ψ| ≤ L/√ε` at `ε_min`.
    pub gradient_bound: S,
    pub hessian_bound: S,
    pub members: Vec<MemberCertificate<S>>,
    pub all_certified: bool,
}

/// Residual certificate for every member of the family.
pub fn certify_family<S: Scalar>(
    op: &OperatorSpec<S>,
    family: &ConeFamily<S>,
    params: &SolveParams<S>,
) -> Result<FamilyCertificate<S>> {
    let (dt, slices) = time_grid(op, family.lattice(), params)?;
    let a = slopes(op, family, params)?;
    let tol = S::lit(SCHEME_TOL);
    let jobs: Vec<(S, S, usize)> = family
        .eps
        .iter()
        .zip(&a)
        .flat_map(|(&e, &ae)| family.z.iter().map(move |&z| (e, ae, z)))
        .collect();
    let members: Vec<MemberCertificate<S>> = jobs
        .par_iter()
        .map(|&(e, ae, z)| {
            let g = member_grid(family, e, z, ae, dt, slices);
            let rep = residual_check(&g, op, tol, 0);
            let worst = match family.kind {
                ConeKind::Sub => rep.max_residual,
                ConeKind::Super => rep.min_residual,
            };
            MemberCertificate {
                eps: e,
                z,
                a: ae,
                class: rep.class,
                worst_residual: worst,
            }
        })
        .collect();
    let all_certified = members.iter().all(|m| match family.kind {
        ConeKind::Sub => m.class.is_sub(),
        ConeKind::Super => m.class.is_super(),
    });
    Ok(FamilyCertificate {
        kind: family.kind,
        lip: family.lip,
        slopes: family.eps.iter().copied().zip(a).collect(),
        gradient_bound: family.lip,
        hessian_bound: family.lip / family.eps_min().sqrt(),
        members,
        all_certified,
    })
}

/// Pointwise max (sub) or min (super) of `A_ε t + ψ_{ε,z}` over the family,
/// on the solver's time grid.
pub fn envelope<S: Scalar>(
    family: &ConeFamily<S>,
    op: &OperatorSpec<S>,
    params: &SolveParams<S>,
) -> Result<GridFunction<S>> {
    let (dt, slices) = time_grid(op, family.lattice(), params)?;
    let a = slopes(op, family, params)?;
    Ok(envelope_with_slopes(family, &a, dt, slices))
}

/// Envelope for given slopes `a[k]` paired with `family.eps()[k]`.
pub fn envelope_with_slopes<S: Scalar>(family: &ConeFamily<S>, a: &[S], dt: S, slices: usize) -> GridFunction<S> {
    let lat = *family.lattice();
    let pts: Vec<Vector<S>> = (0..lat.len()).map(|i| lat.point(i)).collect();
    // The cone profile does not depend on t; only the slope term does.
    let profiles: Vec<(S, Vec<S>)> = family
        .eps
        .par_iter()
        .zip(a)
        .map(|(&e, &ae)| {
            let prof = pts
                .iter()
                .map(|x| {
                    let vals = family.z.iter().map(|&z| psi(family, e, z, x));
                    match family.kind {
                        ConeKind::Sub => vals.fold(-S::infinity(), smax),
                        ConeKind::Super => vals.fold(S::infinity(), smin),
                    }
                })
                .collect();
            (ae, prof)
        })
        .collect();
    GridFunction::from_fn_slices(lat, dt, slices, |_, _| S::zero()).map_with_coords(|t, x, _| {
        let i = lat.index_of(x).expect("lattice point");
        let vals = profiles.iter().map(|(ae, prof)| *ae * t + prof[i]);
        match family.kind {
            ConeKind::Sub => vals.fold(-S::infinity(), smax),
            ConeKind::Super => vals.fold(S::infinity(), smin),
        }
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceReport<S> {
    pub gap: S,
    pub bound: S,
    /// `û(0, ·)` lies on the correct side of `u₀` everywhere.
    pub one_sided: bool,
    pub pass: bool,
}

/// `|û(0, ·) − u₀|∞ ≤ L√ε_min + 1e−12`, plus the one-sided order.
pub fn initial_trace_check<S: Scalar>(
    uhat: &GridFunction<S>,
    u0: &SpatialGrid<S>,
    eps_min: S,
    lip: S,
    kind: ConeKind,
) -> Result<TraceReport<S>> {
    let first = uhat.slice_grid(0);
    let gap = first.sup_distance(u0)?;
    let slack = S::lit(1e-12);
    let one_sided = first.values().iter().zip(u0.values()).all(|(&h, &u)| match kind {
        ConeKind::Sub => h <= u + slack,
        ConeKind::Super => h >= u - slack,
    });
    let bound = lip * eps_min.sqrt();
    Ok(TraceReport {
        gap,
        bound,
        one_sided,
        pass: one_sided && gap <= bound + slack,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceScaling<S> {
    pub eps_min: Vec<S>,
    pub gaps: Vec<S>,
    /// `gap(ε/2)/gap(ε)`.
    pub ratios: Vec<S>,
    pub pass: bool,
}

/// Initial-trace gaps of full sub families across successive halvings of
/// `ε_min`; passes when each ratio is at most `1/√2 + 0.05` and each gap
/// is within its bound.
pub fn trace_scaling<S: Scalar>(u0: &SpatialGrid<S>, lip: S, eps_min: S, halvings: usize) -> Result<TraceScaling<S>> {
    let mut eps_list = Vec::new();
    let mut gaps = Vec::new();
    let mut ok = true;
    let mut e = eps_min;
    for _ in 0..=halvings {
        let family = ConeFamily::full(u0.clone(), lip, e, ConeKind::Sub)?;
        let slopes = vec![S::zero(); family.eps().len()];
        let uhat = envelope_with_slopes(&family, &slopes, S::one(), 1);
        let rep = initial_trace_check(&uhat, u0, e, lip, ConeKind::Sub)?;
        ok &= rep.pass;
        eps_list.push(e);
        gaps.push(rep.gap);
        e *= S::half();
    }
    let limit = S::one() / S::two().sqrt() + S::lit(0.05);
    let ratios: Vec<S> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    ok &= ratios.iter().all(|&r| r <= limit);
    Ok(TraceScaling {
        eps_min: eps_list,
        gaps,
        ratios,
        pass: ok,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContractionReport<S> {
    pub initial_gap: S,
    pub solution_gap: S,
    /// `initial_gap + tol − solution_gap`.
    pub margin: S,
    pub pass: bool,
}

/// Solves from both data and checks `|uᵃ − uᵇ|∞ ≤ |u₀ᵃ − u₀ᵇ|∞ + tol`.
pub fn contraction_check<S: Scalar>(
    op: &OperatorSpec<S>,
    u0a: &SpatialGrid<S>,
    u0b: &SpatialGrid<S>,
    params: &SolveParams<S>,
) -> Result<ContractionReport<S>> {
    let (ua, ub) = rayon::join(|| solve(op, u0a, params), || solve(op, u0b, params));
    contraction_from_solutions(u0a, u0b, &ua?, &ub?)
}

fn contraction_from_solutions<S: Scalar>(
    u0a: &SpatialGrid<S>,
    u0b: &SpatialGrid<S>,
    ua: &GridFunction<S>,
    ub: &GridFunction<S>,
) -> Result<ContractionReport<S>> {
    let initial_gap = u0a.sup_distance(u0b)?;
    let solution_gap = ua.sup_distance(ub)?;
    let margin = initial_gap + S::lit(SCHEME_TOL) - solution_gap;
    Ok(ContractionReport {
        initial_gap,
        solution_gap,
        margin,
        pass: margin >= S::zero(),
    })
}

/// Certificate bundle of [`existence_pipeline`].
#[derive(Clone, Debug, Serialize)]
pub struct ExistenceCertificate<S> {
    pub residual_class: ResidualClass,
    /// Initial-trace gap of the sub and super envelopes for the finest data.
    pub trace_gap: S,
    pub eps_min: S,
    #[serde(rename = "L_list")]
    pub l_list: Vec<S>,
    pub contraction_margins: Vec<S>,
    /// `|u₀ᴸ − u₀|∞` for each `L`.
    pub approximation_errors: Vec<S>,
    pub solution_gaps: Vec<S>,
    pub initial_gaps: Vec<S>,
    /// Lattice Lipschitz constant of the raw data.
    pub data_lipschitz: S,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct PipelineOptions<S> {
    pub l_list: Vec<S>,
    pub eps_min: S,
    pub params: SolveParams<S>,
}

/// `L ∈ {1, 2, 4, …, 2^(count−1)}`.
pub fn doubling_list<S: Scalar>(count: usize) -> Vec<S> {
    (0..count).map(|k| S::two().powi(k as i32)).collect()
}

/// Lipschitz approximations `u₀ᴸ`, one solve per `L`, pairwise contraction
/// between successive solutions and cone certificates for the finest data.
pub fn existence_pipeline<S: Scalar>(
    op: &OperatorSpec<S>,
    u0: &SpatialGrid<S>,
    opts: &PipelineOptions<S>,
) -> Result<(GridFunction<S>, ExistenceCertificate<S>)> {
    if opts.l_list.is_empty() || opts.l_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(LabError::PreconditionFailed(
            "L list must be nonempty and strictly increasing".into(),
        ));
    }
    let data_lip = u0.lipschitz_constant();
    let already = data_lip <= opts.l_list[0];
    let l_list: Vec<S> = if already {
        vec![smax(data_lip, S::lit(1e-12))]
    } else {
        opts.l_list.clone()
    };
    let data: Vec<SpatialGrid<S>> = if already {
        vec![u0.clone()]
    } else {
        l_list.iter().map(|&l| lipschitz_approx(u0, l)).collect::<Result<_>>()?
    };
    let solutions: Vec<GridFunction<S>> = data
        .par_iter()
        .map(|d| solve(op, d, &opts.params))
        .collect::<Result<_>>()?;
    let mut margins = Vec::new();
    let mut solution_gaps = Vec::new();
    let mut initial_gaps = Vec::new();
    for k in 0..data.len().saturating_sub(1) {
        let rep = contraction_from_solutions(&data[k], &data[k + 1], &solutions[k], &solutions[k + 1])?;
        if !rep.pass {
            return Err(LabError::NonCauchy {
                step: k,
                solution_gap: rep.solution_gap.as_f64(),
                initial_gap: rep.initial_gap.as_f64(),
            });
        }
        margins.push(rep.margin);
        solution_gaps.push(rep.solution_gap);
        initial_gaps.push(rep.initial_gap);
    }
    let finest_data = data.last().expect("nonempty");
    let finest = solutions.last().expect("nonempty").clone();
    let lip = *l_list.last().expect("nonempty");
    let width = crate::scheme::pollution_width(u0.lattice(), opts.params.horizon);
    let residual_class = residual_check(&finest, op, S::lit(SCHEME_TOL), width).class;
    let mut trace_gap = S::zero();
    for kind in [ConeKind::Sub, ConeKind::Super] {
        let family = ConeFamily::full(finest_data.clone(), lip, opts.eps_min, kind)?;
        let slopes = vec![S::zero(); family.eps().len()];
        let uhat = envelope_with_slopes(&family, &slopes, S::one(), 1);
        trace_gap = smax(
            trace_gap,
            initial_trace_check(&uhat, finest_data, opts.eps_min, lip, kind)?.gap,
        );
    }
    let approximation_errors = data.iter().map(|d| d.sup_distance(u0)).collect::<Result<_>>()?;
    let note = if already {
        "data already Lipschitz: single solve".to_string()
    } else {
        "finite lattice envelopes are their own semicontinuous envelopes".to_string()
    };
    Ok((
        finest,
        ExistenceCertificate {
            residual_class,
            trace_gap,
            eps_min: opts.eps_min,
            l_list,
            contraction_margins: margins,
            approximation_errors,
            solution_gaps,
            initial_gaps,
            data_lipschitz: data_lip,
            note,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Boundary;
    use crate::operators::{eikonal, heat};

    fn lattice() -> SpatialLattice<f64> {
        SpatialLattice::new(1, 2.0, 0.05, Boundary::Clamped).unwrap()
    }

    fn origin(lat: &SpatialLattice<f64>) -> usize {
        lat.index_of(&Vector::from_slice(&[0.0])).unwrap()
    }

    #[test]
    fn psi_examples() {
        let lat = lattice();
        let fam = ConeFamily::full(SpatialGrid::constant(lat, 0.0), 1.0, 0.01, ConeKind::Sub).unwrap();
        let z = origin(&lat);
        let x = Vector::from_slice(&[0.0]);
        assert!((psi(&fam, 0.01, z, &x) + 0.1).abs() < 1e-15);
        assert!(psi(&fam, 1e-14, z, &x).abs() < 1e-6);
        let sup = ConeFamily::full(SpatialGrid::constant(lat, 0.0), 1.0, 0.01, ConeKind::Super).unwrap();
        assert!((psi(&sup, 0.01, z, &x) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn psi_below_data() {
        let lat = lattice();
        let u0 = SpatialGrid::from_fn(lat, |x| x[0].sin());
        let fam = ConeFamily::full(u0.clone(), 1.0, 0.01, ConeKind::Sub).unwrap();
        for &e in fam.eps() {
            for z in (0..lat.len()).step_by(7) {
                for i in 0..lat.len() {
                    let x = lat.point(i);
                    let cone = psi(&fam, e, z, &x);
                    let kink = u0.get(z) - (x - lat.point(z)).norm();
                    assert!(cone <= kink + 1e-15 && kink <= u0.get(i) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn family_validation() {
        let lat = lattice();
        let u0 = SpatialGrid::from_fn(lat, |x| 3.0 * x[0]);
        assert!(ConeFamily::full(u0.clone(), 1.0, 0.01, ConeKind::Sub).is_err());
        assert!(ConeFamily::new(u0.clone(), 3.0, vec![0.1, 0.2], vec![0], ConeKind::Sub).is_err());
        assert!(ConeFamily::new(u0, 3.0, vec![0.1], vec![10_000], ConeKind::Sub).is_err());
        assert_eq!(default_eps_list(0.01), vec![1.0, 0.25, 0.0625, 0.015625, 0.01]);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let lat = SpatialLattice::<f64>::new(2, 1.0, 0.25, Boundary::Clamped).unwrap();
        let u0 = SpatialGrid::constant(lat, 0.0);
        let fam = ConeFamily::full(u0, 2.0, 0.05, ConeKind::Sub).unwrap();
        let z = 7;
        let x = Vector::from_slice(&[0.3, -0.2]);
        let (g, h) = fam.derivatives(0.05, z, &x);
        let step = 1e-5;
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += step;
            xm[a] -= step;
            let fd = (psi(&fam, 0.05, z, &xp) - psi(&fam, 0.05, z, &xm)) / (2.0 * step);
            assert!((fd - g[a]).abs() < 1e-8);
            let (gp, _) = fam.derivatives(0.05, z, &xp);
            let (gm, _) = fam.derivatives(0.05, z, &xm);
            for b in 0..2 {
                assert!(((gp[b] - gm[b]) / (2.0 * step) - h.get(a, b)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn heat_slope_is_closed_form() {
        let lat = lattice();
        let lip = 1.5;
        let fam = ConeFamily::full(SpatialGrid::from_fn(lat, |x| (x[0]).sin()), lip, 0.01, ConeKind::Sub).unwrap();
        for &e in fam.eps() {
            let a = choose_a_eps(&heat(1), &fam, e, &[0.0]).unwrap();
            let expected = -lip / e.sqrt() - SAFETY_MARGIN;
            assert!((a - expected).abs() < 1e-9 * expected.abs());
        }
    }

    #[test]
    fn eikonal_slope_bounded_by_lip() {
        let lat = lattice();
        let lip = 2.0;
        let fam = ConeFamily::full(SpatialGrid::constant(lat, 0.0), lip, 0.01, ConeKind::Sub).unwrap();
        let a = choose_a_eps(&eikonal(1), &fam, 0.01, &[0.0]).unwrap();
        assert!(a >= -lip - SAFETY_MARGIN - 1e-12);
        assert!(a < -0.9 * lip);
    }

    #[test]
    fn unbounded_declaration_is_reported() {
        let lat = lattice();
        let fam = ConeFamily::full(SpatialGrid::constant(lat, 0.0), 1.0, 0.01, ConeKind::Sub).unwrap();
        let liar = heat::<f64>(1).with_bound(|_| 0.5);
        assert!(matches!(
            choose_a_eps(&liar, &fam, 0.01, &[0.0]),
            Err(LabError::UnboundedF { .. })
        ));
    }

    #[test]
    fn members_certify_for_heat_and_eikonal() {
        let lat = lattice();
        let u0 = SpatialGrid::from_fn(lat, |x| (2.0 * x[0]).cos() * 0.5);
        let params = SolveParams::new(0.2);
        for kind in [ConeKind::Sub, ConeKind::Super] {
            let z: Vec<usize> = (0..lat.len()).step_by(5).collect();
            let fam = ConeFamily::new(u0.clone(), 1.0, default_eps_list(0.01), z, kind).unwrap();
            for op in [heat(1), eikonal(1)] {
                let cert = certify_family(&op, &fam, &params).unwrap();
                assert!(cert.all_certified, "{} {:?}", op.name(), kind);
            }
        }
    }

    #[test]
    fn envelope_initial_trace() {
        let lat = lattice();
        let c = 0.4;
        let fam = ConeFamily::full(SpatialGrid::constant(lat, c), 1.0, 0.01, ConeKind::Sub).unwrap();
        let uhat = envelope(&fam, &heat(1), &SolveParams::new(0.1)).unwrap();
        for &v in uhat.slice(0) {
            assert!((v - (c - 0.1)).abs() < 1e-14);
        }
        let rep = initial_trace_check(&uhat, fam.u0(), 0.01, 1.0, ConeKind::Sub).unwrap();
        assert!(rep.pass);
        assert!(rep.gap <= 0.1 + 1e-12);
    }

    #[test]
    fn envelope_grows_with_vertices() {
        let lat = lattice();
        let u0 = SpatialGrid::from_fn(lat, |x| x[0].abs().min(1.0));
        let few = ConeFamily::new(
            u0.clone(),
            1.0,
            default_eps_list(0.01),
            (0..lat.len()).step_by(4).collect(),
            ConeKind::Sub,
        )
        .unwrap();
        let all = ConeFamily::full(u0, 1.0, 0.01, ConeKind::Sub).unwrap();
        let params = SolveParams::new(0.1);
        let a = envelope(&few, &heat(1), &params).unwrap();
        let b = envelope(&all, &heat(1), &params).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
    }

    #[test]
    fn trace_gap_scales_like_sqrt_eps() {
        let lat = lattice();
        let u0 = SpatialGrid::from_fn(lat, |x| (x[0]).sin());
        let rep = trace_scaling(&u0, 1.0, 0.01, 3).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn contraction_examples() {
        let lat = lattice();
        let params = SolveParams::new(0.2);
        let a = SpatialGrid::from_fn(lat, |x| x[0].cos());
        let b = a.map(|v| v + 0.25);
        let rep = contraction_check(&heat(1), &a, &b, &params).unwrap();
        assert!((rep.solution_gap - 0.25).abs() < 1e-12);
        assert!(rep.pass);
        let same = contraction_check(&heat(1), &a, &a, &params).unwrap();
        assert!(same.solution_gap <= 1e-15);
        let step = SpatialGrid::from_fn(lat, |x| if x[0] > 0.0 { 1.0 } else { 0.0 });
        let b = lipschitz_approx(&step, 4.0).unwrap();
        assert!(contraction_check(&heat(1), &a, &b, &params).unwrap().pass);
    }

    #[test]
    fn pipeline_on_square_root_data() {
        let lat = lattice();
        let u0 = SpatialGrid::from_fn(lat, |x| x[0].abs().sqrt().min(1.0));
        let opts = PipelineOptions {
            l_list: doubling_list(5),
            eps_min: 0.01,
            params: SolveParams::new(0.2),
        };
        let (sol, cert) = existence_pipeline(&heat(1), &u0, &opts).unwrap();
        assert!(sol.n_slices() > 1);
        assert_eq!(cert.contraction_margins.len(), 4);
        assert!(cert.contraction_margins.iter().all(|&m| m >= 0.0));
        assert!(cert.residual_class.is_sub() && cert.residual_class.is_super());
        assert!(cert.approximation_errors.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        let json = serde_json::to_value(&cert).unwrap();
        for key in [
            "residual_class",
            "trace_gap",
            "eps_min",
            "L_list",
            "contraction_margins",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn pipeline_constant_data_is_trivial() {
        let lat = lattice();
        let u0 = SpatialGrid::constant(lat, 0.7);
        let opts = PipelineOptions {
            l_list: doubling_list(3),
            eps_min: 0.01,
            params: SolveParams::new(0.1),
        };
        let (sol, cert) = existence_pipeline(&heat(1), &u0, &opts).unwrap();
        assert!(sol.values().iter().all(|&v| (v - 0.7).abs() < 1e-14));
        assert_eq!(cert.l_list.len(), 1);
        assert!(cert.contraction_margins.is_empty());
    }
}
